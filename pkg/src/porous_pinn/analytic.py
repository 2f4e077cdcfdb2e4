"""Closed-form front, pressure and fraction for the 1D filling problem.

With fluid 2 (viscosity ``mu2``) pushed in behind a sharp front into fluid 1
(``mu1``), the velocity is uniform in space and the pressure is piecewise
linear, so the front obeys

    dx_f/dt = k (p_in - p_out) / (mu2 x_f + mu1 (l - x_f)),   x_f(0) = 0.
"""
from __future__ import annotations

import numpy as np

from .diffnet import NetworkParams, forward
from .errors import DomainError
from .physics import ProblemConfig

_EQUAL_VISCOSITY_RTOL = 1e-12


def _equal_viscosities(cfg: ProblemConfig) -> bool:
    return abs(cfg.mu2 - cfg.mu1) < _EQUAL_VISCOSITY_RTOL * max(cfg.mu1, cfg.mu2)


def front_position(t, cfg: ProblemConfig):
    """Front location at time(s) ``t`` (only meaningful while it stays <= l)."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0) or not np.all(np.isfinite(t_arr)):
        raise DomainError("front_position needs finite t >= 0")
    dp = cfg.p_in - cfg.p_out
    mu_a, mu_r, l = cfg.mu1, cfg.mu2, cfg.l
    if _equal_viscosities(cfg):
        x = cfg.k * dp * t_arr / (mu_a * l)
    else:
        root = np.sqrt(mu_a**2 * l**2 + 2.0 * (mu_r - mu_a) * cfg.k * dp * t_arr)
        # rationalised form of (root - mu_a l) / (mu_r - mu_a): no cancellation at small t
        x = 2.0 * cfg.k * dp * t_arr / (root + mu_a * l)
    return float(x) if np.ndim(x) == 0 else x


def front_velocity(x_f, cfg: ProblemConfig):
    """Darcy velocity when the front sits at ``x_f``."""
    x_f = np.asarray(x_f, dtype=np.float64)
    v = cfg.k * (cfg.p_in - cfg.p_out) / (cfg.mu2 * x_f + cfg.mu1 * (cfg.l - x_f))
    return float(v) if np.ndim(v) == 0 else v


def front_exit_time(cfg: ProblemConfig) -> float:
    """Time at which the front reaches the outlet."""
    return 0.5 * (cfg.mu1 + cfg.mu2) * cfg.l**2 / (cfg.k * (cfg.p_in - cfg.p_out))


def _check_domain(x, t, cfg):
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any((x < 0) | (x > cfg.l)) or np.any((t < 0) | (t > cfg.T)):
        raise DomainError(f"point outside [0, {cfg.l}] x [0, {cfg.T}]")
    return np.broadcast_arrays(x, t)


def pressure_branches(x, t, cfg: ProblemConfig):
    """Both linear pieces (behind the front, ahead of it) evaluated at ``(x, t)``."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    dp = cfg.p_in - cfg.p_out
    mu_a, mu_r, l = cfg.mu1, cfg.mu2, cfg.l
    x_f = np.minimum(front_position(t, cfg), l)
    denom = (mu_r - mu_a) * x_f + mu_a * l
    behind = -mu_r * dp / denom * x + cfg.p_in
    ahead = -mu_a * dp / denom * x + mu_a * dp / denom * l + cfg.p_out
    return behind, ahead


def pressure_exact(x, t, cfg: ProblemConfig):
    x, t = _check_domain(x, t, cfg)
    behind, ahead = pressure_branches(x, t, cfg)
    x_f = front_position(t, cfg)
    p = np.where(x < x_f, behind, ahead)
    return float(p) if p.ndim == 0 else p


def fraction_exact(x, t, cfg: ProblemConfig):
    x, t = _check_domain(x, t, cfg)
    c = np.where(x < front_position(t, cfg), 1.0, 0.0)
    return float(c) if c.ndim == 0 else c


def front_from_model(c_net, t: float, cfg: ProblemConfig, n_grid: int = 1001, tol: float = 1e-8):
    """Smallest x where the fraction field crosses 0.5 at time ``t``, or None.

    ``c_net`` is either fraction network parameters or any callable
    ``c(x, t)`` accepting an array of x.
    """
    if isinstance(c_net, NetworkParams):
        def c(x):
            return forward(c_net, x, np.full_like(x, t))
    else:
        def c(x):
            return np.asarray(c_net(x, np.full_like(x, t)), dtype=np.float64)

    xs = np.linspace(0.0, cfg.l, n_grid)
    g = c(xs) - 0.5
    if g[0] == 0.0:
        return 0.0
    sign_change = np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) <= 0)[0]
    if len(sign_change) == 0:
        return None
    i = sign_change[0]
    lo, hi = xs[i], xs[i + 1]
    g_lo = g[i]
    if g[i + 1] == 0.0:
        return float(hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        g_mid = c(np.array([mid]))[0] - 0.5
        if g_mid == 0.0:
            return float(mid)
        if np.sign(g_mid) == np.sign(g_lo):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))
