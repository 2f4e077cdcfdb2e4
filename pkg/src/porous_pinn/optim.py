"""Full-batch optimizers: Adam and limited-memory BFGS with strong-Wolfe steps."""
from __future__ import annotations

import logging
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import line_search

from .errors import ConfigurationError, NumericalError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    iterations: int = 5000

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be > 0", key="learning_rate")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0 <= b < 1:
                raise ConfigurationError(f"{name} must lie in [0, 1), got {b}", key=name)
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be > 0", key="epsilon")
        if self.iterations < 0:
            raise ConfigurationError("iterations must be >= 0", key="iterations")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grad, state: AdamState, cfg: AdamConfig = AdamConfig()):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or state.m.shape != params.shape:
        raise ConfigurationError("params, grad and Adam moments must have equal shapes")
    if not np.all(np.isfinite(grad)):
        raise NumericalError(
            f"non-finite gradient at Adam step {state.step + 1} "
            f"({np.count_nonzero(~np.isfinite(grad))} entries)"
        )
    step = state.step + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1**step)
    v_hat = v / (1.0 - cfg.beta2**step)
    new = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return new, AdamState(m, v, step)


@dataclass
class QuasiNewtonState:
    memory: int = 50
    pairs: deque = field(default_factory=deque)
    grad: np.ndarray | None = None

    def push(self, s: np.ndarray, y: np.ndarray) -> bool:
        """Store a curvature pair if ``s.y`` is safely positive."""
        sy = float(s @ y)
        if not sy > 1e-10 * float(y @ y):
            return False
        self.pairs.append((s, y, 1.0 / sy))
        while len(self.pairs) > self.memory:
            self.pairs.popleft()
        return True

    def clear(self) -> None:
        self.pairs.clear()

    def direction(self, g: np.ndarray) -> np.ndarray:
        """Two-loop recursion: ``-H g`` with the stored pairs."""
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(self.pairs):
            a = rho * (s @ q)
            q -= a * y
            alphas.append(a)
        if self.pairs:
            s, y, _ = self.pairs[-1]
            q *= (s @ y) / (y @ y)
        else:
            q /= max(np.linalg.norm(g), 1.0)
        for (s, y, rho), a in zip(self.pairs, reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        return -q


@dataclass
class QuasiNewtonResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    status: str
    n_evals: int
    state: QuasiNewtonState


class _Memo:
    """Caches the last value/gradient so separate f and f' calls cost one evaluation."""

    def __init__(self, fun):
        self.fun = fun
        self.key = None
        self.f = self.g = None
        self.n_evals = 0

    def __call__(self, x):
        key = x.tobytes()
        if key != self.key:
            f, g = self.fun(x)
            self.n_evals += 1
            self.key, self.f, self.g = key, float(f), np.asarray(g, dtype=np.float64)
        return self.f, self.g

    def invalidate(self):
        self.key = None

    def f_only(self, x):
        return self(x)[0]

    def g_only(self, x):
        return self(x)[1]


def _wolfe(memo, x, p, g, f, c1, c2):
    # failure is reported through alpha=None and handled by the caller
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", "The line search algorithm", RuntimeWarning)
        alpha, _, _, f_new, _, g_new = line_search(
            memo.f_only, memo.g_only, x, p, gfk=g, old_fval=f, c1=c1, c2=c2, maxiter=20
        )
    return alpha, f_new, g_new


def quasi_newton_minimize(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    max_iter: int = 3000,
    callback: Callable[[int, np.ndarray, float], bool] | None = None,
    memory: int = 50,
    c1: float = 1e-4,
    c2: float = 0.9,
    gtol: float = 1e-10,
    ftol: float = 0.0,
) -> QuasiNewtonResult:
    """Minimize ``fun`` (returning value and gradient) by L-BFGS.

    ``callback(k, x, f)`` runs after every accepted iteration ``k`` (1-based)
    and returns True when it changed the objective, e.g. by adding points.
    The value and gradient are then recomputed and the curvature memory is
    discarded, since pairs from the old objective are not secant pairs of the
    new one.
    """
    memo = _Memo(fun)
    x = np.array(x0, dtype=np.float64)
    f, g = memo(x)
    if not np.isfinite(f):
        raise NumericalError(f"objective is {f} at the starting point")
    state = QuasiNewtonState(memory=memory)
    best = (f, x.copy(), g.copy())
    status = "max_iter"
    k = 0
    while k < max_iter:
        if np.linalg.norm(g, np.inf) <= gtol:
            status = "converged"
            break
        p = state.direction(g)
        if not g @ p < 0:
            state.clear()
            p = state.direction(g)
        alpha, f_new, g_new = _wolfe(memo, x, p, g, f, c1, c2)
        if alpha is None and state.pairs:
            log.debug("line search failed at iteration %d; restarting from steepest descent", k)
            state.clear()
            p = state.direction(g)
            alpha, f_new, g_new = _wolfe(memo, x, p, g, f, c1, c2)
        if alpha is None:
            status = "line_search_failed"
            break
        x_new = x + alpha * p
        if g_new is None:
            f_new, g_new = memo(x_new)
        if not np.isfinite(f_new):
            status = "non_finite"
            break
        state.push(x_new - x, g_new - g)
        decrease = f - f_new
        x, f, g = x_new, float(f_new), np.asarray(g_new)
        k += 1
        if f < best[0]:
            best = (f, x.copy(), g.copy())
        if callback is not None and callback(k, x, f):
            memo.invalidate()
            f, g = memo(x)
            state.clear()
            best = (f, x.copy(), g.copy())
            continue
        if ftol > 0 and decrease <= ftol * max(abs(f), abs(f + decrease), 1.0):
            status = "converged"
            break
    state.grad = g
    if status in ("line_search_failed", "non_finite"):
        f, x, g = best
    return QuasiNewtonResult(x, f, g, k, status, memo.n_evals, state)
