"""Residual-driven enrichment of collocation and boundary point sets.

Residuals are evaluated on dense candidate grids.  Each residual field ``r``
defines a discrete density proportional to ``max(log(|r| / eps), 0)``, so
points whose residual is below the filter ``eps`` are never drawn and the
mass grows only logarithmically with the residual: new points concentrate
where the residual is large without all landing on the single worst spot.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalError
from .physics import FieldTriple, PointSets, ProblemConfig, all_residuals

PDE_SETS = ("f1", "f2", "f3")
BC_SETS = ("c_bc", "p_bc", "v_bc")


@dataclass(frozen=True)
class AdaptivityConfig:
    max_steps: int = 9
    iterations_per_step: int = 50
    eps_f: tuple[float, float, float] = (1e-3, 1e-3, 1e-3)
    eps_v: float = 1e-3
    eps_c: float = 1e-3
    eps_p: float = 1e-3
    filter_epsilon: float = 1e-4
    points_per_step: int = 100
    bc_points_per_step: int = 10
    max_points: int = 2500
    dense_resolution: tuple[int, int] = (200, 200)

    def __post_init__(self):
        object.__setattr__(self, "eps_f", tuple(float(e) for e in self.eps_f))
        object.__setattr__(self, "dense_resolution", tuple(int(n) for n in self.dense_resolution))
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1", key="max_steps")
        if self.iterations_per_step < 1:
            raise ConfigurationError("iterations_per_step must be >= 1", key="iterations_per_step")
        if len(self.eps_f) != 3:
            raise ConfigurationError("eps_f needs one tolerance per PDE residual", key="eps_f")
        for name, value in (
            ("eps_f", min(self.eps_f)),
            ("eps_v", self.eps_v),
            ("eps_c", self.eps_c),
            ("eps_p", self.eps_p),
            ("filter_epsilon", self.filter_epsilon),
        ):
            if not value > 0:
                raise ConfigurationError(f"{name} must be > 0", key=name)
        for name in ("points_per_step", "bc_points_per_step", "max_points"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0", key=name)
        if min(self.dense_resolution) < 2 or len(self.dense_resolution) != 2:
            raise ConfigurationError("dense_resolution needs two counts >= 2", key="dense_resolution")


@dataclass
class DenseSet:
    points: np.ndarray
    resolution: tuple[int, int]


@dataclass
class DenseSets:
    """Candidate pools: the interior grid and the boundary/initial lines."""

    interior: DenseSet
    c_bc: np.ndarray
    p_bc: np.ndarray
    v_bc: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def as_point_sets(self) -> PointSets:
        pts = self.interior.points
        return PointSets(pts, pts, pts, self.c_bc, self.p_bc, self.v_bc)


def grid_points(cfg: ProblemConfig, n_x: int, n_t: int) -> np.ndarray:
    """Uniform ``n_x`` by ``n_t`` space-time grid including the domain edges."""
    x = np.linspace(0.0, cfg.l, n_x)
    t = np.linspace(0.0, cfg.T, n_t)
    X, T = np.meshgrid(x, t, indexing="ij")
    return np.column_stack([X.ravel(), T.ravel()])


def boundary_points(cfg: ProblemConfig, n_x: int, n_t: int) -> tuple[np.ndarray, np.ndarray]:
    """Fraction and pressure condition points on the lines of an ``n_x`` by ``n_t`` grid.

    The fraction set is the inlet line (c = 1 for every grid time) plus the
    initial line without the inlet corner (c = 0); the pressure set is the
    inlet (p_in) and outlet (p_out) lines.
    """
    x = np.linspace(0.0, cfg.l, n_x)
    t = np.linspace(0.0, cfg.T, n_t)
    inlet_c = np.column_stack([np.zeros(n_t), t, np.ones(n_t)])
    initial_c = np.column_stack([x[1:], np.zeros(n_x - 1), np.zeros(n_x - 1)])
    inlet_p = np.column_stack([np.zeros(n_t), t, np.full(n_t, cfg.p_in)])
    outlet_p = np.column_stack([np.full(n_t, cfg.l), t, np.full(n_t, cfg.p_out)])
    return np.vstack([inlet_c, initial_c]), np.vstack([inlet_p, outlet_p])


def grid_point_sets(cfg: ProblemConfig, n_x: int, n_t: int) -> PointSets:
    pts = grid_points(cfg, n_x, n_t)
    c_bc, p_bc = boundary_points(cfg, n_x, n_t)
    return PointSets(pts, pts.copy(), pts.copy(), c_bc, p_bc)


def build_dense_sets(cfg: ProblemConfig, resolution=(200, 200)) -> DenseSets:
    n_x, n_t = resolution
    c_bc, p_bc = boundary_points(cfg, n_x, n_t)
    return DenseSets(DenseSet(grid_points(cfg, n_x, n_t), (n_x, n_t)), c_bc, p_bc)


@dataclass
class DensityTable:
    probabilities: np.ndarray | None
    filter_epsilon: float
    mass: np.ndarray

    @property
    def below_threshold(self) -> bool:
        return self.probabilities is None


def unnormalized_mass(residuals, filter_epsilon: float) -> np.ndarray:
    r = np.abs(np.asarray(residuals, dtype=np.float64))
    with np.errstate(divide="ignore"):
        logs = np.log(r / filter_epsilon)
    return np.maximum(logs, 0.0)


def build_density(residuals, filter_epsilon: float) -> DensityTable:
    """Discrete density over the candidate points from one residual field.

    The integral normalisation reduces to a plain sum because the candidates
    form a uniform grid.  If no residual exceeds the filter the table carries
    no distribution (``below_threshold``).
    """
    residuals = np.asarray(residuals, dtype=np.float64)
    if not filter_epsilon > 0:
        raise ConfigurationError("filter_epsilon must be > 0", key="filter_epsilon")
    if not np.all(np.isfinite(residuals)):
        raise NumericalError(
            f"{np.count_nonzero(~np.isfinite(residuals))} non-finite residuals on the dense set"
        )
    mass = unnormalized_mass(residuals, filter_epsilon)
    total = mass.sum()
    if total <= 0:
        return DensityTable(None, filter_epsilon, mass)
    return DensityTable(mass / total, filter_epsilon, mass)


def draw_points(density: DensityTable, dense, count: int, rng: np.random.Generator, exclude=None):
    """Draw ``count`` distinct candidates with probability proportional to the table.

    ``dense`` is a DenseSet or a candidate array.  Candidates flagged in the
    boolean mask ``exclude`` (e.g. already training points) are removed from
    the pool.  Asking for more points than carry positive probability draws
    only those, with a warning.
    """
    points = dense.points if isinstance(dense, DenseSet) else np.asarray(dense)
    if count <= 0 or density.below_threshold:
        return points[:0].copy()
    p = density.probabilities
    if exclude is not None:
        p = np.where(exclude, 0.0, p)
    support = np.count_nonzero(p > 0)
    if count > support:
        warnings.warn(
            f"requested {count} points but only {support} candidates have positive probability",
            RuntimeWarning,
            stacklevel=2,
        )
        count = support
        if count == 0:
            return points[:0].copy()
    p = p / p.sum()
    idx = rng.choice(len(points), size=count, replace=False, p=p)
    return points[np.sort(idx)].copy()


@dataclass
class ResidualMeans:
    mu_f: tuple[float, float, float]
    mu_v: float
    mu_c: float
    mu_p: float


def dense_residuals(triple: FieldTriple, dense: DenseSets, cfg: ProblemConfig) -> dict[str, np.ndarray]:
    """Residual fields over the candidate pools, keyed by training set name."""
    res = all_residuals(triple, dense.as_point_sets(), cfg)
    return {"f1": res["f1"], "f2": res["f2"], "f3": res["f3"], "c_bc": res["c"], "p_bc": res["p"], "v_bc": res["v"]}


def _mean_abs(arr) -> float:
    return float(np.mean(np.abs(arr))) if len(arr) else 0.0


def residual_means(triple: FieldTriple, dense: DenseSets, cfg: ProblemConfig, residuals=None) -> ResidualMeans:
    res = residuals if residuals is not None else dense_residuals(triple, dense, cfg)
    return ResidualMeans(
        mu_f=tuple(_mean_abs(res[name]) for name in PDE_SETS),
        mu_v=_mean_abs(res["v_bc"]),
        mu_c=_mean_abs(res["c_bc"]),
        mu_p=_mean_abs(res["p_bc"]),
    )


def should_stop(means: ResidualMeans, step: int, acfg: AdaptivityConfig) -> bool:
    if step >= acfg.max_steps:
        return True
    violated = (
        any(mu > eps for mu, eps in zip(means.mu_f, acfg.eps_f))
        or means.mu_v > acfg.eps_v
        or means.mu_c > acfg.eps_c
        or means.mu_p > acfg.eps_p
    )
    return not violated


def _member_mask(candidates: np.ndarray, existing: np.ndarray) -> np.ndarray:
    if len(existing) == 0 or len(candidates) == 0:
        return np.zeros(len(candidates), dtype=bool)
    present = {tuple(row) for row in existing[:, :2]}
    return np.fromiter((tuple(row) in present for row in candidates[:, :2]), bool, len(candidates))


def enrichment_step(
    current: PointSets,
    triple: FieldTriple,
    dense: DenseSets,
    acfg: AdaptivityConfig,
    rng: np.random.Generator,
    cfg: ProblemConfig,
    residuals=None,
) -> PointSets:
    """Add points to every set from the density of its own residual.

    Existing points are kept (new rows are appended at the end), and a set
    whose residual is below the filter everywhere is left unchanged.  PDE
    sets never grow beyond ``acfg.max_points``.
    """
    res = residuals if residuals is not None else dense_residuals(triple, dense, cfg)
    pools = {
        "f1": dense.interior.points,
        "f2": dense.interior.points,
        "f3": dense.interior.points,
        "c_bc": dense.c_bc,
        "p_bc": dense.p_bc,
        "v_bc": dense.v_bc,
    }
    out = current.copy()
    for name, pool in pools.items():
        have = getattr(current, name)
        if name in PDE_SETS:
            count = min(acfg.points_per_step, max(acfg.max_points - len(have), 0))
        else:
            count = acfg.bc_points_per_step
        if count == 0 or len(pool) == 0:
            continue
        density = build_density(res[name], acfg.filter_epsilon)
        new = draw_points(density, pool, count, rng, exclude=_member_mask(pool, have))
        if len(new):
            setattr(out, name, np.vstack([have, new]))
    return PointSets(out.f1, out.f2, out.f3, out.c_bc, out.p_bc, out.v_bc)
