"""Fixed-collocation and residual-adaptive training schedules.

Both schedules minimise the same cost over the joint parameters of the
velocity, pressure and fraction networks: Adam first, then L-BFGS.  The
adaptive schedule starts from a coarser grid and, every
``iterations_per_step`` L-BFGS iterations, draws new points from the
residual densities on the dense candidate sets.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalError
from .optim import AdamConfig, AdamState, adam_step, quasi_newton_minimize
from .physics import (
    CostFunction,
    CostWeights,
    FieldTriple,
    PointSets,
    ProblemConfig,
    init_triple,
)
from .sampling import (
    AdaptivityConfig,
    build_dense_sets,
    dense_residuals,
    enrichment_step,
    grid_point_sets,
    residual_means,
    should_stop,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Schedule:
    fixed_grid: tuple[int, int] = (50, 50)
    adaptive_grid: tuple[int, int] = (40, 40)
    qn_max_iter: int = 3000
    qn_memory: int = 50
    adam_log_every: int = 10
    hidden_layers: tuple[int, ...] = (20, 20, 20, 20, 20)
    n_test: int = 1000
    n_test_boundary: int = 100
    test_seed: int = 2024

    def __post_init__(self):
        object.__setattr__(self, "fixed_grid", tuple(int(n) for n in self.fixed_grid))
        object.__setattr__(self, "adaptive_grid", tuple(int(n) for n in self.adaptive_grid))
        object.__setattr__(self, "hidden_layers", tuple(int(n) for n in self.hidden_layers))
        if self.qn_max_iter < 0:
            raise ConfigurationError("qn_max_iter must be >= 0", key="qn_max_iter")
        if self.adam_log_every < 1:
            raise ConfigurationError("adam_log_every must be >= 1", key="adam_log_every")
        if min(self.fixed_grid + self.adaptive_grid) < 2:
            raise ConfigurationError("collocation grids need at least 2 points per axis", key="grid")


@dataclass
class TrainRecord:
    iteration: int
    phase: str
    train_cost: float
    test_cost: float
    components: dict[str, float]
    seconds: float
    sizes: dict[str, int]


@dataclass
class EnrichmentEvent:
    iteration: int
    qn_iteration: int
    before: PointSets
    after: PointSets


@dataclass
class TrainResult:
    triple: FieldTriple
    records: list[TrainRecord]
    events: list[EnrichmentEvent] = field(default_factory=list)
    status: str = "ok"
    seconds: float = 0.0


def held_out_point_sets(cfg: ProblemConfig, schedule: Schedule) -> PointSets:
    """Held-out points: uniform interior samples and random boundary points."""
    rng = np.random.default_rng(schedule.test_seed)
    n, nb = schedule.n_test, schedule.n_test_boundary
    pts = np.column_stack([rng.uniform(0, cfg.l, n), rng.uniform(0, cfg.T, n)])
    t_in = rng.uniform(0, cfg.T, nb)
    x_0 = rng.uniform(0, cfg.l, nb)
    t_out = rng.uniform(0, cfg.T, nb)
    c_bc = np.vstack([
        np.column_stack([np.zeros(nb), t_in, np.ones(nb)]),
        np.column_stack([x_0, np.zeros(nb), np.zeros(nb)]),
    ])
    p_bc = np.vstack([
        np.column_stack([np.zeros(nb), t_in, np.full(nb, cfg.p_in)]),
        np.column_stack([np.full(nb, cfg.l), t_out, np.full(nb, cfg.p_out)]),
    ])
    return PointSets(pts, pts, pts, c_bc, p_bc)


class _Run:
    """Shared state of one training run: cost, test cost and the record log."""

    def __init__(self, cfg, weights, sets, schedule, seed):
        self.triple0 = init_triple(seed, schedule.hidden_layers)
        self.specs = self.triple0.specs
        self.cost = CostFunction(self.specs, sets, weights, cfg)
        self.test = CostFunction(self.specs, held_out_point_sets(cfg, schedule), weights, cfg)
        self.records: list[TrainRecord] = []
        self.last_good = self.triple0.flatten()
        self.t0 = time.perf_counter()

    def record(self, iteration, phase, flat, total=None, comps=None):
        self.last_good = flat
        if total is None:
            total, comps = self.cost.value(flat)
        test_total, _ = self.test.value(flat)
        sizes = self.cost.sets.sizes()
        self.records.append(
            TrainRecord(
                iteration, phase, float(total), float(test_total), dict(comps),
                time.perf_counter() - self.t0, sizes,
            )
        )

    def adam(self, flat, acfg: AdamConfig, schedule: Schedule):
        state = AdamState.zeros(flat.size)
        for it in range(acfg.iterations):
            total, grad, comps = self.cost.value_and_grad(flat)
            if it % schedule.adam_log_every == 0:
                self.record(it, "adam", flat, total, comps)
            flat, state = adam_step(flat, grad, state, acfg)
        return flat


def _value_and_grad(cost: CostFunction):
    def fun(x):
        total, grad, _ = cost.value_and_grad(x)
        return total, grad

    return fun


def _finish(run: _Run, flat, events, status, what):
    log.info("%s run finished: %s", what, status)
    return TrainResult(
        FieldTriple.from_flat(run.specs, flat), run.records, events, status,
        time.perf_counter() - run.t0,
    )


def _quasi_newton(run: _Run, flat, schedule: Schedule, callback):
    result = quasi_newton_minimize(
        _value_and_grad(run.cost), flat, max_iter=schedule.qn_max_iter,
        callback=callback, memory=schedule.qn_memory,
    )
    status = "diverged" if result.status == "non_finite" else "ok"
    log.info("L-BFGS stopped (%s) after %d iterations", result.status, result.iterations)
    return result.x, status


def train_fixed(
    cfg: ProblemConfig,
    weights: CostWeights,
    adam: AdamConfig = AdamConfig(),
    schedule: Schedule = Schedule(),
    seed: int = 0,
) -> TrainResult:
    """Train on a fixed uniform grid shared by the three PDE residuals."""
    run = _Run(cfg, weights, grid_point_sets(cfg, *schedule.fixed_grid), schedule, seed)
    flat = run.triple0.flatten()
    base = adam.iterations
    try:
        flat = run.adam(flat, adam, schedule)
        run.record(base, "qn", flat)

        def callback(k, x, f):
            run.record(base + k, "qn", x)
            return False

        flat, status = _quasi_newton(run, flat, schedule, callback)
    except NumericalError as exc:
        log.warning("fixed run diverged: %s", exc)
        return _finish(run, run.last_good, [], "diverged", "fixed")
    return _finish(run, flat, [], status, "fixed")


def train_adaptive(
    cfg: ProblemConfig,
    weights: CostWeights,
    acfg: AdaptivityConfig = AdaptivityConfig(),
    adam: AdamConfig = AdamConfig(),
    schedule: Schedule = Schedule(),
    seed: int = 0,
) -> TrainResult:
    """Adam on the coarse grid, then L-BFGS interleaved with enrichment.

    Enrichment happens when the L-BFGS phase starts and then every
    ``acfg.iterations_per_step`` iterations until the residual means satisfy
    their tolerances or ``acfg.max_steps`` steps have run.
    """
    run = _Run(cfg, weights, grid_point_sets(cfg, *schedule.adaptive_grid), schedule, seed)
    dense = build_dense_sets(cfg, acfg.dense_resolution)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    base = adam.iterations
    events: list[EnrichmentEvent] = []
    step = 0
    active = True

    def enrich(x, k, res=None) -> bool:
        triple = FieldTriple.from_flat(run.specs, x)
        before = run.cost.sets
        after = enrichment_step(before, triple, dense, acfg, rng, cfg, residuals=res)
        if after.sizes() == before.sizes():
            return False
        run.cost.set_points(after)
        events.append(EnrichmentEvent(base + k, k, before, after))
        log.info("enrichment at L-BFGS iteration %d: %s", k, after.sizes())
        return True

    def callback(k, x, f):
        nonlocal step, active
        changed = False
        if active and k % acfg.iterations_per_step == 0:
            triple = FieldTriple.from_flat(run.specs, x)
            res = dense_residuals(triple, dense, cfg)
            step += 1
            if should_stop(residual_means(triple, dense, cfg, residuals=res), step, acfg):
                active = False
                log.info("adaptivity stopped after %d steps", step)
            else:
                changed = enrich(x, k, res)
        run.record(base + k, "qn", x)
        return changed

    flat = run.triple0.flatten()
    try:
        flat = run.adam(flat, adam, schedule)
        enrich(flat, 0)
        run.record(base, "qn", flat)
        flat, status = _quasi_newton(run, flat, schedule, callback)
    except NumericalError as exc:
        log.warning("adaptive run diverged: %s", exc)
        return _finish(run, run.last_good, events, "diverged", "adaptive")
    return _finish(run, flat, events, status, "adaptive")
