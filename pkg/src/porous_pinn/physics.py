"""Residuals and cost for the 1D two-phase filling problem.

Fluid 2 is injected at x = 0 under pressure ``p_in`` and displaces fluid 1
towards the outlet at x = l held at ``p_out``.  Three networks approximate
the Darcy velocity ``v``, the pressure ``p`` and the fraction ``c`` (1 where
fluid 2 is present).  The governing residuals are

    f1 = c_t + v c_x              (transport of the fraction)
    f2 = v + (k / mu(c)) p_x      (Darcy law)
    f3 = v_x                      (incompressibility)

with ``mu(c) = c mu2 + (1 - c) mu1``.
"""
from __future__ import annotations

from dataclasses import InitVar, dataclass, field, fields
from functools import cached_property

import numpy as np

from .diffnet import (
    Activation,
    FieldSample,
    NetworkParams,
    NetworkSpec,
    Tape,
    init_network,
    objective_gradient,
    pack,
    unpack,
)
from .errors import ConfigurationError

COMPONENTS = ("cost_v", "cost_c", "cost_p", "cost_f1", "cost_f2", "cost_f3")

V, P, C = 0, 1, 2


@dataclass(frozen=True)
class ProblemConfig:
    """Physical parameters; defaults are the reference filling problem."""

    l: float = 1.0
    T: float = 0.5
    k: float = 1.0
    mu1: float = 1e-5
    mu2: float = 1.0
    p_in: float = 1.0
    p_out: float = 0.0

    def __post_init__(self):
        for name in ("l", "T", "k", "mu1", "mu2"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigurationError(f"{name} must be positive, got {value}", key=name)
        if not self.p_in > self.p_out:
            raise ConfigurationError(
                f"p_in must exceed p_out (got {self.p_in} <= {self.p_out})", key="p_in"
            )


@dataclass(frozen=True)
class CostWeights:
    lambda_v: float = 1.0
    lambda_c: float = 1.0
    lambda_p: float = 1.0
    lambda_1: float = 1.0
    lambda_2: float = 1.0
    lambda_3: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value) or value < 0:
                raise ConfigurationError(f"{f.name} must be >= 0, got {value}", key=f.name)

    def for_component(self, name: str) -> float:
        return {
            "cost_v": self.lambda_v,
            "cost_c": self.lambda_c,
            "cost_p": self.lambda_p,
            "cost_f1": self.lambda_1,
            "cost_f2": self.lambda_2,
            "cost_f3": self.lambda_3,
        }[name]


def _points(arr, width):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, width))
    return arr.reshape(-1, width)


@dataclass
class PointSets:
    """Collocation and boundary point sets.

    ``f1``, ``f2``, ``f3`` hold ``(x, t)`` rows; ``c_bc`` and ``p_bc`` hold
    ``(x, t, target)`` rows; ``v_bc`` holds ``(x, t, normal)`` rows and is
    empty for the 1D filling problem.
    """

    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    c_bc: np.ndarray
    p_bc: np.ndarray
    v_bc: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        self.f1 = _points(self.f1, 2)
        self.f2 = _points(self.f2, 2)
        self.f3 = _points(self.f3, 2)
        self.c_bc = _points(self.c_bc, 3)
        self.p_bc = _points(self.p_bc, 3)
        self.v_bc = _points(self.v_bc, 3)

    def sizes(self) -> dict[str, int]:
        return {name: len(getattr(self, name)) for name in ("f1", "f2", "f3", "c_bc", "p_bc", "v_bc")}

    @cached_property
    def union(self) -> "_Union":
        return _Union([self.f1, self.f2, self.f3, self.c_bc, self.p_bc, self.v_bc])

    def copy(self) -> "PointSets":
        return PointSets(*(getattr(self, f.name).copy() for f in fields(self)))

    def validate(self, cfg: ProblemConfig) -> None:
        for name in ("f1", "f2", "f3", "c_bc", "p_bc", "v_bc"):
            pts = getattr(self, name)
            if len(pts) == 0:
                continue
            x, t = pts[:, 0], pts[:, 1]
            if np.any((x < 0) | (x > cfg.l) | (t < 0) | (t > cfg.T)):
                raise ConfigurationError(f"points of set {name} leave the domain", key=name)
        lo, hi = 0.0, 1.0
        if len(self.c_bc) and np.any((self.c_bc[:, 2] < lo) | (self.c_bc[:, 2] > hi)):
            raise ConfigurationError("fraction targets must lie in [0, 1]", key="c_bc")
        if len(self.p_bc) and np.any(
            (self.p_bc[:, 2] < cfg.p_out) | (self.p_bc[:, 2] > cfg.p_in)
        ):
            raise ConfigurationError("pressure targets must lie in [p_out, p_in]", key="p_bc")


@dataclass
class FieldTriple:
    v_net: NetworkParams
    p_net: NetworkParams
    c_net: NetworkParams
    check: InitVar[bool] = True

    def __post_init__(self, check):
        if not check:
            return
        if self.v_net.spec.output_activation is not Activation.LINEAR:
            raise ConfigurationError("velocity network needs a linear output")
        for name in ("p_net", "c_net"):
            if getattr(self, name).spec.output_activation is not Activation.SIGMOID:
                raise ConfigurationError(f"{name} needs a sigmoid output")

    @property
    def nets(self) -> list[NetworkParams]:
        return [self.v_net, self.p_net, self.c_net]

    @property
    def specs(self) -> list[NetworkSpec]:
        return [n.spec for n in self.nets]

    def flatten(self) -> np.ndarray:
        return pack(self.nets)

    @classmethod
    def from_flat(cls, specs, flat) -> "FieldTriple":
        return cls(*unpack(specs, flat))


def default_specs(hidden=(20, 20, 20, 20, 20)) -> list[NetworkSpec]:
    """Velocity (linear output), pressure and fraction (sigmoid outputs)."""
    return [
        NetworkSpec(hidden_layer_sizes=hidden, output_activation=Activation.LINEAR),
        NetworkSpec(hidden_layer_sizes=hidden, output_activation=Activation.SIGMOID),
        NetworkSpec(hidden_layer_sizes=hidden, output_activation=Activation.SIGMOID),
    ]


def init_triple(seed: int, hidden=(20, 20, 20, 20, 20)) -> FieldTriple:
    specs = default_specs(hidden)
    seeds = np.random.SeedSequence(seed).spawn(3)
    return FieldTriple(*(init_network(s, ss) for s, ss in zip(specs, seeds)))


def mixed_viscosity(c, cfg: ProblemConfig):
    return c * cfg.mu2 + (1.0 - c) * cfg.mu1


def pde_residuals(v: FieldSample, p: FieldSample, c: FieldSample, cfg: ProblemConfig):
    """Return ``(f1, f2, f3)`` from field samples at the same points."""
    f1 = c.d_dt + v.value * c.d_dx
    f2 = v.value + cfg.k / mixed_viscosity(c.value, cfg) * p.d_dx
    f3 = v.d_dx
    return f1, f2, f3


class _Union:
    """Unique points of several sets, with the index of each set member."""

    def __init__(self, arrays):
        stacked = np.concatenate([a[:, :2] for a in arrays], axis=0)
        if len(stacked):
            self.points, inverse = np.unique(stacked, axis=0, return_inverse=True)
            inverse = inverse.ravel()
        else:
            self.points, inverse = np.zeros((0, 2)), np.zeros(0, dtype=int)
        self.index = []
        pos = 0
        for a in arrays:
            self.index.append(inverse[pos:pos + len(a)])
            pos += len(a)


def _accumulate(out, idx, g):
    out += np.bincount(idx, weights=g, minlength=len(out))


@dataclass
class _Evaluation:
    residuals: dict
    samples: tuple
    index: list
    n: int
    mu_f2: np.ndarray


def _evaluate(evaluate, sets: PointSets, cfg: ProblemConfig) -> _Evaluation:
    """Evaluate all residuals, running each network once on the union of points.

    ``evaluate(net, x, t, wrt)`` returns a FieldSample for network ``net``.
    """
    u = sets.union
    i_f1, i_f2, i_f3, i_c, i_p, i_v = u.index
    x, t = u.points[:, 0], u.points[:, 1]
    if len(x) == 0:
        raise ConfigurationError("no points to evaluate")
    v_s = evaluate(V, x, t, "x")
    p_s = evaluate(P, x, t, "x")
    c_s = evaluate(C, x, t, "xt")

    res = {}
    res["f1"] = c_s.d_dt[i_f1] + v_s.value[i_f1] * c_s.d_dx[i_f1]
    mu = mixed_viscosity(c_s.value[i_f2], cfg)
    res["f2"] = v_s.value[i_f2] + cfg.k / mu * p_s.d_dx[i_f2]
    res["f3"] = v_s.d_dx[i_f3]
    res["c"] = c_s.value[i_c] - sets.c_bc[:, 2]
    res["p"] = p_s.value[i_p] - sets.p_bc[:, 2]
    res["v"] = v_s.value[i_v] * sets.v_bc[:, 2]
    return _Evaluation(res, (v_s, p_s, c_s), u.index, len(x), mu)


def _adjoint_seeds(ev: _Evaluation, adj: dict, sets: PointSets, cfg: ProblemConfig):
    """Chain ``dCost/dresidual`` (keyed like the residuals) back to the samples."""
    v_s, p_s, c_s = ev.samples
    i_f1, i_f2, i_f3, i_c, i_p, i_v = ev.index
    n = ev.n
    sv = {"value": np.zeros(n), "d_dx": np.zeros(n)}
    sp = {"value": np.zeros(n), "d_dx": np.zeros(n)}
    sc = {"value": np.zeros(n), "d_dx": np.zeros(n), "d_dt": np.zeros(n)}
    if "f1" in adj:
        g = adj["f1"]
        _accumulate(sc["d_dt"], i_f1, g)
        _accumulate(sv["value"], i_f1, g * c_s.d_dx[i_f1])
        _accumulate(sc["d_dx"], i_f1, g * v_s.value[i_f1])
    if "f2" in adj:
        g = adj["f2"]
        mu = ev.mu_f2
        _accumulate(sv["value"], i_f2, g)
        _accumulate(sp["d_dx"], i_f2, g * cfg.k / mu)
        dmu_dc = cfg.mu2 - cfg.mu1
        _accumulate(sc["value"], i_f2, -g * cfg.k * p_s.d_dx[i_f2] * dmu_dc / mu**2)
    if "f3" in adj:
        _accumulate(sv["d_dx"], i_f3, adj["f3"])
    if "c" in adj:
        _accumulate(sc["value"], i_c, adj["c"])
    if "p" in adj:
        _accumulate(sp["value"], i_p, adj["p"])
    if "v" in adj:
        _accumulate(sv["value"], i_v, adj["v"] * sets.v_bc[:, 2])
    return sv, sp, sc


def _plain_evaluator(triple: FieldTriple):
    from .diffnet import forward_with_input_derivatives

    nets = triple.nets
    return lambda i, x, t, wrt: forward_with_input_derivatives(nets[i], x, t, wrt)


def all_residuals(triple: FieldTriple, sets: PointSets, cfg: ProblemConfig) -> dict[str, np.ndarray]:
    """Residual arrays keyed ``f1, f2, f3, c, p, v`` (one entry per set point)."""
    return _evaluate(_plain_evaluator(triple), sets, cfg).residuals


def boundary_residuals(triple: FieldTriple, sets: PointSets, cfg: ProblemConfig):
    """Return ``(r_c, r_p, r_v)`` at the boundary/initial-condition points."""
    res = all_residuals(triple, sets, cfg)
    return res["c"], res["p"], res["v"]


_RESIDUAL_OF = {
    "cost_v": "v",
    "cost_c": "c",
    "cost_p": "p",
    "cost_f1": "f1",
    "cost_f2": "f2",
    "cost_f3": "f3",
}


def _check_nonempty(sets: PointSets, weights: CostWeights):
    sizes = {"f1": len(sets.f1), "f2": len(sets.f2), "f3": len(sets.f3), "c": len(sets.c_bc), "p": len(sets.p_bc)}
    for comp, r in _RESIDUAL_OF.items():
        if r == "v":
            continue
        if sizes[r] == 0 and weights.for_component(comp) > 0:
            raise ConfigurationError(f"point set for {comp} is empty but weighted", key=comp)


def _components(res) -> dict[str, float]:
    out = {}
    for comp, r in _RESIDUAL_OF.items():
        arr = res[r]
        out[comp] = float(np.mean(arr**2)) if len(arr) else 0.0
    return out


def assemble_cost(triple: FieldTriple, sets: PointSets, weights: CostWeights, cfg: ProblemConfig):
    """Weighted total cost and the six mean-squared components."""
    _check_nonempty(sets, weights)
    comps = _components(all_residuals(triple, sets, cfg))
    total = sum(weights.for_component(k) * v for k, v in comps.items())
    return total, comps


class CostFunction:
    """Cost of a flat parameter vector for the current point sets.

    The point sets can be replaced between evaluations (adaptive
    enrichment); ``version`` counts those replacements so callers can
    invalidate cached values.
    """

    def __init__(self, specs, sets: PointSets, weights: CostWeights, cfg: ProblemConfig):
        self.specs = list(specs)
        self.weights = weights
        self.cfg = cfg
        self.version = 0
        self.n_evals = 0
        self._last = None
        self.set_points(sets)

    def set_points(self, sets: PointSets) -> None:
        _check_nonempty(sets, weights=self.weights)
        sets.validate(self.cfg)
        self.sets = sets
        self.version += 1

    def _key(self, flat):
        return (self.version, np.asarray(flat, dtype=np.float64).tobytes())

    def value(self, flat) -> tuple[float, dict[str, float]]:
        if self._last is not None and self._last[0] == self._key(flat):
            return self._last[1], dict(self._last[2])
        triple = FieldTriple.from_flat(self.specs, flat)
        comps = _components(all_residuals(triple, self.sets, self.cfg))
        total = sum(self.weights.for_component(k) * v for k, v in comps.items())
        self._last = (self._key(flat), total, comps)
        return total, dict(comps)

    def value_and_grad(self, flat) -> tuple[float, np.ndarray, dict[str, float]]:
        self.n_evals += 1
        comps = {}

        def objective(tape: Tape) -> float:
            ev = _evaluate(tape, self.sets, self.cfg)
            adj = {}
            total = 0.0
            for comp, r in _RESIDUAL_OF.items():
                arr = ev.residuals[r]
                if len(arr) == 0:
                    comps[comp] = 0.0
                    continue
                comps[comp] = float(np.mean(arr**2))
                lam = self.weights.for_component(comp)
                total += lam * comps[comp]
                adj[r] = 2.0 * lam * arr / len(arr)
            for sample, seeds in zip(ev.samples, _adjoint_seeds(ev, adj, self.sets, self.cfg)):
                tape.seed(sample, **seeds)
            return total

        total, grad = objective_gradient(unpack(self.specs, flat), objective)
        self._last = (self._key(flat), total, comps)
        return total, grad, dict(comps)
