"""Fully connected networks with exact input derivatives and parameter gradients.

Every evaluation carries a stack of channels through the layers: channel 0
is the ordinary activation, the remaining channels are forward-mode tangents
with respect to the requested inputs (``x`` and/or ``t``).  Reverse
accumulation through that stack gives exact parameter gradients of any
scalar objective built from values *and* input derivatives, which is what a
physics-informed cost needs.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, NumericalError

__all__ = [
    "Activation",
    "NetworkSpec",
    "NetworkParams",
    "FieldSample",
    "Tape",
    "init_network",
    "forward",
    "forward_with_input_derivatives",
    "objective_gradient",
    "pack",
    "unpack",
]


class Activation(enum.Enum):
    TANH = "tanh"
    SIGMOID = "sigmoid"
    LINEAR = "linear"

    def apply(self, a):
        """Return ``(sigma(a), sigma'(a), sigma''(a))``."""
        if self is Activation.TANH:
            y = np.tanh(a)
            d1 = 1.0 - y * y
            return y, d1, -2.0 * y * d1
        if self is Activation.SIGMOID:
            # tanh form avoids overflow in exp for large |a|
            y = 0.5 * (1.0 + np.tanh(0.5 * a))
            d1 = y * (1.0 - y)
            return y, d1, d1 * (1.0 - 2.0 * y)
        return a, np.ones_like(a), np.zeros_like(a)


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int = 2
    hidden_layer_sizes: tuple[int, ...] = (20, 20, 20, 20, 20)
    output_dim: int = 1
    hidden_activation: Activation = Activation.TANH
    output_activation: Activation = Activation.LINEAR

    def __post_init__(self):
        object.__setattr__(self, "hidden_layer_sizes", tuple(self.hidden_layer_sizes))
        dims = (self.input_dim, self.output_dim, *self.hidden_layer_sizes)
        if any(int(d) != d or d < 1 for d in dims):
            raise ConfigurationError(f"network dimensions must be positive integers, got {dims}")
        if not self.hidden_layer_sizes:
            raise ConfigurationError("at least one hidden layer is required")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_layer_sizes, self.output_dim)

    @property
    def activations(self) -> tuple[Activation, ...]:
        n_hidden = len(self.hidden_layer_sizes)
        return (self.hidden_activation,) * n_hidden + (self.output_activation,)

    @property
    def n_params(self) -> int:
        w = self.widths
        return sum(w[i + 1] * (w[i] + 1) for i in range(len(w) - 1))


@dataclass
class NetworkParams:
    """Weights ``W[i]`` (fan_out x fan_in) and biases ``b[i]`` of each layer."""

    spec: NetworkSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def flatten(self) -> np.ndarray:
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, spec: NetworkSpec, flat) -> "NetworkParams":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (spec.n_params,):
            raise ConfigurationError(
                f"expected {spec.n_params} parameters, got array of shape {flat.shape}"
            )
        weights, biases = [], []
        w = spec.widths
        pos = 0
        for i in range(len(w) - 1):
            n_w = w[i + 1] * w[i]
            weights.append(flat[pos:pos + n_w].reshape(w[i + 1], w[i]).copy())
            pos += n_w
            biases.append(flat[pos:pos + w[i + 1]].copy())
            pos += w[i + 1]
        return cls(spec, weights, biases)

    @property
    def n_params(self) -> int:
        return self.spec.n_params


@dataclass
class FieldSample:
    """Network output and its exact first derivatives at a batch of points.

    Arrays have shape ``(N,)`` for scalar networks and ``(N, output_dim)``
    otherwise.  A derivative that was not requested is ``None``.
    """

    value: np.ndarray
    d_dx: np.ndarray | None = None
    d_dt: np.ndarray | None = None


def init_network(spec: NetworkSpec, seed: int) -> NetworkParams:
    """Glorot-normal weights (std sqrt(2 / (fan_in + fan_out))), zero biases."""
    if not isinstance(spec, NetworkSpec):
        raise ConfigurationError("init_network expects a NetworkSpec")
    rng = np.random.default_rng(seed)
    w = spec.widths
    weights, biases = [], []
    for fan_in, fan_out in zip(w[:-1], w[1:]):
        std = np.sqrt(2.0 / (fan_in + fan_out))
        weights.append(rng.normal(0.0, std, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(spec, weights, biases)


def pack(nets: Sequence[NetworkParams]) -> np.ndarray:
    """Concatenate several networks into one flat parameter array."""
    return np.concatenate([n.flatten() for n in nets])


def unpack(specs: Sequence[NetworkSpec], flat) -> list[NetworkParams]:
    flat = np.asarray(flat, dtype=np.float64)
    total = sum(s.n_params for s in specs)
    if flat.shape != (total,):
        raise ConfigurationError(f"expected {total} parameters, got shape {flat.shape}")
    nets, pos = [], 0
    for s in specs:
        nets.append(NetworkParams.from_flat(s, flat[pos:pos + s.n_params]))
        pos += s.n_params
    return nets


def _inputs(params, x, t):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    x, t = np.broadcast_arrays(x, t)
    if params.spec.input_dim != 2:
        raise ConfigurationError("only (x, t) input networks can be evaluated on points")
    return x.ravel(), t.ravel()


def _propagate(params: NetworkParams, x, t, directions: tuple[int, ...], keep: bool):
    """Push the value channel and one tangent channel per input direction.

    Returns the output stack ``(1 + len(directions), N, output_dim)`` and, if
    ``keep``, the per-layer cache needed for reverse accumulation.
    """
    n = x.shape[0]
    Z = np.zeros((1 + len(directions), n, 2))
    Z[0, :, 0] = x
    Z[0, :, 1] = t
    for k, d in enumerate(directions):
        Z[1 + k, :, d] = 1.0
    cache = []
    for W, b, act in zip(params.weights, params.biases, params.spec.activations):
        k, n, h = Z.shape
        A = (Z.reshape(k * n, h) @ W.T).reshape(k, n, -1)
        A[0] += b
        y, d1, d2 = act.apply(A[0])
        Znew = np.empty_like(A)
        Znew[0] = y
        Znew[1:] = d1 * A[1:]
        if keep:
            cache.append((Z, A, d1, d2))
        Z = Znew
    return Z, cache


def _backpropagate(params: NetworkParams, cache, G: np.ndarray) -> np.ndarray:
    """Reverse pass: ``G`` is d(objective)/d(output stack); returns flat gradient."""
    grads_W, grads_b = [], []
    for (Zprev, A, d1, d2), W in zip(reversed(cache), reversed(params.weights)):
        gA = np.empty_like(G)
        gA[0] = G[0] * d1
        if G.shape[0] > 1:
            gA[0] += d2 * np.einsum("knh,knh->nh", G[1:], A[1:])
            gA[1:] = G[1:] * d1
        k, n, h = gA.shape
        grads_W.append(gA.reshape(k * n, h).T @ Zprev.reshape(k * n, -1))
        grads_b.append(gA[0].sum(axis=0))
        G = (gA.reshape(k * n, h) @ W).reshape(k, n, -1)
    parts = []
    for gW, gb in zip(reversed(grads_W), reversed(grads_b)):
        parts.append(gW.ravel())
        parts.append(gb)
    return np.concatenate(parts)


def _squeeze(arr, spec):
    return arr[:, 0] if spec.output_dim == 1 else arr


def forward(params: NetworkParams, x, t) -> np.ndarray:
    """Network output at the points ``(x, t)``; shape ``(N,)`` for scalar nets."""
    x, t = _inputs(params, x, t)
    Z, _ = _propagate(params, x, t, (), keep=False)
    return _squeeze(Z[0], params.spec)


def forward_with_input_derivatives(params: NetworkParams, x, t, wrt: str = "xt") -> FieldSample:
    x, t = _inputs(params, x, t)
    directions = _directions(wrt)
    Z, _ = _propagate(params, x, t, directions, keep=False)
    return _sample_from_stack(Z, directions, params.spec)


def _directions(wrt: str) -> tuple[int, ...]:
    bad = set(wrt) - {"x", "t"}
    if bad:
        raise ConfigurationError(f"unknown derivative direction(s) {sorted(bad)}")
    return tuple(d for d, name in enumerate("xt") if name in wrt)


def _sample_from_stack(Z, directions, spec) -> FieldSample:
    out = FieldSample(_squeeze(Z[0], spec))
    for k, d in enumerate(directions):
        setattr(out, ("d_dx", "d_dt")[d], _squeeze(Z[1 + k], spec))
    return out


@dataclass
class _Record:
    net: int
    directions: tuple[int, ...]
    cache: list
    seed: np.ndarray


@dataclass
class Tape:
    """Records network evaluations made by an objective so they can be reversed.

    An objective calls ``tape(i, x, t)`` to evaluate network ``i`` and then
    ``tape.seed(sample, value=..., d_dx=..., d_dt=...)`` with the partial
    derivatives of its scalar result with respect to the returned arrays.
    """

    nets: Sequence[NetworkParams]
    records: list = field(default_factory=list)
    _by_id: dict = field(default_factory=dict)

    def __call__(self, net: int, x, t, wrt: str = "xt") -> FieldSample:
        params = self.nets[net]
        x, t = _inputs(params, x, t)
        directions = _directions(wrt)
        Z, cache = _propagate(params, x, t, directions, keep=True)
        sample = _sample_from_stack(Z, directions, params.spec)
        rec = _Record(net, directions, cache, np.zeros_like(Z))
        self.records.append(rec)
        self._by_id[id(sample)] = (rec, sample)
        return sample

    def seed(self, sample: FieldSample, value=None, d_dx=None, d_dt=None) -> None:
        rec, _ = self._by_id[id(sample)]
        spec = self.nets[rec.net].spec
        for channel, g in ((0, value), ("x", d_dx), ("t", d_dt)):
            if g is None:
                continue
            if channel != 0:
                d = "xt".index(channel)
                if d not in rec.directions:
                    raise ConfigurationError(f"derivative d/d{channel} was not evaluated")
                channel = 1 + rec.directions.index(d)
            g = np.asarray(g, dtype=np.float64)
            if spec.output_dim == 1:
                g = g.reshape(-1, 1)
            rec.seed[channel] += g

    def gradient(self) -> np.ndarray:
        grads = [np.zeros(n.n_params) for n in self.nets]
        for rec in self.records:
            if np.any(rec.seed):
                grads[rec.net] += _backpropagate(self.nets[rec.net], rec.cache, rec.seed)
        return np.concatenate(grads)


def objective_gradient(
    params_all,
    objective: Callable[[Tape], float],
    specs: Sequence[NetworkSpec] | None = None,
) -> tuple[float, np.ndarray]:
    """Value and exact gradient of a scalar objective over all network parameters.

    ``params_all`` is either a sequence of :class:`NetworkParams` or a flat
    array together with ``specs``.  The objective receives a :class:`Tape`,
    evaluates networks through it, seeds the partial derivatives of its
    result and returns the scalar value.
    """
    if specs is not None:
        nets = unpack(specs, params_all)
    else:
        nets = list(params_all)
    tape = Tape(nets)
    value = float(objective(tape))
    if not np.isfinite(value):
        raise NumericalError(f"objective evaluated to {value}")
    grad = tape.gradient()
    if not np.all(np.isfinite(grad)):
        bad = int(np.count_nonzero(~np.isfinite(grad)))
        raise NumericalError(f"gradient has {bad} non-finite entries (objective={value})")
    return value, grad
