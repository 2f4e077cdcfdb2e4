"""Run manifests, end-to-end experiments, CSV export and run comparison.

Manifests are INI files with one section per configuration block::

    [run]
    mode = adaptive
    seed = 0

    [problem]
    mu1 = 1e-5

Every omitted key falls back to its default (the reference filling problem,
Adam at 1e-3 for 5000 iterations, ...).
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analytic import front_exit_time, front_from_model, front_position, pressure_exact
from .diffnet import forward
from .errors import ConfigurationError, NumericalError
from .optim import AdamConfig
from .physics import CostWeights, ProblemConfig
from .sampling import AdaptivityConfig
from .training import Schedule, TrainResult, train_adaptive, train_fixed

log = logging.getLogger(__name__)

MODES = ("fixed", "adaptive")
SNAPSHOT_TIMES = (0.1, 0.2, 0.3, 0.4)
FRONT_WINDOW = (0.05, 0.45)
N_FRONT_TIMES = 81
N_PRESSURE_X = 101

COST_COLUMNS = (
    "iteration", "phase", "train_cost", "test_cost",
    "cost_f1", "cost_f2", "cost_f3", "cost_c", "cost_p",
    "n_f1", "n_f2", "n_f3",
)
FRONT_COLUMNS = ("t", "x_f_model", "x_f_analytic")
PRESSURE_COLUMNS = ("t_snapshot", "x", "p_model", "p_analytic")
COLLOCATION_COLUMNS = ("set_name", "x", "t", "is_new")

_SECTIONS = {
    "problem": ProblemConfig,
    "weights": CostWeights,
    "adam": AdamConfig,
    "adaptivity": AdaptivityConfig,
    "schedule": Schedule,
}


@dataclass
class RunManifest:
    mode: str = "adaptive"
    seed: int = 0
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    weights: CostWeights = field(default_factory=CostWeights)
    adam: AdamConfig = field(default_factory=AdamConfig)
    adaptivity: AdaptivityConfig | None = field(default_factory=AdaptivityConfig)
    schedule: Schedule = field(default_factory=Schedule)
    out_dir: Path = Path("runs/out")

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}", key="mode")
        if self.mode == "adaptive" and self.adaptivity is None:
            raise ConfigurationError("adaptive mode needs an [adaptivity] block", key="adaptivity")
        self.out_dir = Path(self.out_dir)


@dataclass
class ErrorReport:
    mode: str
    seed: int
    status: str
    front_linf: float
    front_l2: float
    pressure_l2: float
    final_train_cost: float
    final_test_cost: float
    generalization_gap: float
    seconds: float
    problem: dict

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ErrorReport":
        return cls(**json.loads(text))


# -- manifest parsing ---------------------------------------------------------

def _convert(raw: str, default, key: str):
    """Parse ``raw`` to the type of ``default``."""
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s for s in raw.replace(",", " ").split() if s]
            elem = type(default[0]) if default else float
            return tuple(elem(s) for s in items)
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {raw!r} as {type(default).__name__}", key=key) from None
    return raw


def _build(cls, section: configparser.SectionProxy | None, name: str):
    defaults = cls()
    kwargs = {}
    known = {f.name for f in dataclasses.fields(cls)}
    if section is not None:
        for key, raw in section.items():
            if key not in known:
                raise ConfigurationError(f"unknown key {key!r} in [{name}]", key=key)
            kwargs[key] = _convert(raw, getattr(defaults, key), key)
    return cls(**kwargs)


def parse_manifest(text: str, **overrides) -> RunManifest:
    # keys are case sensitive (T vs t)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse manifest: {exc}") from None
    unknown = set(parser.sections()) - set(_SECTIONS) - {"run"}
    if unknown:
        raise ConfigurationError(f"unknown section(s) {sorted(unknown)}", key=sorted(unknown)[0])
    blocks = {name: _build(cls, parser[name] if parser.has_section(name) else None, name)
              for name, cls in _SECTIONS.items()}
    run = parser["run"] if parser.has_section("run") else {}
    for key in run:
        if key not in ("mode", "seed", "out"):
            raise ConfigurationError(f"unknown key {key!r} in [run]", key=key)
    mode = overrides.get("mode") or run.get("mode", "adaptive")
    seed = overrides.get("seed")
    if seed is None:
        seed = _convert(run.get("seed", "0"), 0, "seed")
    out = overrides.get("out") or run.get("out", "runs/out")
    return RunManifest(mode=mode, seed=int(seed), out_dir=Path(out), **blocks)


def load_manifest(path, **overrides) -> RunManifest:
    """Read and validate a manifest file; ``overrides`` may set mode, seed, out."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"manifest {path} does not exist", key="config")
    return parse_manifest(path.read_text(), **overrides)


def manifest_text(m: RunManifest) -> str:
    """Serialise a manifest back to INI text (every key written explicitly)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["run"] = {"mode": m.mode, "seed": str(m.seed), "out": str(m.out_dir)}
    for name in _SECTIONS:
        block = getattr(m, name)
        if block is None:
            continue
        parser[name] = {}
        for f in dataclasses.fields(block):
            value = getattr(block, f.name)
            if isinstance(value, tuple):
                parser[name][f.name] = ", ".join(repr(v) for v in value)
            else:
                parser[name][f.name] = repr(value)
    from io import StringIO

    buf = StringIO()
    parser.write(buf)
    return buf.getvalue()


# -- CSV export ---------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cost_rows(result: TrainResult):
    for r in result.records:
        c = r.components
        yield (
            r.iteration, r.phase, r.train_cost, r.test_cost,
            c["cost_f1"], c["cost_f2"], c["cost_f3"], c["cost_c"], c["cost_p"],
            r.sizes["f1"], r.sizes["f2"], r.sizes["f3"],
        )


def front_times(cfg: ProblemConfig, window=FRONT_WINDOW, n=N_FRONT_TIMES) -> np.ndarray:
    """Evaluation times inside ``window`` for which the exact front is inside the domain."""
    lo, hi = window
    hi = min(hi, cfg.T, front_exit_time(cfg))
    ts = np.linspace(lo, hi, n)
    return ts[front_position(ts, cfg) <= cfg.l]


def model_front(c_net, t, cfg: ProblemConfig) -> float:
    """Model front at ``t``; a field that never crosses 0.5 maps to 0 or l."""
    x = front_from_model(c_net, t, cfg)
    if x is None:
        c0 = forward(c_net, 0.0, t)[0]
        x = cfg.l if c0 > 0.5 else 0.0
    return x


def front_table(c_net, cfg: ProblemConfig) -> np.ndarray:
    ts = front_times(cfg)
    model = np.array([model_front(c_net, t, cfg) for t in ts])
    return np.column_stack([ts, model, front_position(ts, cfg)])


def pressure_table(p_net, cfg: ProblemConfig, times=SNAPSHOT_TIMES) -> np.ndarray:
    xs = np.linspace(0.0, cfg.l, N_PRESSURE_X)
    rows = []
    for t in times:
        if t > cfg.T:
            continue
        tt = np.full_like(xs, t)
        model = forward(p_net, xs, tt) if p_net is not None else np.full_like(xs, np.nan)
        rows.append(np.column_stack([tt, xs, model, pressure_exact(xs, tt, cfg)]))
    return np.vstack(rows) if rows else np.zeros((0, 4))


def collocation_rows(before, after):
    for name in ("f1", "f2", "f3", "c_bc", "p_bc"):
        pts = getattr(after, name)
        n_old = len(getattr(before, name))
        for i, row in enumerate(pts):
            yield name, row[0], row[1], int(i >= n_old)


def expected_files(mode: str, n_events: int) -> list[str]:
    files = ["manifest.ini", "cost_history.csv", "front.csv", "pressure.csv", "report.json"]
    if mode == "adaptive":
        files += [f"collocation_{i:03d}.csv" for i in range(n_events)]
    return sorted(files)


# -- experiments --------------------------------------------------------------

def _errors(result: TrainResult, cfg: ProblemConfig):
    fronts = front_table(result.triple.c_net, cfg)
    err = np.abs(fronts[:, 1] - fronts[:, 2])
    press = pressure_table(result.triple.p_net, cfg)
    perr = press[:, 2] - press[:, 3]
    return fronts, press, float(err.max()), float(np.sqrt(np.mean(err**2))), float(np.sqrt(np.mean(perr**2)))


def train(manifest: RunManifest) -> TrainResult:
    m = manifest
    if m.mode == "fixed":
        return train_fixed(m.problem, m.weights, m.adam, m.schedule, m.seed)
    return train_adaptive(m.problem, m.weights, m.adaptivity, m.adam, m.schedule, m.seed)


def run_experiment(manifest: RunManifest) -> ErrorReport:
    """Train, export every artifact into ``manifest.out_dir`` and return the report."""
    m = manifest
    out = m.out_dir
    out.mkdir(parents=True, exist_ok=True)
    for stale in out.glob("collocation_*.csv"):
        stale.unlink()
    (out / "manifest.ini").write_text(manifest_text(m))
    log.info("starting %s run, seed %d -> %s", m.mode, m.seed, out)
    result = train(m)

    write_csv(out / "cost_history.csv", COST_COLUMNS, cost_rows(result))
    for i, ev in enumerate(result.events):
        write_csv(out / f"collocation_{i:03d}.csv", COLLOCATION_COLUMNS, collocation_rows(ev.before, ev.after))

    last = result.records[-1] if result.records else None
    try:
        fronts, press, linf, l2, p_l2 = _errors(result, m.problem)
    except (NumericalError, FloatingPointError):
        fronts, press = np.zeros((0, 3)), np.zeros((0, 4))
        linf = l2 = p_l2 = float("nan")
    write_csv(out / "front.csv", FRONT_COLUMNS, fronts.tolist())
    write_csv(out / "pressure.csv", PRESSURE_COLUMNS, press.tolist())

    finite = last is not None and np.isfinite([last.train_cost, last.test_cost, linf]).all()
    status = result.status if finite else "diverged"
    report = ErrorReport(
        mode=m.mode,
        seed=m.seed,
        status=status,
        front_linf=linf,
        front_l2=l2,
        pressure_l2=p_l2,
        final_train_cost=last.train_cost if last else float("nan"),
        final_test_cost=last.test_cost if last else float("nan"),
        generalization_gap=abs(last.train_cost - last.test_cost) if last else float("nan"),
        seconds=result.seconds,
        problem=dataclasses.asdict(m.problem),
    )
    (out / "report.json").write_text(report.to_json())
    log.info("finished %s run: front Linf %.4g, status %s", m.mode, linf, status)
    return report


def export_oracle(cfg: ProblemConfig, out: Path) -> None:
    """Write the analytic front and pressure snapshots only."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ts = front_times(cfg)
    write_csv(out / "front_analytic.csv", ("t", "x_f_analytic"), zip(ts, front_position(ts, cfg)))
    press = pressure_table(None, cfg)
    write_csv(out / "pressure_analytic.csv", ("t_snapshot", "x", "p_analytic"), press[:, [0, 1, 3]].tolist())


# -- comparison ---------------------------------------------------------------

_METRICS = (
    ("front_linf", True),
    ("front_l2", True),
    ("pressure_l2", True),
    ("final_train_cost", True),
    ("final_test_cost", True),
    ("generalization_gap", True),
    ("seconds", True),
)


@dataclass
class ComparisonRow:
    metric: str
    a: float
    b: float
    delta: float
    winner: str | None


def compare_runs(report_a: ErrorReport, report_b: ErrorReport, names=None) -> list[ComparisonRow]:
    """Side-by-side metrics (smaller is better for all); ``delta = b - a``."""
    if report_a.problem != report_b.problem:
        raise ConfigurationError("reports come from different problem configurations", key="problem")
    na, nb = names or (report_a.mode, report_b.mode)
    if na == nb:
        na, nb = "a", "b"
    rows = []
    for metric, smaller_better in _METRICS:
        a, b = getattr(report_a, metric), getattr(report_b, metric)
        winner = None
        if a != b:
            winner = na if (a < b) == smaller_better else nb
        rows.append(ComparisonRow(metric, a, b, b - a, winner))
    return rows


def format_comparison(rows: list[ComparisonRow], names=("a", "b")) -> str:
    header = f"{'metric':<20} {names[0]:>14} {names[1]:>14} {'delta':>12}  winner"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r.metric:<20} {r.a:>14.6g} {r.b:>14.6g} {r.delta:>12.4g}  {r.winner or '-'}")
    return "\n".join(lines)


def load_report(run_dir) -> ErrorReport:
    path = Path(run_dir) / "report.json"
    if not path.is_file():
        raise ConfigurationError(f"no report.json in {run_dir}", key="report")
    return ErrorReport.from_json(path.read_text())


def thread_hint() -> int | None:
    """Thread count requested through ``POROUS_PINN_THREADS`` (None = library default)."""
    raw = os.environ.get("POROUS_PINN_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ConfigurationError(f"POROUS_PINN_THREADS must be a positive integer, got {raw!r}", key="POROUS_PINN_THREADS")
    return n
