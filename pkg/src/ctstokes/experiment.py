"""Effectivity sweep over time steps: configuration, driver and CSV output."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .estimators import (
    Checkpoint,
    ErrorEvaluator,
    EstimatorLedger,
    interval_terms,
    with_errors,
)
from .fem import FemSystem, assemble_system
from .manufactured import AnalyticStokes
from .mesh import Rect, build_structured_mesh
from .scheme import ChorinTemam, Snapshot, TimeGrid

log = logging.getLogger(__name__)

DEFAULT_DT = (0.1, 0.05, 0.025, 0.0125, 0.00625)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    xmin: float = -1.0
    xmax: float = 1.0
    ymin: float = -1.0
    ymax: float = 1.0
    nx: int = 48
    ny: int = 48
    mu: float = 1.0
    lam: float = 10.0
    T: float = 3.0
    dt: tuple[float, ...] = DEFAULT_DT
    include_linf: bool = True
    amplitude: float = 1.0
    assembly_degree: int = 4
    error_degree: int = 6
    time_points: int = 3
    osc_points: int = 5
    solver: str = "cg"
    tol: float = 1e-10
    maxit: int = 10000
    stride: int = 1
    timing: bool = False
    out: str = "results.csv"

    @property
    def rect(self) -> Rect:
        return Rect(self.xmin, self.xmax, self.ymin, self.ymax)

    def validate(self) -> "ExperimentConfig":
        def bad(key, why):
            raise ConfigError(f"invalid value for '{key}': {why}")

        if self.nx < 1:
            bad("nx", "must be a positive integer")
        if self.ny < 1:
            bad("ny", "must be a positive integer")
        if not (self.xmin < self.xmax):
            bad("xmax", "must exceed xmin")
        if not (self.ymin < self.ymax):
            bad("ymax", "must exceed ymin")
        if self.mu <= 0:
            bad("mu", "must be positive")
        if self.lam < 0:
            bad("lambda", "must be non-negative")
        if self.T <= 0:
            bad("T", "must be positive")
        if not self.dt:
            bad("dt", "empty list")
        for dt in self.dt:
            if not dt > 0:
                bad("dt", f"{dt} is not positive")
            N = round(self.T / dt)
            if N < 1 or abs(N * dt - self.T) > 1e-9 * self.T:
                bad("dt", f"T={self.T} is not an integer multiple of {dt}")
        if self.assembly_degree not in (2, 4, 6):
            bad("assembly_degree", "must be 2, 4 or 6")
        if self.error_degree not in (2, 4, 6):
            bad("error_degree", "must be 2, 4 or 6")
        if self.time_points < 1:
            bad("time_points", "must be >= 1")
        if self.osc_points < 1:
            bad("osc_points", "must be >= 1")
        if self.solver not in ("cg", "direct"):
            bad("solver", "must be 'cg' or 'direct'")
        if not self.tol > 0:
            bad("tol", "must be positive")
        if self.maxit < 1:
            bad("maxit", "must be positive")
        if self.stride < 1:
            bad("stride", "must be positive")
        return self


# config-file / CLI key -> dataclass field
_ALIASES = {"lambda": "lam", "dt_list": "dt", "include_linf_term": "include_linf"}


def _coerce(name: str, raw):
    kind = {f.name: f.type for f in fields(ExperimentConfig)}[name]
    if not isinstance(raw, str):
        return tuple(float(v) for v in raw) if name == "dt" else raw
    raw = raw.strip()
    try:
        if name == "dt":
            return tuple(float(v) for v in raw.strip("{}[]()").split(",") if v.strip())
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"invalid value for '{name}': {raw!r}") from None


def parse_config(text: str = "", overrides: dict | None = None) -> ExperimentConfig:
    """Build a validated config from flat ``key = value`` text plus overrides.

    Blank lines and ``#`` comments are ignored; unknown keys are rejected.
    """
    known = {f.name for f in fields(ExperimentConfig)}
    values: dict = {}
    items: list[tuple[str, object]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        items.append((key, raw))
    items += list((overrides or {}).items())
    for key, raw in items:
        name = _ALIASES.get(key, key)
        if name not in known:
            raise ConfigError(f"unknown config key '{key}'")
        values[name] = _coerce(name, raw)
    return ExperimentConfig(**values).validate()


@dataclass(frozen=True)
class ResultRow:
    lam: float
    dt: float
    T_checkpoint: float
    est1: float
    est2: float
    est3: float
    linf_term: float
    error_grad_sq: float
    error_dual_sq: float
    error_total: float
    data_osc: float
    eff1: float
    eff2: float
    eff3: float
    wallclock_seconds: float


CSV_HEADER = ["lambda"] + [f.name for f in fields(ResultRow)][1:]


@dataclass
class RunResult:
    """One scheme run: its checkpoint rows and the final ledger."""

    dt: float
    rows: list[ResultRow] = field(default_factory=list)
    ledger: EstimatorLedger | None = None
    trajectory_end: Snapshot | None = None


def run_single(system: FemSystem, config: ExperimentConfig, dt: float,
               case: AnalyticStokes | None = None) -> RunResult:
    """Run the scheme at one step size, streaming estimator and error terms."""
    case = case or AnalyticStokes(config.lam, config.mu, config.amplitude)
    grid = TimeGrid.uniform(config.T, dt)
    stepper = ChorinTemam(system, config.solver, config.tol, config.maxit)
    evaluator = ErrorEvaluator(system, case, config.time_points, config.osc_points,
                               config.solver, config.tol, config.maxit)
    ledger = EstimatorLedger(grid.N, config.include_linf)
    result = RunResult(dt=dt, ledger=ledger)
    start = time.perf_counter()
    prev: list[Snapshot] = []

    def visit(snap: Snapshot):
        if prev:
            a = prev[0]
            n = a.n
            terms = interval_terms(system, a.u, snap.u, a.p, snap.p, grid.dt(n), grid.dt(n + 1))
            errs = evaluator.error_terms(a.u, snap.u, a.p, grid.times[n], grid.times[n + 1])
            cp = ledger.accumulate(with_errors(terms, *errs), n, grid.times[n + 1])
            if (n + 1) % config.stride == 0 or n + 1 == grid.N:
                wall = time.perf_counter() - start if config.timing else float("nan")
                result.rows.append(_row(config.lam, dt, cp, wall))
            prev[0] = snap
        else:
            prev.append(snap)

    stepper.run(grid, lambda n: evaluator.data.averaged_load(grid.times[n], grid.times[n + 1]),
                visitor=visit, store=False)
    result.trajectory_end = prev[0]
    return result


def _row(lam: float, dt: float, cp: Checkpoint, wall: float) -> ResultRow:
    return ResultRow(
        lam=lam, dt=dt, T_checkpoint=cp.T, est1=cp.est1, est2=cp.est2, est3=cp.est3,
        linf_term=cp.linf_term, error_grad_sq=cp.error_grad_sq,
        error_dual_sq=cp.error_dual_sq, error_total=cp.error_total,
        data_osc=cp.data_osc, eff1=cp.eff1, eff2=cp.eff2, eff3=cp.eff3,
        wallclock_seconds=wall,
    )


def build_system(config: ExperimentConfig) -> FemSystem:
    mesh = build_structured_mesh(config.rect, config.nx, config.ny)
    return assemble_system(mesh, config.mu, config.assembly_degree, config.error_degree)


def run_experiment(config: ExperimentConfig, system: FemSystem | None = None) -> list[RunResult]:
    """Sweep every dt of ``config`` on one assembled system, in list order."""
    system = system or build_system(config)
    results = []
    for dt in config.dt:
        log.info("running lambda=%g T=%g dt=%g on %dx%d", config.lam, config.T, dt,
                 config.nx, config.ny)
        results.append(run_single(system, config, dt))
    return results


def _fmt(v: float) -> str:
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return format(float(v), ".17g")


def format_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([_fmt(v) for v in asdict(r).values()])
    return buf.getvalue()


def write_csv(rows, path) -> Path:
    path = Path(path)
    path.write_text(format_csv(rows), encoding="utf-8", newline="\n")
    return path


def read_csv(path) -> list[dict[str, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: float(v) for k, v in rec.items()} for rec in csv.DictReader(fh)]


def format_gnuplot(rows, column: str = "eff2") -> str:
    """Whitespace-separated ``T value`` blocks, one per dt, two blank lines apart."""
    blocks: dict[float, list[ResultRow]] = {}
    for r in rows:
        blocks.setdefault(r.dt, []).append(r)
    out = []
    for dt, rs in blocks.items():
        lines = [f"# dt = {_fmt(dt)}  columns: T {column}"]
        lines += [f"{_fmt(r.T_checkpoint)} {_fmt(getattr(r, column))}" for r in rs]
        out.append("\n".join(lines))
    return "\n\n\n".join(out) + ("\n" if out else "")


def write_gnuplot(rows, path, column: str = "eff2") -> Path:
    path = Path(path)
    path.write_text(format_gnuplot(rows, column), encoding="utf-8", newline="\n")
    return path


def all_rows(results: list[RunResult]) -> list[ResultRow]:
    return [row for res in results for row in res.rows]


def final_row(result: RunResult) -> ResultRow:
    return result.rows[-1]


def with_overrides(config: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(config, **changes).validate()


__all__ = [
    "CSV_HEADER", "ConfigError", "ExperimentConfig", "ResultRow", "RunResult",
    "all_rows", "build_system", "final_row", "format_csv", "format_gnuplot",
    "parse_config", "read_csv", "run_experiment", "run_single", "with_overrides",
    "write_csv", "write_gnuplot",
]
