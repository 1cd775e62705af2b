"""Parameter sweeps, problem files and solve reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import calibsim
from .helstrom import error_rate, helstrom_bound_pure, helstrom_two_state
from .mlse import (
    MlseOptions,
    MlseProblem,
    MlseResult,
    run_mlse_batch,
)
from .states import PovmSet, check_density_matrix, make_prior_povm, parse_settings, purity, state_pair

logger = logging.getLogger(__name__)

CSV_HEADER = (
    "alpha",
    "seed",
    "er_designed",
    "er_helstrom_true",
    "er_pure_bound",
    "loglik_final",
    "iterations",
    "residual",
    "converged",
)
DEFAULT_GRID_COUNT = 33


class ConfigError(ValueError):
    pass


class ProblemFileError(ValueError):
    pass


@dataclass(frozen=True)
class AlphaGrid:
    start: float = 0.0
    stop: float = math.pi / 4
    count: int = DEFAULT_GRID_COUNT

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.count)


@dataclass(frozen=True)
class SweepConfig:
    d1: float
    d2: float
    settings: tuple
    shots: Any
    seeds: tuple
    alpha_grid: AlphaGrid = field(default_factory=AlphaGrid)
    mlse: MlseOptions = field(default_factory=MlseOptions)

    def __post_init__(self):
        g = self.alpha_grid
        if g.count < 2:
            raise ConfigError(f"alpha_grid.count must be at least 2, got {g.count}")
        lo, hi = 0.0, math.pi / 4 + 1e-15
        if not (lo <= g.start <= hi and lo <= g.stop <= hi):
            raise ConfigError(f"alpha_grid must lie within [0, pi/4], got [{g.start}, {g.stop}]")
        for name in ("d1", "d2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}={v!r} outside [0, 1]")
        try:
            object.__setattr__(self, "settings", parse_settings(self.settings))
            object.__setattr__(self, "shots", calibsim.parse_shots(self.shots))
            object.__setattr__(self, "seeds", tuple(calibsim.check_seed(s) for s in self.seeds))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.seeds:
            raise ConfigError("seeds must not be empty")

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        """Build from a parsed config document; unknown keys are errors."""
        if not isinstance(data, dict):
            raise ConfigError("sweep config must be a mapping")
        data = dict(data)
        _reject_unknown(data, {f.name for f in fields(cls)}, "config")
        try:
            if "alpha_grid" in data:
                grid = data["alpha_grid"]
                if not isinstance(grid, dict):
                    raise ConfigError("alpha_grid must be a mapping with start, stop, count")
                _reject_unknown(grid, {f.name for f in fields(AlphaGrid)}, "alpha_grid")
                data["alpha_grid"] = AlphaGrid(**grid)
            if "mlse" in data:
                opts = data["mlse"]
                if not isinstance(opts, dict):
                    raise ConfigError("mlse must be a mapping")
                _reject_unknown(opts, {f.name for f in fields(MlseOptions)}, "mlse")
                data["mlse"] = MlseOptions(**opts)
            missing = [n for n in ("d1", "d2", "settings", "shots", "seeds") if n not in data]
            if missing:
                raise ConfigError(f"config is missing required keys: {', '.join(missing)}")
            data["seeds"] = tuple(data["seeds"])
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = asdict(self)
        out["settings"] = list(self.settings)
        out["seeds"] = list(self.seeds)
        out["shots"] = "inf" if self.shots == calibsim.ASYMPTOTIC else self.shots
        return out


def _reject_unknown(data: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def load_sweep_config(path) -> SweepConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return SweepConfig.from_dict(data)


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    seed: int
    er_designed: float
    er_helstrom_true: float
    er_pure_bound: float
    loglik_final: float
    iterations: int
    residual: float
    converged: bool
    error: str | None = None

    def csv_fields(self) -> list[str]:
        status = "error" if self.error else ("true" if self.converged else "false")
        return [
            repr(float(self.alpha)),
            str(self.seed),
            repr(float(self.er_designed)),
            repr(float(self.er_helstrom_true)),
            repr(float(self.er_pure_bound)),
            repr(float(self.loglik_final)),
            str(self.iterations),
            repr(float(self.residual)),
            status,
        ]


def run_sweep(config: SweepConfig) -> list[SweepRow]:
    """Design a POVM for every (alpha, seed) and score it against the true states.

    All seeds at one alpha share the prior POVM and run as one batch.
    """
    prior = make_prior_povm(config.settings)
    rows: list[SweepRow] = []
    for alpha in config.alpha_grid.values():
        alpha = float(alpha)
        rho1, rho2 = state_pair(alpha, config.d1, config.d2)
        er_true = helstrom_two_state(rho1, rho2).error_rate
        # |<psi1|psi2>| = cos^2 - sin^2 for the pure members of the family
        er_pure = helstrom_bound_pure(abs(math.cos(2 * alpha)))
        problems = []
        for seed in config.seeds:
            cal = calibsim.CalibrationConfig((rho1, rho2), config.settings, config.shots, seed)
            problems.append(MlseProblem(prior, calibsim.sample_frequencies(cal)))
        results = run_mlse_batch(problems, config.mlse)
        for seed, res in zip(config.seeds, results):
            rows.append(_row(alpha, seed, res, (rho1, rho2), er_true, er_pure))
    rows.sort(key=lambda r: (r.alpha, r.seed))
    return rows


def _row(alpha, seed, res: MlseResult, truth, er_true, er_pure) -> SweepRow:
    if res.error is not None:
        logger.warning("alpha=%r seed=%d failed: %s", alpha, seed, res.error)
        er = math.nan
    else:
        er = error_rate(res.opt_povm, *truth)
    return SweepRow(alpha, seed, er, er_true, er_pure, res.loglik, res.iterations, res.residual,
                    res.converged, res.error)


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.csv_fields())
    return buf.getvalue()


def write_csv(rows: Sequence[SweepRow], path) -> None:
    Path(path).write_text(rows_to_csv(rows))


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        return list(reader)


# -- problem files ---------------------------------------------------------
#
# JSON document:
#   {"dim": 2, "num_states": 2, "num_outcomes": 4,
#    "prior_povm": [{"label": "+x", "matrix": [[[re, im], ...], ...]}, ...],
#    "frequencies": [[...], [...]],
#    "true_states": [[[[re, im], ...], ...], ...]}        (optional)


def encode_matrix(a: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(a, dtype=complex)]


def _decode_matrix(data, dim: int, where: str) -> np.ndarray:
    try:
        a = np.array(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProblemFileError(f"{where}: not a matrix of [re, im] pairs") from exc
    if a.shape != (dim, dim, 2):
        raise ProblemFileError(f"{where}: expected shape {dim}x{dim} of [re, im] pairs, got {a.shape}")
    return a[..., 0] + 1j * a[..., 1]


def problem_document(prior: PovmSet, frequencies, true_states=None) -> dict:
    f = np.asarray(frequencies, dtype=float)
    doc = {
        "dim": prior.dim,
        "num_states": int(f.shape[0]),
        "num_outcomes": len(prior),
        "prior_povm": [{"label": lab, "matrix": encode_matrix(e)} for lab, e in zip(prior.labels, prior.elements)],
        "frequencies": [[float(x) for x in row] for row in f],
    }
    if true_states is not None:
        doc["true_states"] = [encode_matrix(r) for r in true_states]
    return doc


def write_problem(path, prior: PovmSet, frequencies, true_states=None) -> None:
    Path(path).write_text(json.dumps(problem_document(prior, frequencies, true_states), indent=1) + "\n")


_PROBLEM_KEYS = {"dim", "num_states", "num_outcomes", "prior_povm", "frequencies", "true_states"}


def parse_problem(doc: dict) -> tuple[MlseProblem, list[np.ndarray] | None]:
    if not isinstance(doc, dict):
        raise ProblemFileError("problem document must be a JSON object")
    unknown = sorted(set(doc) - _PROBLEM_KEYS)
    if unknown:
        raise ProblemFileError(f"unknown field(s): {', '.join(unknown)}")
    for key in ("dim", "num_states", "num_outcomes", "prior_povm", "frequencies"):
        if key not in doc:
            raise ProblemFileError(f"missing field '{key}'")
    dim, n_states, n_out = doc["dim"], doc["num_states"], doc["num_outcomes"]
    for key, v in (("dim", dim), ("num_states", n_states), ("num_outcomes", n_out)):
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ProblemFileError(f"field '{key}' must be a positive integer, got {v!r}")

    items = doc["prior_povm"]
    if not isinstance(items, list) or len(items) != n_out:
        raise ProblemFileError(f"field 'prior_povm' must list {n_out} elements")
    elements, labels = [], []
    for k, item in enumerate(items):
        if not isinstance(item, dict) or "matrix" not in item:
            raise ProblemFileError(f"prior_povm[{k}]: expected an object with a 'matrix'")
        elements.append(_decode_matrix(item["matrix"], dim, f"prior_povm[{k}].matrix"))
        labels.append(str(item.get("label", k)))
    try:
        prior = PovmSet(tuple(elements), tuple(labels))
    except ValueError as exc:
        raise ProblemFileError(f"prior_povm: {exc}") from exc

    freqs = doc["frequencies"]
    if not isinstance(freqs, list) or len(freqs) != n_states:
        raise ProblemFileError(f"field 'frequencies' must have {n_states} rows")
    for i, row in enumerate(freqs):
        if not isinstance(row, list) or len(row) != n_out:
            raise ProblemFileError(f"frequencies[{i}]: expected {n_out} entries")
    try:
        problem = MlseProblem(prior, np.array(freqs, dtype=float))
    except (TypeError, ValueError, NotImplementedError) as exc:
        raise ProblemFileError(f"frequencies: {exc}") from exc

    truth = None
    if doc.get("true_states") is not None:
        ts = doc["true_states"]
        if not isinstance(ts, list) or len(ts) != n_states:
            raise ProblemFileError(f"field 'true_states' must list {n_states} matrices")
        truth = []
        for i, m in enumerate(ts):
            try:
                truth.append(check_density_matrix(_decode_matrix(m, dim, f"true_states[{i}]"), trace_tol=1e-9))
            except ProblemFileError:
                raise
            except ValueError as exc:
                raise ProblemFileError(f"true_states[{i}]: {exc}") from exc
    return problem, truth


def load_problem(path) -> tuple[MlseProblem, list[np.ndarray] | None]:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_problem(doc)


def solve_report(result: MlseResult, true_states=None) -> dict:
    report = {
        "converged": result.converged,
        "iterations": result.iterations,
        "residual": result.residual,
        "loglik_final": result.loglik,
        "est_states": [encode_matrix(r) for r in result.est_states],
        "est_purities": result.purities(),
        "opt_povm": [encode_matrix(e) for e in result.opt_povm.elements] if result.opt_povm else None,
    }
    if result.error:
        report["error"] = result.error
    if true_states is not None and result.opt_povm is not None and len(true_states) == 2:
        report["er_designed"] = error_rate(result.opt_povm, *true_states)
        report["er_helstrom_true"] = helstrom_two_state(*true_states).error_rate
        report["true_purities"] = [purity(r) for r in true_states]
    return report


def solve_problem_file(path, options: MlseOptions | None = None) -> tuple[MlseResult, dict]:
    """Load a problem file, run the estimation and build a JSON-ready report."""
    problem, truth = load_problem(path)
    result = run_mlse_batch([problem], options)[0]
    return result, solve_report(result, truth)
