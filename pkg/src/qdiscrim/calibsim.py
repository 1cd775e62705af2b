"""Monte Carlo simulation of the calibration and communication stages.

Random numbers come from numpy's PCG64 bit generator.  Every independent
stream is seeded with ``SeedSequence(seed, spawn_key=key)``:

* calibration of state ``i`` with setting ``m`` uses ``key = (0, i, m)``;
* decision trials for hypothesis ``i`` use ``key = (1, i)``.

Outcomes are decided by comparing ``Generator.random()`` doubles against the
Born probability, which keeps the streams reproducible across platforms
and numpy releases, and independent of the order in which they are consumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .helstrom import error_rate
from .qmat import DimensionError
from .states import (
    PovmSet,
    StateParams,
    check_density_matrix,
    make_state,
    parse_settings,
    pauli_projector,
)

ASYMPTOTIC = math.inf
_CHUNK = 1 << 20
_MAX_SEED = 2**64 - 1


def parse_shots(value) -> float | int:
    """``"inf"``/``"asymptotic"``/``inf`` -> ASYMPTOTIC, otherwise a positive int."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "asymptotic"):
            return ASYMPTOTIC
        value = int(value)
    if isinstance(value, float):
        if math.isinf(value) and value > 0:
            return ASYMPTOTIC
        if not value.is_integer():
            raise ValueError(f"shots must be an integer, got {value!r}")
        value = int(value)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"shots must be a positive integer or 'inf', got {value!r}")
    if value < 1:
        raise ValueError(f"shots must be at least 1, got {value}")
    return value


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed <= _MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return int(seed)


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _count_below(rng: np.random.Generator, p: float, n: int) -> int:
    """Number of ``n`` uniform draws falling below ``p``."""
    count = 0
    left = n
    while left:
        m = min(left, _CHUNK)
        count += int(np.count_nonzero(rng.random(m) < p))
        left -= m
    return count


StateSpec = Union[StateParams, np.ndarray]


@dataclass(frozen=True)
class CalibrationConfig:
    true_states: tuple
    settings: tuple = ("x", "y")
    shots: float | int = 1000
    seed: int = 0

    def __post_init__(self):
        states = tuple(
            make_state(s) if isinstance(s, StateParams) else check_density_matrix(s)
            for s in self.true_states
        )
        if not states:
            raise ValueError("at least one true state is required")
        if any(s.shape != (2, 2) for s in states):
            raise DimensionError("calibration uses Pauli settings and needs qubit states")
        object.__setattr__(self, "true_states", states)
        object.__setattr__(self, "settings", parse_settings(self.settings))
        object.__setattr__(self, "shots", parse_shots(self.shots))
        object.__setattr__(self, "seed", check_seed(self.seed))

    @property
    def asymptotic(self) -> bool:
        return self.shots == ASYMPTOTIC


def _plus_probability(rho: np.ndarray, axis: str) -> float:
    p = float(np.real(np.sum(rho * pauli_projector(axis, 1).T)))
    return min(max(p, 0.0), 1.0)


def sample_frequencies(config: CalibrationConfig) -> np.ndarray:
    """Calibration frequency table, one row per true state.

    Columns follow ``make_prior_povm(config.settings)``: ``+a, -a`` for each
    axis ``a``.  Each setting is measured on ``shots`` systems and every count
    is divided by ``M * shots`` (M settings), so rows sum to one.  In
    asymptotic mode the exact Born probabilities are returned.
    """
    m = len(config.settings)
    table = np.empty((len(config.true_states), 2 * m))
    for i, rho in enumerate(config.true_states):
        for s, axis in enumerate(config.settings):
            p_plus = _plus_probability(rho, axis)
            if config.asymptotic:
                table[i, 2 * s] = p_plus / m
                table[i, 2 * s + 1] = (1.0 - p_plus) / m
            else:
                n = config.shots
                c = _count_below(stream(config.seed, 0, i, s), p_plus, n)
                table[i, 2 * s] = c / (m * n)
                table[i, 2 * s + 1] = (n - c) / (m * n)
    return table


def sample_counts(config: CalibrationConfig) -> np.ndarray:
    """Raw ``+`` counts per (state, setting), same streams as :func:`sample_frequencies`."""
    if config.asymptotic:
        raise ValueError("no counts in asymptotic mode")
    out = np.empty((len(config.true_states), len(config.settings)), dtype=np.int64)
    for i, rho in enumerate(config.true_states):
        for s, axis in enumerate(config.settings):
            out[i, s] = _count_below(stream(config.seed, 0, i, s), _plus_probability(rho, axis), config.shots)
    return out


@dataclass(frozen=True)
class EmpiricalErrorReport:
    trials: int  # per hypothesis
    wrong_1_given_2: int
    wrong_2_given_1: int
    empirical_er: float


def empirical_error_rate(povm: PovmSet, true_states: Sequence[np.ndarray], trials_per_state: int,
                         seed: int = 0) -> EmpiricalErrorReport:
    """Simulate ``trials_per_state`` decisions for each of the two hypotheses."""
    elems = povm.elements if isinstance(povm, PovmSet) else tuple(povm)
    if len(elems) != 2 or len(true_states) != 2:
        raise ValueError("empirical error rate needs two states and a two-element POVM")
    rhos = [np.asarray(r, dtype=complex) for r in true_states]
    if any(r.shape != elems[0].shape for r in rhos):
        raise DimensionError("states and POVM have different dimensions")
    if trials_per_state < 1:
        raise ValueError("trials_per_state must be positive")
    seed = check_seed(seed)
    # probability of deciding "1" for each hypothesis
    decide_1 = [min(max(float(np.real(np.sum(r * elems[0].T))), 0.0), 1.0) for r in rhos]
    n1 = _count_below(stream(seed, 1, 0), decide_1[0], trials_per_state)
    n2 = _count_below(stream(seed, 1, 1), decide_1[1], trials_per_state)
    wrong_2_given_1 = trials_per_state - n1
    wrong_1_given_2 = n2
    return EmpiricalErrorReport(
        trials_per_state,
        wrong_1_given_2,
        wrong_2_given_1,
        (wrong_1_given_2 + wrong_2_given_1) / (2 * trials_per_state),
    )


def exact_error_rate_of_design(opt_povm, true_states: Sequence[np.ndarray]) -> float:
    """Error rate of a designed two-outcome POVM against the true states."""
    if len(true_states) != 2:
        raise ValueError("exact error rate needs exactly two true states")
    return error_rate(opt_povm, true_states[0], true_states[1])
