"""Joint maximum-likelihood estimation of unknown states and their discrimination POVM.

The calibration data ``f[i, k]`` come from measuring each unknown state
``rho_i`` with a fixed prior POVM ``pi_k``.  The designed POVM ``Pi_j`` should
make ``Tr[rho_i Pi_j]`` look like a Kronecker delta.  Both are found together
by maximizing

    sum_i ln Tr[rho_i Pi_i] + sum_ik f_ik ln Tr[rho_i pi_k]

under ``Tr rho_i = 1`` and ``sum_j Pi_j = 1`` with the multiplicative updates

    rho_i <- R_i rho_i R_i / Tr[R_i rho_i R_i]
    Pi_j  <- lam^+ S_j Pi_j S_j lam^+,     lam = (sum_j S_j Pi_j S_j)^(1/2)

where ``R_i = Pi_i / P_ii + sum_k (f_ik / p_ik) pi_k`` and ``S_j = rho_j / P_jj``.
All kernels are built from the current iterate (a simultaneous update), then
optionally mixed with the current iterate by a damping factor.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .qmat import PINV_REL_THRESHOLD, hermitize, identity, sqrt_and_pinv
from .states import PovmSet, purity

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-300


class DegenerateLikelihoodError(ArithmeticError):
    """A probability entering a logarithm or a denominator vanished."""

    def __init__(self, message: str, iteration: int | None = None):
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
        self.iteration = iteration


class UnsupportedFeatureError(NotImplementedError):
    pass


class InvalidProblemError(ValueError):
    pass


def check_frequencies(frequencies, num_outcomes: int | None = None, tol: float = 1e-9) -> np.ndarray:
    """Validate an I x K table of calibration frequencies (rows sum to one)."""
    f = np.array(frequencies, dtype=float)
    if f.ndim != 2 or f.shape[0] == 0 or f.shape[1] == 0:
        raise InvalidProblemError(f"frequencies must be a non-empty 2-D table, got shape {f.shape}")
    if num_outcomes is not None and f.shape[1] != num_outcomes:
        raise InvalidProblemError(
            f"frequencies have {f.shape[1]} columns but the prior POVM has {num_outcomes} elements"
        )
    if not np.all(np.isfinite(f)):
        raise InvalidProblemError("frequencies contain non-finite values")
    for i, row in enumerate(f):
        if np.any(row < 0):
            raise InvalidProblemError(f"frequency row {i} has negative entries")
        if abs(row.sum() - 1.0) > tol:
            raise InvalidProblemError(f"frequency row {i} sums to {row.sum():.12g}, expected 1")
    return f


@dataclass(frozen=True)
class MlseProblem:
    """Prior POVM plus one row of calibration frequencies per unknown state.

    The number of designed POVM elements equals the number of states.
    """

    prior_povm: PovmSet
    frequencies: np.ndarray
    num_outcomes: int | None = None

    def __post_init__(self):
        f = check_frequencies(self.frequencies, len(self.prior_povm))
        j = f.shape[0] if self.num_outcomes is None else int(self.num_outcomes)
        if j > f.shape[0]:
            raise UnsupportedFeatureError(
                f"{j} POVM elements for {f.shape[0]} states: more outcomes than hypotheses "
                "leads to unambiguous (inconclusive-outcome) discrimination, which is not supported"
            )
        if j != f.shape[0]:
            raise InvalidProblemError(f"need one POVM element per state, got J={j}, I={f.shape[0]}")
        f.setflags(write=False)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "num_outcomes", j)

    @property
    def dim(self) -> int:
        return self.prior_povm.dim

    @property
    def num_states(self) -> int:
        return self.frequencies.shape[0]


@dataclass(frozen=True)
class MlseOptions:
    tol: float = 1e-12
    max_iter: int = 100_000
    prob_floor: float = PROB_FLOOR
    pinv_threshold: float = PINV_REL_THRESHOLD
    damping: float = 0.5
    # consecutive floored iterations tolerated before giving up
    degenerate_patience: int = 100

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping!r}")
        if not 0.0 < self.prob_floor < 1.0:
            raise ValueError("prob_floor must lie in (0, 1)")


@dataclass(frozen=True)
class MlseIterationState:
    """One iterate together with its multipliers and log-likelihood.

    ``mu`` and ``lam`` are the normalizations the next update would apply.
    """

    states: np.ndarray  # (I, d, d)
    povm: np.ndarray  # (J, d, d)
    mu: np.ndarray  # (I,)
    lam: np.ndarray  # (d, d)
    loglik: float
    iteration: int = 0


@dataclass
class MlseResult:
    est_states: np.ndarray
    opt_povm: PovmSet
    loglik_trace: list[float]
    iterations: int
    residual: float
    converged: bool
    final_state: MlseIterationState | None = field(default=None, repr=False)
    error: str | None = None

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]

    def purities(self) -> list[float]:
        return [purity(r) for r in self.est_states]


class _Evaluation(NamedTuple):
    # every field carries a leading batch axis
    next_states: np.ndarray
    next_povm: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    loglik: np.ndarray
    residual: np.ndarray
    degenerate: np.ndarray


def _symmetric_sum(terms: np.ndarray) -> np.ndarray:
    """Sum over the hypothesis axis (-3) independently of the order of the terms.

    Sorting each entry's summands first makes relabeled problems produce
    bit-identical sums (two terms commute exactly, so they skip the sort).
    """
    if terms.shape[-3] <= 2:
        return terms.sum(axis=-3)
    re = np.sort(terms.real, axis=-3).sum(axis=-3)
    im = np.sort(terms.imag, axis=-3).sum(axis=-3)
    return re + 1j * im


def _diag_probs(states: np.ndarray, povm: np.ndarray) -> np.ndarray:
    return np.einsum("...iab,...iba->...i", states, povm).real


def _prior_probs(states: np.ndarray, prior: np.ndarray) -> np.ndarray:
    return np.einsum("...iab,kba->...ik", states, prior).real


def _loglik(p_diag: np.ndarray, p_prior: np.ndarray, f: np.ndarray) -> float:
    active = f > 0
    return math.fsum(np.concatenate((np.log(p_diag), f[active] * np.log(p_prior[active]))))


def _max_frobenius(diff: np.ndarray) -> np.ndarray:
    return np.sqrt(np.max(np.sum(diff.real**2 + diff.imag**2, axis=(-2, -1)), axis=-1))


def _sqrt_and_pinv(a: np.ndarray, rel_threshold: float) -> tuple[np.ndarray, np.ndarray]:
    # batched version of qmat.sqrt_and_pinv
    # the argument is a sum of PSD conjugations, so negative eigenvalues are round-off
    w, v = np.linalg.eigh(hermitize(a))
    root = np.sqrt(np.clip(w, 0.0, None))
    top = root[..., -1:]
    keep = (root >= rel_threshold * top) & (root > 0)
    inv = np.where(keep, 1.0 / np.where(keep, root, 1.0), 0.0)
    vh = np.conj(np.swapaxes(v, -1, -2))
    return hermitize((v * root[..., None, :]) @ vh), hermitize((v * inv[..., None, :]) @ vh)


def _evaluate(
    states: np.ndarray,
    povm: np.ndarray,
    prior: np.ndarray,
    f: np.ndarray,
    floor: float,
    pinv_threshold: float,
) -> _Evaluation:
    """Kernels, multipliers and the undamped update for a batch of iterates.

    Shapes: ``states``/``povm`` (B, I, d, d), ``prior`` (K, d, d), ``f`` (B, I, K).
    """
    p_diag = _diag_probs(states, povm)
    p_prior = _prior_probs(states, prior)
    active = f > 0
    degenerate = np.any(p_diag < floor, axis=-1) | np.any((p_prior < floor) & active, axis=(-2, -1))
    pd = np.maximum(p_diag, floor)
    pp = np.maximum(p_prior, floor)
    weights = np.where(active, f / pp, 0.0)

    r = povm / pd[..., None, None] + np.einsum("...ik,kab->...iab", weights, prior)
    rrr = r @ states @ r
    mu2 = np.einsum("...iaa->...i", rrr).real
    next_states = hermitize(rrr / mu2[..., None, None])

    s = states / pd[..., None, None]
    sps = s @ povm @ s
    lam, lam_inv = _sqrt_and_pinv(_symmetric_sum(sps), pinv_threshold)
    lam_inv = lam_inv[..., None, :, :]
    next_povm = hermitize(lam_inv @ sps @ lam_inv)

    residual = np.maximum(_max_frobenius(next_states - states), _max_frobenius(next_povm - povm))
    loglik = np.array([_loglik(pd[b], pp[b], f[b]) for b in range(f.shape[0])])
    return _Evaluation(next_states, next_povm, np.sqrt(mu2), lam, loglik, residual, degenerate)


def _as_stack(ops, name: str) -> np.ndarray:
    if isinstance(ops, PovmSet):
        return ops.stack()
    a = np.asarray(ops, dtype=complex)
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise InvalidProblemError(f"{name} must be a stack of square matrices, got shape {a.shape}")
    return a


def log_likelihood(states, povm, prior_povm, frequencies, prob_floor: float = PROB_FLOOR) -> float:
    """``sum_i ln P_ii + sum_ik f_ik ln p_ik``.

    Raises :class:`DegenerateLikelihoodError` if a probability that carries
    weight is below ``prob_floor``.
    """
    rhos = _as_stack(states, "states")
    pis = _as_stack(povm, "povm")
    prior = _as_stack(prior_povm, "prior_povm")
    f = np.asarray(frequencies, dtype=float)
    if not (rhos.shape[1:] == pis.shape[1:] == prior.shape[1:]):
        raise InvalidProblemError("states, povm and prior_povm have different dimensions")
    if f.shape != (rhos.shape[0], prior.shape[0]) or pis.shape[0] != rhos.shape[0]:
        raise InvalidProblemError("inconsistent numbers of states, outcomes or frequency entries")
    p_diag = _diag_probs(rhos, pis)
    p_prior = _prior_probs(rhos, prior)
    if np.any(p_diag < prob_floor):
        i = int(np.argmin(p_diag))
        raise DegenerateLikelihoodError(f"P[{i},{i}] = {p_diag[i]:.3g} below floor")
    bad = (f > 0) & (p_prior < prob_floor)
    if np.any(bad):
        i, k = map(int, np.argwhere(bad)[0])
        raise DegenerateLikelihoodError(f"p[{i},{k}] = {p_prior[i, k]:.3g} below floor with f > 0")
    return _loglik(p_diag, p_prior, f)


def compute_R(state, povm_element, prior_povm, frequencies_row, prob_floor: float = PROB_FLOOR) -> np.ndarray:
    """State kernel ``Pi_i / P_ii + sum_k (f_ik / p_ik) pi_k``; zero-frequency terms are skipped."""
    rho = np.asarray(state, dtype=complex)
    pi_i = np.asarray(povm_element, dtype=complex)
    prior = _as_stack(prior_povm, "prior_povm")
    f = np.asarray(frequencies_row, dtype=float)
    p_ii = float(np.real(np.sum(rho * pi_i.T)))
    if p_ii < prob_floor:
        raise DegenerateLikelihoodError(f"P_ii = {p_ii:.3g} below floor")
    r = pi_i / p_ii
    for k, fk in enumerate(f):
        if fk > 0:
            p_ik = float(np.real(np.sum(rho * prior[k].T)))
            if p_ik < prob_floor:
                raise DegenerateLikelihoodError(f"p_i{k} = {p_ik:.3g} below floor with f > 0")
            r = r + (fk / p_ik) * prior[k]
    return hermitize(r)


def compute_S(state, p_jj: float, prob_floor: float = PROB_FLOOR) -> np.ndarray:
    """POVM kernel ``rho_j / P_jj``."""
    if p_jj < prob_floor:
        raise DegenerateLikelihoodError(f"P_jj = {p_jj:.3g} below floor")
    return np.asarray(state, dtype=complex) / p_jj


def _evaluate_one(problem, states, povm, prob_floor, pinv_threshold) -> _Evaluation:
    return _evaluate(states[None], povm[None], problem.prior_povm.stack(),
                     problem.frequencies[None], prob_floor, pinv_threshold)


def _make_state(problem, states, povm, iteration, prob_floor, pinv_threshold) -> MlseIterationState:
    ev = _evaluate_one(problem, states, povm, prob_floor, pinv_threshold)
    return MlseIterationState(states, povm, ev.mu[0], ev.lam[0], float(ev.loglik[0]), iteration)


def _uniform_start(dim: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    states = np.repeat((identity(dim) / dim)[None], n, axis=0)
    povm = np.repeat((identity(dim) / n)[None], n, axis=0)
    return states, povm


def initial_state(problem: MlseProblem, prob_floor: float = PROB_FLOOR,
                  pinv_threshold: float = PINV_REL_THRESHOLD) -> MlseIterationState:
    """Maximally mixed states and the uniform POVM ``1/J``."""
    states, povm = _uniform_start(problem.dim, problem.num_states)
    return _make_state(problem, states, povm, 0, prob_floor, pinv_threshold)


def perturbed_start(problem: MlseProblem, rng: np.random.Generator, scale: float = 0.1,
                    prob_floor: float = PROB_FLOOR,
                    pinv_threshold: float = PINV_REL_THRESHOLD) -> MlseIterationState:
    """Random full-rank start near the uniform one, for multi-start diagnostics."""
    d, n = problem.dim, problem.num_states

    def rand_psd():
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        return hermitize(g @ g.conj().T)

    states = []
    for _ in range(n):
        a = identity(d) + scale * rand_psd()
        states.append(a / np.trace(a).real)
    blocks = [identity(d) / n + scale / n * rand_psd() for _ in range(n)]
    _, total_inv = sqrt_and_pinv(sum(blocks))
    povm = [hermitize(total_inv @ b @ total_inv) for b in blocks]
    return _make_state(problem, np.array(states), np.array(povm), 0, prob_floor, pinv_threshold)


def _mix(old: np.ndarray, new: np.ndarray, damping: float) -> np.ndarray:
    if damping == 1.0:
        return new
    return (1.0 - damping) * old + damping * new


def iterate_once(state: MlseIterationState, problem: MlseProblem, damping: float = 1.0,
                 prob_floor: float = PROB_FLOOR,
                 pinv_threshold: float = PINV_REL_THRESHOLD) -> MlseIterationState:
    """Apply one simultaneous update to every state and POVM element."""
    ev = _evaluate_one(problem, state.states, state.povm, prob_floor, pinv_threshold)
    if ev.degenerate[0]:
        raise DegenerateLikelihoodError("probability below floor", state.iteration)
    states = _mix(state.states, ev.next_states[0], damping)
    povm = _mix(state.povm, ev.next_povm[0], damping)
    return _make_state(problem, states, povm, state.iteration + 1, prob_floor, pinv_threshold)


def fixed_point_residual(state: MlseIterationState, problem: MlseProblem,
                         prob_floor: float = PROB_FLOOR,
                         pinv_threshold: float = PINV_REL_THRESHOLD) -> float:
    """Largest Frobenius distance between the iterate and its undamped update."""
    ev = _evaluate_one(problem, state.states, state.povm, prob_floor, pinv_threshold)
    return float(ev.residual[0])


def run_mlse_batch(
    problems: Sequence[MlseProblem],
    options: MlseOptions | None = None,
    starts: Sequence[MlseIterationState] | None = None,
) -> list[MlseResult]:
    """Run several problems sharing one prior POVM in lock-step.

    Each problem stops updating as soon as its own residual drops below
    ``tol``.  Problems whose likelihood degenerates come back with
    ``converged=False`` and ``error`` set instead of raising.
    """
    opts = options or MlseOptions()
    if not problems:
        return []
    first = problems[0]
    prior = first.prior_povm.stack()
    for q in problems[1:]:
        if q.frequencies.shape != first.frequencies.shape or not np.array_equal(q.prior_povm.stack(), prior):
            raise InvalidProblemError("batched problems must share the prior POVM and table shape")
    f = np.array([q.frequencies for q in problems])
    nb = len(problems)
    if starts is None:
        s0, p0 = _uniform_start(first.dim, first.num_states)
        states = np.repeat(s0[None], nb, axis=0)
        povm = np.repeat(p0[None], nb, axis=0)
    else:
        states = np.array([st.states for st in starts])
        povm = np.array([st.povm for st in starts])

    traces: list[list[float]] = [[] for _ in range(nb)]
    results: list[MlseResult | None] = [None] * nb
    floored = np.zeros(nb, dtype=int)
    active = np.arange(nb)
    n = 0
    while active.size:
        ev = _evaluate(states, povm, prior, f[active], opts.prob_floor, opts.pinv_threshold)
        floored = np.where(ev.degenerate, floored + 1, 0)
        done = np.zeros(active.size, dtype=bool)
        for slot, b in enumerate(active):
            traces[b].append(float(ev.loglik[slot]))
            error = None
            if floored[slot] > opts.degenerate_patience:
                error = str(DegenerateLikelihoodError(
                    f"probabilities stayed below {opts.prob_floor:g} for {floored[slot]} iterations", n))
            converged = bool(ev.residual[slot] < opts.tol)
            if converged or error or n >= opts.max_iter:
                done[slot] = True
                final = MlseIterationState(states[slot], povm[slot], ev.mu[slot], ev.lam[slot],
                                           traces[b][-1], n)
                results[b] = _finish(final, traces[b], float(ev.residual[slot]),
                                     converged and error is None, error)
        keep = ~done
        active = active[keep]
        floored = floored[keep]
        states = _mix(states[keep], ev.next_states[keep], opts.damping)
        povm = _mix(povm[keep], ev.next_povm[keep], opts.damping)
        n += 1
    return results


def _finish(final: MlseIterationState, trace, residual, converged, error) -> MlseResult:
    labels = tuple(str(j + 1) for j in range(final.povm.shape[0]))
    try:
        opt_povm = PovmSet(tuple(final.povm), labels, psd_tol=1e-9, completeness_tol=1e-9)
    except ValueError as exc:
        if error is None:
            error = f"designed POVM invalid: {exc}"
        converged = False
        opt_povm = None
    if not converged:
        logger.info("no convergence after %d iterations (residual %.3g)", final.iteration, residual)
    result = MlseResult(final.states, opt_povm, trace, final.iteration, residual, converged, final, error)
    logger.debug("estimated-state purities %s", result.purities())
    return result


def run_mlse(
    problem: MlseProblem,
    options: MlseOptions | None = None,
    start: MlseIterationState | None = None,
) -> MlseResult:
    """Iterate from ``start`` (uniform by default) until the fixed-point residual drops below ``tol``.

    Convergence is judged on the undamped update, so a converged result has
    ``fixed_point_residual(...) < tol`` regardless of damping.  Running out of
    iterations is not an error; the result comes back with ``converged=False``.
    A degenerate likelihood raises :class:`DegenerateLikelihoodError`.
    """
    result = run_mlse_batch([problem], options, None if start is None else [start])[0]
    if result.error is not None:
        raise DegenerateLikelihoodError(result.error)
    return result


def permute_problem(problem: MlseProblem, order: Sequence[int]) -> MlseProblem:
    """Relabel hypotheses: row ``i`` of the result is row ``order[i]`` of ``problem``."""
    return MlseProblem(problem.prior_povm, problem.frequencies[list(order)])
