import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdiscrim.helstrom import error_rate
from qdiscrim.mlse import (
    DegenerateLikelihoodError,
    InvalidProblemError,
    MlseIterationState,
    MlseOptions,
    MlseProblem,
    UnsupportedFeatureError,
    check_frequencies,
    compute_R,
    compute_S,
    fixed_point_residual,
    initial_state,
    iterate_once,
    log_likelihood,
    permute_problem,
    perturbed_start,
    run_mlse,
    run_mlse_batch,
)
from qdiscrim.states import PovmSet, StateParams, born_table, make_prior_povm, make_state, pauli_projector, state_pair

from conftest import random_density, random_povm

HALF = np.eye(2, dtype=complex) / 2
QUARTER_PRIOR = PovmSet(tuple(np.eye(2, dtype=complex) / 4 for _ in range(4)))
Z_PRIOR = PovmSet((np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex)))


def fig3_problem(alpha):
    prior = make_prior_povm("xyz")
    rhos = state_pair(alpha, 1.0, 0.75)
    return MlseProblem(prior, born_table(rhos, prior)), rhos


def fig3_bound(alpha):
    return 0.5 * (1 - 7 / 8 * math.sin(2 * alpha))


def random_problem(rng, dim, n):
    prior = PovmSet(tuple(random_povm(rng, dim, dim * dim)))
    rhos = [random_density(rng, dim) for _ in range(n)]
    f = born_table(rhos, prior)
    f = f / f.sum(axis=1, keepdims=True)
    return MlseProblem(prior, f)


# log_likelihood


def test_loglik_maximally_mixed():
    ll = log_likelihood([HALF, HALF], [HALF, HALF], QUARTER_PRIOR.stack(), np.full((2, 4), 0.25))
    assert ll == pytest.approx(-6 * math.log(2), abs=1e-12)


def test_loglik_perfectly_distinguishing():
    z = Z_PRIOR.stack()
    assert log_likelihood(z, z, z, np.eye(2)) == 0.0


def test_loglik_against_scalar_sum():
    prior = make_prior_povm("xy")
    rhos = state_pair(math.pi / 4, 1.0, 1.0)
    povm = (pauli_projector("x", 1), pauli_projector("x", -1))
    f = born_table(rhos, prior)
    expected = 0.0
    for i in range(2):
        expected += math.log(np.trace(rhos[i] @ povm[i]).real)
        for k in range(4):
            p = np.trace(rhos[i] @ prior[k]).real
            if f[i, k] > 0:
                expected += f[i, k] * math.log(p)
    ll = log_likelihood(rhos, povm, prior.stack(), f)
    assert ll == pytest.approx(expected, abs=1e-12)
    # P_ii = 1 and the four prior probabilities are 1/2, 0, 1/4, 1/4
    assert ll == pytest.approx(-3 * math.log(2), abs=1e-12)


def test_loglik_degenerate():
    z = Z_PRIOR.stack()
    with pytest.raises(DegenerateLikelihoodError):
        log_likelihood(z, z[::-1], z, np.eye(2))
    with pytest.raises(DegenerateLikelihoodError):
        log_likelihood(z, z, z, np.full((2, 2), 0.5))


# kernels


def test_compute_R_examples():
    r = compute_R(HALF, HALF, QUARTER_PRIOR.stack(), np.full(4, 0.25))
    np.testing.assert_allclose(r, 2 * np.eye(2), atol=1e-15)
    r = compute_R(HALF, HALF, QUARTER_PRIOR.stack(), np.zeros(4))
    np.testing.assert_allclose(r, np.eye(2), atol=1e-15)


def test_compute_R_hermitian(rng):
    for dim in (2, 3, 4):
        prior = random_povm(rng, dim, 5)
        f = rng.dirichlet(np.ones(5))
        r = compute_R(random_density(rng, dim), random_povm(rng, dim, 2)[0], prior, f)
        assert np.abs(r - r.conj().T).max() < 1e-12


def test_compute_S_examples():
    np.testing.assert_allclose(compute_S(HALF, 0.5), np.eye(2), atol=1e-15)
    z = np.diag([1.0, 0.0])
    np.testing.assert_allclose(compute_S(z, 1.0), z, atol=0)
    rho = make_state(StateParams(math.pi / 6, 0.9))
    np.testing.assert_allclose(compute_S(rho, 0.25), 4 * rho, atol=1e-15)
    with pytest.raises(DegenerateLikelihoodError):
        compute_S(rho, 0.0)


# problem validation


def test_problem_validation():
    prior = make_prior_povm("xy")
    with pytest.raises(InvalidProblemError, match="row 1 sums to 0.8"):
        MlseProblem(prior, [[0.25] * 4, [0.2] * 4])
    with pytest.raises(InvalidProblemError, match="columns"):
        MlseProblem(prior, [[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(InvalidProblemError, match="negative"):
        check_frequencies([[1.5, -0.5]])
    with pytest.raises(UnsupportedFeatureError):
        MlseProblem(prior, [[0.25] * 4, [0.25] * 4], num_outcomes=3)
    with pytest.raises(NotImplementedError):
        MlseProblem(prior, [[0.25] * 4, [0.25] * 4], num_outcomes=3)


def test_options_validation():
    with pytest.raises(ValueError):
        MlseOptions(damping=0.0)
    with pytest.raises(ValueError):
        MlseOptions(tol=0.0)
    with pytest.raises(ValueError):
        MlseOptions(max_iter=-1)


# iteration


def test_uniform_start_is_extremal_for_uninformative_data():
    problem = MlseProblem(QUARTER_PRIOR, np.full((2, 4), 0.25))
    assert fixed_point_residual(initial_state(problem), problem) < 1e-12


def test_uniform_start_not_extremal_for_real_data():
    problem, _ = fig3_problem(math.pi / 6)
    assert fixed_point_residual(initial_state(problem), problem) > 1e-3


def test_initial_state_shape():
    problem, _ = fig3_problem(0.3)
    s = initial_state(problem)
    np.testing.assert_array_equal(s.states, np.repeat(HALF[None], 2, axis=0))
    np.testing.assert_array_equal(s.povm, np.repeat(HALF[None], 2, axis=0))
    assert s.iteration == 0


def test_converged_state_is_fixed_point():
    problem, _ = fig3_problem(math.pi / 4)
    res = run_mlse(problem)
    assert res.converged
    assert fixed_point_residual(res.final_state, problem) < 1e-12
    nxt = iterate_once(res.final_state, problem)
    for a, b in zip(np.concatenate([nxt.states, nxt.povm]), np.concatenate([res.est_states, res.opt_povm.stack()])):
        assert np.linalg.norm(a - b) < 1e-12


@pytest.mark.parametrize("dim,n", [(2, 2), (3, 2), (3, 3), (4, 3)])
def test_iterate_normalizes_arbitrary_input(rng, dim, n):
    problem = random_problem(rng, dim, n)
    start = perturbed_start(problem, rng, scale=2.0)
    out = iterate_once(start, problem)
    for rho in out.states:
        assert abs(np.trace(rho).real - 1) < 1e-12
    assert np.abs(out.povm.sum(axis=0) - np.eye(dim)).max() < 1e-10
    assert out.iteration == 1


def test_single_state_reduces_to_tomography_update():
    prior = make_prior_povm("xyz")
    rho_true = make_state(StateParams(0.4, 0.8))
    f = born_table([rho_true], prior)
    problem = MlseProblem(prior, f)
    state = initial_state(problem)
    for _ in range(5):
        rho = state.states[0]
        r = np.eye(2) + sum(f[0, k] / np.trace(rho @ prior[k]).real * prior[k] for k in range(len(prior)))
        expected = r @ rho @ r
        expected /= np.trace(expected).real
        state = iterate_once(state, problem)
        np.testing.assert_allclose(state.states[0], expected, atol=1e-13)
        np.testing.assert_allclose(state.povm[0], np.eye(2), atol=1e-13)


def test_iterate_degenerate_raises():
    z = Z_PRIOR.stack()
    problem = MlseProblem(Z_PRIOR, np.eye(2))
    bad = MlseIterationState(z, z[::-1], np.ones(2), np.eye(2), 0.0, 7)
    with pytest.raises(DegenerateLikelihoodError, match="iteration 7"):
        iterate_once(bad, problem)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), dim=st.integers(2, 4), n=st.integers(2, 3),
       damping=st.sampled_from([0.5, 1.0]))
def test_iteration_invariants(seed, dim, n, damping):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng, dim, n)
    state = perturbed_start(problem, rng, scale=1.0)
    for _ in range(3):
        state = iterate_once(state, problem, damping=damping)
        for op in np.concatenate([state.states, state.povm]):
            assert np.abs(op - op.conj().T).max() < 1e-10
            assert np.linalg.eigvalsh(op).min() > -1e-9
        assert np.abs(np.trace(state.states, axis1=1, axis2=2) - 1).max() < 1e-10
        assert np.abs(state.povm.sum(axis=0) - np.eye(dim)).max() < 1e-9


# full runs


def test_orthogonal_states():
    problem = MlseProblem(Z_PRIOR, np.eye(2))
    res = run_mlse(problem)
    assert res.converged
    z = Z_PRIOR.stack()
    np.testing.assert_allclose(res.opt_povm.stack(), z, atol=1e-6)
    assert error_rate(res.opt_povm, z[0], z[1]) < 1e-6


def test_identical_states():
    prior = make_prior_povm("xyz")
    rho = make_state(StateParams(0.3, 0.7))
    problem = MlseProblem(prior, born_table([rho, rho], prior))
    res = run_mlse(problem)
    assert error_rate(res.opt_povm, rho, rho) == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("alpha", [math.pi / 16, math.pi / 8, 3 * math.pi / 16, math.pi / 4])
def test_complete_tomography_reaches_bound(alpha):
    problem, rhos = fig3_problem(alpha)
    res = run_mlse(problem)
    assert res.converged and res.residual < 1e-12
    gap = error_rate(res.opt_povm, *rhos) - fig3_bound(alpha)
    assert -1e-12 <= gap < 1e-2
    assert len(res.loglik_trace) == res.iterations + 1
    assert np.diff(res.loglik_trace).min() > -1e-12


def test_pi_over_4_regression():
    problem, rhos = fig3_problem(math.pi / 4)
    res = run_mlse(problem)
    assert res.iterations == 49
    assert error_rate(res.opt_povm, *rhos) == pytest.approx(0.0625, abs=1e-13)
    assert res.loglik == pytest.approx(-3.3068352160, abs=1e-9)


def test_other_starts_find_higher_likelihood():
    # the likelihood has more than one maximum; the uniform start lands on
    # the symmetric (real) one and a random start on a complex one with
    # higher likelihood but a worse error rate
    problem, rhos = fig3_problem(math.pi / 4)
    uniform = run_mlse(problem)
    other = run_mlse(problem, start=perturbed_start(problem, np.random.default_rng(1), scale=1.0))
    assert other.converged
    assert other.loglik == pytest.approx(-3.306242657534669, abs=1e-10)
    assert other.loglik > uniform.loglik + 5e-4
    gap = error_rate(other.opt_povm, *rhos) - fig3_bound(math.pi / 4)
    assert gap == pytest.approx(8.3037637e-3, abs=1e-9)


@pytest.mark.slow
def test_direct_maximization_agrees():
    so = pytest.importorskip("scipy.optimize")
    problem, rhos = fig3_problem(math.pi / 4)
    prior = problem.prior_povm.stack()
    f = problem.frequencies
    paulis = [pauli_projector(a, 1) - pauli_projector(a, -1) for a in "xyz"]

    def ball(v):
        n = np.linalg.norm(v)
        return v * np.tanh(n) / n if n > 0 else v

    def unpack(x):
        rho = [(np.eye(2) + sum(c * p for c, p in zip(ball(x[3 * i:3 * i + 3]), paulis))) / 2 for i in range(2)]
        e0 = 1 / (1 + math.exp(-x[6]))
        e = ball(x[7:10]) * min(e0, 1 - e0)
        pi1 = e0 * np.eye(2) + sum(c * p for c, p in zip(e, paulis))
        return rho, [pi1, np.eye(2) - pi1]

    def neg(x):
        rho, pis = unpack(x)
        return -log_likelihood(rho, pis, prior, f, prob_floor=0.0)

    rng = np.random.default_rng(0)
    best = min((so.minimize(neg, rng.normal(size=10), method="BFGS", options={"gtol": 1e-10, "maxiter": 5000}) for _ in range(40)), key=lambda r: r.fun)
    assert -best.fun == pytest.approx(-3.306242657534669, abs=1e-7)


def test_max_iter_not_an_error():
    problem, _ = fig3_problem(math.pi / 8)
    res = run_mlse(problem, MlseOptions(max_iter=5))
    assert not res.converged
    assert res.iterations == 5
    assert res.error is None
    assert res.residual > 1e-12


def test_degenerate_run_raises():
    z = Z_PRIOR.stack()
    problem = MlseProblem(Z_PRIOR, np.eye(2))
    start = MlseIterationState(z, z[::-1], np.ones(2), np.eye(2), 0.0, 0)
    with pytest.raises(DegenerateLikelihoodError):
        run_mlse(problem, MlseOptions(degenerate_patience=3), start=start)
    res = run_mlse_batch([problem], MlseOptions(degenerate_patience=3), [start])[0]
    assert not res.converged and "iteration" in res.error


def test_batch_matches_solo():
    prior = make_prior_povm("xy")
    problems = [MlseProblem(prior, born_table(state_pair(a, 0.9, 0.9), prior)) for a in (0.2, 0.5, 0.7)]
    opts = MlseOptions(max_iter=400)
    batch = run_mlse_batch(problems, opts)
    for p, b in zip(problems, batch):
        solo = run_mlse(p, opts)
        assert solo.iterations == b.iterations
        assert solo.loglik_trace == b.loglik_trace
        np.testing.assert_array_equal(solo.est_states, b.est_states)
        np.testing.assert_array_equal(solo.opt_povm.stack(), b.opt_povm.stack())


def test_batch_rejects_mixed_priors():
    a = MlseProblem(make_prior_povm("xy"), np.full((2, 4), 0.25))
    b = MlseProblem(make_prior_povm("xz"), np.full((2, 4), 0.25))
    with pytest.raises(InvalidProblemError):
        run_mlse_batch([a, b])
    assert run_mlse_batch([]) == []


def test_permutation_equivariance_bit_exact(rng):
    problem = random_problem(rng, 3, 3)
    opts = MlseOptions(max_iter=60)
    base = run_mlse(problem, opts)
    for order in ([1, 2, 0], [2, 0, 1], [0, 2, 1]):
        res = run_mlse(permute_problem(problem, order), opts)
        np.testing.assert_array_equal(res.est_states, base.est_states[order])
        np.testing.assert_array_equal(res.final_state.povm, base.final_state.povm[order])
        assert res.loglik_trace == base.loglik_trace


def test_purities_reported():
    problem, _ = fig3_problem(math.pi / 4)
    res = run_mlse(problem)
    p = res.purities()
    assert len(p) == 2 and all(0.5 - 1e-12 <= x <= 1 + 1e-12 for x in p)
