import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdiscrim.states import (
    InvalidPovmError,
    InvalidStateError,
    PovmSet,
    StateParams,
    born_table,
    make_prior_povm,
    make_state,
    pauli_projector,
    purity,
)


def test_alpha_zero_is_plus_z():
    np.testing.assert_array_equal(make_state(StateParams(0.0, 0.3)), np.diag([1.0, 0.0]))


def test_symmetric_pure_state_is_plus_x():
    np.testing.assert_allclose(make_state(StateParams(math.pi / 4, 1.0)), 0.5 * np.ones((2, 2)), atol=1e-15)


def test_negative_branch_example():
    rho = make_state(StateParams(math.pi / 6, 0.9, -1))
    off = -0.9 * math.sqrt(3) / 4
    np.testing.assert_allclose(rho, [[0.75, off], [off, 0.25]], atol=1e-15)
    assert off == pytest.approx(-0.389711, abs=1e-6)


@pytest.mark.parametrize("alpha, d, sign", [(-0.1, 0.5, 1), (1.0, 0.5, 1), (0.3, 1.2, 1), (0.3, 0.5, 0)])
def test_params_out_of_range(alpha, d, sign):
    with pytest.raises(InvalidStateError):
        StateParams(alpha, d, sign)


@given(st.floats(0, math.pi / 4), st.floats(0, 1), st.sampled_from([1, -1]))
def test_state_invariants(alpha, d, sign):
    rho = make_state(StateParams(alpha, d, sign))
    c, s = math.cos(alpha), math.sin(alpha)
    det = np.linalg.det(rho).real
    assert det == pytest.approx(c * c * s * s * (1 - d * d), abs=1e-12)
    assert det >= -1e-15
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)


@given(st.floats(0, math.pi / 4), st.sampled_from([1, -1]))
def test_pure_when_d_is_one(alpha, sign):
    assert purity(make_state(StateParams(alpha, 1.0, sign))) == pytest.approx(1.0, abs=1e-12)


def test_pauli_projectors():
    np.testing.assert_array_equal(pauli_projector("z", 1), np.diag([1, 0]))
    np.testing.assert_array_equal(pauli_projector("x", 1), 0.5 * np.array([[1, 1], [1, 1]]))
    np.testing.assert_array_equal(pauli_projector("x", -1), 0.5 * np.array([[1, -1], [-1, 1]]))
    np.testing.assert_array_equal(pauli_projector("y", 1), 0.5 * np.array([[1, -1j], [1j, 1]]))
    for axis, sign in itertools.product("xyz", (1, -1)):
        p = pauli_projector(axis, sign)
        assert np.linalg.norm(p @ p - p) < 1e-12


def test_prior_single_setting_unscaled():
    povm = make_prior_povm(["x"])
    assert povm.labels == ("+x", "-x")
    np.testing.assert_array_equal(povm[0], pauli_projector("x", 1))


@pytest.mark.parametrize("settings", [s for n in (1, 2, 3) for s in itertools.permutations("xyz", n)])
def test_prior_povm_complete(settings):
    povm = make_prior_povm(settings)
    assert len(povm) == 2 * len(settings)
    assert np.linalg.norm(sum(povm.elements) - np.eye(2)) < 1e-12
    for e, (axis, sign) in zip(povm.elements, itertools.product(settings, (1, -1))):
        np.testing.assert_allclose(e, pauli_projector(axis, sign) / len(settings))


@pytest.mark.parametrize("bad", [[], ["x", "x"], ["w"]])
def test_prior_povm_rejects(bad):
    with pytest.raises(ValueError):
        make_prior_povm(bad)


def test_povm_set_validates():
    with pytest.raises(InvalidPovmError, match="completeness"):
        PovmSet((np.eye(2) / 2, np.eye(2) / 4))
    with pytest.raises(InvalidPovmError, match="not PSD"):
        PovmSet((np.diag([1.5, 0.5]), np.diag([-0.5, 0.5])))


def test_born_table_maximally_mixed():
    table = born_table([np.eye(2) / 2], make_prior_povm("xy"))
    np.testing.assert_allclose(table, 0.25, atol=1e-15)


@given(st.floats(0, math.pi / 4), st.floats(0, 1), st.sampled_from([1, -1]))
def test_born_table_family(alpha, d, sign):
    rho = make_state(StateParams(alpha, d, sign))
    table = born_table([rho], make_prior_povm("xy"))[0]
    assert table[0] == pytest.approx(0.25 * (1 + sign * d * math.sin(2 * alpha)), abs=1e-12)
    assert table[1] == pytest.approx(0.25 * (1 - sign * d * math.sin(2 * alpha)), abs=1e-12)
    assert table[2] == pytest.approx(0.25, abs=1e-15)
    assert table[3] == pytest.approx(0.25, abs=1e-15)
    assert table.sum() == pytest.approx(1.0, abs=1e-10)
