"""Minimum-error discrimination of two known, equiprobable states."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qmat import DimensionError, hermitize, identity, spectrum
from .states import PovmSet, pauli_projector

# Eigenvalues of (rho1 - rho2)/2 at or below this go to the second element.
ZERO_EIGENVALUE_TOL = 1e-14


class UnsupportedDimensionError(ValueError):
    pass


@dataclass(frozen=True)
class DiscriminationReport:
    povm: PovmSet
    error_rate: float
    extremal_residual: float


def _two_elements(povm) -> tuple[np.ndarray, np.ndarray]:
    elems = povm.elements if isinstance(povm, PovmSet) else tuple(povm)
    if len(elems) != 2:
        raise ValueError(f"expected a two-element POVM, got {len(elems)} elements")
    return np.asarray(elems[0], dtype=complex), np.asarray(elems[1], dtype=complex)


def _check_dims(*ops: np.ndarray) -> None:
    shapes = {np.shape(op) for op in ops}
    if len(shapes) != 1:
        raise DimensionError(f"dimension mismatch among operators: {sorted(shapes)}")


def error_rate(povm, rho1: np.ndarray, rho2: np.ndarray) -> float:
    """Average misidentification probability ``(Tr[P1 rho2] + Tr[P2 rho1]) / 2``."""
    p1, p2 = _two_elements(povm)
    rho1 = np.asarray(rho1, dtype=complex)
    rho2 = np.asarray(rho2, dtype=complex)
    _check_dims(p1, p2, rho1, rho2)
    return 0.5 * float(np.real(np.sum(p1 * rho2.T) + np.sum(p2 * rho1.T)))


def helstrom_bound_pure(overlap: float) -> float:
    """Helstrom bound for two equiprobable pure states with ``|<1|2>| = overlap``."""
    if not 0.0 <= overlap <= 1.0:
        raise ValueError(f"overlap magnitude {overlap!r} outside [0, 1]")
    return 0.5 * (1.0 - math.sqrt(1.0 - overlap * overlap))


def check_extremal(povm, states: Sequence[np.ndarray]) -> float:
    """Violation of the optimality conditions for a two-outcome POVM.

    With ``lam = rho1 P1 + rho2 P2`` this is the largest of
    ``||rho_i P_i - lam P_i||``, the anti-Hermitian part of ``lam`` and the
    most negative eigenvalue of ``lam - rho_i``.  The stationarity equations
    alone are also solved by the worst measurement, hence the last two terms.
    """
    p1, p2 = _two_elements(povm)
    if len(states) != 2:
        raise ValueError(f"expected two states, got {len(states)}")
    rhos = [np.asarray(r, dtype=complex) for r in states]
    _check_dims(p1, p2, *rhos)
    lam = rhos[0] @ p1 + rhos[1] @ p2
    worst = float(np.linalg.norm(lam - lam.conj().T))
    for rho, p in zip(rhos, (p1, p2)):
        worst = max(worst, float(np.linalg.norm(rho @ p - lam @ p)))
    lam_h = hermitize(lam)
    for rho in rhos:
        lo = float(np.linalg.eigvalsh(lam_h - rho)[0])
        worst = max(worst, -lo)
    return worst


def helstrom_two_state(rho1: np.ndarray, rho2: np.ndarray) -> DiscriminationReport:
    """Optimal two-outcome measurement from the spectral split of ``(rho1 - rho2)/2``."""
    rho1 = np.asarray(rho1, dtype=complex)
    rho2 = np.asarray(rho2, dtype=complex)
    _check_dims(rho1, rho2)
    dim = rho1.shape[0]
    vals, vecs = spectrum(0.5 * (rho1 - rho2))
    pos = vecs[:, vals > ZERO_EIGENVALUE_TOL]
    p1 = hermitize(pos @ pos.conj().T)
    p2 = hermitize(identity(dim) - p1)
    povm = PovmSet((p1, p2), ("1", "2"))
    return DiscriminationReport(
        povm=povm,
        error_rate=error_rate(povm, rho1, rho2),
        extremal_residual=check_extremal(povm, (rho1, rho2)),
    )


def brute_force_oracle(rho1: np.ndarray, rho2: np.ndarray, grid_steps: int = 400) -> float:
    """Smallest error rate over projective qubit measurements on a Bloch-sphere grid.

    Directions are ``grid_steps`` polar angles in ``[0, pi]`` times
    ``grid_steps`` azimuths in ``[0, 2 pi)``.
    """
    rho1 = np.asarray(rho1, dtype=complex)
    rho2 = np.asarray(rho2, dtype=complex)
    if rho1.shape != (2, 2) or rho2.shape != (2, 2):
        raise UnsupportedDimensionError("brute-force oracle only supports qubits")
    theta = np.linspace(0.0, math.pi, grid_steps)
    phi = np.linspace(0.0, 2 * math.pi, grid_steps, endpoint=False)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    n = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)
    paulis = np.array([2 * pauli_projector(a, 1) - identity(2) for a in "xyz"])
    proj = 0.5 * (identity(2) + np.einsum("...c,cab->...ab", n, paulis))
    # ER(P) = (Tr[P rho2] + Tr[(1 - P) rho1]) / 2
    tr_p_rho2 = np.einsum("...ab,ba->...", proj, rho2).real
    tr_p_rho1 = np.einsum("...ab,ba->...", proj, rho1).real
    er = 0.5 * (tr_p_rho2 + np.trace(rho1).real - tr_p_rho1)
    return float(er.min())
