"""Qubit state family, Pauli projectors, prior POVMs and Born-rule tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .qmat import DimensionError, hermitize, identity, min_eigenvalue

AXES = ("x", "y", "z")

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class InvalidStateError(ValueError):
    pass


class InvalidPovmError(ValueError):
    pass


@dataclass(frozen=True)
class StateParams:
    """Parameters of the two-state family: overlap angle, coherence and sign."""

    alpha: float
    d: float
    sign: int = 1

    def __post_init__(self):
        if not 0.0 <= self.alpha <= math.pi / 4 + 1e-15:
            raise InvalidStateError(f"alpha={self.alpha!r} outside [0, pi/4]")
        if not 0.0 <= self.d <= 1.0:
            raise InvalidStateError(f"d={self.d!r} outside [0, 1]")
        if self.sign not in (1, -1):
            raise InvalidStateError(f"sign must be +1 or -1, got {self.sign!r}")


def check_density_matrix(rho, trace_tol: float = 1e-12, psd_tol: float = 1e-10) -> np.ndarray:
    """Validate a density matrix and return it as a Hermitian complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
        raise InvalidStateError("density matrix is not Hermitian")
    rho = hermitize(rho)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise InvalidStateError(f"trace {tr!r} differs from 1")
    lo = min_eigenvalue(rho)
    if lo < -psd_tol:
        raise InvalidStateError(f"density matrix has eigenvalue {lo:.3g}")
    return rho


@dataclass(frozen=True)
class PovmSet:
    """Ordered POVM elements with one label each.

    Validated on construction: every element PSD and the elements summing to
    the identity.
    """

    elements: tuple
    labels: tuple = field(default=())
    psd_tol: float = 1e-10
    completeness_tol: float = 1e-10

    def __post_init__(self):
        elems = tuple(np.asarray(e, dtype=complex) for e in self.elements)
        if not elems:
            raise InvalidPovmError("POVM needs at least one element")
        dim = elems[0].shape[0]
        for k, e in enumerate(elems):
            if e.shape != (dim, dim):
                raise DimensionError(f"element {k} has shape {e.shape}, expected {(dim, dim)}")
        labels = tuple(self.labels) if self.labels else tuple(str(k) for k in range(len(elems)))
        if len(labels) != len(elems):
            raise InvalidPovmError(f"{len(labels)} labels for {len(elems)} elements")
        for k, e in enumerate(elems):
            lo = min_eigenvalue(e)
            if lo < -self.psd_tol:
                raise InvalidPovmError(f"element {k} ({labels[k]}) not PSD: eigenvalue {lo:.3g}")
        dev = np.linalg.norm(sum(elems) - identity(dim))
        if dev > self.completeness_tol:
            raise InvalidPovmError(
                f"completeness check failed: elements sum to identity only within {dev:.3g}"
            )
        object.__setattr__(self, "elements", tuple(hermitize(e) for e in elems))
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def __len__(self) -> int:
        return len(self.elements)

    def __getitem__(self, k):
        return self.elements[k]

    def stack(self) -> np.ndarray:
        return np.array(self.elements)


def make_state(params: StateParams) -> np.ndarray:
    """Density matrix ``[[c^2, s d c sn], [s d c sn, sn^2]]`` with c, sn = cos, sin(alpha)."""
    c, sn = math.cos(params.alpha), math.sin(params.alpha)
    off = params.sign * params.d * c * sn
    return np.array([[c * c, off], [off, sn * sn]], dtype=complex)


def state_pair(alpha: float, d1: float, d2: float) -> tuple[np.ndarray, np.ndarray]:
    """The two hypotheses ``rho(alpha, d1, +)`` and ``rho(alpha, d2, -)``."""
    return make_state(StateParams(alpha, d1, 1)), make_state(StateParams(alpha, d2, -1))


def pauli_projector(axis: str, direction: int) -> np.ndarray:
    """Projector onto the ``direction`` (+1/-1) eigenstate of the Pauli ``axis``."""
    if axis not in _PAULI:
        raise ValueError(f"unknown axis {axis!r}")
    if direction not in (1, -1):
        raise ValueError(f"direction must be +1 or -1, got {direction!r}")
    return 0.5 * (identity(2) + direction * _PAULI[axis])


def parse_settings(settings) -> tuple[str, ...]:
    """Accept ``"x,y"``, ``"xy"`` or a sequence of axis names."""
    if isinstance(settings, str):
        settings = settings.split(",") if "," in settings else list(settings)
    axes = tuple(str(s).strip().lower() for s in settings)
    if not axes:
        raise ValueError("settings must not be empty")
    for a in axes:
        if a not in AXES:
            raise ValueError(f"unknown axis {a!r}; expected one of {AXES}")
    if len(set(axes)) != len(axes):
        raise ValueError(f"duplicate axes in settings {axes}")
    return axes


def make_prior_povm(settings: Sequence[str]) -> PovmSet:
    """Combine M projective Pauli settings into one 2M-outcome POVM.

    Each projector is weighted by 1/M, which corresponds to picking a setting
    uniformly at random; the outcome frequencies of a row then sum to one.
    """
    axes = parse_settings(settings)
    m = len(axes)
    elements, labels = [], []
    for axis in axes:
        for direction, tag in ((1, "+"), (-1, "-")):
            elements.append(pauli_projector(axis, direction) / m)
            labels.append(f"{tag}{axis}")
    return PovmSet(tuple(elements), tuple(labels))


def born_table(states: Sequence[np.ndarray], povm: PovmSet) -> np.ndarray:
    """Matrix of outcome probabilities ``Tr[states[i] povm[k]]``, clamped to [0, 1]."""
    rhos = np.asarray(states, dtype=complex)
    if rhos.ndim == 2:
        rhos = rhos[None]
    if rhos.shape[1:] != (povm.dim, povm.dim):
        raise DimensionError(f"states of shape {rhos.shape[1:]} vs POVM dimension {povm.dim}")
    table = np.einsum("iab,kba->ik", rhos, povm.stack()).real
    return np.clip(table, 0.0, 1.0)


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ rho)))
