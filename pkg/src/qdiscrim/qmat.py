"""Small dense Hermitian-matrix kernel.

Operators are plain complex ``numpy`` arrays of shape ``(d, d)``.  The
dimensions involved are tiny (2 to 8), so everything goes through a full
eigendecomposition.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

HERMITIAN_ATOL = 1e-12
PSD_TOL = 1e-10
PINV_REL_THRESHOLD = 1e-12


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class NotHermitianError(ValueError):
    pass


class NotPSDError(ValueError):
    """An operator expected to be positive semidefinite has a negative eigenvalue."""


class Spectrum(NamedTuple):
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns, matching eigenvalues


def hermitize(a: np.ndarray) -> np.ndarray:
    """Return the Hermitian part ``(a + a^dagger) / 2`` (batched over leading axes)."""
    a = np.asarray(a)
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def hermitian(entries, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    """Build a Hermitian operator from ``entries``, validating shape and symmetry.

    The returned array is the exact Hermitian part of the input, so that
    round-off below ``atol`` does not leak into later computations.
    """
    a = np.array(entries, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise DimensionError(f"expected a non-empty square matrix, got shape {a.shape}")
    dev = np.max(np.abs(a - a.conj().T))
    if dev > atol:
        raise NotHermitianError(f"matrix deviates from Hermitian by {dev:.3g} > {atol:.3g}")
    return hermitize(a)


def identity(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex)


def _check_square(a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")


def trace_product(a: np.ndarray, b: np.ndarray) -> float:
    """Real part of ``Tr[a b]``."""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_square(a)
    _check_square(b)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    # Tr[ab] = sum_{mn} a_mn b_nm
    return float(np.real(np.sum(a * b.T)))


def spectrum(a: np.ndarray) -> Spectrum:
    """Eigendecomposition of a Hermitian operator, eigenvalues in descending order."""
    a = np.asarray(a)
    _check_square(a)
    w, v = np.linalg.eigh(hermitize(a))
    return Spectrum(w[::-1].copy(), v[:, ::-1].copy())


def from_spectrum(eigenvalues: np.ndarray, eigenvectors: np.ndarray) -> np.ndarray:
    return hermitize((eigenvectors * eigenvalues) @ eigenvectors.conj().T)


def min_eigenvalue(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(hermitize(a))[0])


def is_psd(a: np.ndarray, tol: float = PSD_TOL) -> bool:
    return min_eigenvalue(a) >= -tol


def _clamped_eigh(a: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(hermitize(a))
    if w[0] < -tol:
        raise NotPSDError(f"eigenvalue {w[0]:.3g} below -{tol:.1g}")
    return np.clip(w, 0.0, None), v


def hermitian_sqrt(a: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """Positive square root of a PSD operator.

    Eigenvalues in ``[-tol, 0)`` are treated as round-off and clamped to zero;
    anything more negative raises :class:`NotPSDError`.
    """
    a = np.asarray(a)
    _check_square(a)
    w, v = _clamped_eigh(a, tol)
    return from_spectrum(np.sqrt(w), v)


def pseudo_inverse(a: np.ndarray, rel_threshold: float = PINV_REL_THRESHOLD) -> np.ndarray:
    """On-support inverse of a PSD operator.

    Eigenvalues below ``rel_threshold * max_eigenvalue`` are mapped to zero.
    """
    a = np.asarray(a)
    _check_square(a)
    w, v = np.linalg.eigh(hermitize(a))
    top = w[-1]
    if top <= 0.0:
        raise ValueError("pseudo-inverse of an operator with no positive support")
    keep = w >= rel_threshold * top
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return from_spectrum(inv, v)


def frobenius(a: np.ndarray) -> float:
    return float(np.linalg.norm(a))


def sqrt_and_pinv(
    a: np.ndarray, rel_threshold: float = PINV_REL_THRESHOLD, tol: float = PSD_TOL
) -> tuple[np.ndarray, np.ndarray]:
    """``(a^{1/2}, (a^{1/2})^+)`` from a single eigendecomposition.

    Equivalent to ``hermitian_sqrt`` followed by ``pseudo_inverse`` on its
    output; the iteration loop calls this once per step.
    """
    w, v = _clamped_eigh(a, tol)
    root = np.sqrt(w)
    top = root[-1]
    if top <= 0.0:
        raise ValueError("pseudo-inverse of an operator with no positive support")
    keep = root >= rel_threshold * top
    inv = np.zeros_like(root)
    inv[keep] = 1.0 / root[keep]
    return from_spectrum(root, v), from_spectrum(inv, v)
