"""Hermitian 3x3 linear algebra: eigendecomposition and matrix functions.

Every function accepts a single matrix of shape ``(3, 3)`` or a stack of
shape ``(..., 3, 3)`` and returns arrays with the matching leading shape.
Matrices are plain ``complex128`` numpy arrays.
"""
from typing import NamedTuple

import numpy as np

from . import _backend
from .errors import InvalidMatrix, NotPositiveDefinite

HERMITIAN_TOL = 1e-10
HPD_FLOOR = 1e-12


class EigenDecomposition(NamedTuple):
    """Ascending eigenvalues and unit eigenvectors stored as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _as_stack(m):
    m = np.asarray(m)
    if m.ndim < 2 or m.shape[-2:] != (3, 3):
        raise InvalidMatrix(f"expected shape (..., 3, 3), got {m.shape}")
    m = m.astype(np.complex128, copy=False)
    if not np.isfinite(m).all():
        raise InvalidMatrix("matrix contains NaN or Inf")
    return m


def conj_t(m):
    return np.conj(np.swapaxes(m, -1, -2))


def symmetrize(m):
    """Exactly Hermitian part ``(m + m^H) / 2``."""
    return 0.5 * (m + conj_t(m))


def as_hermitian(m, tol=HERMITIAN_TOL):
    """Validate and return the exactly Hermitian version of ``m``.

    Deviations up to ``tol`` (relative to the largest entry when that exceeds
    one) are folded away by symmetrization; anything larger raises.
    """
    m = _as_stack(m)
    dev = np.abs(m - conj_t(m)).max(axis=(-2, -1))
    scale = np.maximum(1.0, np.abs(m).max(axis=(-2, -1)))
    if np.any(dev > tol * scale):
        raise InvalidMatrix(f"matrix is not Hermitian (deviation {dev.max():.3g})")
    return symmetrize(m)


def eig_hermitian(m):
    """Eigendecomposition of Hermitian matrices via cyclic Jacobi rotations.

    Eigenvalues come back ascending. Each eigenvector's first component of
    magnitude above 1e-10 is made real positive, and exactly repeated
    eigenvalues are ordered by that component, so identical input always gives
    identical output.
    """
    m = as_hermitian(m)
    return _eig_unchecked(m)


def _eig_unchecked(m):
    lead = m.shape[:-2]
    flat = m.reshape(-1, 3, 3)
    w, vr, vi = _backend.eigh3_batch(np.ascontiguousarray(flat.real),
                                     np.ascontiguousarray(flat.imag))
    w = np.asarray(w).reshape(lead + (3,))
    v = (np.asarray(vr) + 1j * np.asarray(vi)).reshape(lead + (3, 3))
    return EigenDecomposition(w, v)


def eigvalsh(m):
    return eig_hermitian(m).eigenvalues


def _check_positive(w):
    if np.any(w <= HPD_FLOOR):
        raise NotPositiveDefinite(
            f"matrix is not positive definite (min eigenvalue {w.min():.6g})")


def as_hpd(m):
    """Validate that ``m`` is HPD and return its Hermitian-symmetrized form."""
    m = as_hermitian(m)
    _check_positive(_eig_unchecked(m).eigenvalues)
    return m


def is_hpd(m):
    try:
        as_hpd(m)
    except (InvalidMatrix, NotPositiveDefinite):
        return False
    return True


def reconstruct(w, v):
    """``V diag(w) V^H`` made exactly Hermitian."""
    return symmetrize((v * w[..., None, :]) @ conj_t(v))


def _funm_hpd(m, fn):
    w, v = eig_hermitian(m)
    _check_positive(w)
    return reconstruct(fn(w), v)


def logm(m):
    """Principal matrix logarithm of HPD matrices."""
    return _funm_hpd(m, np.log)


def expm(m):
    """Matrix exponential of Hermitian matrices (always HPD)."""
    w, v = eig_hermitian(m)
    return reconstruct(np.exp(w), v)


def sqrtm(m):
    return _funm_hpd(m, np.sqrt)


def inv_sqrtm(m):
    return _funm_hpd(m, lambda w: 1.0 / np.sqrt(w))


def invm(m):
    return _funm_hpd(m, lambda w: 1.0 / w)


def powm(m, alpha):
    return _funm_hpd(m, lambda w: w ** alpha)


def logdet(m):
    """Log-determinant of HPD matrices as the sum of log-eigenvalues."""
    w = eig_hermitian(m).eigenvalues
    _check_positive(w)
    return np.log(w).sum(axis=-1)


def frobenius_norm(m):
    m = _as_stack(m)
    return np.sqrt((m.real ** 2 + m.imag ** 2).sum(axis=(-2, -1)))
