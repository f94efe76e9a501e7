"""Riemannian complex-matrix layers: mapping, ReEig, LogEig and flattening.

A pixel's coherency matrix is pushed through one branch per kernel. Each
branch applies ``W^H X W`` followed by eigenvalue rectification (once per
layer), takes the matrix logarithm, and flattens the result to 9 reals.
Branch outputs are concatenated in class order.
"""
from dataclasses import dataclass

import numpy as np

from ._parallel import map_chunks
from .errors import ConfigError, DegenerateKernel, HpdNetError
from .hpd_core import (
    _as_stack, as_hpd, conj_t, eig_hermitian, eigvalsh, logm, reconstruct, symmetrize,
)

SQRT2 = np.sqrt(2.0)
KERNEL_RANK_TOL = 1e-10
FIELD_CHUNK = 4096


@dataclass(frozen=True)
class RcmConfig:
    num_layers: int = 1
    # None: use the threshold stored with the kernel bank
    epsilon: float | None = None

    def __post_init__(self):
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")


def check_kernel(w):
    w = _as_stack(w)
    smin = np.sqrt(np.clip(eigvalsh(conj_t(w) @ w)[..., 0], 0.0, None))
    if np.any(smin <= KERNEL_RANK_TOL):
        raise DegenerateKernel(f"kernel is rank deficient (min singular value {smin.min():.3g})")
    return w


def riemannian_mapping(x, w):
    """Bilinear map ``W^H X W``; HPD in, HPD out for full-rank ``W``."""
    w = check_kernel(w)
    return symmetrize(conj_t(w) @ _as_stack(x) @ w)


def re_eig(x, epsilon):
    """Clamp every eigenvalue below ``epsilon`` up to ``epsilon``."""
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    w, v = eig_hermitian(x)
    return reconstruct(np.maximum(w, epsilon), v)


def log_eig(x):
    return logm(x)


def flatten(m):
    """Isometric embedding of Hermitian matrices into R^9.

    Order: three diagonal entries, then real and imaginary parts of the
    (1,2), (1,3), (2,3) entries scaled by sqrt(2).
    """
    m = np.asarray(m)
    return np.stack([
        m[..., 0, 0].real, m[..., 1, 1].real, m[..., 2, 2].real,
        SQRT2 * m[..., 0, 1].real, SQRT2 * m[..., 0, 1].imag,
        SQRT2 * m[..., 0, 2].real, SQRT2 * m[..., 0, 2].imag,
        SQRT2 * m[..., 1, 2].real, SQRT2 * m[..., 1, 2].imag,
    ], axis=-1)


def unflatten(f):
    f = np.asarray(f, dtype=np.float64)
    m = np.zeros(f.shape[:-1] + (3, 3), dtype=np.complex128)
    m[..., 0, 0] = f[..., 0]
    m[..., 1, 1] = f[..., 1]
    m[..., 2, 2] = f[..., 2]
    for k, (i, j) in enumerate(((0, 1), (0, 2), (1, 2))):
        z = (f[..., 3 + 2 * k] + 1j * f[..., 4 + 2 * k]) / SQRT2
        m[..., i, j] = z
        m[..., j, i] = np.conj(z)
    return m


def _branch_inputs(t, kernels, epsilon, num_layers):
    """Per-branch rectified manifold points, shape ``(..., C, 3, 3)``."""
    x = np.repeat(t[..., None, :, :], kernels.shape[1], axis=-3)
    for layer in range(num_layers):
        w = kernels[layer]
        x = re_eig(symmetrize(conj_t(w) @ x @ w), epsilon)
    return x


def rcm_forward(t, bank, cfg=None):
    """Feature vector of length ``9 * C`` for each input matrix.

    ``bank`` supplies ``kernels`` of shape ``(layers, C, 3, 3)`` and the
    rectification threshold ``epsilon``.
    """
    cfg = cfg or RcmConfig()
    kernels = np.asarray(bank.kernels)
    if cfg.num_layers > kernels.shape[0]:
        raise ConfigError(
            f"{cfg.num_layers} RCM layers requested but the bank has {kernels.shape[0]}")
    check_kernel(kernels[:cfg.num_layers])
    eps = bank.epsilon if cfg.epsilon is None else cfg.epsilon
    # the rectifier would silently repair a non-HPD input, so check it first
    t = as_hpd(t)
    x = _branch_inputs(t, kernels, eps, cfg.num_layers)
    f = flatten(logm(x))
    return f.reshape(t.shape[:-2] + (-1,))


def rcm_forward_field(pixels, bank, cfg=None, workers=None):
    """Per-pixel ``rcm_forward`` over an ``(H, W, 3, 3)`` grid.

    Returns an ``(H, W, 9C)`` array. Pixels are processed in fixed chunks, so
    the result does not depend on ``workers``.
    """
    pixels = np.asarray(pixels)
    h, w = pixels.shape[:2]
    flat = pixels.reshape(-1, 3, 3)

    def run(lo, hi):
        try:
            return rcm_forward(flat[lo:hi], bank, cfg)
        except HpdNetError:
            for k in range(lo, hi):
                try:
                    rcm_forward(flat[k], bank, cfg)
                except HpdNetError as exc:
                    raise type(exc)(f"pixel ({k // w}, {k % w}): {exc}") from exc
            raise

    parts = map_chunks(run, flat.shape[0], FIELD_CHUNK, workers)
    return np.concatenate(parts, axis=0).reshape(h, w, -1)
