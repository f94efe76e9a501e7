"""Pure-numpy cyclic Jacobi eigensolver for stacks of 3x3 Hermitian matrices.

Fallback for the compiled ``_jacobi3`` extension. The arithmetic follows the
compiled kernel step for step so the two backends agree bitwise. Only the
still-unconverged matrices are touched on each sweep, which keeps every
matrix's result independent of the rest of the batch.
"""
import numpy as np

MAX_SWEEPS = 50
REL_TOL = 1e-14
PHASE_TOL = 1e-10
_PAIRS = ((0, 1), (0, 2), (1, 2))


def _offdiag_sq(ar, ai):
    return 2.0 * ((ar[:, 0, 1] * ar[:, 0, 1] + ai[:, 0, 1] * ai[:, 0, 1])
                  + (ar[:, 0, 2] * ar[:, 0, 2] + ai[:, 0, 2] * ai[:, 0, 2])
                  + (ar[:, 1, 2] * ar[:, 1, 2] + ai[:, 1, 2] * ai[:, 1, 2]))


def _apply_rotation(ar, ai, vr, vi, p, q):
    """One Jacobi rotation zeroing entry (p, q) of every matrix in the stack."""
    r = 3 - p - q
    g = np.hypot(ar[:, p, q], ai[:, p, q])
    er = ar[:, p, q] / g
    ei = ai[:, p, q] / g
    theta = (ar[:, q, q] - ar[:, p, p]) / (2.0 * g)
    big = np.abs(theta) > 1e150
    with np.errstate(over="ignore"):
        t = 1.0 / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
    t = np.where(theta < 0.0, -t, t)
    if big.any():
        t = np.where(big, 0.5 / theta, t)
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    app = ar[:, p, p] - t * g
    aqq = ar[:, q, q] + t * g

    xr = ar[:, r, p].copy()
    xi = ai[:, r, p].copy()
    yr = ar[:, r, q].copy()
    yi = ai[:, r, q].copy()
    tr = c * xr - s * (er * yr + ei * yi)
    ti = c * xi - s * (er * yi - ei * yr)
    ar[:, r, p] = tr
    ai[:, r, p] = ti
    ar[:, p, r] = tr
    ai[:, p, r] = -ti
    tr = s * (er * xr - ei * xi) + c * yr
    ti = s * (er * xi + ei * xr) + c * yi
    ar[:, r, q] = tr
    ai[:, r, q] = ti
    ar[:, q, r] = tr
    ai[:, q, r] = -ti

    ar[:, p, q] = 0.0
    ai[:, p, q] = 0.0
    ar[:, q, p] = 0.0
    ai[:, q, p] = 0.0
    ar[:, p, p] = app
    ar[:, q, q] = aqq

    c = c[:, None]
    s = s[:, None]
    er = er[:, None]
    ei = ei[:, None]
    xr = vr[:, :, p].copy()
    xi = vi[:, :, p].copy()
    yr = vr[:, :, q].copy()
    yi = vi[:, :, q].copy()
    vr[:, :, p] = c * xr - s * (er * yr + ei * yi)
    vi[:, :, p] = c * xi - s * (er * yi - ei * yr)
    vr[:, :, q] = s * (er * xr - ei * xi) + c * yr
    vi[:, :, q] = s * (er * xi + ei * xr) + c * yi


def eigh3_batch(re, im):
    """Same contract as the compiled ``eigh3_batch``."""
    ar = np.array(re, dtype=np.float64, copy=True)
    ai = np.array(im, dtype=np.float64, copy=True)
    n = ar.shape[0]
    diag = np.arange(3)
    ai[:, diag, diag] = 0.0
    vr = np.zeros((n, 3, 3))
    vr[:, diag, diag] = 1.0
    vi = np.zeros((n, 3, 3))

    off = _offdiag_sq(ar, ai)
    tol = REL_TOL * np.sqrt(ar[:, 0, 0] * ar[:, 0, 0] + ar[:, 1, 1] * ar[:, 1, 1]
                            + ar[:, 2, 2] * ar[:, 2, 2] + off)

    active = np.arange(n)
    for _ in range(MAX_SWEEPS):
        keep = np.sqrt(_offdiag_sq(ar[active], ai[active])) > tol[active]
        active = active[keep]
        if active.size == 0:
            break
        sar, sai, svr, svi = ar[active], ai[active], vr[active], vi[active]
        for p, q in _PAIRS:
            nz = np.nonzero((sar[:, p, q] != 0.0) | (sai[:, p, q] != 0.0))[0]
            if nz.size == sar.shape[0]:
                _apply_rotation(sar, sai, svr, svi, p, q)
            elif nz.size:
                blk = [x[nz] for x in (sar, sai, svr, svi)]
                _apply_rotation(*blk, p, q)
                sar[nz], sai[nz], svr[nz], svi[nz] = blk
        ar[active], ai[active], vr[active], vi[active] = sar, sai, svr, svi

    # phase: first component above PHASE_TOL becomes real positive
    mags = np.hypot(vr, vi)
    first = np.argmax(mags > PHASE_TOL, axis=1)  # (n, 3) row index per column
    rows = np.arange(n)[:, None]
    cols = np.arange(3)[None, :]
    zr = vr[rows, first, cols]
    zi = vi[rows, first, cols]
    mag = np.hypot(zr, zi)
    zr = (zr / mag)[:, None, :]
    zi = (zi / mag)[:, None, :]
    nvr = vr * zr + vi * zi
    nvi = vi * zr - vr * zi
    nvi[rows, first, cols] = 0.0
    keyre = nvr[rows, first, cols]
    w = ar[:, diag, diag].copy()

    order = _sort_order(w, keyre)
    w = np.take_along_axis(w, order, axis=1)
    nvr = np.take_along_axis(nvr, order[:, None, :], axis=2)
    nvi = np.take_along_axis(nvi, order[:, None, :], axis=2)
    return w, nvr, nvi


def _sort_order(w, key):
    # per-row stable sort: eigenvalue, then tie key, then original column
    n = w.shape[0]
    rows = np.repeat(np.arange(n), 3)
    cols = np.tile(np.arange(3), n)
    flat = np.lexsort((cols, key.ravel(), w.ravel(), rows))
    return flat.reshape(n, 3) - 3 * np.arange(n)[:, None]
