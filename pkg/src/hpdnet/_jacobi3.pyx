# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled cyclic Jacobi eigensolver for stacks of 3x3 Hermitian matrices.

Mirrors ``hpdnet._jacobi_py`` operation for operation; both backends are
expected to return bit-identical results on IEEE-754 hardware.
"""
from libc.math cimport sqrt, hypot, fabs

import numpy as np

cdef int MAX_SWEEPS = 50
cdef double REL_TOL = 1e-14
cdef double PHASE_TOL = 1e-10
cdef int PAIR_P[3]
cdef int PAIR_Q[3]
PAIR_P[:] = [0, 0, 1]
PAIR_Q[:] = [1, 2, 2]


cdef inline double _offdiag_sq(double[3][3] ar, double[3][3] ai) noexcept nogil:
    return 2.0 * ((ar[0][1] * ar[0][1] + ai[0][1] * ai[0][1])
                  + (ar[0][2] * ar[0][2] + ai[0][2] * ai[0][2])
                  + (ar[1][2] * ar[1][2] + ai[1][2] * ai[1][2]))


cdef void _solve_one(double[3][3] ar, double[3][3] ai,
                     double* w, double[3][3] vr, double[3][3] vi) noexcept nogil:
    cdef int sweep, k, p, q, r, i, j, first
    cdef double off, tol, g, er, ei, theta, t, c, s
    cdef double xr, xi, yr, yi, tr, ti, mag, zr, zi
    cdef double app, aqq
    cdef double[3] keyre
    cdef int order[3]
    cdef double wtmp[3]
    cdef double vrt[3][3]
    cdef double vit[3][3]

    for i in range(3):
        ai[i][i] = 0.0
        for j in range(3):
            vr[i][j] = 1.0 if i == j else 0.0
            vi[i][j] = 0.0

    off = _offdiag_sq(ar, ai)
    tol = REL_TOL * sqrt(ar[0][0] * ar[0][0] + ar[1][1] * ar[1][1]
                         + ar[2][2] * ar[2][2] + off)

    for sweep in range(MAX_SWEEPS):
        if sqrt(_offdiag_sq(ar, ai)) <= tol:
            break
        for k in range(3):
            p = PAIR_P[k]
            q = PAIR_Q[k]
            r = 3 - p - q
            g = hypot(ar[p][q], ai[p][q])
            if g == 0.0:
                continue
            er = ar[p][q] / g
            ei = ai[p][q] / g
            theta = (ar[q][q] - ar[p][p]) / (2.0 * g)
            if fabs(theta) > 1e150:
                t = 0.5 / theta
            else:
                t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
            c = 1.0 / sqrt(t * t + 1.0)
            s = t * c
            app = ar[p][p] - t * g
            aqq = ar[q][q] + t * g

            # a'_rp = c a_rp - s e^{-i phi} a_rq ; a'_rq = s e^{i phi} a_rp + c a_rq
            xr = ar[r][p]
            xi = ai[r][p]
            yr = ar[r][q]
            yi = ai[r][q]
            tr = c * xr - s * (er * yr + ei * yi)
            ti = c * xi - s * (er * yi - ei * yr)
            ar[r][p] = tr
            ai[r][p] = ti
            ar[p][r] = tr
            ai[p][r] = -ti
            tr = s * (er * xr - ei * xi) + c * yr
            ti = s * (er * xi + ei * xr) + c * yi
            ar[r][q] = tr
            ai[r][q] = ti
            ar[q][r] = tr
            ai[q][r] = -ti

            ar[p][q] = 0.0
            ai[p][q] = 0.0
            ar[q][p] = 0.0
            ai[q][p] = 0.0
            ar[p][p] = app
            ar[q][q] = aqq

            for i in range(3):
                xr = vr[i][p]
                xi = vi[i][p]
                yr = vr[i][q]
                yi = vi[i][q]
                vr[i][p] = c * xr - s * (er * yr + ei * yi)
                vi[i][p] = c * xi - s * (er * yi - ei * yr)
                vr[i][q] = s * (er * xr - ei * xi) + c * yr
                vi[i][q] = s * (er * xi + ei * xr) + c * yi

    # phase: first component above PHASE_TOL becomes real positive
    for j in range(3):
        first = 0
        for i in range(3):
            if hypot(vr[i][j], vi[i][j]) > PHASE_TOL:
                first = i
                break
        zr = vr[first][j]
        zi = vi[first][j]
        mag = hypot(zr, zi)
        zr = zr / mag
        zi = zi / mag
        for i in range(3):
            xr = vr[i][j]
            xi = vi[i][j]
            vr[i][j] = xr * zr + xi * zi
            vi[i][j] = xi * zr - xr * zi
        vi[first][j] = 0.0
        keyre[j] = vr[first][j]
        wtmp[j] = ar[j][j]

    # stable insertion sort: ascending eigenvalue, exact ties by key
    for j in range(3):
        order[j] = j
    for j in range(1, 3):
        k = order[j]
        i = j - 1
        while i >= 0 and (wtmp[order[i]] > wtmp[k]
                          or (wtmp[order[i]] == wtmp[k] and keyre[order[i]] > keyre[k])):
            order[i + 1] = order[i]
            i -= 1
        order[i + 1] = k

    for i in range(3):
        for j in range(3):
            vrt[i][j] = vr[i][j]
            vit[i][j] = vi[i][j]
    for j in range(3):
        w[j] = wtmp[order[j]]
        for i in range(3):
            vr[i][j] = vrt[i][order[j]]
            vi[i][j] = vit[i][order[j]]


def eigh3_batch(double[:, :, ::1] re, double[:, :, ::1] im):
    """Eigendecompose ``n`` Hermitian matrices given as real/imag planes.

    Returns ``(w, v_re, v_im)`` with ``w`` of shape ``(n, 3)`` ascending and
    eigenvectors stored column-wise in ``v_re + 1j * v_im``.
    """
    cdef Py_ssize_t n = re.shape[0]
    cdef Py_ssize_t m
    cdef int i, j
    cdef double ar[3][3]
    cdef double ai[3][3]
    cdef double vr[3][3]
    cdef double vi[3][3]
    cdef double wl[3]

    w_out = np.empty((n, 3), dtype=np.float64)
    vr_out = np.empty((n, 3, 3), dtype=np.float64)
    vi_out = np.empty((n, 3, 3), dtype=np.float64)
    cdef double[:, ::1] w_v = w_out
    cdef double[:, :, ::1] vr_v = vr_out
    cdef double[:, :, ::1] vi_v = vi_out

    with nogil:
        for m in range(n):
            for i in range(3):
                for j in range(3):
                    ar[i][j] = re[m, i, j]
                    ai[i][j] = im[m, i, j]
            _solve_one(ar, ai, wl, vr, vi)
            for i in range(3):
                w_v[m, i] = wl[i]
                for j in range(3):
                    vr_v[m, i, j] = vr[i][j]
                    vi_v[m, i, j] = vi[i][j]
    return w_out, vr_out, vi_out
