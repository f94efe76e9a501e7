"""Distances on the HPD manifold and the log-Euclidean Fréchet mean."""
import enum

import numpy as np

from .errors import EmptyInput
from .hpd_core import as_hpd, expm, frobenius_norm, inv_sqrtm, invm, logdet, logm


class MetricKind(enum.Enum):
    AIRM = "airm"
    LEM = "lem"
    STEIN = "stein"
    JEFFREY = "jeffrey"


def dist_airm(x, y):
    r"""Affine-invariant Riemannian distance.

    .. math:: d_R(X, Y) = \| \log(X^{-1/2} Y X^{-1/2}) \|_F
    """
    x, y = as_hpd(x), as_hpd(y)
    s = inv_sqrtm(x)
    return frobenius_norm(logm(s @ y @ s))


def dist_lem(x, y):
    r"""Log-Euclidean distance :math:`\| \log X - \log Y \|_F`."""
    return frobenius_norm(logm(x) - logm(y))


def dist_stein(x, y):
    r"""Squared Stein (Jensen-Bregman LogDet) divergence.

    .. math:: d_S^2(X, Y) = \log\det\frac{X + Y}{2} - \tfrac12 \log\det(XY)

    The squared quantity is returned as is; take the square root for a
    metric-like scale.
    """
    x, y = as_hpd(x), as_hpd(y)
    return logdet(0.5 * (x + y)) - 0.5 * (logdet(x) + logdet(y))


def dist_jeffrey(x, y):
    r"""Squared Jeffrey divergence for 3x3 matrices.

    .. math:: d_J^2(X, Y) = \tfrac12 \mathrm{Tr}(X^{-1}Y) + \tfrac12 \mathrm{Tr}(Y^{-1}X) - n
    """
    x, y = as_hpd(x), as_hpd(y)
    t1 = np.trace(invm(x) @ y, axis1=-2, axis2=-1).real
    t2 = np.trace(invm(y) @ x, axis1=-2, axis2=-1).real
    return 0.5 * t1 + 0.5 * t2 - 3.0


_DISTANCES = {
    MetricKind.AIRM: dist_airm,
    MetricKind.LEM: dist_lem,
    MetricKind.STEIN: dist_stein,
    MetricKind.JEFFREY: dist_jeffrey,
}


def distance(x, y, kind=MetricKind.LEM):
    return _DISTANCES[MetricKind(kind)](x, y)


def canonical_sum(ms):
    """Sum a stack of 3x3 complex matrices independently of their order.

    Terms are sorted lexicographically by their entries before a fixed-order
    reduction, so any permutation of the input gives a bitwise-equal sum.
    """
    flat = np.concatenate([ms.real.reshape(len(ms), 9), ms.imag.reshape(len(ms), 9)], axis=1)
    order = np.lexsort(flat.T[::-1])
    return ms[order].sum(axis=0)


def frechet_mean_lem(ms):
    """Log-Euclidean Fréchet mean ``exp(mean(log T_i))``."""
    ms = np.asarray(ms)
    if ms.size == 0 or ms.shape[0] == 0:
        raise EmptyInput("Fréchet mean of an empty set")
    if ms.ndim == 2:
        ms = ms[None]
    logs = logm(ms)
    return expm(canonical_sum(logs) / logs.shape[0])
