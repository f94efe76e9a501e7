"""Closed-form per-class kernel learning.

For each class, the training coherency matrices are centred on their
log-Euclidean mean, the row-direction scatter ``sum (T_i - M)^H (T_i - M)``
is accumulated, and the eigenvectors of that scatter ordered by descending
eigenvalue become the class kernel. No gradient step is involved.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, InsufficientSamples, NoLabels
from .hpd_core import _as_stack, as_hermitian, conj_t, eig_hermitian, eigvalsh, symmetrize
from .polsar import stratified_sample
from .rcm import re_eig, riemannian_mapping
from .riemannian import canonical_sum, frechet_mean_lem

EPSILON_PERCENTILE = 1.0


@dataclass
class KernelBank:
    """Learned kernels, shape ``(layers, C, 3, 3)``, one per class and layer."""

    kernels: np.ndarray
    class_ids: tuple
    epsilon: float
    seed: int = 0
    sample_fraction: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def num_classes(self):
        return len(self.class_ids)

    @property
    def num_layers(self):
        return self.kernels.shape[0]


def class_frechet_mean(samples):
    samples = np.asarray(samples)
    if samples.size == 0:
        raise EmptyInput("class has no samples")
    return frechet_mean_lem(samples)


def class_scatter(samples, mean):
    """Row-direction sample scatter ``1/(N-1) sum (T_i - M)^H (T_i - M)``."""
    samples = _as_stack(samples)
    if samples.ndim == 2:
        samples = samples[None]
    n = samples.shape[0]
    if n < 2:
        raise InsufficientSamples(f"scatter needs at least 2 samples, got {n}")
    d = samples - np.asarray(mean)
    return symmetrize(canonical_sum(conj_t(d) @ d) / (n - 1))


def solve_kernel(scatter):
    """Unitary kernel whose columns are scatter eigenvectors, largest first."""
    w, v = eig_hermitian(as_hermitian(scatter, tol=1e-8))
    return np.ascontiguousarray(v[..., ::-1])


def epsilon_from_samples(samples, percentile=EPSILON_PERCENTILE):
    """Rectification threshold: a low percentile of per-pixel minimum eigenvalues."""
    smallest = eigvalsh(samples)[..., 0]
    return float(np.percentile(smallest, percentile))


def _learn_layer(per_class):
    return np.stack([
        solve_kernel(class_scatter(x, class_frechet_mean(x))) for x in per_class
    ])


def learn_kernel_bank(pixels, labels, sample_fraction=0.1, seed=0, num_layers=1, epsilon=None):
    """Learn one kernel per class (and per layer) from a labelled field.

    ``pixels`` is an ``(H, W, 3, 3)`` HPD grid and ``labels`` an ``(H, W)``
    integer grid with 0 for unlabelled pixels. ``epsilon`` overrides the
    learned rectification threshold.
    """
    pixels = np.asarray(pixels)
    labels = np.asarray(labels)
    flat = pixels.reshape(-1, 3, 3)
    lab = labels.reshape(-1)
    class_ids = tuple(int(c) for c in np.unique(lab) if c != 0)
    if not class_ids:
        raise NoLabels("field has no labelled pixels")
    if len(class_ids) < 2:
        raise NoLabels(f"need at least 2 classes, found {len(class_ids)}")

    idx = stratified_sample(labels, sample_fraction, seed)
    per_class = []
    for c in class_ids:
        sel = idx[lab[idx] == c]
        if sel.size < 2:
            raise InsufficientSamples(
                f"class {c} has {sel.size} training sample(s) after sampling; need 2", c)
        per_class.append(flat[sel])

    if epsilon is None:
        epsilon = epsilon_from_samples(flat[idx])
    layers = [_learn_layer(per_class)]
    for _ in range(1, num_layers):
        w = layers[-1]
        per_class = [re_eig(riemannian_mapping(x, w[k]), epsilon)
                     for k, x in enumerate(per_class)]
        layers.append(_learn_layer(per_class))
    return KernelBank(np.stack(layers), class_ids, epsilon, int(seed), float(sample_fraction))
