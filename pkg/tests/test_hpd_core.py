import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from hpdnet import _backend, _jacobi_py
from hpdnet.errors import InvalidMatrix, NotPositiveDefinite
from hpdnet.hpd_core import (
    as_hermitian, as_hpd, eig_hermitian, eigvalsh, expm, frobenius_norm, invm,
    inv_sqrtm, is_hpd, logdet, logm, powm, reconstruct, sqrtm,
)

from conftest import random_hermitian, random_hpd

I3 = np.eye(3, dtype=complex)


def test_identity_eigendecomposition():
    w, v = eig_hermitian(I3)
    assert np.array_equal(w, np.ones(3))
    assert np.array_equal(v, I3)


def test_diagonal_sorted_ascending():
    w, v = eig_hermitian(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(w, [1, 2, 3], atol=1e-15)
    assert np.allclose(np.abs(v), np.eye(3)[:, [1, 2, 0]], atol=1e-15)


def test_reconstruction_and_orthonormality(rng):
    a = random_hermitian(rng, 1000)
    w, v = eig_hermitian(a)
    assert np.all(np.diff(w, axis=-1) >= 0)
    assert np.abs(reconstruct(w, v) - a).max() < 1e-9
    g = np.conj(np.swapaxes(v, -1, -2)) @ v
    assert np.abs(g - np.eye(3)).max() < 1e-10


def test_eigenvalues_match_lapack(rng):
    a = random_hermitian(rng, 500)
    assert np.allclose(eigvalsh(a), np.linalg.eigvalsh(a), atol=1e-12, rtol=0)


def test_phase_convention(rng):
    _, v = eig_hermitian(random_hermitian(rng, 200))
    for col in np.swapaxes(v, -1, -2).reshape(-1, 3):
        lead = col[np.abs(col) > 1e-10][0]
        assert lead.imag == 0.0 and lead.real > 0


def test_bitwise_deterministic_and_batch_independent(rng):
    a = random_hermitian(rng, 64)
    w1, v1 = eig_hermitian(a)
    w2, v2 = eig_hermitian(a.copy())
    assert np.array_equal(w1, w2) and np.array_equal(v1, v2)
    for k in (0, 17, 63):
        wk, vk = eig_hermitian(a[k])
        assert np.array_equal(wk, w1[k]) and np.array_equal(vk, v1[k])


def test_repeated_eigenvalues_are_deterministic():
    m = np.diag([2.0, 2.0, 1.0]).astype(complex)
    w, v = eig_hermitian(m)
    assert np.array_equal(w, [1.0, 2.0, 2.0])
    assert np.allclose(reconstruct(w, v), m, atol=1e-15)
    w2, v2 = eig_hermitian(m)
    assert np.array_equal(v, v2)


@pytest.mark.skipif(_backend.BACKEND != "compiled", reason="compiled kernel not built")
def test_compiled_matches_fallback_bitwise(rng):
    a = np.concatenate([random_hermitian(rng, 500),
                        random_hermitian(rng, 50, scale=1e-8),
                        np.broadcast_to(np.diag([2.0, 2.0, 1.0]), (4, 3, 3)).astype(complex)])
    re, im = np.ascontiguousarray(a.real), np.ascontiguousarray(a.imag)
    got = _backend.eigh3_batch(re, im)
    ref = _jacobi_py.eigh3_batch(re, im)
    for g, r in zip(got, ref):
        assert np.array_equal(np.asarray(g), np.asarray(r))


def test_rejects_non_finite_and_non_hermitian():
    with pytest.raises(InvalidMatrix):
        eig_hermitian(np.full((3, 3), np.nan))
    with pytest.raises(InvalidMatrix):
        eig_hermitian(np.triu(np.ones((3, 3))))
    with pytest.raises(InvalidMatrix):
        eig_hermitian(np.eye(2))


def test_tiny_asymmetry_is_symmetrized():
    m = np.eye(3, dtype=complex)
    m[0, 1] = 1e-13
    h = as_hermitian(m)
    assert h[0, 1] == h[1, 0] == 0.5e-13


def test_logm_examples():
    assert np.array_equal(logm(I3), np.zeros((3, 3)))
    assert np.allclose(logm(np.e * I3), I3, atol=1e-15)


def test_logm_against_scipy(rng):
    for m in random_hpd(rng, 50):
        assert np.abs(logm(m) - scipy.linalg.logm(m)).max() < 1e-10


def test_logm_rejects_singular():
    with pytest.raises(NotPositiveDefinite):
        logm(np.diag([1.0, 1.0, 0.0]))
    with pytest.raises(NotPositiveDefinite):
        logm(np.diag([1.0, -1.0, 2.0]))


def test_expm_examples(rng):
    assert np.array_equal(expm(np.zeros((3, 3))), I3)
    assert np.allclose(expm(I3), np.e * I3, atol=1e-15)
    h = random_hermitian(rng, 50)
    assert np.abs(expm(h) - np.stack([scipy.linalg.expm(x) for x in h])).max() < 1e-9


def test_expm_logm_round_trip(rng):
    m = random_hpd(rng, 1000)
    assert frobenius_norm(expm(logm(m)) - m).max() < 1e-8
    h = random_hermitian(rng, 1000)
    assert frobenius_norm(logm(expm(h)) - h).max() < 1e-8
    assert np.all(np.linalg.eigvalsh(expm(h)) > 0)


def test_inv_sqrtm(rng):
    assert np.allclose(inv_sqrtm(I3), I3, atol=1e-15)
    assert np.allclose(inv_sqrtm(4 * I3), 0.5 * I3, atol=1e-15)
    m = random_hpd(rng, 200)
    r = inv_sqrtm(m)
    assert np.abs(r @ m @ r - np.eye(3)).max() < 1e-9
    assert np.abs(r @ m - m @ r).max() < 1e-9


def test_sqrtm_invm_powm(rng):
    m = random_hpd(rng, 100)
    s = sqrtm(m)
    assert np.abs(s @ s - m).max() < 1e-9
    assert np.abs(invm(m) @ m - np.eye(3)).max() < 1e-9
    assert np.abs(powm(m, 0.5) - s).max() < 1e-12


def test_logdet(rng):
    m = random_hpd(rng, 100)
    assert np.allclose(logdet(m), np.log(np.linalg.det(m).real), atol=1e-10)


def test_frobenius_norm(rng):
    assert frobenius_norm(np.zeros((3, 3))) == 0.0
    assert frobenius_norm(I3) == np.sqrt(3.0)
    a = random_hermitian(rng, 20)
    assert np.allclose(frobenius_norm(a), np.sqrt((np.abs(a) ** 2).sum(axis=(1, 2))))


def test_is_hpd():
    assert is_hpd(I3)
    assert not is_hpd(np.diag([1.0, 0.0, 1.0]))
    assert not is_hpd(np.ones((3, 3)) + np.triu(np.ones((3, 3))))
    assert np.array_equal(as_hpd(2 * I3), 2 * I3)


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=9, max_size=9))
def test_reconstruction_property(vals):
    d = np.diag(vals[:3]).astype(complex)
    off = np.array(vals[3:9])
    m = d.copy()
    m[0, 1], m[0, 2], m[1, 2] = off[0] + 1j * off[1], off[2] + 1j * off[3], off[4] + 1j * off[5]
    m = m + np.conj(np.triu(m, 1)).T
    w, v = eig_hermitian(m)
    scale = max(1.0, np.abs(m).max())
    assert np.abs(reconstruct(w, v) - m).max() <= 1e-12 * scale * 10
