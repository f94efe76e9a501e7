import numpy as np
import pytest

# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE = {}


def random_hermitian(rng, n=None, scale=1.0):
    shape = (3, 3) if n is None else (n, 3, 3)
    a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return scale * 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def random_hpd(rng, n=None, floor=0.1):
    """Random HPD matrices with eigenvalues bounded below by ``floor``."""
    shape = (3, 3) if n is None else (n, 3, 3)
    a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return a @ np.conj(np.swapaxes(a, -1, -2)) / 3 + floor * np.eye(3)


def random_unitary(rng, n=None):
    shape = (3, 3) if n is None else (n, 3, 3)
    a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    q, r = np.linalg.qr(a)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[..., None, :]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
