import numpy as np
import pytest
import scipy.linalg


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_unitary(dim, rng):
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def dense_apply_two_site(vec, gate, bond, L):
    psi = vec.reshape(2**bond, 4, 2 ** (L - bond - 2))
    return np.einsum("ij,ajb->aib", gate, psi).reshape(-1)


def dense_schmidt(vec, cut, L):
    """Squared singular values of the (0..cut | cut+1..L-1) split."""
    s = scipy.linalg.svdvals(vec.reshape(2 ** (cut + 1), -1))
    return s**2


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one acceptance line; ``ok=None`` marks a skipped criterion."""

    def record(criterion: int, ok, detail: str):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        line = f"criterion {criterion:2d}: {status}  {detail}"
        print(line)
        _VERDICTS.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
