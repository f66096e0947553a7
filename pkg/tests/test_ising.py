import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from scatterlab.ising import (
    IsingCouplings,
    bond_hamiltonians,
    build_trotter_gates,
    dense_hamiltonian,
    energy_density,
    local_energies,
    local_energy_terms,
    total_energy,
)
from scatterlab.mps import EXACT, MatrixProductState, to_dense


def test_couplings_validation():
    with pytest.raises(ValueError):
        IsingCouplings(L=3)
    assert IsingCouplings().with_length(10).L == 10


def test_local_terms_sum_to_hamiltonian():
    c = IsingCouplings(1.1, 0.3, 6)
    H = dense_hamiltonian(c)
    total = sum(t.dense(c.L) for t in local_energy_terms(c))
    assert abs(H - total).max() < 1e-13
    folded = sum(
        np.kron(np.kron(np.eye(2**b), h), np.eye(2 ** (c.L - b - 2))) for b, h in enumerate(bond_hamiltonians(c))
    )
    np.testing.assert_allclose(folded, H.toarray(), atol=1e-13)


def test_all_up_energy():
    c = IsingCouplings(0.0, 0.15, 8)
    assert total_energy(MatrixProductState.all_up(8), c) == pytest.approx(-(8 - 1) - 8 * 0.15)


def test_single_flip_cost_without_transverse_field():
    c = IsingCouplings(0.0, 0.15, 9)
    vac = MatrixProductState.all_up(9)
    bits = [0] * 9
    bits[4] = 1
    e = energy_density(MatrixProductState.product_state(bits), vac, c)
    assert e.sum() == pytest.approx(4 + 2 * 0.15)
    assert np.count_nonzero(np.abs(e) > 1e-14) == 3
    assert np.argmax(e) == 4


def test_local_energies_match_dense(rng):
    c = IsingCouplings(1.25, 0.15, 7)
    state = MatrixProductState.random(7, 6, rng)
    vec = to_dense(state)
    expected = [np.vdot(vec, t.dense(7) @ vec).real for t in local_energy_terms(c)]
    np.testing.assert_allclose(local_energies(state, c), expected, atol=1e-12)


@pytest.mark.parametrize("imag", [False, True])
def test_trotter_dt_validation(imag):
    c = IsingCouplings(L=6)
    with pytest.raises(ValueError):
        build_trotter_gates(c, 0.0, imaginary_time=imag)
    with pytest.raises(ValueError):
        build_trotter_gates(c, 0.1, order=4)


def test_second_order_trotter_error_scaling(rng):
    L = 8
    c = IsingCouplings(1.25, 0.15, L)
    H = dense_hamiltonian(c)
    state0 = MatrixProductState.random(L, 4, rng)
    v0 = to_dense(state0)
    exact = spla.expm_multiply(-1j * 1.0 * H, v0)
    errs = []
    for n in (8, 16, 32):
        s = state0.copy()
        build_trotter_gates(c, 1.0 / n).step(s, EXACT, n)
        errs.append(np.linalg.norm(to_dense(s) - exact))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 3.6) and np.all(ratios < 4.4)


def test_first_order_error_scaling(rng):
    L = 6
    c = IsingCouplings(1.25, 0.15, L)
    H = dense_hamiltonian(c)
    state0 = MatrixProductState.random(L, 4, rng)
    exact = spla.expm_multiply(-1j * 0.5 * H, to_dense(state0))
    errs = []
    for n in (16, 32):
        s = state0.copy()
        build_trotter_gates(c, 0.5 / n, order=1).step(s, EXACT, n)
        errs.append(np.linalg.norm(to_dense(s) - exact))
    assert 1.7 < errs[0] / errs[1] < 2.3


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), gx=st.floats(0.2, 2.0), gz=st.floats(-0.5, 0.5))
def test_real_time_conserves_energy_and_norm(seed, gx, gz):
    rng = np.random.default_rng(seed)
    c = IsingCouplings(gx, gz, 6)
    s = MatrixProductState.random(6, 4, rng)
    e0 = total_energy(s, c)
    build_trotter_gates(c, 0.05).step(s, EXACT, 10)
    assert s.norm_sq() == pytest.approx(1.0, abs=1e-12)
    # second-order Trotter energy drift is O(dt^2)
    assert abs(total_energy(s, c) - e0) < 2e-2


def test_imaginary_time_lowers_energy(rng):
    c = IsingCouplings(1.25, 0.15, 8)
    s = MatrixProductState.random(8, 4, rng)
    gs = build_trotter_gates(c, 0.1, imaginary_time=True)
    e_prev = total_energy(s, c)
    for _ in range(5):
        gs.step(s, EXACT, 4)
        e = total_energy(s, c)
        assert e <= e_prev + 1e-10
        e_prev = e
    e0 = spla.eigsh(dense_hamiltonian(c), k=1, which="SA")[0][0]
    assert e_prev == pytest.approx(e0, abs=5e-2)


def test_energy_density_vacuum_is_zero():
    c = IsingCouplings(1.25, 0.15, 6)
    vac = MatrixProductState.random(6, 2, np.random.default_rng(1))
    np.testing.assert_allclose(energy_density(vac, vac, c), 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        energy_density(vac, MatrixProductState.all_up(7), c)
