import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scatterlab.mps import (
    EXACT,
    DenseLimitError,
    MatrixProductState,
    StructureError,
    TruncationPolicy,
    apply_two_site_gate,
    canonicalize,
    correlation_matrix,
    inner_product,
    project_schmidt_component,
    schmidt_spectrum,
    to_dense,
)
from conftest import dense_apply_two_site, dense_schmidt, random_unitary


def assert_canonical(state):
    c = state.center
    for i, t in enumerate(state.tensors):
        if i < c:
            m = t.reshape(-1, t.shape[2])
            np.testing.assert_allclose(m.conj().T @ m, np.eye(m.shape[1]), atol=1e-12)
        elif i > c:
            m = t.reshape(t.shape[0], -1)
            np.testing.assert_allclose(m @ m.conj().T, np.eye(m.shape[0]), atol=1e-12)


def test_product_state_canonical_at_any_center():
    state = MatrixProductState.all_up(6)
    moved = canonicalize(state, 3)
    assert moved.center == 3
    np.testing.assert_allclose(to_dense(moved), to_dense(state), atol=1e-15)


def test_canonicalize_preserves_dense_and_norm(rng):
    state = MatrixProductState.random(8, 6, rng)
    state.tensors[3] = state.tensors[3] * 1.7
    state.center = None
    ref = to_dense(state)
    for center in (0, 7, 4):
        moved = canonicalize(state, center)
        assert_canonical(moved)
        np.testing.assert_allclose(to_dense(moved), ref, atol=1e-12)
        assert moved.norm_sq() == pytest.approx(np.vdot(ref, ref).real, abs=1e-12)


def test_norm_bookkeeping_identity(rng):
    state = MatrixProductState.random(7, 4, rng)
    state.log_norm_adjust = -3.0
    c = state.center
    expected = np.linalg.norm(state.tensors[c]) ** 2 * np.exp(-6.0)
    assert state.norm_sq() == pytest.approx(expected, rel=1e-12)


def test_structure_errors():
    with pytest.raises(StructureError):
        MatrixProductState([np.zeros((1, 2, 2)), np.zeros((3, 2, 1))])
    with pytest.raises(StructureError):
        MatrixProductState([np.zeros((2, 2, 1))])


def test_identity_gate_is_noop(rng):
    state = MatrixProductState.random(6, 4, rng)
    new, w = apply_two_site_gate(state, 2, np.eye(4), EXACT)
    assert w == 0.0
    np.testing.assert_allclose(to_dense(new), to_dense(state), atol=1e-13)


def test_entangling_gate_matches_dense(rng):
    L = 6
    state = MatrixProductState.product_state([0, 1, 0, 0, 1, 0])
    vec = to_dense(state)
    for bond in (0, 3, 1, 4, 2):
        gate = random_unitary(4, rng)
        state, w = apply_two_site_gate(state, bond, gate, EXACT)
        vec = dense_apply_two_site(vec, gate, bond, L)
        assert w == pytest.approx(0.0, abs=1e-14)
    np.testing.assert_allclose(to_dense(state), vec, atol=1e-12)


def test_chi_one_truncation_discards_smaller_schmidt_value():
    L = 6
    state = MatrixProductState.all_up(L)
    theta = 0.4
    # |00> -> cos|00> + sin|11>: rank-2 entanglement across bond 2
    gate = np.eye(4, dtype=complex)
    gate[[0, 3], [0, 0]] = [np.cos(theta), np.sin(theta)]
    gate[[0, 3], [3, 3]] = [-np.sin(theta), np.cos(theta)]
    vec = dense_apply_two_site(to_dense(state), gate, 2, L)
    lam = dense_schmidt(vec, 2, L)
    new, w = apply_two_site_gate(state, 2, gate, TruncationPolicy(max_bond=1, cutoff=0.0))
    assert w > 0
    assert w == pytest.approx(np.sort(lam)[-2], abs=1e-14)
    assert new.norm_sq() == pytest.approx(1 - w, abs=1e-14)


def test_nonunitary_gate_flagged(rng):
    state = MatrixProductState.random(5, 4, rng)
    new, _ = apply_two_site_gate(state, 1, np.diag([1.0, 0.5, 0.5, 0.2]), EXACT)
    assert new.nonunitary_gates == 1
    assert state.nonunitary_gates == 0


def test_discarded_weight_monotone_in_chi(rng):
    state = MatrixProductState.random(8, 16, rng)
    gate = random_unitary(4, rng)
    weights = [apply_two_site_gate(state, 3, gate, TruncationPolicy(max_bond=chi, cutoff=0.0))[1] for chi in range(1, 17)]
    assert all(a >= b - 1e-15 for a, b in zip(weights, weights[1:]))
    assert weights[-1] == pytest.approx(0.0, abs=1e-13)


def test_schmidt_spectrum_product_state():
    spec = schmidt_spectrum(MatrixProductState.product_state([0, 1, 1, 0, 1]), 2)
    np.testing.assert_allclose(spec.values, [1.0])
    assert spec.chi == 1


def test_schmidt_spectrum_matches_reduced_density_matrix(rng):
    L = 10
    state = MatrixProductState.random(L, 16, rng)
    vec = to_dense(state)
    psi = vec.reshape(2**5, 2**5)
    rho = psi @ psi.conj().T
    eig = np.sort(np.linalg.eigvalsh(rho))[::-1]
    spec = schmidt_spectrum(state, 4)
    np.testing.assert_allclose(spec.values, eig[: spec.chi], atol=1e-10)
    assert np.all(np.diff(spec.values) <= 0)
    assert spec.total == pytest.approx(1.0, abs=1e-10)


def test_projection_keep_all_is_identity(rng):
    state = MatrixProductState.random(8, 8, rng)
    spec = schmidt_spectrum(state, 3)
    full = project_schmidt_component(state, 3, range(spec.chi))
    np.testing.assert_allclose(to_dense(full), to_dense(state), atol=1e-12)


def test_projection_orthogonal_pieces(rng):
    state = MatrixProductState.random(8, 8, rng)
    spec = schmidt_spectrum(state, 3)
    a = project_schmidt_component(state, 3, [0])
    b = project_schmidt_component(state, 3, range(1, spec.chi))
    assert abs(inner_product(a, b)) < 1e-12
    assert a.norm_sq() == pytest.approx(spec.values[0], abs=1e-12)
    assert a.norm_sq() + b.norm_sq() == pytest.approx(state.norm_sq(), abs=1e-12)


def test_projection_empty_keep_is_zero(rng, caplog):
    state = MatrixProductState.random(6, 4, rng)
    zero = project_schmidt_component(state, 2, [])
    assert zero.norm_sq() == 0.0
    assert "empty keep-set" in caplog.text


@settings(max_examples=25, deadline=None)
@given(L=st.integers(4, 10), seed=st.integers(0, 2**31), cut_frac=st.floats(0, 1))
def test_projection_additivity_property(L, seed, cut_frac):
    rng = np.random.default_rng(seed)
    state = MatrixProductState.random(L, 8, rng)
    state.log_norm_adjust = rng.normal()
    cut = min(L - 2, int(cut_frac * (L - 1)))
    spec = schmidt_spectrum(state, cut)
    idx = rng.permutation(spec.chi)
    parts = np.array_split(idx, min(3, spec.chi))
    pieces = [project_schmidt_component(state, cut, p) for p in parts if len(p)]
    total = sum(p.norm_sq() for p in pieces)
    assert total == pytest.approx(state.norm_sq(), abs=1e-12 * max(1, state.norm_sq()))
    assert spec.total == pytest.approx(state.norm_sq(), rel=1e-10)
    for i in range(len(pieces)):
        for j in range(i + 1, len(pieces)):
            assert abs(inner_product(pieces[i], pieces[j])) < 1e-12 * max(1, state.norm_sq())


@settings(max_examples=20, deadline=None)
@given(L=st.integers(3, 10), seed=st.integers(0, 2**31))
def test_unbounded_gates_preserve_dense_property(L, seed):
    rng = np.random.default_rng(seed)
    state = MatrixProductState.random(L, 4, rng)
    vec = to_dense(state)
    for _ in range(6):
        bond = int(rng.integers(0, L - 1))
        gate = random_unitary(4, rng)
        state.apply_two_site_gate(bond, gate, EXACT, move=str(rng.choice(["left", "right"])))
        vec = dense_apply_two_site(vec, gate, bond, L)
    state.canonicalize(int(rng.integers(0, L)))
    np.testing.assert_allclose(to_dense(state), vec, atol=1e-12)


def test_inner_product_cases(rng):
    state = MatrixProductState.random(9, 8, rng)
    assert inner_product(state, state) == pytest.approx(1.0, abs=1e-12)
    a = MatrixProductState.product_state([0, 1, 0, 0, 0, 0, 0, 0, 0])
    b = MatrixProductState.product_state([0, 0, 1, 0, 0, 0, 0, 0, 0])
    assert inner_product(a, b) == 0
    other = MatrixProductState.random(9, 8, rng)
    other.log_norm_adjust = 0.3
    assert inner_product(state, other) == pytest.approx(np.vdot(to_dense(state), to_dense(other)), abs=1e-12)
    with pytest.raises(ValueError):
        inner_product(state, MatrixProductState.all_up(4))


def test_to_dense_conventions():
    vec = to_dense(MatrixProductState.all_up(5))
    assert vec[0] == 1 and np.count_nonzero(vec) == 1
    bits = [0] * 6
    bits[2] = 1
    vec = to_dense(MatrixProductState.product_state(bits))
    assert vec[2 ** (6 - 1 - 2)] == 1
    with pytest.raises(DenseLimitError):
        to_dense(MatrixProductState.all_up(15))


def test_three_site_gate_matches_dense(rng):
    L = 7
    state = MatrixProductState.random(L, 4, rng)
    gate = random_unitary(8, rng)
    vec = to_dense(state).reshape(2**2, 8, 2**2)
    expected = np.einsum("ij,ajb->aib", gate, vec).reshape(-1)
    state.apply_three_site_gate(2, gate, EXACT)
    np.testing.assert_allclose(to_dense(state), expected, atol=1e-12)


def test_correlation_matrix_dense(rng):
    from scatterlab.ising import X, Z, pauli_string

    L = 7
    state = MatrixProductState.random(L, 6, rng)
    vec = to_dense(state)
    sites = [1, 2, 4, 6]
    c = correlation_matrix(state, X, Z, sites)
    for i, a in enumerate(sites):
        for j, b in enumerate(sites):
            op = pauli_string(L, {a: "X"}) @ pauli_string(L, {b: "Z"})
            assert c[i, j] == pytest.approx(np.vdot(vec, op @ vec), abs=1e-12)


def test_snapshot_round_trip(tmp_path, rng):
    state = MatrixProductState.random(9, 5, rng)
    state.log_norm_adjust = -0.25
    path = tmp_path / "state.mps"
    state.save(path)
    back = MatrixProductState.load(path)
    assert back.center == state.center
    assert back.bond_dims == state.bond_dims
    np.testing.assert_array_equal(to_dense(back), to_dense(state))
    raw = path.read_bytes()
    assert raw[:8] == b"SCLBMPS\x00"
    path.write_bytes(raw + b"x")
    with pytest.raises(StructureError):
        MatrixProductState.load(path)
