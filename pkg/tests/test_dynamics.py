import json

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from scatterlab.dynamics import EvolutionSchedule, NormFloorError, SnapshotWriter, evolve
from scatterlab.ising import IsingCouplings, build_trotter_gates, dense_hamiltonian, energy_density, total_energy
from scatterlab.mps import EXACT, MatrixProductState, TruncationPolicy, to_dense
from scatterlab.stateprep import WavepacketSpec, apply_flip_superposition, prepare_two_wavepacket_initial_state, prepare_vacuum


def test_schedule_validation():
    with pytest.raises(ValueError):
        EvolutionSchedule(t_end=1.0, dt=0.3)
    with pytest.raises(ValueError):
        EvolutionSchedule(t_end=1.0, snapshot_times=[2.0])
    with pytest.raises(ValueError):
        EvolutionSchedule(t_end=1.0, stages=[(0.5, EXACT)])
    with pytest.raises(ValueError):
        EvolutionSchedule(t_end=2.0, stages=[(0.0, EXACT), (1.5, EXACT), (1.0, EXACT)])
    s = EvolutionSchedule(t_end=3.0)
    assert s.snapshot_times == [0.0, 1.0, 2.0, 3.0]


def test_zero_steps_returns_input(rng):
    c = IsingCouplings(L=6)
    state = MatrixProductState.random(6, 4, rng)
    final, records = evolve(state, build_trotter_gates(c, 1 / 32), EvolutionSchedule(t_end=0.0))
    np.testing.assert_allclose(to_dense(final), to_dense(state), atol=1e-14)
    assert len(records) == 1 and records[0].t == 0.0


def test_dense_propagator_fidelity(rng):
    L = 10
    c = IsingCouplings(L=L)
    state = MatrixProductState.random(L, 8, rng)
    final, _ = evolve(state, build_trotter_gates(c, 1 / 32), EvolutionSchedule(t_end=2.0, stages=[(0.0, EXACT)]))
    exact = spla.expm_multiply(-2j * dense_hamiltonian(c), to_dense(state))
    assert abs(np.vdot(exact, to_dense(final))) ** 2 >= 1 - 1e-6


@pytest.mark.parametrize("kind", ["all_up", "vacuum_flip"])
def test_energy_drift_without_truncation(kind):
    L = 10
    c = IsingCouplings(L=L)
    if kind == "all_up":
        state = MatrixProductState.all_up(L)
    else:
        state = prepare_vacuum(c)
        apply_flip_superposition(state, {4: 1.0})
        state.normalize()
    e0 = total_energy(state, c)
    final, _ = evolve(state, build_trotter_gates(c, 1 / 32), EvolutionSchedule(t_end=100 / 32, stages=[(0.0, EXACT)]))
    assert abs(total_energy(final, c) - e0) <= 1e-4 * abs(e0)


def test_reversibility(rng):
    L = 8
    c = IsingCouplings(L=L)
    state = MatrixProductState.random(L, 8, rng)
    gates = build_trotter_gates(c, 1 / 32)
    sched = EvolutionSchedule(t_end=1.5, stages=[(0.0, EXACT)])
    fwd, _ = evolve(state, gates, sched)
    back, _ = evolve(fwd, gates.inverse(), sched)
    assert abs(np.vdot(to_dense(state), to_dense(back))) ** 2 >= 1 - 1e-6


def test_truncation_bookkeeping_and_monotone_norm(rng):
    L = 12
    c = IsingCouplings(L=L)
    state = MatrixProductState.random(L, 4, rng)
    sched = EvolutionSchedule(
        t_end=3.0,
        snapshot_times=np.arange(0, 3.01, 0.25),
        stages=[(0.0, TruncationPolicy(12, 1e-9)), (2.0, TruncationPolicy(6, 1e-9))],
    )
    final, records = evolve(state, build_trotter_gates(c, 1 / 32), sched)
    norms = [r.norm_sq for r in records]
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))
    assert all(0 < n <= 1 + 1e-9 for n in norms)
    lost = 1 - records[-1].norm_sq
    assert lost > 0
    assert records[-1].cumulative_discarded_weight == pytest.approx(lost, rel=0.1)
    assert max(r.max_bond_used for r in records if r.t >= 2.0) <= 6


def test_norm_floor_abort(rng):
    L = 12
    c = IsingCouplings(L=L)
    state = MatrixProductState.random(L, 16, rng)
    sched = EvolutionSchedule(t_end=5.0, stages=[(0.0, TruncationPolicy(1, 0.0))], norm_floor=0.9)
    with pytest.raises(NormFloorError) as info:
        evolve(state, build_trotter_gates(c, 1 / 32), sched)
    assert info.value.norm_sq < 0.9


def test_dt_mismatch(rng):
    c = IsingCouplings(L=6)
    with pytest.raises(ValueError):
        evolve(MatrixProductState.all_up(6), build_trotter_gates(c, 0.1), EvolutionSchedule(t_end=1.0))


def test_snapshot_writer(tmp_path, rng):
    c = IsingCouplings(L=8)
    vac = prepare_vacuum(c)
    state = MatrixProductState.random(8, 4, rng)
    csv_path, jl_path = tmp_path / "e.csv", tmp_path / "d.jsonl"
    with SnapshotWriter(csv_path, jl_path) as writer:
        _, records = evolve(
            state, build_trotter_gates(c, 0.125), EvolutionSchedule(t_end=1.0, dt=0.125), vacuum_reference=vac, callback=writer
        )
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "t,n,E_n"
    assert len(lines) == 1 + 2 * 8
    diag = [json.loads(x) for x in jl_path.read_text().splitlines()]
    assert [d["t"] for d in diag] == [0.0, 1.0]
    assert float(lines[-1].split(",")[2]) == pytest.approx(records[1].energy_density[-1], rel=1e-10)


def test_mirror_symmetry_preserved_desk():
    L = 80
    c = IsingCouplings(L=L)
    vac = prepare_vacuum(c)
    state = prepare_two_wavepacket_initial_state(c, WavepacketSpec(n0=16), vacuum=vac)
    sched = EvolutionSchedule(t_end=4.0, dt=1 / 16, snapshot_times=[0.0, 2.0, 4.0], stages=[(0.0, TruncationPolicy(48, 1e-9))])
    _, records = evolve(state, build_trotter_gates(c, 1 / 16), sched, vacuum_reference=vac)
    for r in records:
        np.testing.assert_allclose(r.energy_density, r.energy_density[::-1], atol=5e-3)
