"""Real-time evolution with staged truncation and snapshot capture."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .ising import TrotterGateSet, energy_density, local_energies
from .mps import MatrixProductState, SchmidtSpectrum, TruncationPolicy, compress, schmidt_spectrum

log = logging.getLogger(__name__)

_TIME_TOL = 1e-9


class NormFloorError(RuntimeError):
    """The squared norm dropped below the configured floor during evolution."""

    def __init__(self, message: str, t: float, norm_sq: float, records: list):
        super().__init__(message)
        self.t = t
        self.norm_sq = norm_sq
        self.records = records


@dataclass
class EvolutionSchedule:
    """Time grid, snapshot times and staged truncation policies.

    ``stages`` is a list of ``(t_from, policy)``; the first stage must start at
    0. When a stage with a smaller bond cap begins, the state is recompressed
    immediately. ``snapshot_times`` defaults to every unit of time.
    """

    t_end: float
    dt: float = 1.0 / 32
    snapshot_times: Sequence[float] | None = None
    stages: Sequence[tuple[float, TruncationPolicy]] = field(default_factory=lambda: [(0.0, TruncationPolicy())])
    norm_floor: float = 0.5

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.snapshot_times is None:
            self.snapshot_times = list(np.arange(0.0, self.t_end + 0.5 * self.dt, 1.0))
        self.snapshot_times = sorted(float(t) for t in self.snapshot_times)
        if any(t < -_TIME_TOL or t > self.t_end + _TIME_TOL for t in self.snapshot_times):
            raise ValueError(f"snapshot times must lie in [0, {self.t_end}]")
        self.stages = [(float(t), p) for t, p in self.stages]
        if not self.stages or abs(self.stages[0][0]) > _TIME_TOL:
            raise ValueError("the first truncation stage must start at t=0")
        if any(b[0] < a[0] for a, b in zip(self.stages, self.stages[1:])):
            raise ValueError("truncation stages must be time-ordered")
        for t in [self.t_end, *self.snapshot_times, *(s[0] for s in self.stages)]:
            self.steps_to(t)

    def steps_to(self, t: float) -> int:
        n = round(t / self.dt)
        if abs(n * self.dt - t) > _TIME_TOL * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a multiple of dt={self.dt}")
        return int(n)

    def policy_at(self, t: float) -> TruncationPolicy:
        current = self.stages[0][1]
        for t_from, policy in self.stages:
            if t_from <= t + _TIME_TOL:
                current = policy
        return current


@dataclass
class SnapshotRecord:
    t: float
    energy_density: np.ndarray | None
    midpoint_spectrum: SchmidtSpectrum
    norm_sq: float
    max_bond_used: int
    cumulative_discarded_weight: float

    def diagnostics(self) -> dict:
        return {
            "t": self.t,
            "norm_sq": self.norm_sq,
            "chi": self.max_bond_used,
            "discarded_weight": self.cumulative_discarded_weight,
        }


class SnapshotWriter:
    """Incremental CSV (t, n, E_n) and JSON-lines diagnostics output."""

    def __init__(self, csv_path: str | Path | None = None, jsonl_path: str | Path | None = None):
        self._csv = open(csv_path, "w", newline="") if csv_path else None
        self._jsonl = open(jsonl_path, "w") if jsonl_path else None
        if self._csv:
            self._writer = csv.writer(self._csv)
            self._writer.writerow(["t", "n", "E_n"])

    def __call__(self, record: SnapshotRecord):
        if self._csv and record.energy_density is not None:
            for n, e in enumerate(record.energy_density):
                self._writer.writerow([f"{record.t:.10g}", n, f"{e:.12e}"])
            self._csv.flush()
        if self._jsonl:
            self._jsonl.write(json.dumps(record.diagnostics()) + "\n")
            self._jsonl.flush()

    def close(self):
        for fh in (self._csv, self._jsonl):
            if fh:
                fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def evolve(
    state: MatrixProductState,
    gates: TrotterGateSet,
    schedule: EvolutionSchedule,
    *,
    vacuum_reference=None,
    cut_site: int | None = None,
    callback: Callable[[SnapshotRecord], None] | None = None,
    check_every: int = 32,
) -> tuple[MatrixProductState, list[SnapshotRecord]]:
    """Evolve a copy of ``state`` to ``schedule.t_end``.

    Parameters
    ----------
    state : MatrixProductState
        Initial state; not modified.
    gates : TrotterGateSet
        Real-time gates. Their ``dt`` must equal ``schedule.dt``.
    schedule : EvolutionSchedule
    vacuum_reference : MatrixProductState or array_like, optional
        Vacuum (or its local energies) for the energy density. Without it
        snapshots carry ``energy_density=None``.
    cut_site : int, optional
        Site left of the monitored bond; defaults to ``L // 2 - 1``.
    callback : callable, optional
        Called with every :class:`SnapshotRecord` as soon as it is taken.
    check_every : int
        Number of steps between norm-floor checks.

    Returns
    -------
    final_state, records

    Raises
    ------
    NormFloorError
        When the squared norm falls below ``schedule.norm_floor``.
    """
    if abs(gates.dt - schedule.dt) > 1e-15:
        raise ValueError(f"gate dt {gates.dt} differs from schedule dt {schedule.dt}")
    work = state.copy()
    L = work.length
    cut = L // 2 - 1 if cut_site is None else cut_site
    couplings = gates.couplings
    vac = None
    if vacuum_reference is not None:
        if couplings is None:
            raise ValueError("energy densities need a gate set built from couplings")
        if isinstance(vacuum_reference, MatrixProductState):
            vac = local_energies(vacuum_reference, couplings) / vacuum_reference.norm_sq()
        else:
            vac = np.asarray(vacuum_reference, dtype=float)

    snap_steps = sorted({schedule.steps_to(t) for t in schedule.snapshot_times})
    stage_steps = [(schedule.steps_to(t), p) for t, p in schedule.stages]
    n_end = schedule.steps_to(schedule.t_end)
    events = sorted({*snap_steps, *(s for s, _ in stage_steps), n_end})

    records: list[SnapshotRecord] = []
    discarded = 0.0
    policy = stage_steps[0][1]
    step = 0

    def take(n):
        norm_sq = work.norm_sq()
        rec = SnapshotRecord(
            t=n * schedule.dt,
            energy_density=None if vac is None else energy_density(work, vac, couplings),
            midpoint_spectrum=schmidt_spectrum(work, cut),
            norm_sq=norm_sq,
            max_bond_used=work.max_bond,
            cumulative_discarded_weight=discarded,
        )
        records.append(rec)
        if callback is not None:
            callback(rec)
        log.info("t=%.4g norm^2=%.10f chi=%d discarded=%.3e", rec.t, norm_sq, rec.max_bond_used, discarded)

    for event in events:
        while step < event:
            chunk = min(check_every, event - step)
            discarded += gates.step(work, policy, chunk)
            step += chunk
            norm_sq = work.norm_sq()
            if norm_sq < schedule.norm_floor:
                raise NormFloorError(
                    f"norm^2={norm_sq:.6f} below floor {schedule.norm_floor} at t={step * schedule.dt:.4g} "
                    f"(chi={work.max_bond}, discarded={discarded:.3e})",
                    step * schedule.dt,
                    norm_sq,
                    records,
                )
        for s, p in stage_steps:
            if s == event and p is not policy:
                if p.max_bond < work.max_bond or p.cutoff > policy.cutoff:
                    discarded += compress(work, p)
                policy = p
        if event in snap_steps:
            take(event)
    return work, records
