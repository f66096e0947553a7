"""Composable pipeline steps shared by the command line and the acceptance suite."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .dynamics import SnapshotRecord, evolve
from .entanglement import (
    ChannelReport,
    ChannelWindows,
    antiflatness,
    auto_cut_sites,
    entanglement_entropy,
    isolate_channels,
    vacuum_spectrum_baseline,
)
from .ising import build_trotter_gates, energy_density, local_energies
from .mps import MatrixProductState, SchmidtSpectrum, schmidt_spectrum
from .spectroscopy import (
    ClassificationRejected,
    DispersionTable,
    UnclassifiableError,
    classify_excitation,
    dispersion_from_ed,
)
from .stateprep import WavepacketSpec, prepare_two_wavepacket_initial_state, prepare_vacuum

log = logging.getLogger(__name__)


def run_vacuum(cfg: RunConfig) -> tuple[MatrixProductState, dict]:
    state, info = prepare_vacuum(
        cfg.couplings,
        cfg.vacuum_policy,
        variance_tol=cfg.vacuum_variance_tol,
        max_sweeps=cfg.vacuum_max_sweeps,
        return_info=True,
    )
    spec = schmidt_spectrum(state, cfg.L // 2 - 1)
    info = {
        **info,
        "L": cfg.L,
        "energy_density": info["energy"] / cfg.L,
        "chi": state.max_bond,
        "midpoint_spectrum": [float(x) for x in spec.values[:8]],
    }
    return state, info


def run_dispersion(cfg: RunConfig) -> DispersionTable:
    return dispersion_from_ed(cfg.couplings, L_list=cfg.ed_L_list, bands=cfg.ed_bands)


def spectrum_summary(spec: SchmidtSpectrum, chi: int | None = None, threshold: float = 1e-2) -> dict:
    return {
        "cut_site": spec.cut_site,
        "entropy": entanglement_entropy(spec),
        "antiflatness": antiflatness(spec, chi if chi is not None else max(spec.chi, 1)),
        "significant": [float(spec.values[i]) for i in spec.significant(threshold)],
        "above_0.05": int(np.sum(spec.values > 0.05)),
    }


@dataclass
class ScatterResult:
    initial: MatrixProductState
    final: MatrixProductState
    vacuum: MatrixProductState
    records: list[SnapshotRecord]
    summary: dict = field(default_factory=dict)


def run_scatter(
    cfg: RunConfig,
    vacuum: MatrixProductState | None = None,
    callback=None,
) -> ScatterResult:
    """Prepare the dressed two-packet state and evolve it per ``cfg``."""
    if cfg.left is None or cfg.schedule is None:
        raise ValueError("scatter needs 'wavepackets' and 'evolution' sections")
    if vacuum is None:
        vacuum, _ = run_vacuum(cfg)
    initial = prepare_two_wavepacket_initial_state(
        cfg.couplings,
        cfg.left,
        cfg.right,
        vacuum=vacuum,
        substeps=cfg.layer_substeps,
        policy=cfg.layer_policy,
    )
    gates = build_trotter_gates(cfg.couplings, cfg.schedule.dt, order=cfg.trotter_order)
    vac_local = local_energies(vacuum, cfg.couplings) / vacuum.norm_sq()
    final, records = evolve(initial, gates, cfg.schedule, vacuum_reference=vac_local, callback=callback)
    last = records[-1]
    e0 = records[0].energy_density
    summary = {
        "L": cfg.L,
        "k_i": cfg.left.k_i,
        "t_end": cfg.schedule.t_end,
        "norm_sq": last.norm_sq,
        "chi": last.max_bond_used,
        "discarded_weight": last.cumulative_discarded_weight,
        "initial_energy": float(np.sum(e0)),
        "final_energy": float(np.sum(last.energy_density)),
        "mirror_asymmetry": float(np.max(np.abs(last.energy_density - last.energy_density[::-1]))),
        "midpoint": spectrum_summary(last.midpoint_spectrum),
        "packets": [
            {"k_i": s.k_i, "sigma_k": s.sigma_k, "n0": s.n0, "d": s.d, "norm_retained": s.norm_retained}
            for s in (cfg.left, cfg.right)
        ],
    }
    return ScatterResult(initial, final, vacuum, records, summary)


def collision_point(left: WavepacketSpec, right: WavepacketSpec, table: DispersionTable) -> float:
    """Where two packets moving at their group velocities meet."""
    va, vb = table.velocity(1, left.k_i), table.velocity(1, right.k_i)
    xa, xb = float(left.n0), float(right.n0)
    if va - vb <= 0:
        return 0.5 * (xa + xb)
    tc = (xb - xa) / (va - vb)
    return xa + va * tc


def run_isolation(
    cfg: RunConfig,
    final: MatrixProductState,
    vacuum: MatrixProductState,
    t_final: float | None = None,
    table: DispersionTable | None = None,
) -> ChannelReport:
    """Channel isolation on ``final`` with cuts from ``cfg`` (or automatic)."""
    final = final.copy()
    final.normalize()
    e = energy_density(final, vacuum, cfg.couplings)
    n_l, n_r = cfg.n_l, cfg.n_r
    if n_l == "auto" or n_r == "auto":
        auto_l, auto_r = auto_cut_sites(e)
        n_l = auto_l if n_l == "auto" else n_l
        n_r = auto_r if n_r == "auto" else n_r
    report = isolate_channels(
        final,
        n_l,
        n_r,
        couplings=cfg.couplings,
        vacuum_reference=vacuum,
        significance=cfg.significance,
        occupancy=cfg.occupancy,
        vacuum_baseline=vacuum_spectrum_baseline(vacuum, n_l),
    )
    if table is not None and t_final is not None and cfg.left is not None:
        classify_channels(report, cfg, vacuum, table, t_final)
    return report


def _centroid(e: np.ndarray, window: tuple[int, int]) -> float:
    lo, hi = window
    seg = np.clip(e[lo:hi], 0.0, None)
    if seg.sum() <= 0:
        raise ValueError(f"no excitation energy in window {window}")
    return lo + float(np.dot(np.arange(hi - lo), seg) / seg.sum())


def classify_channels(
    report: ChannelReport,
    cfg: RunConfig,
    vacuum: MatrixProductState,
    table: DispersionTable,
    t_final: float,
) -> list:
    """Attach species assignments to the occupied regions of labeled components.

    Velocities are measured on straight paths from the collision point, with
    the effective start time ``t0`` either fixed in the configuration or
    calibrated so that the fast packet of the elastic channel moves at
    ``v_1(k_i)``. Returns the flat list of classification rows.
    """
    L = cfg.L
    windows = ChannelWindows.from_cuts(L, *report.cut_positions)
    x_c = collision_point(cfg.left, cfg.right, table)
    densities = {}
    for ch in report.channels:
        densities[ch.state_ref] = energy_density(ch.state, vacuum, cfg.couplings) / max(ch.probability, 1e-300)

    t0 = cfg.t0
    if t0 == "auto":
        elastic = [c for c in report.channels if c.label == "11"]
        if not elastic:
            report.warnings.append("t0 calibration needs an elastic component; using t0 = 0")
            t0 = 0.0
        else:
            x = _centroid(densities[elastic[0].state_ref], windows.fast_right)
            t0 = t_final - (x - x_c) / table.velocity(1, abs(cfg.left.k_i))
    t0 = float(t0)

    rows = []
    for ch in report.channels:
        if ch.label == "higher-order":
            continue
        e = densities[ch.state_ref]
        for region, frac in ch.region_fractions.items():
            if frac < cfg.occupancy:
                continue
            window = getattr(windows, region)
            lo, hi = window
            E_wp = float(e[lo:hi].sum())
            v = (_centroid(e, window) - x_c) / (t_final - t0)
            label = f"{ch.state_ref}:{region}"
            row = {"component": ch.state_ref, "channel": ch.label, "region": region, "t0": t0}
            try:
                rec = classify_excitation(v, E_wp, table, max_relative_error=cfg.max_relative_error, label=label)
                row.update(rejected=False, **rec.to_dict())
            except ClassificationRejected as exc:
                report.warnings.append(str(exc))
                row.update(rejected=True, **exc.record.to_dict())
            except UnclassifiableError as exc:
                report.warnings.append(f"{label}: {exc}")
                row.update(rejected=True, excitation_label=label, measured_velocity=v, E_wp=E_wp)
            ch.classifications.append(row)
            rows.append(row)
    return rows
