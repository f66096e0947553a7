"""Entanglement diagnostics and isolation of exclusive scattering channels.

Channel isolation works on a late-time state whose outgoing packets are
spatially separated. Two bipartitions ``n_l < n_r`` are placed between the
fast outer packets and the slow inner ones. The Schmidt decomposition at
``n_l`` splits off components without a fast left-moving particle; the
decomposition of each branch at ``n_r`` then separates the channels. Every
resulting component is labeled from where its excitation energy sits.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks

from .ising import IsingCouplings, energy_density, local_energies
from .mps import MatrixProductState, SchmidtSpectrum, project_schmidt_component, schmidt_spectrum

log = logging.getLogger(__name__)

SIGNIFICANCE = 1e-2
OCCUPANCY = 0.2
LABELS = ("11", "12", "21", "higher-order")
REGIONS = ("fast_left", "slow_left", "slow_right", "fast_right")


class SeparationError(ValueError):
    """The outgoing packets could not be located or separated."""


_PATTERNS = {
    frozenset({"fast_left", "fast_right"}): "11",
    frozenset({"fast_left", "slow_right"}): "12",
    frozenset({"slow_left", "fast_right"}): "21",
}


def _values(spectrum) -> np.ndarray:
    lam = np.asarray(spectrum.values if isinstance(spectrum, SchmidtSpectrum) else spectrum, dtype=float)
    if np.any(lam < -1e-14):
        raise ValueError("entanglement spectrum has negative entries")
    return np.clip(lam, 0.0, None)


def entanglement_entropy(spectrum) -> float:
    """``S = -sum_i lam_i ln lam_i`` on the spectrum as given.

    The spectrum is not renormalized, so the entropies of unnormalized
    exclusive components add up to that of their sum.
    """
    lam = _values(spectrum)
    lam = lam[lam > 0]
    return float(-np.sum(lam * np.log(lam)))


def antiflatness(spectrum, chi: int | None = None) -> float:
    """Variance of the spectrum padded with zeros to ``chi`` entries.

    ``F = (1/chi) sum_i lam_i^2 - ((1/chi) sum_i lam_i)^2``. With ``chi`` equal
    to the number of values this is the plain population variance.
    """
    lam = _values(spectrum)
    nonzero = int(np.count_nonzero(lam))
    if chi is None:
        chi = spectrum.chi if isinstance(spectrum, SchmidtSpectrum) else len(lam)
    if chi < max(nonzero, 1):
        raise ValueError(f"chi={chi} is smaller than the {nonzero} nonzero spectrum values")
    return float(np.sum(lam**2) / chi - (np.sum(lam) / chi) ** 2)


def vacuum_spectrum_baseline(vacuum: MatrixProductState, cut: int) -> SchmidtSpectrum:
    """Normalized Schmidt spectrum of the vacuum at ``cut``."""
    spec = schmidt_spectrum(vacuum, cut)
    total = spec.total
    return SchmidtSpectrum(cut, spec.values / total, spec.chi)


@dataclass(frozen=True)
class ChannelWindows:
    """Half-open site ranges where the outgoing packets of each kind sit.

    The default partition puts everything left of ``n_l`` in the fast-left
    region, everything right of ``n_r`` in the fast-right region and splits
    the middle at ``L // 2``.
    """

    fast_left: tuple[int, int]
    slow_left: tuple[int, int]
    slow_right: tuple[int, int]
    fast_right: tuple[int, int]

    @classmethod
    def from_cuts(cls, L: int, n_l: int, n_r: int) -> "ChannelWindows":
        mid = L // 2
        return cls((0, n_l + 1), (n_l + 1, mid), (mid, n_r + 1), (n_r + 1, L))

    @classmethod
    def from_kinematics(
        cls, L: int, x_collision: float, elapsed: float, v_fast: float, v_slow: float, half_width: float
    ) -> "ChannelWindows":
        """Windows centred on where packets launched from ``x_collision`` arrive."""

        def around(x):
            lo, hi = int(np.floor(x - half_width)), int(np.ceil(x + half_width)) + 1
            return max(lo, 0), min(hi, L)

        return cls(
            around(x_collision - v_fast * elapsed),
            around(x_collision - v_slow * elapsed),
            around(x_collision + v_slow * elapsed),
            around(x_collision + v_fast * elapsed),
        )

    def fractions(self, e: np.ndarray) -> dict[str, float]:
        """Share of the positive excitation energy inside each region."""
        pos = np.clip(np.asarray(e, dtype=float), 0.0, None)
        total = pos.sum()
        out = {}
        for name in REGIONS:
            lo, hi = getattr(self, name)
            out[name] = float(pos[lo:hi].sum() / total) if total > 0 else 0.0
        return out


def label_component(fractions: dict[str, float], occupancy: float = OCCUPANCY) -> str:
    """Channel label from the set of occupied regions."""
    occupied = frozenset(name for name, f in fractions.items() if f >= occupancy)
    return _PATTERNS.get(occupied, "higher-order")


@dataclass
class ChannelRecord:
    label: str
    probability: float
    cut_sites: tuple[int, int]
    path: tuple[int, int]
    spectrum_used: SchmidtSpectrum
    region_fractions: dict
    state: MatrixProductState | None = field(default=None, repr=False)
    classifications: list = field(default_factory=list)

    @property
    def state_ref(self) -> str:
        return f"f_{self.path[0]}_{self.path[1]}"

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "probability": self.probability,
            "state_ref": self.state_ref,
            "cut_sites": list(self.cut_sites),
            "path": list(self.path),
            "spectrum_used": {
                "cut_site": self.spectrum_used.cut_site,
                "values": [float(x) for x in self.spectrum_used.values],
            },
            "region_fractions": self.region_fractions,
            "classifications": [c.to_dict() if hasattr(c, "to_dict") else c for c in self.classifications],
        }


@dataclass
class ChannelReport:
    channels: list[ChannelRecord]
    residual_probability: float
    cut_positions: tuple[int, int]
    norm_sq: float
    first_cut: SchmidtSpectrum
    warnings: list[str] = field(default_factory=list)

    def probability(self, label: str) -> float:
        return float(sum(c.probability for c in self.channels if c.label == label))

    def branching_ratios(self) -> dict[str, float]:
        """``P(11)``, ``P(12)`` (both orderings of the inelastic pair) and higher orders."""
        return {
            "11": self.probability("11"),
            "12": self.probability("12") + self.probability("21"),
            "higher-order": self.probability("higher-order"),
        }

    def to_dict(self) -> dict:
        return {
            "cut_positions": list(self.cut_positions),
            "norm_sq": self.norm_sq,
            "residual_probability": self.residual_probability,
            "first_cut": [float(x) for x in self.first_cut.values],
            "branching_ratios": self.branching_ratios(),
            "channels": [c.to_dict() for c in self.channels],
            "warnings": list(self.warnings),
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


REPORT_SCHEMA = {
    "type": "object",
    "required": ["cut_positions", "norm_sq", "residual_probability", "channels", "branching_ratios", "warnings"],
    "properties": {
        "cut_positions": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
        "norm_sq": {"type": "number", "minimum": 0},
        "residual_probability": {"type": "number"},
        "first_cut": {"type": "array", "items": {"type": "number"}},
        "branching_ratios": {"type": "object", "additionalProperties": {"type": "number"}},
        "warnings": {"type": "array", "items": {"type": "string"}},
        "channels": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["label", "probability", "state_ref", "cut_sites", "spectrum_used"],
                "properties": {
                    "label": {"enum": list(LABELS)},
                    "probability": {"type": "number", "minimum": 0},
                    "state_ref": {"type": "string"},
                    "cut_sites": {"type": "array", "items": {"type": "integer"}},
                    "path": {"type": "array", "items": {"type": "integer"}},
                    "spectrum_used": {
                        "type": "object",
                        "required": ["cut_site", "values"],
                        "properties": {"values": {"type": "array", "items": {"type": "number"}}},
                    },
                    "region_fractions": {"type": "object", "additionalProperties": {"type": "number"}},
                    "classifications": {"type": "array"},
                },
            },
        },
    },
}


def _significant(spec: SchmidtSpectrum, significance: float, vacuum_ratio: float) -> list[int]:
    if not len(spec.values):
        return []
    bound = max(significance * spec.total, vacuum_ratio * spec.values[0])
    return [i for i, lam in enumerate(spec.values) if lam > bound]


def auto_cut_sites(e: np.ndarray, prominence: float = 0.05) -> tuple[int, int]:
    """Cuts at the quietest site between the outer and inner packet groups.

    On the left half the two outermost energy peaks are located; ``n_l`` is
    the minimum of ``E_n`` between them (or halfway to the centre when only one
    peak is found). ``n_r`` is the mirror image ``L - 2 - n_l``.
    """
    e = np.asarray(e, dtype=float)
    L = len(e)
    mid = L // 2
    left = e[:mid]
    peaks, _ = find_peaks(left, prominence=prominence * max(left.max(), 1e-300))
    if len(peaks) == 0:
        raise SeparationError("no outgoing packet found on the left half")
    if len(peaks) == 1:
        n_l = int((peaks[0] + mid) // 2)
    else:
        a, b = peaks[0], peaks[1]
        n_l = int(a + np.argmin(left[a : b + 1]))
    return n_l, L - 2 - n_l


def isolate_channels(
    final_state: MatrixProductState,
    n_l: int,
    n_r: int,
    window_spec: ChannelWindows | None = None,
    *,
    couplings: IsingCouplings,
    vacuum_reference,
    significance: float = SIGNIFICANCE,
    occupancy: float = OCCUPANCY,
    vacuum_baseline: SchmidtSpectrum | None = None,
) -> ChannelReport:
    """Two-cut separation of a late-time state into exclusive channels.

    Parameters
    ----------
    final_state : MatrixProductState
        Late-time state; its norm is kept, so probabilities are absolute.
    n_l, n_r : int
        Cut sites (bond right of the site), ``n_l < n_r``.
    window_spec : ChannelWindows, optional
        Packet regions used for labeling; defaults to
        :meth:`ChannelWindows.from_cuts`.
    couplings, vacuum_reference
        Define the vacuum-subtracted energy density of each component.
    significance : float
        Components with squared Schmidt value below ``significance`` times the
        total go to the residual.
    occupancy : float
        Minimum share of excitation energy for a region to count as occupied.
    vacuum_baseline : SchmidtSpectrum, optional
        Normalized vacuum spectrum at the cuts. Components not larger than the
        leading one times the vacuum's subleading ratio are treated as vacuum
        fluctuations and left in the residual.

    Returns
    -------
    ChannelReport
        Exclusive components are unnormalized; their squared norms are the
        channel probabilities.
    """
    L = final_state.length
    if not 0 <= n_l < n_r < L - 1:
        raise ValueError(f"need 0 <= n_l < n_r < L-1, got n_l={n_l}, n_r={n_r}")
    windows = window_spec or ChannelWindows.from_cuts(L, n_l, n_r)
    if isinstance(vacuum_reference, MatrixProductState):
        vacuum_reference = local_energies(vacuum_reference, couplings) / vacuum_reference.norm_sq()
    ratio = 0.0
    if vacuum_baseline is not None and len(vacuum_baseline.values) > 1:
        ratio = float(vacuum_baseline.values[1] / vacuum_baseline.values[0])

    warnings: list[str] = []
    norm_sq = final_state.norm_sq()
    first = schmidt_spectrum(final_state, n_l, cutoff=0.0)
    keep = _significant(first, significance, ratio)

    # split the first-cut components by whether a fast left-mover is present
    fast_left, other = [], []
    for i in keep:
        comp = project_schmidt_component(final_state, n_l, [i])
        frac = windows.fractions(energy_density(comp, vacuum_reference, couplings))
        (fast_left if frac["fast_left"] >= occupancy else other).append(i)
        log.info("cut n_l=%d component %d lam=%.4f fractions=%s", n_l, i, first.values[i], frac)
    if not fast_left:
        warnings.append(f"no component at n_l={n_l} carries a fast left-moving packet")

    channels: list[ChannelRecord] = []
    for group_id, group in enumerate((fast_left, other)):
        if not group:
            continue
        branch = project_schmidt_component(final_state, n_l, group)
        second = schmidt_spectrum(branch, n_r, cutoff=0.0)
        for j in _significant(second, significance * norm_sq / max(second.total, 1e-300), ratio):
            comp = project_schmidt_component(branch, n_r, [j])
            frac = windows.fractions(energy_density(comp, vacuum_reference, couplings))
            label = label_component(frac, occupancy)
            channels.append(
                ChannelRecord(
                    label=label,
                    probability=float(second.values[j]),
                    cut_sites=(n_l, n_r),
                    path=(group_id, j),
                    spectrum_used=second,
                    region_fractions=frac,
                    state=comp,
                )
            )

    found = {c.label for c in channels}
    if "11" not in found:
        warnings.append("no elastic component identified")
    for label in ("11", "12", "21"):
        count = sum(c.label == label for c in channels)
        if count > 1:
            # a channel may span several Schmidt components; probabilities add
            log.info("label %s carried by %d components", label, count)
    for w in warnings:
        log.warning(w)
    residual = norm_sq - sum(c.probability for c in channels)
    return ChannelReport(
        channels=channels,
        residual_probability=float(residual),
        cut_positions=(n_l, n_r),
        norm_sq=float(norm_sq),
        first_cut=first,
        warnings=warnings,
    )


def component_entanglement(state: MatrixProductState, cut: int | None = None, chi: int | None = None) -> dict:
    """Entropy, antiflatness and dominant values at ``cut`` (default ``L // 2 - 1``)."""
    cut = state.length // 2 - 1 if cut is None else cut
    spec = schmidt_spectrum(state, cut)
    return {
        "cut_site": cut,
        "entropy": entanglement_entropy(spec),
        "antiflatness": antiflatness(spec, chi if chi is not None else max(spec.chi, 1)),
        "dominant": [float(x) for x in spec.values[:3]],
    }
