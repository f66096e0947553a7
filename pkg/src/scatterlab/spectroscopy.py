"""Dispersion relations, velocities, momentum overlaps and particle classification.

Dispersions come from exact diagonalization of the periodic chain in
translation sectors. Within this module basis states are integers with bit
``n`` holding site ``n`` (a different convention from the MPS dense order, which
is only used for oracles). Translation moves site ``n`` to ``n + 1``.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .ising import IsingCouplings
from .mps import MatrixProductState, correlation_matrix

log = logging.getLogger(__name__)

ED_LIMIT = 18
DENSE_SECTOR_LIMIT = 1500


class EDConvergenceError(RuntimeError):
    def __init__(self, message: str, L: int, sector: int):
        super().__init__(message)
        self.L = L
        self.sector = sector


class UnclassifiableError(ValueError):
    """No candidate momentum exists for either species."""


class ClassificationRejected(ValueError):
    """The best candidate misses the measured energy by more than the bound."""

    def __init__(self, message: str, record: "ClassificationRecord"):
        super().__init__(message)
        self.record = record


# ---------------------------------------------------------------------------
# exact diagonalization
# ---------------------------------------------------------------------------


def translate(states: np.ndarray, L: int) -> np.ndarray:
    """Cyclic translation by one site (bit ``n`` -> bit ``n + 1``)."""
    return ((states << 1) | (states >> (L - 1))) & ((1 << L) - 1)


@lru_cache(maxsize=8)
def translation_orbits(L: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """For every basis state: orbit representative (smallest integer), the
    number of translations taking the representative to it, and the orbit period."""
    n_states = 1 << L
    s = np.arange(n_states, dtype=np.int64)
    rep = s.copy()
    shift = np.zeros(n_states, dtype=np.int64)
    period = np.full(n_states, L, dtype=np.int64)
    t = s.copy()
    for i in range(1, L):
        t = translate(t, L)
        better = t < rep
        rep[better] = t[better]
        # t = T^i s is the representative, so s = T^{-i} rep = T^{L-i} rep
        shift[better] = (L - i) % L
        first_return = (t == s) & (period == L)
        period[first_return] = i
    return rep, shift, period


def _diagonal(states: np.ndarray, L: int, g_z: float, twist: bool = False) -> np.ndarray:
    z = 1 - 2 * ((states[:, None] >> np.arange(L)) & 1)
    zz = z * np.roll(z, -1, axis=1)
    if twist:
        zz[:, -1] *= -1
    return -zz.sum(axis=1) - g_z * z.sum(axis=1)


def sector_hamiltonian(couplings: IsingCouplings, n: int) -> sp.csr_matrix:
    """Periodic-chain Hamiltonian in the momentum sector ``k = 2 pi n / L``.

    Basis: ``|r, k> = N sum_m e^{-ikm} T^m |r>`` over representatives ``r``
    compatible with ``k``.
    """
    L = couplings.L
    rep, shift, period = translation_orbits(L)
    k = 2.0 * np.pi * n / L
    all_states = np.arange(1 << L)
    reps = np.nonzero((rep == all_states) & ((n * period) % L == 0))[0]
    index = np.full(1 << L, -1, dtype=np.int64)
    index[reps] = np.arange(len(reps))
    dim = len(reps)
    rows = [np.arange(dim)]
    cols = [np.arange(dim)]
    vals = [_diagonal(reps, L, couplings.g_z).astype(complex)]
    for site in range(L):
        target = reps ^ (1 << site)
        r = rep[target]
        j = index[r]
        ok = j >= 0
        amp = -couplings.g_x * np.exp(1j * k * shift[target]) * np.sqrt(period[reps] / period[r])
        rows.append(j[ok])
        cols.append(np.arange(dim)[ok])
        vals.append(amp[ok])
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )


def _lowest_eigenvalues(H: sp.spmatrix, count: int, L: int, sector: int) -> np.ndarray:
    dim = H.shape[0]
    count = min(count, dim)
    if dim <= DENSE_SECTOR_LIMIT:
        return np.linalg.eigvalsh(H.toarray())[:count]
    try:
        vals = spla.eigsh(H, k=count, which="SA", tol=1e-13, maxiter=20 * dim)[0]
    except spla.ArpackNoConvergence as exc:
        raise EDConvergenceError(f"sector n={sector} of L={L} did not converge", L, sector) from exc
    return np.sort(vals)


def sector_spectra(couplings: IsingCouplings, count: int = 4) -> dict[int, np.ndarray]:
    """Lowest ``count`` eigenvalues for sectors ``n = 0 .. L//2``."""
    if couplings.L > ED_LIMIT:
        raise ValueError(f"L={couplings.L} exceeds the ED limit {ED_LIMIT}")
    return {
        n: _lowest_eigenvalues(sector_hamiltonian(couplings, n), count, couplings.L, n)
        for n in range(couplings.L // 2 + 1)
    }


def twisted_ground_energy(couplings: IsingCouplings) -> float:
    """Lowest eigenvalue of the chain with the wrap-around bond sign flipped."""
    L = couplings.L
    states = np.arange(1 << L)
    H = sp.diags(_diagonal(states, L, couplings.g_z, twist=True).astype(float)).tocsr()
    for site in range(L):
        H = H + sp.csr_matrix((np.full(1 << L, -couplings.g_x), (states ^ (1 << site), states)), shape=H.shape)
    return float(spla.eigsh(H, k=1, which="SA", tol=1e-14)[0][0])


def single_size_bands(couplings: IsingCouplings, count: int = 4) -> dict:
    """Particle bands on one periodic chain.

    Particle 1 is the lowest non-vacuum state of each sector. Particle 2 is the
    next state, provided it lies below the two-particle continuum estimated
    from particle-1 energies on the same lattice; otherwise it is ``nan``.

    At ``g_z = 0`` the chain has a spin-flip symmetry; single particles then
    live in the odd sector, whose vacuum is the ground state of the twisted
    chain, and energies are measured from it.
    """
    L = couplings.L
    spectra = sector_spectra(couplings, count)
    e0 = spectra[0][0]
    reference = twisted_ground_energy(couplings) if couplings.g_z == 0.0 else e0
    ns = np.arange(L // 2 + 1)
    first = np.array([spectra[n][1] if n == 0 else spectra[n][0] for n in ns])
    second = np.array([spectra[n][2] if n == 0 else spectra[n][1] for n in ns])
    e1 = first - reference
    e2 = second - e0
    # two-particle continuum on the same lattice: min_q E1(q) + E1(k - q)
    e1_full = np.concatenate([e1, e1[1 : (L + 1) // 2][::-1]])  # n = 0 .. L-1
    cont = np.array([min(e1_full[q] + e1_full[(n - q) % L] for q in range(L)) for n in ns])
    e2 = np.where(e2 < cont, e2, np.nan)
    return {"n": ns, "k": 2 * np.pi * ns / L, "E1": e1, "E2": e2, "continuum": cont}


def _aitken(y0: float, y1: float, y2: float) -> float:
    d1, d2 = y1 - y0, y2 - y1
    if abs(d2) < 1e-11 or abs(d2 - d1) < 1e-13 or abs(d2 / d1) >= 0.98:
        # converged to noise, or not yet in the geometric regime
        return y2
    return y2 - d2 * d2 / (d2 - d1)


def extrapolate_in_size(sizes: Sequence[int], values: Sequence[float]) -> float:
    """Infinite-size limit of a sequence approaching ``a + b exp(-cL)``.

    Aitken's delta-squared step is exact for a single exponential. With five
    or more equally spaced sizes it is applied twice to the last five values,
    which also removes the next exponential; with three or four sizes it is
    applied once; otherwise the largest-size value is returned.
    """
    order = np.argsort(sizes)
    Ls = np.asarray(sizes)[order]
    ys = np.asarray(values, dtype=float)[order]
    # keep the longest equally spaced tail
    n = 1
    while n < len(Ls) and (n < 2 or Ls[-n] - Ls[-n - 1] == Ls[-1] - Ls[-2]):
        n += 1
    ys = ys[-n:]
    if len(ys) < 3:
        return float(ys[-1])
    if len(ys) >= 5:
        y = ys[-5:]
        first = [_aitken(*y[i : i + 3]) for i in range(3)]
        return float(_aitken(*first))
    return float(_aitken(*ys[-3:]))


# ---------------------------------------------------------------------------
# dispersion table
# ---------------------------------------------------------------------------


def _cos_basis(k, order):
    return np.cos(np.outer(np.atleast_1d(k), np.arange(order + 1)))


@dataclass
class DispersionTable:
    """Single-particle bands on a symmetric momentum grid.

    ``coefficients[j]`` holds the cosine-series fit ``E_j(k) = sum_m a_m cos(mk)``
    used for interpolation and derivatives; ``samples`` keeps the per-size ED
    values and ``limits`` the size-extrapolated points the fit was made to.
    """

    k_grid: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    source: dict
    coefficients: dict = field(default_factory=dict, repr=False)
    samples: dict = field(default_factory=dict, repr=False)
    limits: dict = field(default_factory=dict, repr=False)

    def energy(self, species: int, k) -> np.ndarray | float:
        a = self.coefficients[species]
        out = _cos_basis(k, len(a) - 1) @ a
        return float(out[0]) if np.ndim(k) == 0 else out

    def velocity(self, species: int, k) -> np.ndarray | float:
        a = self.coefficients[species]
        m = np.arange(len(a))
        out = -np.sin(np.outer(np.atleast_1d(k), m)) @ (m * a)
        return float(out[0]) if np.ndim(k) == 0 else out

    @property
    def m1(self) -> float:
        return self.energy(1, 0.0)

    @property
    def m2(self) -> float:
        return self.energy(2, 0.0)

    def threshold_momentum(self) -> float:
        """Smallest ``k > 0`` with ``2 E_1(k) = m_1 + m_2``."""
        target = self.m1 + self.m2
        ks = np.linspace(0.0, np.pi, 2001)
        f = 2 * self.energy(1, ks) - target
        idx = np.nonzero(np.sign(f[:-1]) != np.sign(f[1:]))[0]
        if not len(idx):
            raise ValueError("no threshold momentum: 2 E_1 never reaches m_1 + m_2")
        i = idx[0]
        return float(brentq(lambda k: 2 * self.energy(1, k) - target, ks[i], ks[i + 1], xtol=1e-14))

    def summary(self) -> dict:
        out = {"m1": self.m1, "m2": self.m2 if 2 in self.coefficients else None}
        if out["m2"] is None:
            out["k_thr"] = out["k_thr_over_pi"] = None
            return out
        try:
            out["k_thr"] = self.threshold_momentum()
            out["k_thr_over_pi"] = out["k_thr"] / np.pi
        except ValueError:
            out["k_thr"] = out["k_thr_over_pi"] = None
        return out

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "E1", "E2", "v1", "v2"])
            for row in zip(self.k_grid, self.E1, self.E2, self.v1, self.v2):
                w.writerow([f"{x:.12g}" for x in row])

    def to_json(self, path: str | Path) -> None:
        """Write the fit coefficients and grid so the table can be reloaded."""
        data = {
            "k_grid": self.k_grid.tolist(),
            "coefficients": {str(j): np.asarray(a).tolist() for j, a in self.coefficients.items()},
            "source": {k: (list(v) if isinstance(v, (range, tuple)) else v) for k, v in self.source.items()},
            "summary": self.summary(),
        }
        Path(path).write_text(json.dumps(data, indent=2))

    @classmethod
    def from_json(cls, path: str | Path) -> "DispersionTable":
        data = json.loads(Path(path).read_text())
        return cls.from_coefficients(
            {int(j): np.asarray(a) for j, a in data["coefficients"].items()},
            np.asarray(data["k_grid"]),
            data.get("source", {}),
        )

    @classmethod
    def from_coefficients(cls, coefficients: dict, k_grid: np.ndarray, source: dict | None = None) -> "DispersionTable":
        """Table evaluated from cosine-series coefficients on ``k_grid``."""
        table = cls(k_grid, None, None, None, None, source or {}, coefficients=dict(coefficients))
        nan = np.full(len(k_grid), np.nan)
        table.E1 = table.energy(1, k_grid)
        table.v1 = table.velocity(1, k_grid)
        table.E2 = table.energy(2, k_grid) if 2 in coefficients else nan
        table.v2 = table.velocity(2, k_grid) if 2 in coefficients else nan
        return table


def _fit_cosines(ks: np.ndarray, es: np.ndarray, weights: np.ndarray, max_order: int) -> np.ndarray:
    order = min(max_order, len(ks) - 1)
    A = _cos_basis(ks, order) * weights[:, None]
    coef, *_ = np.linalg.lstsq(A, es * weights, rcond=None)
    return coef


def dispersion_from_ed(
    couplings: IsingCouplings,
    L_list: Sequence[int] = tuple(range(10, 19)),
    bands: int = 2,
    k_grid: np.ndarray | None = None,
    max_order: dict | int | None = None,
    eigenvalues_per_sector: int = 4,
    top_window: int = 4,
) -> DispersionTable:
    """Dispersion of the lowest ``bands`` particles from ED on periodic chains.

    Parameters
    ----------
    couplings : IsingCouplings
        ``g_x`` and ``g_z`` are used; the length is taken from ``L_list``.
    L_list : sequence of int
        Periodic chain sizes, each at most :data:`ED_LIMIT`. Mixing odd and
        even sizes gives a smooth approach to the infinite-size limit.
    bands : int
        1 or 2.
    k_grid : array, optional
        Output grid; defaults to 401 points on ``[-pi, pi]``.
    max_order : int or dict, optional
        Highest harmonic of the cosine series, per species. Defaults to 10 for
        particle 1 and 4 for particle 2, whose finite-size errors are larger
        and need more smoothing.
    eigenvalues_per_sector : int
        Lanczos eigenvalues computed per translation sector.
    top_window : int
        Only momenta sampled on a lattice with ``L >= max(L_list) - top_window``
        enter the fit.

    Notes
    -----
    Samples are grouped by exact momentum ``k / 2pi = n / L``. Away from
    ``k = 0`` finite-size shifts are small and each group contributes its
    largest-size value. The ``k = 0`` group (the masses) is extrapolated with
    :func:`extrapolate_in_size` and pinned by a large fit weight. A cosine
    series is then fitted by least squares; with a single size and few points
    it interpolates exactly.

    Raises
    ------
    EDConvergenceError
        If a sector eigensolver fails; carries the size and sector index.
    """
    if bands not in (1, 2):
        raise ValueError("bands must be 1 or 2")
    L_list = sorted(set(int(L) for L in L_list))
    if not L_list:
        raise ValueError("L_list is empty")
    bad = [L for L in L_list if L > ED_LIMIT or L < 4]
    if bad:
        raise ValueError(f"sizes {bad} outside the ED range [4, {ED_LIMIT}]")
    samples = {L: single_size_bands(couplings.with_length(L), eigenvalues_per_sector) for L in L_list}

    if max_order is None:
        max_order = {1: 10, 2: 4}
    elif isinstance(max_order, int):
        max_order = {1: max_order, 2: max_order}
    limits = {}
    coefficients = {}
    for species in (1, 2):
        key = f"E{species}"
        groups: dict[Fraction, list[tuple[int, float]]] = {}
        for L, s in samples.items():
            for n, e in zip(s["n"], s[key]):
                if np.isfinite(e):
                    groups.setdefault(Fraction(int(n), L), []).append((L, float(e)))
        ks, es, ws = [], [], []
        for frac, pts in sorted(groups.items()):
            sizes = [p[0] for p in pts]
            if max(sizes) < L_list[-1] - top_window:
                continue
            vals = [p[1] for p in pts]
            if frac == 0:
                value = extrapolate_in_size(sizes, vals)
            else:
                value = vals[int(np.argmax(sizes))]
            ks.append(2 * np.pi * float(frac))
            es.append(value)
            ws.append(100.0 if frac == 0 else 1.0)
        ks, es, ws = np.array(ks), np.array(es), np.array(ws)
        limits[species] = (ks, es)
        coefficients[species] = (
            _fit_cosines(ks, es, ws / ws.max(), max_order[species]) if len(ks) else np.array([np.nan])
        )

    if k_grid is None:
        k_grid = np.linspace(-np.pi, np.pi, 401)
    k_grid = np.asarray(k_grid, dtype=float)
    table = DispersionTable(
        k_grid=k_grid,
        E1=np.empty(0),
        E2=np.empty(0),
        v1=np.empty(0),
        v2=np.empty(0),
        source={"L_list": L_list, "method": "translation-sector ED, largest-L sector energies, iterated Aitken in L at k=0, weighted cosine series"},
        coefficients=coefficients,
        samples=samples,
        limits=limits,
    )
    table.E1 = table.energy(1, k_grid)
    table.v1 = table.velocity(1, k_grid)
    if bands == 2:
        table.E2 = table.energy(2, k_grid)
        table.v2 = table.velocity(2, k_grid)
    else:
        table.E2 = np.full_like(k_grid, np.nan)
        table.v2 = np.full_like(k_grid, np.nan)
        table.coefficients.pop(2, None)
    return table


def free_fermion_dispersion(g_x: float, k) -> np.ndarray:
    return 2.0 * np.sqrt(1.0 + g_x**2 - 2.0 * g_x * np.cos(k))


# ---------------------------------------------------------------------------
# velocities
# ---------------------------------------------------------------------------


def _check_species(table: DispersionTable, species: int):
    if species not in table.coefficients:
        raise ValueError(f"table has no band for species {species}")


def group_velocity(table: DispersionTable, species: int, k: float) -> float:
    """``dE_j/dk`` from the table's interpolant."""
    _check_species(table, species)
    if abs(k) > np.pi + 1e-12:
        raise ValueError(f"k={k} outside [-pi, pi]")
    return table.velocity(species, k)


def invert_velocity(table: DispersionTable, species: int, v: float, resolution: int = 4001) -> np.ndarray:
    """All momenta in ``[-pi, pi]`` with ``v_j(k) = v`` (ascending)."""
    _check_species(table, species)
    ks = np.linspace(-np.pi, np.pi, resolution)
    f = table.velocity(species, ks) - v
    roots = []
    for i in np.nonzero(f == 0.0)[0]:
        roots.append(ks[i])
    for i in np.nonzero(f[:-1] * f[1:] < 0)[0]:
        roots.append(brentq(lambda k: table.velocity(species, k) - v, ks[i], ks[i + 1], xtol=1e-14))
    return np.array(sorted(roots))


# ---------------------------------------------------------------------------
# tracking and energies
# ---------------------------------------------------------------------------


def _window_bounds(window, t, L):
    lo, hi = window(t) if callable(window) else window
    lo, hi = int(lo), int(hi)
    if not 0 <= lo < hi <= L:
        raise ValueError(f"window [{lo}, {hi}) outside the lattice of length {L}")
    return lo, hi


def peak_positions(times, energy_density, window) -> np.ndarray:
    """Energy-weighted centroid inside ``window`` (half-open ``(start, stop)`` or callable of t)."""
    e = np.asarray(energy_density, dtype=float)
    out = []
    for t, row in zip(times, e):
        lo, hi = _window_bounds(window, t, len(row))
        seg = row[lo:hi]
        total = seg.sum()
        peak = int(np.argmax(seg))
        if total <= 0 or (hi - lo > 2 and peak in (0, hi - lo - 1)):
            raise ValueError(f"peak left the window [{lo}, {hi}) at t={t}")
        out.append(lo + float(np.dot(np.arange(hi - lo), seg) / total))
    return np.array(out)


def track_peak_velocity(
    times,
    energy_density,
    window,
    t0: float,
    mode: str = "fit",
    origin: float | None = None,
) -> float:
    """Velocity of an energy peak after ``t0``.

    ``mode="fit"`` fits a line to the centroid for ``t >= t0``. ``mode="origin"``
    uses the straight path from ``(t0, origin)`` to the last centroid, which
    is how outgoing packets are timed from the collision point.
    """
    times = np.asarray(times, dtype=float)
    sel = times >= t0 - 1e-12
    if mode == "fit":
        if sel.sum() < 2:
            raise ValueError("need at least two snapshots after t0")
        x = peak_positions(times[sel], np.asarray(energy_density)[sel], window)
        return float(np.polyfit(times[sel], x, 1)[0])
    if mode == "origin":
        if origin is None:
            raise ValueError("origin mode needs the collision position")
        x_end = peak_positions(times[-1:], np.asarray(energy_density)[-1:], window)[0]
        return float((x_end - origin) / (times[-1] - t0))
    raise ValueError(f"unknown mode {mode!r}")


def calibrate_t0(times, energy_density, window, velocity: float, origin: float) -> float:
    """Effective collision time making the origin-mode velocity equal ``velocity``."""
    times = np.asarray(times, dtype=float)
    x_end = peak_positions(times[-1:], np.asarray(energy_density)[-1:], window)[0]
    return float(times[-1] - (x_end - origin) / velocity)


def wavepacket_energy(energy_density, window) -> float:
    """Sum of ``E_n`` over the half-open window ``(start, stop)``."""
    e = np.asarray(energy_density, dtype=float)
    lo, hi = _window_bounds(window, 0.0, len(e))
    return float(e[lo:hi].sum())


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


@dataclass
class ClassificationRecord:
    excitation_label: str
    measured_velocity: float
    candidate_momenta: dict
    candidate_energies: dict
    E_wp: float
    chosen_species: int
    chosen_momentum: float
    chosen_energy: float
    relative_error: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["candidate_momenta"] = {str(k): [float(x) for x in v] for k, v in self.candidate_momenta.items()}
        d["candidate_energies"] = {str(k): [float(x) for x in v] for k, v in self.candidate_energies.items()}
        return d


def classify_excitation(
    velocity: float,
    E_wp: float,
    table: DispersionTable,
    *,
    max_relative_error: float = 0.15,
    label: str = "",
) -> ClassificationRecord:
    """Pick the species and momentum whose ``E_j(k_j(v))`` best matches ``E_wp``.

    Raises
    ------
    UnclassifiableError
        If neither species can move at ``velocity``.
    ClassificationRejected
        If the best relative error exceeds ``max_relative_error``.
    """
    momenta, energies, candidates = {}, {}, []
    for species in sorted(table.coefficients):
        ks = invert_velocity(table, species, velocity)
        es = np.array([table.energy(species, k) for k in ks])
        momenta[species], energies[species] = ks, es
        candidates += [(abs(E_wp - e), species, float(k), float(e)) for k, e in zip(ks, es)]
    if not candidates:
        raise UnclassifiableError(f"no species moves at v={velocity}")
    err, species, k, e = min(candidates)
    record = ClassificationRecord(
        excitation_label=label,
        measured_velocity=float(velocity),
        candidate_momenta=momenta,
        candidate_energies=energies,
        E_wp=float(E_wp),
        chosen_species=species,
        chosen_momentum=k,
        chosen_energy=e,
        relative_error=float(err / abs(E_wp)),
    )
    if record.relative_error > max_relative_error:
        raise ClassificationRejected(
            f"best candidate (species {species}, E={e:.4f}) misses E_wp={E_wp:.4f} by {record.relative_error:.1%}",
            record,
        )
    return record


# ---------------------------------------------------------------------------
# momentum measurements
# ---------------------------------------------------------------------------

RAISE = np.array([[0, 0], [1, 0]], dtype=complex)  # |1><0|
LOWER = RAISE.T.copy()


def momentum_overlap(state: MatrixProductState, window, k_grid) -> np.ndarray:
    """Plane-wave weights of the single-flip content inside ``window``.

    ``w(k) = (1/d) sum_{mn} e^{ik(m-n)} <b_m^dagger b_n>`` with
    ``b^dagger = |1><0|``, normalized to unit sum over ``k_grid``.
    """
    lo, hi = _window_bounds(window, 0.0, state.length)
    sites = list(range(lo, hi))
    C = correlation_matrix(state, RAISE, LOWER, sites)
    x = np.arange(len(sites))
    phase = np.exp(1j * np.outer(np.asarray(k_grid, dtype=float), x))
    w = np.real(np.einsum("km,mn,kn->k", phase, C, phase.conj())) / len(sites)
    w = np.clip(w, 0.0, None)
    total = w.sum()
    return w / total if total > 0 else w


def window_fourier_unitary(d: int) -> tuple[np.ndarray, list[tuple[int, float]]]:
    """Unitary Fourier transform over cyclic translations of a ``d``-qubit window.

    Basis labels are integers read as binary strings, and a translation maps
    ``s`` to ``(s << 1) mod (2^d - 1)`` cyclically. An input ``T^l |r>``,
    with ``r`` the smallest integer of its orbit of length ``R``, goes to
    ``R^{-1/2} sum_m e^{ikm} T^m |r>`` with ``k = 2 pi l / R`` (reported in
    ``(-pi, pi]``).

    Returns
    -------
    V : ndarray
        ``2^d x 2^d`` unitary; column ``s`` is the image of input ``s``.
    labels : list of (int, float)
        ``(representative, k)`` for every input.
    """
    rep, shift, period = translation_orbits(d)
    n = 1 << d
    V = np.zeros((n, n), dtype=complex)
    labels = []
    for s in range(n):
        r, l, R = int(rep[s]), int(shift[s]), int(period[s])
        l %= R
        k = 2 * np.pi * l / R
        orbit = [r]
        for _ in range(R - 1):
            orbit.append(int(translate(np.int64(orbit[-1]), d)))
        for m, t in enumerate(orbit):
            V[t, s] = np.exp(1j * k * m) / np.sqrt(R)
        labels.append((r, k - 2 * np.pi if k > np.pi + 1e-12 else k))
    return V, labels
