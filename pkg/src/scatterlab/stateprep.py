"""Vacuum, plane-wave and wavepacket preparation.

The interacting vacuum is found with two-site variational sweeps on the
Hamiltonian MPO. Single-particle wavepackets start as W-like superpositions of
single flips; they are dressed by a fixed schedule of translationally
invariant unitaries ``U = prod_i exp(i theta_i O_i)``. To embed a dressed
packet into the interacting vacuum we use

    |psi> = U F U^dagger |vac>,   F = sum_n a_n X_n,

which leaves the state equal to the vacuum outside the dressing range of the
packet window.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .ising import I2, PAULI, X, Y, Z, IsingCouplings, dense_hamiltonian, pauli_string
from .mps import EXACT, MatrixProductState, TruncationPolicy, apply_bond_layer, compress, truncated_svd

log = logging.getLogger(__name__)

DEFAULT_VACUUM_POLICY = TruncationPolicy(max_bond=64, cutoff=1e-13)
DEFAULT_LAYER_POLICY = TruncationPolicy(max_bond=256, cutoff=1e-14)


class ConvergenceError(RuntimeError):
    """Variational sweeps did not reach the requested variance."""

    def __init__(self, message: str, energies: list[float], variance: float):
        super().__init__(message)
        self.energies = energies
        self.variance = variance


# ---------------------------------------------------------------------------
# vacuum
# ---------------------------------------------------------------------------


def ising_mpo(couplings: IsingCouplings) -> list[np.ndarray]:
    """Bond-dimension-3 MPO of H with tensors ``(w_left, w_right, s_out, s_in)``.

    Boundary vectors select ``w_left = 2`` on the first site and
    ``w_right = 0`` on the last one.
    """
    h = -(couplings.g_x * X + couplings.g_z * Z)
    w = np.zeros((3, 3, 2, 2), dtype=complex)
    w[0, 0] = I2
    w[1, 0] = Z
    w[2, 0] = h
    w[2, 1] = -Z
    w[2, 2] = I2
    L = couplings.L
    first = w[2:3]
    last = w[:, 0:1]
    return [first] + [w] * (L - 2) + [last]


def _left_env_step(env, a, w):
    t = np.einsum("xwy,ysb->xwsb", env, a)
    t = np.einsum("xwsb,wvts->xvtb", t, w)
    return np.einsum("xtc,xvtb->cvb", a.conj(), t)


def _right_env_step(env, a, w):
    t = np.einsum("asb,bwy->aswy", a, env)
    t = np.einsum("aswy,vwts->avty", t, w)
    return np.einsum("xty,avty->xva", a.conj(), t)


class _Effective(spla.LinearOperator):
    def __init__(self, left, w1, w2, right):
        self.left, self.w1, self.w2, self.right = left, w1, w2, right
        self.shape4 = (left.shape[2], 2, 2, right.shape[2])
        n = int(np.prod(self.shape4))
        super().__init__(dtype=complex, shape=(n, n))

    def _matvec(self, v):
        theta = v.reshape(self.shape4)
        t = np.einsum("xwa,astb->xwstb", self.left, theta)
        t = np.einsum("xwstb,wuis->xuitb", t, self.w1)
        t = np.einsum("xuitb,uvjt->xijvb", t, self.w2)
        t = np.einsum("xijvb,yvb->xijy", t, self.right)
        return t.reshape(-1)


def _lowest(op: _Effective, v0: np.ndarray) -> tuple[float, np.ndarray]:
    n = op.shape[0]
    if n <= 64:
        mat = op.matmat(np.eye(n, dtype=complex))
        mat = 0.5 * (mat + mat.conj().T)
        vals, vecs = np.linalg.eigh(mat)
        return float(vals[0]), vecs[:, 0]
    vals, vecs = spla.eigsh(op, k=1, which="SA", v0=v0, tol=1e-13, ncv=min(n, 20))
    return float(vals[0]), vecs[:, 0]


def mpo_expectation(state: MatrixProductState, mpo: list[np.ndarray]) -> complex:
    # boundary rows/columns are already selected in the first and last tensors
    env = np.ones((1, 1, 1), dtype=complex)
    for a, w in zip(state.tensors, mpo):
        env = _left_env_step(env, a, w)
    return complex(env[0, 0, 0]) * np.exp(2 * state.log_norm_adjust)


def energy_variance(state: MatrixProductState, couplings: IsingCouplings) -> tuple[float, float]:
    """``(<H>, <H^2> - <H>^2)`` of a state, normalized by its squared norm."""
    mpo = ising_mpo(couplings)
    sq = [np.einsum("abst,cdtu->acbdsu", w, w).reshape(w.shape[0] ** 2, w.shape[1] ** 2, 2, 2) for w in mpo]
    nrm = state.norm_sq()
    e = mpo_expectation(state, mpo).real / nrm
    e2 = mpo_expectation(state, sq).real / nrm
    return float(e), float(e2 - e * e)


def prepare_vacuum(
    couplings: IsingCouplings,
    policy: TruncationPolicy = DEFAULT_VACUUM_POLICY,
    *,
    variance_tol: float = 1e-8,
    max_sweeps: int = 40,
    initial: MatrixProductState | None = None,
    return_info: bool = False,
):
    """Ground state from alternating two-site energy-minimization sweeps.

    Parameters
    ----------
    couplings : IsingCouplings
    policy : TruncationPolicy
        Bond-dimension cap and relative discarded-weight cutoff of each split.
    variance_tol : float
        Convergence threshold on ``<H^2> - <H>^2``.
    max_sweeps : int
        Number of right-left sweep pairs before giving up.
    initial : MatrixProductState, optional
        Starting state; defaults to the ``|+>`` product state.
    return_info : bool
        Also return a dict with ``energy``, ``variance`` and ``sweeps``.

    Returns
    -------
    MatrixProductState
        Normalized vacuum with its center on site 0.

    Raises
    ------
    ConvergenceError
        If the variance stays above ``variance_tol``.
    """
    L = couplings.L
    mpo = ising_mpo(couplings)
    if initial is None:
        state = MatrixProductState.product_state([np.array([1.0, 1.0])] * L)
    else:
        state = initial.copy()
    state.canonicalize(0)
    state.log_norm_adjust = 0.0
    left = [None] * (L + 1)
    right = [None] * (L + 1)
    left[0] = np.ones((1, 1, 1), dtype=complex)
    right[L] = np.ones((1, 1, 1), dtype=complex)
    for i in range(L - 1, 0, -1):
        right[i] = _right_env_step(right[i + 1], state.tensors[i], mpo[i])

    energies: list[float] = []
    variance = np.inf
    for sweep in range(1, max_sweeps + 1):
        energy = 0.0
        for i in range(L - 1):
            energy = _optimize_bond(state, mpo, left, right, i, policy, "right")
        for i in range(L - 2, -1, -1):
            energy = _optimize_bond(state, mpo, left, right, i, policy, "left")
        energies.append(energy)
        if sweep >= 2 and abs(energies[-1] - energies[-2]) < max(1e-12, 1e-3 * variance_tol):
            _, variance = energy_variance(state, couplings)
            log.debug("sweep %d: E=%.14f var=%.3e chi=%d", sweep, energy, variance, state.max_bond)
            if variance < variance_tol:
                break
    else:
        _, variance = energy_variance(state, couplings)
        if variance >= variance_tol:
            raise ConvergenceError(
                f"vacuum variance {variance:.3e} above {variance_tol:.1e} after {max_sweeps} sweeps",
                energies,
                variance,
            )
    state.normalize()
    if return_info:
        return state, {"energy": energies[-1], "variance": variance, "sweeps": len(energies)}
    return state


def _optimize_bond(state, mpo, left, right, i, policy, direction):
    a, b = state.tensors[i], state.tensors[i + 1]
    theta = np.tensordot(a, b, axes=(2, 0))
    op = _Effective(left[i], mpo[i], mpo[i + 1], right[i + 2])
    energy, vec = _lowest(op, theta.reshape(-1))
    chi_l, chi_r = theta.shape[0], theta.shape[3]
    u, s, vh, _ = truncated_svd(vec.reshape(chi_l * 2, 2 * chi_r), policy)
    s = s / np.linalg.norm(s)
    if direction == "right":
        state.tensors[i] = u.reshape(chi_l, 2, -1)
        state.tensors[i + 1] = (s[:, None] * vh).reshape(-1, 2, chi_r)
        state.center = i + 1
        left[i + 1] = _left_env_step(left[i], state.tensors[i], mpo[i])
    else:
        state.tensors[i] = (u * s).reshape(chi_l, 2, -1)
        state.tensors[i + 1] = vh.reshape(-1, 2, chi_r)
        state.center = i
        right[i + 1] = _right_env_step(right[i + 2], state.tensors[i + 1], mpo[i + 1])
    return energy


def dense_ground_state(couplings: IsingCouplings) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of the dense open-chain Hamiltonian (small L oracle)."""
    vals, vecs = spla.eigsh(dense_hamiltonian(couplings), k=1, which="SA", tol=1e-14)
    return float(vals[0]), vecs[:, 0]


# ---------------------------------------------------------------------------
# single-flip superpositions
# ---------------------------------------------------------------------------


def apply_flip_superposition(
    state: MatrixProductState, amplitudes: dict[int, complex], policy: TruncationPolicy = EXACT
) -> float:
    """Apply ``F = sum_n a_n X_n`` in place as a bond-dimension-2 MPO.

    Sites outside ``amplitudes`` are untouched. Bonds are recompressed with
    ``policy`` afterwards; returns the discarded weight of that compression.
    """
    if not amplitudes:
        raise ValueError("empty amplitude map")
    sites = sorted(amplitudes)
    lo, hi = sites[0], sites[-1]
    if lo < 0 or hi >= state.length:
        raise IndexError("flip amplitudes outside the lattice")
    if state.center is None or not lo <= state.center <= hi:
        state.canonicalize(min(max(state.center or 0, lo), hi))
    for n in range(lo, hi + 1):
        a = amplitudes.get(n, 0.0)
        w = np.zeros((2, 2, 2, 2), dtype=complex)
        w[0, 0] = I2
        w[0, 1] = a * X
        w[1, 1] = I2
        if lo == hi:
            w = w[0:1, 1:2]
        elif n == lo:
            w = w[0:1]
        elif n == hi:
            w = w[:, 1:2]
        t = np.einsum("uvst,atb->ausbv", w, state.tensors[n])
        s = t.shape
        state.tensors[n] = t.reshape(s[0] * s[1], 2, s[3] * s[4])
    state.center = None
    return compress(state, policy)


def single_flip_state(amplitudes: np.ndarray, L: int, offset: int = 0) -> MatrixProductState:
    """``sum_j a_j |flip at offset + j>`` on the all-up background (bond dimension 2)."""
    amplitudes = np.asarray(amplitudes, dtype=complex)
    state = MatrixProductState.all_up(L)
    apply_flip_superposition(state, {offset + j: a for j, a in enumerate(amplitudes)}, EXACT)
    return state


def plane_wave_state(k: float, L: int) -> MatrixProductState:
    """Normalized ``(1/sqrt(L)) sum_n e^{ikn} |flip at n>`` over the open chain.

    For ``k = 2 pi m / L`` distinct momenta are exactly orthogonal; other
    values are quasi-momenta of the bulk.
    """
    n = np.arange(L)
    return single_flip_state(np.exp(1j * k * n) / np.sqrt(L), L)


# ---------------------------------------------------------------------------
# rotation cascade
# ---------------------------------------------------------------------------


def w_state_angles(coefficients, peak_index: int | None = None) -> np.ndarray:
    """Angles of the rotation cascade that spreads one flip over ``d`` sites.

    The cascade starts at ``eta`` and branches in both directions. With
    ``A = sin(theta_eta/2)`` entering the right branch and
    ``B = cos(theta_eta/2)`` the left branch::

        c_m = A cos(theta_{m+1}/2),  A <- A sin(theta_{m+1}/2)   (m = eta .. d-2)
        c_{d-1} = A
        c_m = B cos(theta_{m-1}/2),  B <- B sin(theta_{m-1}/2)   (m = eta-1 .. 1)
        c_0 = B

    ``theta_{eta-1}`` is unused and returned as 0. Signs of the coefficients
    are carried by the angles.

    Parameters
    ----------
    coefficients : array_like of float
        Normalized real amplitudes ``c_0 .. c_{d-1}``.
    peak_index : int, optional
        The starting site ``eta``; defaults to ``argmax |c|``.

    Returns
    -------
    ndarray
        Angles ``theta_0 .. theta_{d-1}``.
    """
    c = np.asarray(coefficients, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise ValueError("coefficients must be a non-empty 1-d sequence")
    if abs(np.dot(c, c) - 1.0) > 1e-10:
        raise ValueError(f"coefficients not normalized: sum c^2 = {np.dot(c, c):.12g}")
    d = c.size
    eta = int(np.argmax(np.abs(c))) if peak_index is None else int(peak_index)
    if not 0 <= eta < d:
        raise IndexError(f"peak index {eta} outside [0, {d})")
    if c[eta] == 0.0:
        raise ValueError("coefficient at the peak index must be nonzero")
    theta = np.zeros(d)
    # tails of squared weights: right[m] = sum_{i>=m} c_i^2, left[m] = sum_{i<=m} c_i^2
    right = np.cumsum((c * c)[::-1])[::-1]
    left = np.cumsum(c * c)
    r_right = math.sqrt(right[eta])
    r_left = math.sqrt(left[eta - 1]) if eta > 0 else 0.0
    # a branch of a single site has no later angle to carry its sign
    y = c[eta] if eta == d - 1 else r_right
    x = c[0] if eta == 1 else r_left
    theta[eta] = 2.0 * math.atan2(y, x)
    if eta < d - 1:
        for m in range(eta, d - 1):
            if m == d - 2:
                theta[m + 1] = 2.0 * math.atan2(c[m + 1], c[m])
            else:
                theta[m + 1] = 2.0 * math.atan2(math.sqrt(right[m + 1]), c[m])
    for m in range(eta - 1, 0, -1):
        if m == 1:
            theta[0] = 2.0 * math.atan2(c[0], c[1])
        else:
            theta[m - 1] = 2.0 * math.atan2(math.sqrt(left[m - 1]), c[m])
    return theta


def cascade_amplitudes(angles, peak_index: int) -> np.ndarray:
    """Forward evaluation of the cascade; inverse of :func:`w_state_angles`."""
    theta = np.asarray(angles, dtype=float)
    d = theta.size
    eta = int(peak_index)
    c = np.zeros(d)
    a = math.sin(theta[eta] / 2)
    b = math.cos(theta[eta] / 2)
    for m in range(eta, d - 1):
        c[m] = a * math.cos(theta[m + 1] / 2)
        a *= math.sin(theta[m + 1] / 2)
    c[d - 1] = a
    if eta > 0:
        for m in range(eta - 1, 0, -1):
            c[m] = b * math.cos(theta[m - 1] / 2)
            b *= math.sin(theta[m - 1] / 2)
        c[0] = b
    return c


# ---------------------------------------------------------------------------
# wavepackets
# ---------------------------------------------------------------------------


@dataclass
class WavepacketSpec:
    """Gaussian single-particle packet truncated to ``d`` sites around ``n0``.

    ``k_i`` is in radians per site; its sign sets the direction of motion.
    ``norm_retained`` is filled in by :func:`wavepacket_reference`.
    """

    k_i: float = 0.36 * np.pi
    sigma_k: float = 0.059 * np.pi
    n0: int = 0
    d: int = 21
    norm_retained: float | None = None

    def __post_init__(self):
        if not 0.0 < abs(self.k_i) < np.pi:
            raise ValueError(f"|k_i| must lie in (0, pi), got {self.k_i}")
        if not self.sigma_k > 0.0:
            raise ValueError(f"sigma_k must be positive, got {self.sigma_k}")
        if self.d < 1 or self.d % 2 == 0:
            raise ValueError(f"d must be a positive odd integer, got {self.d}")

    @property
    def window(self) -> range:
        half = (self.d - 1) // 2
        return range(self.n0 - half, self.n0 + half + 1)

    def mirrored(self, L: int) -> "WavepacketSpec":
        """Packet reflected about the chain center (opposite momentum)."""
        return replace(self, k_i=-self.k_i, n0=L - 1 - self.n0, norm_retained=None)


def gaussian_amplitudes(spec: WavepacketSpec) -> tuple[np.ndarray, float]:
    """Truncated packet amplitudes on ``spec.window`` and the retained norm fraction.

    ``a_n ~ exp(i k_i (n - n0)) exp(-sigma_k^2 (n - n0)^2 / 2)``; the retained
    fraction compares the window against the packet on the infinite line.
    """
    half = (spec.d - 1) // 2
    x = np.arange(-half, half + 1)
    envelope = np.exp(-0.5 * (spec.sigma_k * x) ** 2)
    reach = max(half, int(np.ceil(40.0 / spec.sigma_k)))
    xs = np.arange(-reach, reach + 1)
    full = np.sum(np.exp(-((spec.sigma_k * xs) ** 2)))
    retained = float(np.sum(envelope**2) / full)
    amps = envelope * np.exp(1j * spec.k_i * x)
    return amps / np.linalg.norm(amps), retained


def wavepacket_reference(spec: WavepacketSpec, couplings: IsingCouplings) -> MatrixProductState:
    """Bare packet ``sum_n a_n |flip at n>`` on the all-up state.

    Magnitudes are produced through the rotation cascade and the momentum
    phases are attached per amplitude. Sets ``spec.norm_retained``.
    """
    window = spec.window
    if window.start < 0 or window.stop > couplings.L:
        raise ValueError(f"packet window [{window.start}, {window.stop - 1}] clipped by the lattice of length {couplings.L}")
    amps, retained = gaussian_amplitudes(spec)
    mags = np.abs(amps)
    eta = int(np.argmax(mags))
    mags = cascade_amplitudes(w_state_angles(mags, eta), eta)
    spec.norm_retained = retained
    return single_flip_state(mags * np.exp(1j * np.angle(amps)), couplings.L, offset=window.start)


# ---------------------------------------------------------------------------
# variational layers
# ---------------------------------------------------------------------------

# pool id -> list of (coefficient, pauli word) on consecutive sites
POOL = {
    "Y": [(1.0, "Y")],
    "ZYZ": [(1.0, "ZYZ")],
    "YZ": [(1.0, "YZ"), (1.0, "ZY")],
    "YX": [(1.0, "YX"), (1.0, "XY")],
    "ZXY": [(1.0, "ZXY"), (1.0, "YXZ")],
}


def pool_term(pool_id: str) -> np.ndarray:
    """Dense local term of a pool operator on its ``r`` consecutive sites."""
    if pool_id not in POOL:
        raise KeyError(f"unsupported pool operator {pool_id!r}; choose from {sorted(POOL)}")
    words = POOL[pool_id]
    out = 0
    for coeff, word in words:
        mat = np.array([[1.0]], dtype=complex)
        for ch in word:
            mat = np.kron(mat, PAULI[ch])
        out = out + coeff * mat
    return out


def pool_operator_dense(pool_id: str, L: int):
    """Sparse ``sum_n O_n`` over every open-chain placement (oracle helper)."""
    out = 0
    for coeff, word in POOL[pool_id]:
        r = len(word)
        for n in range(L - r + 1):
            out = out + coeff * pauli_string(L, {n + j: ch for j, ch in enumerate(word)})
    return out


@dataclass
class VariationalLayerSchedule:
    """Ordered ``(pool id, angle)`` pairs; the first entry is applied first."""

    layers: list[tuple[str, float]] = field(default_factory=list)

    def __post_init__(self):
        self.layers = [(str(p), float(t)) for p, t in self.layers]
        for pool_id, theta in self.layers:
            if pool_id not in POOL:
                raise KeyError(f"unsupported pool operator {pool_id!r}; choose from {sorted(POOL)}")
            if not np.isfinite(theta):
                raise ValueError(f"non-finite angle for {pool_id}")

    def inverse(self) -> "VariationalLayerSchedule":
        return VariationalLayerSchedule([(p, -t) for p, t in reversed(self.layers)])


# energy-minimizing layers for k_i = 0.36 pi, sigma_k = 0.059 pi
DEFAULT_SCHEDULE = VariationalLayerSchedule(
    [
        ("Y", 0.1212),
        ("YZ", 0.0185),
        ("Y", -0.5452),
        ("ZXY", 0.0397),
        ("YZ", 0.0599),
        ("YZ", 0.0556),
        ("Y", -0.2637),
        ("ZYZ", 0.0566),
    ]
)


def _apply_group(state, gate, sites, r, policy):
    discarded = 0.0
    if r == 1:
        for n in sites:
            state.apply_one_site(n, gate)
        return 0.0
    if r == 2:
        return apply_bond_layer(state, {n: gate for n in sites}, policy)
    for n in sites:
        discarded += state.apply_three_site_gate(n, gate, policy)
    return discarded


def apply_variational_layers(
    state: MatrixProductState,
    schedule: VariationalLayerSchedule,
    substeps: int = 8,
    policy: TruncationPolicy = DEFAULT_LAYER_POLICY,
    sites: range | None = None,
) -> MatrixProductState:
    """Apply ``exp(i theta_i O_i)`` for every layer, in order, to a copy of ``state``.

    Each generator is split into groups of mutually commuting placements
    (``n mod r`` for ``r``-site terms) and exponentiated with a symmetric
    product formula repeated ``substeps`` times. The product is palindromic,
    so the schedule's :meth:`~VariationalLayerSchedule.inverse` undoes it to
    machine precision.

    ``sites`` optionally restricts the placements to a window.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    out = state.copy()
    L = out.length
    span = range(L) if sites is None else sites
    for pool_id, theta in schedule.layers:
        if theta == 0.0:
            continue
        term = pool_term(pool_id)
        r = int(round(np.log2(term.shape[0])))
        starts = [n for n in span if n + r <= L and n + r - 1 in span]
        groups = [[n for n in starts if n % r == g] for g in range(r)]
        groups = [g for g in groups if g]
        if r == 1 or pool_id == "ZYZ":
            # all placements commute: one exact layer per group
            for g in groups:
                gate = scipy.linalg.expm(1j * theta * term)
                _apply_group(out, gate, g, r, policy)
            continue
        h = theta / substeps
        sequence = [(g, 0.5) for g in groups[:-1]] + [(groups[-1], 1.0)] + [(g, 0.5) for g in reversed(groups[:-1])]
        cache = {}
        for _ in range(substeps):
            for g, frac in sequence:
                if frac not in cache:
                    cache[frac] = scipy.linalg.expm(1j * frac * h * term)
                _apply_group(out, cache[frac], g, r, policy)
    return out


def prepare_dressed_packets(
    vacuum: MatrixProductState,
    specs: list[WavepacketSpec],
    schedule: VariationalLayerSchedule = DEFAULT_SCHEDULE,
    substeps: int = 8,
    policy: TruncationPolicy = TruncationPolicy(max_bond=128, cutoff=1e-12),
) -> MatrixProductState:
    """``U (prod_j F_j) U^dagger |vac>`` for the packets in ``specs``, normalized."""
    L = vacuum.length
    state = apply_variational_layers(vacuum, schedule.inverse(), substeps, policy)
    for spec in specs:
        window = spec.window
        if window.start < 0 or window.stop > L:
            raise ValueError(f"packet window [{window.start}, {window.stop - 1}] clipped by the lattice")
        amps, retained = gaussian_amplitudes(spec)
        spec.norm_retained = retained
        apply_flip_superposition(state, dict(zip(window, amps)), policy)
    state = apply_variational_layers(state, schedule, substeps, policy)
    state.canonicalize(0)
    state.normalize()
    return state


def prepare_two_wavepacket_initial_state(
    couplings: IsingCouplings,
    left_spec: WavepacketSpec,
    right_spec: WavepacketSpec | None = None,
    *,
    vacuum: MatrixProductState | None = None,
    schedule: VariationalLayerSchedule = DEFAULT_SCHEDULE,
    substeps: int = 8,
    policy: TruncationPolicy = TruncationPolicy(max_bond=128, cutoff=1e-12),
) -> MatrixProductState:
    """Two dressed packets moving towards each other, embedded in the vacuum.

    ``right_spec`` defaults to the mirror image of ``left_spec``. The windows
    must be disjoint with at least ``d`` sites between them.
    """
    L = couplings.L
    if right_spec is None:
        right_spec = left_spec.mirrored(L)
    wl, wr = left_spec.window, right_spec.window
    if wl.start > wr.start:
        wl, wr = wr, wl
    gap = wr.start - wl.stop
    need = max(left_spec.d, right_spec.d)
    if gap < need:
        raise ValueError(f"packet windows {wl} and {wr} are {gap} sites apart, need at least {need}")
    if vacuum is None:
        vacuum = prepare_vacuum(couplings)
    if vacuum.length != L:
        raise ValueError("vacuum length differs from couplings.L")
    return prepare_dressed_packets(vacuum, [left_spec, right_spec], schedule, substeps, policy)
