"""Open-boundary matrix product states.

Tensors have legs ``(left bond, physical, right bond)`` with physical dimension 2.
Physical index 0 is the spin-up state (Z = +1), index 1 the flipped spin (Z = -1).

Dense conversions use a fixed ordering: site 0 is the most significant bit, so the
basis state with a single flip at site ``n`` sits at index ``2**(L - 1 - n)``.
Two-site gates act on ``(n, n+1)`` in the ordering ``kron(op_n, op_{n+1})``.

A state carries a scalar ``log_norm_adjust``; the represented vector is
``exp(log_norm_adjust) * contract(tensors)``. Gate applications keep the
canonical center at unit Frobenius norm and move scale factors into this
accumulator, so norms of order ``exp(-1000)`` remain representable.
"""

from __future__ import annotations

import copy
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)

DENSE_LIMIT = 14
SNAPSHOT_MAGIC = b"SCLBMPS\x00"
SNAPSHOT_VERSION = 1


class StructureError(ValueError):
    """Raised for malformed tensor trains (bad ranks or mismatched bonds)."""


class DenseLimitError(ValueError):
    """Raised when a dense conversion would exceed the configured size limit."""


@dataclass(frozen=True)
class TruncationPolicy:
    """SVD truncation rule used at every two-site update.

    ``cutoff`` is a relative discarded-weight budget: the smallest set of
    singular values is dropped whose squared sum stays below
    ``cutoff * sum(s**2)``. ``max_bond`` then caps the kept count.
    """

    max_bond: int = 64
    cutoff: float = 1e-9
    renormalize_after_truncation: bool = False

    def __post_init__(self):
        if self.max_bond < 1:
            raise ValueError(f"max_bond must be >= 1, got {self.max_bond}")
        if not 0.0 <= self.cutoff < 1.0:
            raise ValueError(f"cutoff must lie in [0, 1), got {self.cutoff}")


EXACT = TruncationPolicy(max_bond=10**9, cutoff=0.0)


@dataclass(frozen=True)
class SchmidtSpectrum:
    """Squared Schmidt values at the bond between ``cut_site`` and ``cut_site + 1``."""

    cut_site: int
    values: np.ndarray
    chi: int

    @property
    def total(self) -> float:
        return float(np.sum(self.values))

    def significant(self, threshold: float = 1e-2, relative: bool = True) -> np.ndarray:
        """Indices of values above ``threshold`` (times the total if ``relative``)."""
        scale = self.total if relative else 1.0
        return np.nonzero(self.values > threshold * scale)[0]


def truncated_svd(theta: np.ndarray, policy: TruncationPolicy):
    """SVD of a matrix with the policy's truncation.

    Returns ``(u, s, vh, discarded)`` where ``discarded`` is the absolute sum of
    dropped squared singular values. Singular values are in descending order;
    degenerate values keep LAPACK's index order.
    """
    try:
        u, s, vh = scipy.linalg.svd(theta, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        u, s, vh = scipy.linalg.svd(theta, full_matrices=False, lapack_driver="gesvd", check_finite=False)
    weights = s * s
    total = float(weights.sum())
    keep = len(s)
    if policy.cutoff > 0.0 and total > 0.0:
        # tail[i] = weight discarded if we keep the first i values
        tail = np.cumsum(weights[::-1])[::-1]
        allowed = policy.cutoff * total
        over = np.nonzero(tail > allowed)[0]
        keep = int(over[-1]) + 1 if len(over) else 1
    keep = max(1, min(keep, policy.max_bond))
    # always drop exact zeros beyond the first value
    nonzero = int(np.count_nonzero(s > 0.0))
    keep = max(1, min(keep, nonzero)) if nonzero else 1
    discarded = float(weights[keep:].sum())
    return u[:, :keep], s[:keep], vh[:keep], discarded


class MatrixProductState:
    """Finite tensor train with optional canonical-center tracking.

    Parameters
    ----------
    tensors : sequence of arrays
        Rank-3 complex arrays ``(chi_left, 2, chi_right)``.
    center : int or None
        Site of the orthogonality center if the tensors are in mixed-canonical
        form, otherwise ``None``.
    log_norm_adjust : float
        Logarithm of the global scale factor.
    """

    def __init__(self, tensors: Sequence[np.ndarray], center: int | None = None, log_norm_adjust: float = 0.0):
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        self.center = center
        self.log_norm_adjust = float(log_norm_adjust)
        self.nonunitary_gates = 0
        self._check_structure()

    def _check_structure(self):
        if not self.tensors:
            raise StructureError("an MPS needs at least one site")
        for i, t in enumerate(self.tensors):
            if t.ndim != 3 or t.shape[1] != 2:
                raise StructureError(f"site {i}: expected shape (chi, 2, chi), got {t.shape}")
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise StructureError("boundary bonds must have dimension 1")
        for i in range(len(self.tensors) - 1):
            if self.tensors[i].shape[2] != self.tensors[i + 1].shape[0]:
                raise StructureError(
                    f"bond {i}: right dimension {self.tensors[i].shape[2]} "
                    f"!= left dimension {self.tensors[i + 1].shape[0]}"
                )
        if self.center is not None and not 0 <= self.center < len(self.tensors):
            raise StructureError(f"center {self.center} outside [0, {len(self.tensors)})")

    # -- constructors -------------------------------------------------------

    @classmethod
    def product_state(cls, local_states: Iterable) -> "MatrixProductState":
        """Product state from per-site bits (0/1) or length-2 vectors."""
        tensors = []
        for v in local_states:
            if np.isscalar(v):
                vec = np.zeros(2, dtype=complex)
                vec[int(v)] = 1.0
            else:
                vec = np.asarray(v, dtype=complex)
                vec = vec / np.linalg.norm(vec)
            tensors.append(vec.reshape(1, 2, 1))
        return cls(tensors, center=0)

    @classmethod
    def all_up(cls, length: int) -> "MatrixProductState":
        return cls.product_state([0] * length)

    @classmethod
    def from_dense(cls, vector: np.ndarray, policy: TruncationPolicy = EXACT) -> "MatrixProductState":
        """Exact (or truncated) tensor train of a dense statevector."""
        vector = np.asarray(vector, dtype=complex).ravel()
        length = int(round(np.log2(vector.size)))
        if 2**length != vector.size:
            raise ValueError("vector length must be a power of two")
        norm = np.linalg.norm(vector)
        if norm == 0:
            raise ValueError("cannot build an MPS from the zero vector")
        rest = (vector / norm).reshape(1, -1)
        tensors = []
        for _ in range(length - 1):
            chi = rest.shape[0]
            u, s, vh, _ = truncated_svd(rest.reshape(chi * 2, -1), policy)
            tensors.append(u.reshape(chi, 2, -1))
            rest = s[:, None] * vh
        tensors.append(rest.reshape(rest.shape[0], 2, 1))
        state = cls(tensors, center=length - 1, log_norm_adjust=np.log(norm))
        return state

    @classmethod
    def random(cls, length: int, max_bond: int, rng: np.random.Generator | int | None = None) -> "MatrixProductState":
        """Normalized random state with bonds ``min(max_bond, 2**k, 2**(L-k))``."""
        rng = np.random.default_rng(rng)
        dims = [1] + [min(max_bond, 2 ** min(k, length - k)) for k in range(1, length)] + [1]
        tensors = [
            rng.normal(size=(dims[i], 2, dims[i + 1])) + 1j * rng.normal(size=(dims[i], 2, dims[i + 1]))
            for i in range(length)
        ]
        state = cls(tensors)
        state.canonicalize(0)
        state.normalize()
        return state

    # -- basic properties ---------------------------------------------------

    @property
    def length(self) -> int:
        return len(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)

    def copy(self) -> "MatrixProductState":
        new = copy.copy(self)
        new.tensors = [t.copy() for t in self.tensors]
        return new

    # -- gauge --------------------------------------------------------------

    def _shift_right(self, i: int):
        """QR at site i, pushing the R factor into site i+1."""
        a = self.tensors[i]
        chi_l, d, chi_r = a.shape
        q, r = np.linalg.qr(a.reshape(chi_l * d, chi_r))
        self.tensors[i] = q.reshape(chi_l, d, -1)
        self.tensors[i + 1] = np.tensordot(r, self.tensors[i + 1], axes=(1, 0))

    def _shift_left(self, i: int):
        """LQ at site i, pushing the L factor into site i-1."""
        a = self.tensors[i]
        chi_l, d, chi_r = a.shape
        q, r = np.linalg.qr(a.reshape(chi_l, d * chi_r).T)
        self.tensors[i] = q.T.reshape(-1, d, chi_r)
        self.tensors[i - 1] = np.tensordot(self.tensors[i - 1], r.T, axes=(2, 0))

    def canonicalize(self, center: int) -> "MatrixProductState":
        """Bring the state into mixed-canonical form about ``center`` (in place)."""
        if not 0 <= center < self.length:
            raise IndexError(f"center {center} outside [0, {self.length})")
        if self.center is None:
            for i in range(center):
                self._shift_right(i)
            for i in range(self.length - 1, center, -1):
                self._shift_left(i)
        else:
            for i in range(self.center, center):
                self._shift_right(i)
            for i in range(self.center, center, -1):
                self._shift_left(i)
        self.center = center
        self._absorb_center_norm()
        return self

    def _absorb_center_norm(self):
        c = self.tensors[self.center]
        nrm = np.linalg.norm(c)
        if nrm > 0:
            self.tensors[self.center] = c / nrm
            self.log_norm_adjust += float(np.log(nrm))

    def norm_sq(self) -> float:
        """Squared norm, including the log scale accumulator."""
        if self.center is not None:
            local = float(np.linalg.norm(self.tensors[self.center]) ** 2)
        else:
            local = float(np.real(_overlap_raw(self, self)))
        if local == 0.0:
            return 0.0
        return float(np.exp(2.0 * self.log_norm_adjust) * local)

    def normalize(self) -> "MatrixProductState":
        if self.center is None:
            self.canonicalize(0)
        self._absorb_center_norm()
        self.log_norm_adjust = 0.0
        return self

    # -- updates ------------------------------------------------------------

    def apply_one_site(self, site: int, op: np.ndarray):
        self.tensors[site] = np.einsum("st,atb->asb", op, self.tensors[site])
        if not np.allclose(op.conj().T @ op, np.eye(2), atol=1e-12):
            self.center = None

    def apply_two_site_gate(
        self, bond: int, gate: np.ndarray, policy: TruncationPolicy = EXACT, move: str = "right"
    ) -> float:
        """Apply a 4x4 gate on ``(bond, bond+1)`` in place; return the discarded weight.

        The center is moved next to the bond first if needed. After the update
        the center sits at ``bond + 1`` for ``move="right"`` and at ``bond``
        for ``move="left"``. The returned weight is the squared norm removed
        from the represented state.
        """
        if not 0 <= bond < self.length - 1:
            raise IndexError(f"bond {bond} outside [0, {self.length - 1})")
        gate = np.asarray(gate, dtype=complex)
        if gate.shape != (4, 4):
            raise ValueError(f"two-site gate must be 4x4, got {gate.shape}")
        if self.center is None or self.center not in (bond, bond + 1):
            target = bond if self.center is None or self.center <= bond else bond + 1
            self.canonicalize(target)
        a, b = self.tensors[bond], self.tensors[bond + 1]
        chi_l, chi_r = a.shape[0], b.shape[2]
        theta = np.tensordot(a, b, axes=(2, 0))  # (l, s1, s2, r)
        theta = np.tensordot(gate.reshape(2, 2, 2, 2), theta, axes=([2, 3], [1, 2]))  # (s1, s2, l, r)
        theta = theta.transpose(2, 0, 1, 3).reshape(chi_l * 2, 2 * chi_r)
        if not _is_unitary(gate):
            self.nonunitary_gates += 1
        scale_before = np.exp(2.0 * self.log_norm_adjust)
        u, s, vh, discarded = truncated_svd(theta, policy)
        total = float(np.sum(s * s)) + discarded
        kept = total - discarded
        if kept <= 0.0:
            raise FloatingPointError("two-site update annihilated the state")
        if policy.renormalize_after_truncation:
            scale = np.sqrt(total)
        else:
            scale = np.sqrt(kept)
        self.log_norm_adjust += float(np.log(scale))
        s = s / np.sqrt(kept)
        if move == "right":
            self.tensors[bond] = u.reshape(chi_l, 2, -1)
            self.tensors[bond + 1] = (s[:, None] * vh).reshape(-1, 2, chi_r)
            self.center = bond + 1
        else:
            self.tensors[bond] = (u * s[None, :]).reshape(chi_l, 2, -1)
            self.tensors[bond + 1] = vh.reshape(-1, 2, chi_r)
            self.center = bond
        return discarded * scale_before

    def apply_three_site_gate(self, site: int, gate: np.ndarray, policy: TruncationPolicy = EXACT) -> float:
        """Apply an 8x8 gate on ``(site, site+1, site+2)``; return the discarded weight."""
        if not 0 <= site < self.length - 2:
            raise IndexError(f"three-site gate at {site} does not fit in L={self.length}")
        self.canonicalize(site + 1)
        scale_before = np.exp(2.0 * self.log_norm_adjust)
        a, b, c = self.tensors[site : site + 3]
        chi_l, chi_r = a.shape[0], c.shape[2]
        theta = np.tensordot(np.tensordot(a, b, axes=(2, 0)), c, axes=(3, 0))  # (l,s1,s2,s3,r)
        gate = np.asarray(gate, dtype=complex)
        theta = np.tensordot(gate.reshape((2,) * 6), theta, axes=([3, 4, 5], [1, 2, 3]))
        theta = theta.transpose(3, 0, 1, 2, 4)
        if not _is_unitary(gate):
            self.nonunitary_gates += 1
        before = float(np.linalg.norm(theta) ** 2)
        u, s, vh, _ = truncated_svd(theta.reshape(chi_l * 2, 4 * chi_r), policy)
        self.tensors[site] = u.reshape(chi_l, 2, -1)
        rest = (s[:, None] * vh).reshape(len(s) * 2, 2 * chi_r)
        u2, s2, vh2, _ = truncated_svd(rest, policy)
        self.tensors[site + 1] = u2.reshape(len(s), 2, -1)
        self.tensors[site + 2] = (s2[:, None] * vh2).reshape(-1, 2, chi_r)
        self.center = site + 2
        kept = float(np.sum(s2 * s2))
        if policy.renormalize_after_truncation and kept > 0:
            self.tensors[site + 2] *= np.sqrt(before / kept)
        self._absorb_center_norm()
        return (before - kept) * scale_before

    # -- analysis -----------------------------------------------------------

    def schmidt_values(self, cut_site: int) -> np.ndarray:
        """Singular values (not squared) across the bond right of ``cut_site``."""
        if not 0 <= cut_site < self.length - 1:
            raise IndexError(f"cut {cut_site} outside [0, {self.length - 1})")
        self.canonicalize(cut_site)
        a = self.tensors[cut_site]
        s = scipy.linalg.svdvals(a.reshape(-1, a.shape[2]), check_finite=False)
        return s * np.exp(self.log_norm_adjust)

    def to_dense(self, limit: int = DENSE_LIMIT) -> np.ndarray:
        if self.length > limit:
            raise DenseLimitError(f"L={self.length} exceeds the dense oracle limit {limit}")
        vec = self.tensors[0].reshape(2, -1)
        for t in self.tensors[1:]:
            vec = np.tensordot(vec, t, axes=(1, 0)).reshape(-1, t.shape[2])
        return vec.reshape(-1) * np.exp(self.log_norm_adjust)

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        """Write the binary snapshot format (see README, "State snapshots")."""
        header = struct.pack(
            "<8sIIid", SNAPSHOT_MAGIC, SNAPSHOT_VERSION, self.length,
            -1 if self.center is None else self.center, self.log_norm_adjust,
        )
        bonds = np.asarray([1] + self.bond_dims + [1], dtype="<u4").tobytes()
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(bonds)
            for t in self.tensors:
                fh.write(np.ascontiguousarray(t, dtype="<c16").tobytes())

    @classmethod
    def load(cls, path) -> "MatrixProductState":
        data = Path(path).read_bytes()
        head = struct.calcsize("<8sIIid")
        magic, version, length, center, lna = struct.unpack("<8sIIid", data[:head])
        if magic != SNAPSHOT_MAGIC:
            raise StructureError(f"{path}: not an MPS snapshot")
        if version != SNAPSHOT_VERSION:
            raise StructureError(f"{path}: unsupported snapshot version {version}")
        offset = head
        bonds = np.frombuffer(data, dtype="<u4", count=length + 1, offset=offset).astype(int)
        offset += 4 * (length + 1)
        tensors = []
        for i in range(length):
            shape = (bonds[i], 2, bonds[i + 1])
            n = int(np.prod(shape))
            tensors.append(np.frombuffer(data, dtype="<c16", count=n, offset=offset).reshape(shape).copy())
            offset += 16 * n
        if offset != len(data):
            raise StructureError(f"{path}: {len(data) - offset} trailing bytes")
        return cls(tensors, center=None if center < 0 else center, log_norm_adjust=lna)


def _is_unitary(gate: np.ndarray) -> bool:
    return bool(np.allclose(gate.conj().T @ gate, np.eye(gate.shape[0]), atol=1e-10))


def _overlap_raw(a: MatrixProductState, b: MatrixProductState) -> complex:
    env = np.ones((1, 1), dtype=complex)
    for ta, tb in zip(a.tensors, b.tensors):
        env = np.tensordot(env, ta.conj(), axes=(0, 0))  # (b_l, s, a_r)
        env = np.tensordot(env, tb, axes=([0, 1], [0, 1]))  # (a_r, b_r)
    return complex(env[0, 0])


# -- functional interface ---------------------------------------------------


def canonicalize(state: MatrixProductState, center: int) -> MatrixProductState:
    """Return a copy of ``state`` in mixed-canonical form about ``center``."""
    return state.copy().canonicalize(center)


def apply_two_site_gate(state: MatrixProductState, bond: int, gate: np.ndarray, policy: TruncationPolicy = EXACT):
    """Return ``(new_state, discarded_weight)`` after applying ``gate`` on ``(bond, bond+1)``.

    Non-unitary gates are accepted; ``new_state.nonunitary_gates`` counts them.
    """
    new = state.copy()
    discarded = new.apply_two_site_gate(bond, gate, policy)
    return new, discarded


def schmidt_spectrum(state: MatrixProductState, cut_site: int, cutoff: float = 1e-15) -> SchmidtSpectrum:
    """Squared Schmidt values across the bond right of ``cut_site``.

    Values at or below ``cutoff`` times the largest value are dropped; ``chi``
    is the retained count.
    """
    s = state.copy().schmidt_values(cut_site)
    lam = s * s
    if len(lam) and lam[0] > 0:
        lam = lam[lam > cutoff * lam[0]]
    return SchmidtSpectrum(cut_site=cut_site, values=lam, chi=len(lam))


def project_schmidt_component(state: MatrixProductState, cut_site: int, keep) -> MatrixProductState:
    """Keep only the Schmidt components ``keep`` (indices into the descending spectrum).

    The result is unnormalized: its squared norm is the sum of the kept squared
    Schmidt values. An empty ``keep`` returns the zero state with a warning.
    """
    keep = sorted(set(int(i) for i in keep))
    new = state.copy()
    new.canonicalize(cut_site)
    a = new.tensors[cut_site]
    chi_l, _, chi_r = a.shape
    u, s, vh = scipy.linalg.svd(a.reshape(chi_l * 2, chi_r), full_matrices=False, check_finite=False)
    if any(i < 0 or i >= len(s) for i in keep):
        raise IndexError(f"keep indices {keep} outside spectrum of size {len(s)}")
    if not keep:
        log.warning("empty keep-set at cut %d: returning the zero state", cut_site)
        new.tensors[cut_site] = np.zeros((chi_l, 2, 1), dtype=complex)
        new.tensors[cut_site + 1] = np.tensordot(vh[:1], new.tensors[cut_site + 1], axes=(1, 0))
        return new
    idx = np.asarray(keep)
    new.tensors[cut_site] = (u[:, idx] * s[idx][None, :]).reshape(chi_l, 2, len(idx))
    new.tensors[cut_site + 1] = np.tensordot(vh[idx], new.tensors[cut_site + 1], axes=(1, 0))
    return new


def inner_product(a: MatrixProductState, b: MatrixProductState) -> complex:
    """<a|b> including both scale accumulators."""
    if a.length != b.length:
        raise ValueError(f"length mismatch: {a.length} vs {b.length}")
    return _overlap_raw(a, b) * np.exp(a.log_norm_adjust + b.log_norm_adjust)


def to_dense(state: MatrixProductState, limit: int = DENSE_LIMIT) -> np.ndarray:
    """Dense amplitudes with site 0 as the most significant bit."""
    return state.to_dense(limit)


def apply_bond_layer(state: MatrixProductState, gates, policy: TruncationPolicy = EXACT) -> float:
    """Apply mutually commuting two-site gates ``{bond: gate}`` in one sweep (in place).

    The sweep direction follows the current center so that the center only
    travels across the lattice once. Returns the total discarded weight.
    """
    bonds = sorted(gates)
    if not bonds:
        return 0.0
    discarded = 0.0
    mid = 0.5 * (bonds[0] + bonds[-1])
    if state.center is None or state.center <= mid:
        for b in bonds:
            discarded += state.apply_two_site_gate(b, gates[b], policy, move="right")
    else:
        for b in reversed(bonds):
            discarded += state.apply_two_site_gate(b, gates[b], policy, move="left")
    return discarded


def measure_local(state: MatrixProductState, site_ops=None, bond_ops=None) -> dict[str, np.ndarray]:
    """Expectation values of one-site and nearest-neighbour operators on every site/bond.

    ``site_ops`` maps names to 2x2 operators, ``bond_ops`` maps names to pairs
    of 2x2 operators acting on ``(n, n+1)``. Results are unnormalized
    ``<psi|O|psi>`` and include the squared norm. The input state is untouched.
    """
    site_ops = site_ops or {}
    bond_ops = bond_ops or {}
    work = state.copy()
    length = work.length
    out = {name: np.zeros(length) for name in site_ops}
    out.update({name: np.zeros(length - 1) for name in bond_ops})
    work.canonicalize(0)
    work._absorb_center_norm()
    scale = np.exp(2.0 * work.log_norm_adjust)
    for n in range(length):
        a = work.tensors[n]
        for name, op in site_ops.items():
            val = np.einsum("asb,st,atb->", a.conj(), op, a)
            out[name][n] = float(np.real(val)) * scale
        if n < length - 1:
            if bond_ops:
                theta = np.tensordot(a, work.tensors[n + 1], axes=(2, 0))
                for name, (op1, op2) in bond_ops.items():
                    val = np.einsum("astb,su,tv,auvb->", theta.conj(), op1, op2, theta)
                    out[name][n] = float(np.real(val)) * scale
            work._shift_right(n)
            work.center = n + 1
    return out


def correlation_matrix(state: MatrixProductState, op_a: np.ndarray, op_b: np.ndarray, sites: Sequence[int]) -> np.ndarray:
    """``C[i, j] = <psi| A_{sites[i]} B_{sites[j]} |psi>`` for one-site operators.

    Sites must be increasing. On the diagonal the product ``A @ B`` acts on one
    site. Unnormalized (scaled by the squared norm).
    """
    sites = list(sites)
    if sorted(sites) != sites:
        raise ValueError("sites must be increasing")
    work = state.copy().canonicalize(sites[0])
    scale = np.exp(2.0 * work.log_norm_adjust)
    n_sites = len(sites)
    out = np.zeros((n_sites, n_sites), dtype=complex)
    last = sites[-1]
    for i, si in enumerate(sites):
        work.canonicalize(si)
        a = work.tensors[si]
        out[i, i] = np.einsum("asb,st,tu,aub->", a.conj(), op_a, op_b, a)
        # env_a carries A at si (left <- A^dagger convention: <psi|A_i ... B_j|psi>)
        env_a = np.einsum("asb,st,atc->bc", a.conj(), op_a, a)
        env_b = np.einsum("asb,st,atc->bc", a.conj(), op_b, a)
        j = i + 1
        for n in range(si + 1, last + 1):
            t = work.tensors[n]
            if j < n_sites and sites[j] == n:
                out[i, j] = np.einsum("bc,bsd,st,ctd->", env_a, t.conj(), op_b, t)
                out[j, i] = np.einsum("bc,bsd,st,ctd->", env_b, t.conj(), op_a, t)
                j += 1
            env_a = np.einsum("bc,bsd,cse->de", env_a, t.conj(), t)
            env_b = np.einsum("bc,bsd,cse->de", env_b, t.conj(), t)
    return out * scale


def compress(state: MatrixProductState, policy: TruncationPolicy) -> float:
    """Re-truncate every bond with a right-to-left SVD sweep (in place).

    Returns the absolute discarded weight. The center ends at site 0.
    """
    state.canonicalize(state.length - 1)
    scale = np.exp(2.0 * state.log_norm_adjust)
    discarded = 0.0
    for i in range(state.length - 1, 0, -1):
        a = state.tensors[i]
        chi_l, d, chi_r = a.shape
        u, s, vh, w = truncated_svd(a.reshape(chi_l, d * chi_r), policy)
        discarded += w * scale
        state.tensors[i] = vh.reshape(-1, d, chi_r)
        state.tensors[i - 1] = np.tensordot(state.tensors[i - 1], u * s, axes=(2, 0))
        state.center = i - 1
    state._absorb_center_norm()
    return discarded
