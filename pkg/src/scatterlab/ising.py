"""Tilted-field Ising chain with open boundaries.

    H = -sum_n [ 1/2 (Z_{n-1} Z_n + Z_n Z_{n+1}) + g_x X_n + g_z Z_n ]  =  sum_n H_n

Every bond carries total weight 1, split evenly between its two end sites.
The edge sites only hold their single existing bond (at weight 1/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .mps import EXACT, MatrixProductState, TruncationPolicy, apply_bond_layer, measure_local

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}


@dataclass(frozen=True)
class IsingCouplings:
    g_x: float = 1.25
    g_z: float = 0.15
    L: int = 400

    def __post_init__(self):
        if self.L < 4:
            raise ValueError(f"lattice length must be >= 4, got {self.L}")

    def with_length(self, L: int) -> "IsingCouplings":
        return IsingCouplings(self.g_x, self.g_z, L)


@dataclass(frozen=True)
class LocalTerm:
    """H_n as a list of ``(coefficient, {site: pauli label})`` products."""

    site: int
    products: tuple

    def dense(self, L: int) -> sp.csr_matrix:
        out = sp.csr_matrix((2**L, 2**L), dtype=complex)
        for coeff, ops in self.products:
            out = out + coeff * pauli_string(L, ops)
        return out


def local_energy_terms(couplings: IsingCouplings) -> list[LocalTerm]:
    """Per-site decomposition H = sum_n H_n."""
    L = couplings.L
    terms = []
    for n in range(L):
        products = []
        if n > 0:
            products.append((-0.5, {n - 1: "Z", n: "Z"}))
        if n < L - 1:
            products.append((-0.5, {n: "Z", n + 1: "Z"}))
        products.append((-couplings.g_x, {n: "X"}))
        products.append((-couplings.g_z, {n: "Z"}))
        terms.append(LocalTerm(n, tuple(products)))
    return terms


def pauli_string(L: int, ops: dict) -> sp.csr_matrix:
    """Sparse Kronecker product with site 0 as the most significant factor."""
    factors = [sp.csr_matrix(PAULI[ops.get(i, "I")]) for i in range(L)]
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), factors)


def dense_hamiltonian(couplings: IsingCouplings, periodic: bool = False) -> sp.csr_matrix:
    """Sparse matrix of H; ``periodic`` adds the wrap-around bond (used by ED checks)."""
    L = couplings.L
    states = np.arange(2**L)
    bits = (states[:, None] >> (L - 1 - np.arange(L))) & 1
    z = 1 - 2 * bits
    diag = -np.sum(z[:, :-1] * z[:, 1:], axis=1) - couplings.g_z * z.sum(axis=1)
    if periodic:
        diag = diag - z[:, -1] * z[:, 0]
    H = sp.diags(diag.astype(complex)).tocsr()
    for n in range(L):
        flipped = states ^ (1 << (L - 1 - n))
        H = H + sp.csr_matrix((np.full(2**L, -couplings.g_x, dtype=complex), (flipped, states)), shape=H.shape)
    return H


def bond_hamiltonians(couplings: IsingCouplings) -> list[np.ndarray]:
    """4x4 bond terms h_b with the single-site fields folded in.

    Bulk sites give half their field to each neighbouring bond; the edge sites
    give their full field to their only bond, so ``sum_b h_b = H`` exactly.
    """
    L = couplings.L
    field = -(couplings.g_x * X + couplings.g_z * Z)
    out = []
    for b in range(L - 1):
        wl = 1.0 if b == 0 else 0.5
        wr = 1.0 if b + 1 == L - 1 else 0.5
        h = -np.kron(Z, Z) + wl * np.kron(field, I2) + wr * np.kron(I2, field)
        out.append(h)
    return out


@dataclass
class TrotterGateSet:
    """Even/odd bond factors of exp(-i H dt) (or exp(-H dt) in imaginary time).

    Order 1 applies even then odd bonds; order 2 applies even(dt/2), odd(dt),
    even(dt/2). Single-site field factors are folded into the bond gates, so
    ``field_gates`` stays empty.
    """

    dt: float
    order: int
    imaginary_time: bool
    bond_terms: list = field(repr=False)
    even_bond_gates: dict = field(default_factory=dict, repr=False)
    odd_bond_gates: dict = field(default_factory=dict, repr=False)
    field_gates: dict = field(default_factory=dict, repr=False)
    couplings: IsingCouplings | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def inverse(self) -> "TrotterGateSet":
        """Gate set for the reversed evolution ``exp(+i H dt)`` (real time only)."""
        if self.imaginary_time:
            raise ValueError("imaginary-time steps have no unitary inverse")
        return TrotterGateSet(
            dt=self.dt,
            order=self.order,
            imaginary_time=False,
            bond_terms=[-h for h in self.bond_terms],
            couplings=self.couplings,
        )

    def sequence(self) -> list[tuple[str, float]]:
        if self.order == 1:
            return [("even", 1.0), ("odd", 1.0)]
        return [("even", 0.5), ("odd", 1.0), ("even", 0.5)]

    def gates(self, parity: str, fraction: float) -> dict:
        key = (parity, fraction)
        if key not in self._cache:
            start = 0 if parity == "even" else 1
            tau = fraction * self.dt
            factor = -tau if self.imaginary_time else -1j * tau
            self._cache[key] = {
                b: scipy.linalg.expm(factor * self.bond_terms[b]) for b in range(start, len(self.bond_terms), 2)
            }
        return self._cache[key]

    def step(self, state: MatrixProductState, policy: TruncationPolicy = EXACT, n_steps: int = 1) -> float:
        """Advance ``state`` in place by ``n_steps * dt``; return the discarded weight.

        For order 2 the trailing and leading half steps of consecutive steps
        are merged into one full even layer.
        """
        if n_steps <= 0:
            return 0.0
        discarded = 0.0
        if self.order == 1:
            for _ in range(n_steps):
                discarded += apply_bond_layer(state, self.gates("even", 1.0), policy)
                discarded += apply_bond_layer(state, self.gates("odd", 1.0), policy)
            return discarded
        discarded += apply_bond_layer(state, self.gates("even", 0.5), policy)
        for i in range(n_steps):
            discarded += apply_bond_layer(state, self.gates("odd", 1.0), policy)
            fraction = 0.5 if i == n_steps - 1 else 1.0
            discarded += apply_bond_layer(state, self.gates("even", fraction), policy)
        return discarded


def build_trotter_gates(couplings: IsingCouplings, dt: float, order: int = 2, imaginary_time: bool = False) -> TrotterGateSet:
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if order not in (1, 2):
        raise ValueError(f"Trotter order must be 1 or 2, got {order}")
    gs = TrotterGateSet(
        dt=dt, order=order, imaginary_time=imaginary_time, bond_terms=bond_hamiltonians(couplings), couplings=couplings
    )
    gs.even_bond_gates = gs.gates("even", 1.0)
    gs.odd_bond_gates = gs.gates("odd", 1.0)
    return gs


def local_energies(state: MatrixProductState, couplings: IsingCouplings) -> np.ndarray:
    """Raw <psi|H_n|psi> for every site (scaled by the squared norm)."""
    obs = measure_local(state, site_ops={"x": X, "z": Z}, bond_ops={"zz": (Z, Z)})
    zz = obs["zz"]
    bonds = np.zeros(couplings.L)
    bonds[1:] += 0.5 * zz
    bonds[:-1] += 0.5 * zz
    return -(bonds + couplings.g_x * obs["x"] + couplings.g_z * obs["z"])


def energy_density(state: MatrixProductState, vacuum_reference, couplings: IsingCouplings) -> np.ndarray:
    """Vacuum-subtracted E_n = <psi|H_n|psi> - <psi|psi> <vac|H_n|vac>.

    ``vacuum_reference`` is either a normalized vacuum MPS or the precomputed
    array of its local energies. For an unnormalized input the result scales
    with the squared norm, so component densities add up to the total.
    """
    if isinstance(vacuum_reference, MatrixProductState):
        if vacuum_reference.length != state.length:
            raise ValueError("state and vacuum have different lengths")
        vac = local_energies(vacuum_reference, couplings) / vacuum_reference.norm_sq()
    else:
        vac = np.asarray(vacuum_reference, dtype=float)
    return local_energies(state, couplings) - state.norm_sq() * vac


def total_energy(state: MatrixProductState, couplings: IsingCouplings) -> float:
    norm_sq = state.norm_sq()
    if norm_sq == 0.0:
        raise ZeroDivisionError("energy of the zero state is undefined")
    return float(np.sum(local_energies(state, couplings)) / norm_sq)
