"""Matrix-product-state simulation of particle scattering in the tilted-field Ising chain.

Submodules
----------
mps           tensor-train states, truncated SVD, Schmidt spectra
ising         Hamiltonian, local energy densities, Trotter gates
stateprep     vacuum search, wavepacket amplitudes, dressed packet embedding
dynamics      real-time evolution with staged truncation and snapshots
entanglement  entropy, antiflatness and channel isolation
spectroscopy  exact-diagonalization dispersions, velocities, classification
config, cli   configuration-driven pipeline runner
"""

__version__ = "0.1.0"
