"""Min-max Hamiltonians built from quasiconvex/quasiconcave pieces:
stability analysis of the piece pairs, viscosity solvers, effective
Hamiltonian estimation, and the experiment harness."""

__version__ = "0.1.0"
