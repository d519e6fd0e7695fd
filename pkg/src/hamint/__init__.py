"""Symmetry-based first integrals and closed-form reductions for
discounted optimal-control models in current-value Hamiltonian form."""

__version__ = "0.1.0"
