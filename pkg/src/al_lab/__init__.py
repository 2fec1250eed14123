"""Floquet spectra, Backlund-Darboux orbits, Melnikov functions and resonant dynamics for a perturbed Ablowitz-Ladik lattice."""

__version__ = "0.1.0"
