"""Slot-waveguide mode solving, dipole coupling and ring-resonator cQED figures."""

__version__ = "0.1.0"
