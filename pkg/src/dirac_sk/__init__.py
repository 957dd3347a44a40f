"""Dissipative Dirac-matrix Kitaev model on the square-lattice bilayer."""

__version__ = "0.1.0"
