"""Pseudo-spectral simulator and verification harness for 2D Navier-Stokes
with a transported, possibly discontinuous viscosity coefficient."""

__version__ = "0.1.0"
