"""Numerics for planar Brownian point interactions.

Free resolvent kernels, logarithmic energies, the zero-mass Picard scheme,
Bessel-process hitting functionals and Monte Carlo oracles.
"""

__version__ = "0.1.0"
