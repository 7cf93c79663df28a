"""Infinitely divisible independently scattered random measures.

Build a random measure from its characteristics (control measure, drift
and Gaussian densities, Levy kernel), check which matrix-valued fields are
integrable against it, compute exact characteristic functions of the
stochastic integrals, and validate everything by Monte-Carlo simulation.
"""

__version__ = "0.1.0"
