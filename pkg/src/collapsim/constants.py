"""Physical constants (SI) and unit helpers.

Simulation modules work in natural units (hbar = 1, grid lengths and
masses order unity) unless stated otherwise; the constants here are for
laboratory-scale estimates, which are genuinely SI.
"""

HBAR = 1.054571817e-34  # J s
C_LIGHT = 2.99792458e8  # m / s
K_BOLTZMANN = 1.380649e-23  # J / K
EV = 1.602176634e-19  # J

SECONDS_PER_YEAR = 3.156e7
