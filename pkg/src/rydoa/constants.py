"""Physical constants, in SI units.

The charge and Bohr radius use the rounded values that the reference
parameter set was computed with, not CODATA.
"""
import math

E_CHARGE = 1.6e-19  # C
BOHR_RADIUS = 5.2e-11  # m
HBAR = 1.05457e-34  # J s
MU_B = 9.2740e-24  # J/T
C_LIGHT = 2.9979e8  # m/s
Z0 = 377.0  # Ohm
K_B = 1.380649e-23  # J/K

TWO_PI = 2.0 * math.pi
MHZ = TWO_PI * 1e6  # rad/s per MHz
