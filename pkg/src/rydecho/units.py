"""Unit conversions at the user boundary.

Inputs are quoted as ordinary frequencies X/2pi in MHz (and C6/2pi in
THz um^6); internally everything is angular frequency in rad/us.
"""

from math import pi

TWO_PI = 2.0 * pi

# C6/2pi in THz um^6 -> MHz um^6
THZ_TO_MHZ = 1.0e6


def angular(mhz: float) -> float:
    """MHz (ordinary) -> rad/us."""
    return TWO_PI * mhz


def ordinary(rad_per_us: float) -> float:
    """rad/us -> MHz (ordinary)."""
    return rad_per_us / TWO_PI
