"""Physical constants and frequency-unit conversions.

All public interfaces of this package take ordinary frequencies in Hz.
Angular frequencies (rad/s) appear only internally; every conversion goes
through :func:`angular` / :func:`ordinary` so the 2*pi factor lives in
exactly one place.
"""

import math

# Exact SI defining constants (2019 redefinition).
PLANCK = 6.62607015e-34          # J s
BOLTZMANN = 1.380649e-23         # J / K
HBAR = PLANCK / (2.0 * math.pi)  # J s

TWO_PI = 2.0 * math.pi


def angular(f_hz):
    """Ordinary frequency (Hz) -> angular frequency (rad/s)."""
    return TWO_PI * f_hz


def ordinary(omega):
    """Angular frequency (rad/s) -> ordinary frequency (Hz)."""
    return omega / TWO_PI
