"""One-port reflection traces: modeling, resonance fitting, phonon calibration.

The reflection model is an ideal one-port notch with a complex instrumental
background (amplitude scale, phase offset, linear electrical delay):

    S11(f) = a * exp(i*(phi + 2*pi*f*tau)) *
             [1 - (2*Q_l/Q_ext) / (1 + 2i*Q_l*(f - f_r)/f_r)]

Asymmetric (complex-coupling) lineshapes are out of scope. The automatic
initializer removes the delay with a linear phase fit to the outer 10% of
the trace, takes f_r from the magnitude minimum, the loaded Q from the full
width at half depth, and the external Q from the dip depth.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .constants import HBAR, angular
from .errors import NoResonance
from .fitting import FitProblem, FitResult, levenberg_marquardt

__all__ = [
    "ReflectionTrace",
    "ModeFit",
    "ModeGeometry",
    "model_s11",
    "fit_resonance",
    "phonon_number",
]

MODE_FIT_PARAMS = ("f_r", "q_int", "q_ext", "amplitude", "phase", "delay")


@dataclass(frozen=True)
class ReflectionTrace:
    """Complex reflection coefficient sampled on an increasing frequency grid."""

    frequencies: np.ndarray
    s11: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=np.float64)
        z = np.asarray(self.s11, dtype=np.complex128)
        if f.ndim != 1 or z.ndim != 1 or f.size != z.size:
            raise ValueError("frequencies and s11 must be 1-D arrays of equal length")
        if f.size < 8:
            raise ValueError(f"trace needs at least 8 points, got {f.size}")
        if not np.all(np.diff(f) > 0):
            raise ValueError("frequencies must be strictly increasing")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "s11", z)


@dataclass(frozen=True)
class ModeFit:
    """One-port mode parameters plus instrumental background."""

    f_r: float
    q_int: float
    q_ext: float
    amplitude: float = 1.0
    phase: float = 0.0
    delay: float = 0.0

    def __post_init__(self):
        if not self.f_r > 0:
            raise ValueError(f"f_r must be positive, got {self.f_r}")
        if not self.q_int > 0:
            raise ValueError(f"q_int must be positive, got {self.q_int}")
        if not self.q_ext > 0:
            raise ValueError(f"q_ext must be positive, got {self.q_ext}")
        if not self.amplitude > 0:
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")

    @property
    def q_loaded(self):
        """Loaded quality factor, 1/Q_l = 1/Q_int + 1/Q_ext."""
        return 1.0 / (1.0 / self.q_int + 1.0 / self.q_ext)

    @property
    def linewidth(self):
        """Loaded full width (Hz)."""
        return self.f_r / self.q_loaded


@dataclass(frozen=True)
class ModeGeometry:
    """Mode ladder of the resonator: spacing and stopband extent."""

    fsr: float
    stopband_center: float
    stopband_width: float
    mode_count: int

    def __post_init__(self):
        if not self.fsr > 0:
            raise ValueError(f"fsr must be positive, got {self.fsr}")
        if not self.stopband_center > 0 or not self.stopband_width > 0:
            raise ValueError("stopband center and width must be positive")
        if self.mode_count < 1:
            raise ValueError(f"mode_count must be >= 1, got {self.mode_count}")
        if (self.mode_count - 1) * self.fsr > self.stopband_width:
            raise ValueError(
                f"{self.mode_count} modes spaced by {self.fsr} Hz do not fit "
                f"inside a {self.stopband_width} Hz stopband"
            )


def model_s11(f, m: ModeFit):
    """Complex reflection coefficient of the one-port model at ``f`` (Hz)."""
    farr = np.ascontiguousarray(np.atleast_1d(np.asarray(f, dtype=np.float64)))
    out = _kernels.s11(farr, m.f_r, m.q_loaded, m.q_ext, m.amplitude, m.phase, m.delay)
    if np.ndim(f) == 0:
        return complex(out[0])
    return out


def _edge_slice(n, fraction=0.1):
    k = max(2, int(round(n * fraction / 2)))
    return np.r_[0:k, n - k : n]


def _initial_mode_fit(trace: ReflectionTrace) -> ModeFit:
    f = trace.frequencies
    z = trace.s11
    n = f.size
    edges = _edge_slice(n)

    phase = np.unwrap(np.angle(z))
    slope, intercept = np.polyfit(f[edges], phase[edges], 1)
    delay = slope / (2.0 * math.pi)
    z_corr = z * np.exp(-1j * 2.0 * math.pi * f * delay)

    amplitude = float(np.mean(np.abs(z_corr[edges])))
    if not amplitude > 0:
        raise NoResonance("trace magnitude vanishes; no background level")
    phase0 = float(np.angle(np.mean(z_corr[edges])))

    mag = np.abs(z_corr) / amplitude
    i_min = int(np.argmin(mag))
    depth = 1.0 - mag[i_min]
    noise = float(np.std(np.diff(mag)) / math.sqrt(2.0))
    if depth <= max(5.0 * noise, 1e-6):
        raise NoResonance(
            f"no dip above the noise floor (depth {depth:.3g}, noise {noise:.3g})"
        )
    f_r = float(f[i_min])

    half = 1.0 - depth / 2.0
    left = i_min
    while left > 0 and mag[left] < half:
        left -= 1
    right = i_min
    while right < n - 1 and mag[right] < half:
        right += 1
    fwhm = max(float(f[right] - f[left]), float(f[1] - f[0]))
    q_loaded = f_r / fwhm

    s_min = float(np.real(z_corr[i_min] * np.exp(-1j * phase0)) / amplitude)
    s_min = min(max(s_min, -0.99), 0.99)
    q_ext = 2.0 * q_loaded / (1.0 - s_min)
    inv_q_int = 1.0 / q_loaded - 1.0 / q_ext
    q_int = 1.0 / inv_q_int if inv_q_int > 0 else 100.0 * q_loaded
    return ModeFit(f_r=f_r, q_int=q_int, q_ext=q_ext, amplitude=amplitude, phase=phase0, delay=delay)


def fit_resonance(trace: ReflectionTrace, guess: ModeFit | None = None) -> FitResult:
    """Least-squares fit of the one-port model to a complex trace.

    Real and imaginary parts are fit jointly. Raises NoResonance when no
    initializer guess is supplied and the trace shows no dip above the
    noise floor; ConvergenceFailure propagates from the optimizer.
    """
    if guess is None:
        guess = _initial_mode_fit(trace)

    f = trace.frequencies
    z = trace.s11

    def residual(p):
        m = ModeFit(*p)
        model = _kernels.s11(f, m.f_r, m.q_loaded, m.q_ext, m.amplitude, m.phase, m.delay)
        d = model - z
        return np.concatenate([d.real, d.imag])

    x0 = [guess.f_r, guess.q_int, guess.q_ext, guess.amplitude, guess.phase, guess.delay]
    # delay scale ~ one carrier period: small enough for an accurate finite
    # difference, large enough to rise above rounding of 2*pi*f*delay
    scales = [guess.f_r, 1.0, 1.0, 1.0, 1.0, 1.0 / guess.f_r]
    problem = FitProblem(
        residual=residual,
        x0=x0,
        transforms=("identity", "log", "log", "log", "identity", "identity"),
        scales=scales,
    )
    result = levenberg_marquardt(problem)
    result.param_names = MODE_FIT_PARAMS
    f_r = result.estimates[0]
    if not (f[0] <= f_r <= f[-1]):
        raise NoResonance(f"fitted resonance {f_r:.6g} Hz lies outside the trace span")
    return result


def mode_fit_from_result(result: FitResult) -> ModeFit:
    """Construct the ModeFit described by a fit_resonance result."""
    return ModeFit(*(float(v) for v in result.estimates))


def phonon_number(p_in, m: ModeFit):
    """Steady-state phonon number for on-resonance drive power ``p_in`` (W).

    n = 4 Q_l^2 P / (Q_ext * hbar * omega_r^2) -- the intracavity energy of
    a one-port resonator driven at resonance divided by hbar*omega. This is
    a toolkit convention: n is self-consistent within the package, not an
    absolute calibration.
    """
    p = np.asarray(p_in, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("input power must be >= 0")
    omega = angular(m.f_r)
    out = 4.0 * m.q_loaded**2 * p / (m.q_ext * HBAR * omega**2)
    if np.ndim(p_in) == 0:
        return float(out)
    return out
