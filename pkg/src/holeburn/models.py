"""Closed-form loss and frequency-shift models for a driven TLS ensemble.

This module collects the pure model functions used everywhere else:

* the single-mode saturation law for the internal quality factor,
* the two-tone (pump-probe) loss and frequency-shift profiles of the
  spectral hole in the standard-tunneling-model picture,
* the uniform-coupling (Lorentzian hole) alternative model,
* Rabi-frequency scalings and the coherence-time estimate.

Frequencies in public dataclasses are ordinary (Hz); the detuning/Rabi
arguments of the hole-profile functions are angular (rad/s) and only their
ratio matters. All functions are pure, stateless and accept scalars or
arrays (broadcast together); scalars in, float out.

A note on the uniform-coupling expressions: the printed source for the
shift/loss pair contains a garbled factor ``(1 sqrt(1+n))^2`` in the
denominator. It is resolved here as ``(1 + sqrt(1+n))^2`` -- the only
reading for which the zero-detuning loss collapses to 1/sqrt(1+n) and thus
matches the single-mode saturation law with beta = 1.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .constants import BOLTZMANN, HBAR, angular

__all__ = [
    "ThermalContext",
    "STMSaturationParams",
    "TwoToneSTMParams",
    "CapelleParams",
    "RabiScaling",
    "thermal_factor",
    "thermal_factor_at",
    "stm_inverse_q",
    "stm_two_tone_shift",
    "stm_two_tone_loss",
    "two_tone_shift_rel",
    "capelle_shift",
    "capelle_loss",
    "rabi_from_phonons",
    "rabi_capelle",
    "t2_estimate",
]


def _as_float_arrays(*values):
    arrays = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in values))
    return [np.ascontiguousarray(a) for a in arrays]


def _maybe_scalar(out, *inputs):
    if all(np.ndim(v) == 0 for v in inputs):
        return float(out[()] if out.ndim == 0 else out[0])
    return out


@dataclass(frozen=True)
class ThermalContext:
    """Resonance frequency (Hz) and bath temperature (K)."""

    f_r: float
    temperature: float

    def __post_init__(self):
        if not self.f_r > 0:
            raise ValueError(f"f_r must be positive, got {self.f_r}")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")


@dataclass(frozen=True)
class STMSaturationParams:
    """Single-mode saturation-law parameters.

    ``q_res`` is the residual (non-TLS) quality factor; ``None`` or
    ``math.inf`` means no residual loss channel, contributing exactly zero.
    """

    q_tls0: float
    n_c: float
    beta: float
    q_res: float | None = None

    def __post_init__(self):
        if not self.q_tls0 > 0:
            raise ValueError(f"q_tls0 must be positive, got {self.q_tls0}")
        if not self.n_c > 0:
            raise ValueError(f"n_c must be positive, got {self.n_c}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.q_res is not None and not self.q_res > 0:
            raise ValueError(f"q_res must be positive or None, got {self.q_res}")

    @property
    def inv_q_res(self):
        if self.q_res is None or math.isinf(self.q_res):
            return 0.0
        return 1.0 / self.q_res


@dataclass(frozen=True)
class TwoToneSTMParams:
    """Loss tangent and effective Rabi frequency (rad/s) of the pump."""

    tan_delta: float
    omega: float

    def __post_init__(self):
        if not self.tan_delta > 0:
            raise ValueError(f"tan_delta must be positive, got {self.tan_delta}")
        if self.omega < 0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")


@dataclass(frozen=True)
class CapelleParams:
    """Uniform-coupling model: maximal TLS damping and intrinsic linewidth (rad/s)."""

    gamma0: float
    gamma2: float

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError(f"gamma0 must be positive, got {self.gamma0}")
        if not self.gamma2 > 0:
            raise ValueError(f"gamma2 must be positive, got {self.gamma2}")


@dataclass(frozen=True)
class RabiScaling:
    """Power law omega = omega0 * n**k for the pump drive strength (rad/s)."""

    omega0: float
    k: float

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ValueError(f"omega0 must be positive, got {self.omega0}")
        if not 0.0 < self.k < 1.0:
            raise ValueError(f"k must lie in (0, 1), got {self.k}")


def thermal_factor_at(f_r_hz, temperature_k):
    """tanh(hbar*omega_r / 2 kB T) at ordinary frequency ``f_r_hz``.

    Returns exactly 1.0 at zero temperature. Array-capable in ``f_r_hz``.
    """
    f = np.asarray(f_r_hz, dtype=np.float64)
    if np.any(f <= 0):
        raise ValueError("frequency must be positive")
    if temperature_k < 0:
        raise ValueError("temperature must be >= 0")
    if temperature_k == 0:
        out = np.ones_like(f)
    else:
        out = np.tanh(HBAR * angular(f) / (2.0 * BOLTZMANN * temperature_k))
    return _maybe_scalar(out, f_r_hz)


def thermal_factor(ctx: ThermalContext) -> float:
    """Thermal occupation factor of the saturation law for ``ctx``."""
    return thermal_factor_at(ctx.f_r, ctx.temperature)


def stm_inverse_q(n, p: STMSaturationParams, ctx: ThermalContext):
    """Inverse internal quality factor 1/Q_int(n) of the saturation law."""
    narr = np.asarray(n, dtype=np.float64)
    if np.any(narr < 0):
        raise ValueError("phonon number n must be >= 0")
    th = thermal_factor(ctx)
    out = _kernels.stm_inverse_q(
        np.ascontiguousarray(np.atleast_1d(narr)), p.q_tls0, p.n_c, p.beta, p.inv_q_res, th
    )
    return _maybe_scalar(out, n)


def stm_two_tone_loss(delta, omega, series_threshold=_kernels.DEFAULT_SERIES_THRESHOLD):
    """Normalized probe-loss change of the spectral hole, in [-1, 0].

    ``delta`` is the pump-probe detuning and ``omega`` the effective Rabi
    frequency (both rad/s; only the ratio enters). Even in ``delta``; -1 in
    the zero-detuning limit, 0 as ``omega -> 0``. Values with
    omega/|delta| below ``series_threshold`` use the resummed series branch
    (see ``_kernels`` for the analysis).
    """
    if not 0.0 <= series_threshold <= _kernels.MAX_SERIES_THRESHOLD:
        raise ValueError(
            f"series_threshold must lie in [0, {_kernels.MAX_SERIES_THRESHOLD}]"
        )
    d, o = _as_float_arrays(delta, omega)
    if np.any(o < 0):
        raise ValueError("omega must be >= 0")
    if np.any((d == 0) & (o == 0)):
        raise ValueError("delta and omega cannot both be zero")
    shape = d.shape
    out = _kernels.two_tone_loss(d.ravel(), o.ravel(), series_threshold).reshape(shape)
    return _maybe_scalar(out, delta, omega)


def two_tone_shift_rel(delta, omega, tan_delta=1.0, thermal=1.0):
    """Relative probe frequency shift of the hole, odd in ``delta``.

    Computational core shared by :func:`stm_two_tone_shift` and the fitting
    pipeline: arrays for ``delta``/``omega`` broadcast, ``tan_delta`` and
    ``thermal`` are scalars. The ratio (s-1)/(s+1) of the textbook form is
    evaluated as omega/(2*delta*(1+s)^2), which is algebraically identical
    and free of subtractive cancellation for omega << |delta|.
    """
    d, o = _as_float_arrays(delta, omega)
    if np.any(o < 0):
        raise ValueError("omega must be >= 0")
    if np.any((d == 0) & (o == 0)):
        raise ValueError("delta and omega cannot both be zero")
    shape = d.shape
    core = _kernels.two_tone_shift_core(d.ravel(), o.ravel()).reshape(shape)
    out = -(3.0 * math.sqrt(2.0) / 8.0) * tan_delta * thermal * core
    return _maybe_scalar(out, delta, omega)


def stm_two_tone_shift(delta, p: TwoToneSTMParams, ctx: ThermalContext):
    """Relative frequency shift of a probe mode detuned by ``delta`` (rad/s)."""
    return two_tone_shift_rel(delta, p.omega, p.tan_delta, thermal_factor(ctx))


def capelle_shift(delta, n_tilde, p: CapelleParams):
    """Probe frequency shift (rad/s) in the uniform-coupling model.

    ``n_tilde`` is the pump phonon number scaled by the critical one. Odd in
    ``delta``; zero for an unpumped ensemble.
    """
    d, nt = _as_float_arrays(delta, n_tilde)
    if np.any(nt < 0):
        raise ValueError("n_tilde must be >= 0")
    shape = d.shape
    core = _kernels.capelle_shift_core((d / p.gamma2).ravel(), nt.ravel()).reshape(shape)
    return _maybe_scalar(p.gamma0 * core, delta, n_tilde)


def capelle_loss(delta, n_tilde, p: CapelleParams):
    """Normalized internal loss (Gamma_int/Gamma_0) in the uniform-coupling model.

    Lies in [0, 1]; at zero detuning it equals exactly 1/sqrt(1+n_tilde),
    the single-mode saturation form with beta = 1.
    """
    d, nt = _as_float_arrays(delta, n_tilde)
    if np.any(nt < 0):
        raise ValueError("n_tilde must be >= 0")
    shape = d.shape
    out = _kernels.capelle_loss((d / p.gamma2).ravel(), nt.ravel()).reshape(shape)
    return _maybe_scalar(out, delta, n_tilde)


def rabi_from_phonons(n, s: RabiScaling):
    """Effective Rabi frequency omega0 * n**k (rad/s) at pump occupation ``n``."""
    narr = np.asarray(n, dtype=np.float64)
    if np.any(narr < 0):
        raise ValueError("phonon number n must be >= 0")
    out = s.omega0 * narr**s.k
    return _maybe_scalar(np.asarray(out), n)


def rabi_capelle(n_tilde, gamma2):
    """Effective Rabi frequency gamma2 * sqrt(1 + n_tilde) (rad/s)."""
    nt = np.asarray(n_tilde, dtype=np.float64)
    if np.any(nt < 0):
        raise ValueError("n_tilde must be >= 0")
    if not gamma2 > 0:
        raise ValueError("gamma2 must be positive")
    out = gamma2 * np.sqrt(1.0 + nt)
    return _maybe_scalar(np.asarray(out), n_tilde)


def t2_estimate(omega0, n_c):
    """Characteristic TLS coherence time T2 = sqrt(2)/(omega0*sqrt(n_c)).

    Follows from n/n_C = Omega^2 T1 T2 with Omega = omega0*sqrt(n) and
    T2 = 2*T1: omega0^2 * n_c * T2^2 / 2 = 1.
    """
    if not omega0 > 0:
        raise ValueError("omega0 must be positive")
    if not n_c > 0:
        raise ValueError("n_c must be positive")
    return math.sqrt(2.0) / (omega0 * math.sqrt(n_c))
