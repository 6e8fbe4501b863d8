"""Hot numeric kernels with numba acceleration and a pure-numpy fallback.

Every kernel exists twice: a vectorized numpy implementation and a numba
``@njit`` scalar-loop implementation. The active set is chosen once at
import time:

* default: numba, when importable;
* ``HOLEBURN_NO_NUMBA=1`` (or ``true``/``yes``/``on``): force pure numpy;
* numba missing: silent numpy fallback.

``USING_NUMBA`` records the choice and ``implementations()`` exposes both
sets so benchmarks and parity tests can compare them directly.

All kernels take and return 1-D float64 (or complex128) arrays; argument
validation and broadcasting live in the public modules.

Numerical notes for the two-tone loss kernel
--------------------------------------------
The saturation-hole loss profile

    L(delta, omega) = -1 - (delta/omega)^2 * [6 + 3*X*ln((X-1)/(X+1))],
    X = sqrt(1 + 2*(delta/omega)^2)

cancels catastrophically for omega << |delta|: the bracket approaches zero
as -2/X^2 while its two terms stay O(1), and the surviving difference is
then multiplied by (delta/omega)^2. Substituting t = 1/X, the expression
resums exactly into

    L = -sum_{m>=1} 6 t^(2m) / ((2m+1)(2m+3)),   t^2 = u^2/(2+u^2),

with u = omega/|delta|, convergent for every u (t < 1 whenever delta != 0).
Below ``series_threshold`` (default u < 0.25) the kernel evaluates a
24-term Horner form of this series, exact to <1e-16 relative there; above
it, the direct form is used with ln((X-1)/(X+1)) rewritten as
ln(2) + 2*ln(r) - 2*ln(X+1), r = |delta|/omega, which avoids the X-1
cancellation for small r.
"""

import math
import os

import numpy as np

_LN2 = math.log(2.0)

# Horner coefficients 6/((2m+1)(2m+3)), m = 24..1 (highest order first).
_SERIES_COEFFS = tuple(6.0 / ((2 * m + 1) * (2 * m + 3)) for m in range(24, 0, -1))

#: Largest omega/|delta| ratio handled by the truncated series (24 terms keep
#: it below 1e-16 relative truncation up to u ~ 0.75).
MAX_SERIES_THRESHOLD = 0.75

#: Default branch point between the resummed series and the direct form.
DEFAULT_SERIES_THRESHOLD = 0.25


def _np_two_tone_loss(delta, omega, series_threshold=DEFAULT_SERIES_THRESHOLD):
    delta = np.asarray(delta, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    out = np.empty(delta.shape, dtype=np.float64)

    zero_d = delta == 0.0
    zero_o = omega == 0.0
    out[zero_d] = -1.0
    out[zero_o & ~zero_d] = 0.0
    out[zero_d & zero_o] = np.nan

    live = ~zero_d & ~zero_o
    if not np.any(live):
        return out
    ad = np.abs(delta[live])
    om = omega[live]
    with np.errstate(all="ignore"):
        u = om / ad
        u2 = u * u
        z = u2 / (2.0 + u2)
        series = np.zeros_like(z)
        for c in _SERIES_COEFFS:
            series = z * (c + series)
        series = -series

        r = ad / om
        r2 = r * r
        x = np.sqrt(1.0 + 2.0 * r2)
        direct = -1.0 - r2 * (6.0 + 3.0 * x * (_LN2 + 2.0 * np.log(r) - 2.0 * np.log(x + 1.0)))
        direct = np.where(r == 0.0, -1.0, direct)

        out[live] = np.where((u < series_threshold) & np.isfinite(u), series, direct)
    return out


def _np_two_tone_shift_core(delta, omega):
    """Signed core (omega/(2*delta)) / (1+s)^2 with s = sqrt(1+omega^2/(2 delta^2))."""
    delta = np.asarray(delta, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    out = np.empty(delta.shape, dtype=np.float64)

    zero_d = delta == 0.0
    zero_o = omega == 0.0
    out[zero_d | zero_o] = 0.0
    out[zero_d & zero_o] = np.nan

    live = ~zero_d & ~zero_o
    if not np.any(live):
        return out
    with np.errstate(all="ignore"):
        u = omega[live] / np.abs(delta[live])
        s = np.sqrt(1.0 + 0.5 * u * u)
        core = u / (2.0 * (1.0 + s) * (1.0 + s))
        core = np.where(np.isfinite(u), core, 0.0)
        out[live] = np.copysign(core, delta[live])
    return out


def _np_capelle_loss(d, n_tilde):
    """Normalized loss for the uniform-coupling model; d = delta/gamma2.

    Algebraically rearranged (numerator q*d^2 + (1+q)^2, all terms positive)
    so the zero-detuning value is exactly 1/sqrt(1+n_tilde).
    """
    d = np.asarray(d, dtype=np.float64)
    n_tilde = np.asarray(n_tilde, dtype=np.float64)
    q = np.sqrt(1.0 + n_tilde)
    opq = 1.0 + q
    with np.errstate(all="ignore"):
        d2 = d * d
        val = (q * d2 + opq * opq) / (q * (d2 + opq * opq))
        return np.where(np.isinf(d2), 1.0, val)


def _np_capelle_shift_core(d, n_tilde):
    """Frequency-shift core (shift / gamma0); d = delta/gamma2."""
    d = np.asarray(d, dtype=np.float64)
    n_tilde = np.asarray(n_tilde, dtype=np.float64)
    q = np.sqrt(1.0 + n_tilde)
    opq = 1.0 + q
    with np.errstate(all="ignore"):
        d2 = d * d
        val = -0.5 * d * n_tilde / (q * (d2 + opq * opq))
        return np.where(np.isinf(d2), 0.0, val)


def _np_s11(f, f_r, q_loaded, q_ext, amplitude, phase, delay):
    f = np.asarray(f, dtype=np.float64)
    x = 2.0 * q_loaded * (f - f_r) / f_r
    resp = 1.0 - (2.0 * q_loaded / q_ext) / (1.0 + 1j * x)
    return amplitude * np.exp(1j * (phase + 2.0 * math.pi * f * delay)) * resp


def _np_stm_inverse_q(n, q_tls0, n_c, beta, inv_q_res, thermal):
    n = np.asarray(n, dtype=np.float64)
    with np.errstate(all="ignore"):
        tls = (thermal / q_tls0) / np.sqrt(1.0 + (n / n_c) ** beta)
    return tls + inv_q_res


_NUMPY_IMPL = {
    "two_tone_loss": _np_two_tone_loss,
    "two_tone_shift_core": _np_two_tone_shift_core,
    "capelle_loss": _np_capelle_loss,
    "capelle_shift_core": _np_capelle_shift_core,
    "s11": _np_s11,
    "stm_inverse_q": _np_stm_inverse_q,
}


def _env_disabled():
    return os.environ.get("HOLEBURN_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


_NUMBA_IMPL = None
if not _env_disabled():
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - depends on environment
        njit = None
    if njit is not None:
        _C24 = _SERIES_COEFFS

        @njit(cache=True)
        def _loss_scalar(delta, omega, thr):
            if delta == 0.0:
                if omega == 0.0:
                    return np.nan
                return -1.0
            if omega == 0.0:
                return 0.0
            ad = abs(delta)
            u = omega / ad
            if u < thr:
                u2 = u * u
                z = u2 / (2.0 + u2)
                acc = 0.0
                for c in _C24:
                    acc = z * (c + acc)
                return -acc
            r = ad / omega
            if r == 0.0:
                return -1.0
            r2 = r * r
            x = math.sqrt(1.0 + 2.0 * r2)
            br = 6.0 + 3.0 * x * (_LN2 + 2.0 * math.log(r) - 2.0 * math.log(x + 1.0))
            return -1.0 - r2 * br

        @njit(cache=True)
        def _nb_two_tone_loss(delta, omega, series_threshold=DEFAULT_SERIES_THRESHOLD):
            out = np.empty(delta.shape[0], dtype=np.float64)
            for i in range(delta.shape[0]):
                out[i] = _loss_scalar(delta[i], omega[i], series_threshold)
            return out

        @njit(cache=True)
        def _shift_scalar(delta, omega):
            if delta == 0.0:
                if omega == 0.0:
                    return np.nan
                return 0.0
            if omega == 0.0:
                return 0.0
            u = omega / abs(delta)
            if not np.isfinite(u):
                core = 0.0
            else:
                s = math.sqrt(1.0 + 0.5 * u * u)
                core = u / (2.0 * (1.0 + s) * (1.0 + s))
            if delta < 0.0:
                return -core
            return core

        @njit(cache=True)
        def _nb_two_tone_shift_core(delta, omega):
            out = np.empty(delta.shape[0], dtype=np.float64)
            for i in range(delta.shape[0]):
                out[i] = _shift_scalar(delta[i], omega[i])
            return out

        @njit(cache=True)
        def _nb_capelle_loss(d, n_tilde):
            out = np.empty(d.shape[0], dtype=np.float64)
            for i in range(d.shape[0]):
                q = math.sqrt(1.0 + n_tilde[i])
                opq = 1.0 + q
                d2 = d[i] * d[i]
                if np.isinf(d2):
                    out[i] = 1.0
                else:
                    out[i] = (q * d2 + opq * opq) / (q * (d2 + opq * opq))
            return out

        @njit(cache=True)
        def _nb_capelle_shift_core(d, n_tilde):
            out = np.empty(d.shape[0], dtype=np.float64)
            for i in range(d.shape[0]):
                q = math.sqrt(1.0 + n_tilde[i])
                opq = 1.0 + q
                d2 = d[i] * d[i]
                if np.isinf(d2):
                    out[i] = 0.0
                else:
                    out[i] = -0.5 * d[i] * n_tilde[i] / (q * (d2 + opq * opq))
            return out

        @njit(cache=True)
        def _nb_s11(f, f_r, q_loaded, q_ext, amplitude, phase, delay):
            out = np.empty(f.shape[0], dtype=np.complex128)
            two_pi = 2.0 * math.pi
            coupling = 2.0 * q_loaded / q_ext
            for i in range(f.shape[0]):
                x = 2.0 * q_loaded * (f[i] - f_r) / f_r
                resp = 1.0 - coupling / (1.0 + 1j * x)
                ph = phase + two_pi * f[i] * delay
                out[i] = amplitude * (math.cos(ph) + 1j * math.sin(ph)) * resp
            return out

        @njit(cache=True)
        def _nb_stm_inverse_q(n, q_tls0, n_c, beta, inv_q_res, thermal):
            out = np.empty(n.shape[0], dtype=np.float64)
            a = thermal / q_tls0
            for i in range(n.shape[0]):
                out[i] = a / math.sqrt(1.0 + (n[i] / n_c) ** beta) + inv_q_res
            return out

        _NUMBA_IMPL = {
            "two_tone_loss": _nb_two_tone_loss,
            "two_tone_shift_core": _nb_two_tone_shift_core,
            "capelle_loss": _nb_capelle_loss,
            "capelle_shift_core": _nb_capelle_shift_core,
            "s11": _nb_s11,
            "stm_inverse_q": _nb_stm_inverse_q,
        }

USING_NUMBA = _NUMBA_IMPL is not None

_ACTIVE = _NUMBA_IMPL if USING_NUMBA else _NUMPY_IMPL

two_tone_loss = _ACTIVE["two_tone_loss"]
two_tone_shift_core = _ACTIVE["two_tone_shift_core"]
capelle_loss = _ACTIVE["capelle_loss"]
capelle_shift_core = _ACTIVE["capelle_shift_core"]
s11 = _ACTIVE["s11"]
stm_inverse_q = _ACTIVE["stm_inverse_q"]


def implementations():
    """Both kernel sets, for benchmarks and parity tests.

    Returns a dict with keys ``"numpy"`` (always present) and ``"numba"``
    (None when numba is unavailable or disabled by HOLEBURN_NO_NUMBA).
    """
    return {"numpy": _NUMPY_IMPL, "numba": _NUMBA_IMPL}


def warm_up():
    """Trigger JIT compilation of every active kernel on tiny inputs."""
    d = np.array([1.0, -2.0])
    o = np.array([0.5, 3.0])
    two_tone_loss(d, o)
    two_tone_shift_core(d, o)
    capelle_loss(d, o)
    capelle_shift_core(d, o)
    s11(d, 1.0, 10.0, 20.0, 1.0, 0.0, 0.0)
    stm_inverse_q(o, 1e4, 10.0, 1.0, 0.0, 1.0)
