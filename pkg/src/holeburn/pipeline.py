"""Parameter-extraction pipeline: saturation fit, hole fits, scaling, T2.

The full analysis chain mirrors the experiment: a single-mode saturation
curve pins the saturation exponent and critical phonon number; two-tone
maps are fit per pump power to extract the effective Rabi frequency (or
the intrinsic TLS linewidth in the uniform-coupling model) separately from
the loss and the frequency-shift channels; power-law regression of those
series yields the drive-strength scaling exponent; and the coherence time
follows from the critical phonon number and the single-phonon Rabi
frequency under the stated square-root-scaling assumptions.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .constants import angular, ordinary
from .errors import ConvergenceFailure, InsufficientSpan
from .fitting import (
    FitProblem,
    FitResult,
    PowerLawFit,
    levenberg_marquardt,
    numeric_jacobian,
    powerlaw_fit,
)
from .models import (
    ThermalContext,
    rabi_capelle,
    t2_estimate,
    thermal_factor,
    thermal_factor_at,
    two_tone_shift_rel,
)
from . import _kernels
from .synth import SaturationCurve, TwoToneMap

__all__ = [
    "SATURATION_PARAMS",
    "T2_ASSUMPTIONS",
    "HoleChannelSeries",
    "HoleFitSeries",
    "ScalingExtraction",
    "T2Report",
    "fit_saturation",
    "fit_hole_stm",
    "fit_hole_capelle",
    "extract_scaling",
    "report_t2",
    "tls_saturation_landmark",
]

SATURATION_PARAMS = ("q_tls0", "n_c", "beta", "q_res")

#: Assumptions baked into the coherence-time estimate, in fixed order.
T2_ASSUMPTIONS = ("k=0.5 (forced)", "T2=2*T1")


# --------------------------------------------------------------------------
# single-mode saturation
# --------------------------------------------------------------------------

def _saturation_initial(n, y, th):
    inv_min = float(np.min(y))
    inv_max = float(np.max(y))
    tls0 = max(inv_max - inv_min, 0.1 * inv_max)
    q_tls0 = th / tls0
    q_res = 1.0 / inv_min if inv_min > 0 else 1e12
    target = inv_min + tls0 / math.sqrt(2.0)
    pos = n > 0
    idx = int(np.argmin(np.abs(y[pos] - target)))
    n_c = float(n[pos][idx])
    return q_tls0, n_c, q_res


def fit_saturation(curve: SaturationCurve, ctx: ThermalContext, beta: float | None = None) -> FitResult:
    """Fit the saturation law to an internal-Q curve.

    All four parameters are free unless ``beta`` pins the exponent (its
    stderr is then reported as zero). Raises InsufficientSpan when the
    phonon-number range cannot constrain the knee: either the fitted n_c
    standard error exceeds n_c itself, or the Jacobian column of n_c is
    rank-deficient at the solution (degenerate noiseless curves).
    """
    n = curve.n
    q = curve.q_int
    if n.size < 6:
        raise ValueError(f"saturation fit needs at least 6 points, got {n.size}")
    pos = n[n > 0]
    if pos.size < 2 or pos.max() / pos.min() < 100.0:
        raise ValueError("saturation fit needs n spanning at least 2 decades")

    th = thermal_factor(ctx)
    y = 1.0 / q
    if curve.q_int_err is not None:
        sigma_y = curve.q_int_err / q**2
        weights = 1.0 / sigma_y
    else:
        weights = 1.0 / y

    q_tls0_0, n_c0, q_res0 = _saturation_initial(n, y, th)
    fixed_beta = beta

    def model(q_tls0, n_c, b, q_res):
        return _kernels.stm_inverse_q(n, q_tls0, n_c, b, 1.0 / q_res, th)

    if fixed_beta is None:
        def residual(p):
            return model(p[0], p[1], p[2], p[3]) - y

        problem = FitProblem(
            residual=residual,
            x0=[q_tls0_0, n_c0, 1.0, q_res0],
            transforms=("log",) * 4,
            weights=weights,
        )
        result = levenberg_marquardt(problem)
        result.param_names = SATURATION_PARAMS
    else:
        def residual(p):
            return model(p[0], p[1], fixed_beta, p[2]) - y

        problem = FitProblem(
            residual=residual,
            x0=[q_tls0_0, n_c0, q_res0],
            transforms=("log",) * 3,
            weights=weights,
        )
        partial = levenberg_marquardt(problem)
        result = _embed_fixed_beta(partial, fixed_beta)

    val_nc, err_nc = result.param("n_c")
    if err_nc > val_nc:
        raise InsufficientSpan(
            f"n_c = {val_nc:.4g} has standard error {err_nc:.4g}; "
            "the data do not reach the saturation knee",
            result=result,
        )

    # noiseless degenerate curves: residual variance ~ 0 hides the
    # unconstrained direction, so check the n_c sensitivity directly
    est = dict(zip(result.param_names, result.estimates))

    def log_residual(t):
        return weights * (model(np.exp(t[0]), np.exp(t[1]), est["beta"], np.exp(t[2])) - y)

    t_sol = np.log([est["q_tls0"], est["n_c"], est["q_res"]])
    jac = numeric_jacobian(log_residual, t_sol)
    col_norms = np.linalg.norm(jac, axis=0)
    if col_norms[1] < 1e-8 * col_norms.max():
        raise InsufficientSpan(
            "the model is insensitive to n_c over the measured n range",
            result=result,
        )
    return result


def _embed_fixed_beta(partial: FitResult, beta: float) -> FitResult:
    order = (0, 1, 3)  # q_tls0, n_c, q_res positions in the full vector
    est = np.empty(4)
    err = np.zeros(4)
    cov = np.zeros((4, 4))
    est[2] = beta
    for src, dst in enumerate(order):
        est[dst] = partial.estimates[src]
        err[dst] = partial.stderr[src]
        for src2, dst2 in enumerate(order):
            cov[dst, dst2] = partial.covariance[src, src2]
    return FitResult(
        estimates=est,
        stderr=err,
        covariance=cov,
        residual_norm=partial.residual_norm,
        iterations=partial.iterations,
        converged=partial.converged,
        param_names=SATURATION_PARAMS,
        singular_values=partial.singular_values,
        residual_norm_history=partial.residual_norm_history,
        message=partial.message,
    )


def tls_saturation_landmark(n_c, beta):
    """Pump phonon number where single-mode TLS loss has dropped by 90%."""
    return n_c * 99.0 ** (1.0 / beta)


# --------------------------------------------------------------------------
# two-tone hole fits
# --------------------------------------------------------------------------

@dataclass
class HoleChannelSeries:
    """Per-power estimates extracted from one observable channel."""

    n_pump: np.ndarray
    omega: np.ndarray
    omega_err: np.ndarray
    converged: np.ndarray
    shared: dict
    gamma2: np.ndarray | None = None
    gamma2_err: np.ndarray | None = None
    fit: FitResult | None = None


@dataclass
class HoleFitSeries:
    """Loss- and shift-channel series from one two-tone map."""

    model: str
    loss: HoleChannelSeries
    shift: HoleChannelSeries


class _MapView:
    """Grouped view of a TwoToneMap: rows indexed by pump power."""

    def __init__(self, tmap: TwoToneMap, ctx: ThermalContext):
        self.delta_hz = tmap.delta_hz
        self.n_pump = tmap.n_pump
        self.powers = np.unique(tmap.n_pump)
        self.power_index = np.searchsorted(self.powers, tmap.n_pump)
        self.dw = angular(tmap.delta_hz)
        self.f_probe = ctx.f_r + tmap.delta_hz
        self.th = np.asarray(thermal_factor_at(self.f_probe, ctx.temperature))
        deltas_per_power = np.bincount(self.power_index)
        if deltas_per_power.min() < 3:
            raise ValueError("hole fits need at least 3 detunings per pump power")
        self.loss = tmap.inv_q_tls
        self.loss_w = (
            1.0 / tmap.inv_q_tls_err
            if tmap.inv_q_tls_err is not None
            else np.full(self.loss.shape, 1.0 / np.median(np.abs(self.loss)))
        )
        self.shift = tmap.dfreq_hz
        self.shift_w = (
            1.0 / tmap.dfreq_err
            if tmap.dfreq_err is not None
            else np.full(self.shift.shape, 1.0 / np.median(np.abs(self.shift)))
        )

    def rows_of(self, ip):
        return self.power_index == ip


def _scan_minimum(candidates, ssr):
    values = [ssr(c) for c in candidates]
    return candidates[int(np.argmin(values))]


def _stm_loss_model(view, td, omega_rows):
    return view.th * td * (1.0 + _kernels.two_tone_loss(view.dw, omega_rows))


def _stm_shift_model(view, td, omega_rows):
    return view.f_probe * two_tone_shift_rel(view.dw, omega_rows, td, 1.0) * view.th


def _omega_scan_grid(view):
    scale = np.abs(view.dw)
    lo = 1e-3 * scale.min()
    hi = 1e3 * scale.max()
    return np.geomspace(lo, hi, 121)


def _fit_stm_channel(view, data, weights, model_fn, td_init, tan_delta, per_power, threads):
    """Fit omega per power (plus shared or per-power tan delta) to one channel."""
    powers = view.powers
    npow = powers.size

    def omega_init(ip, td):
        rows = view.rows_of(ip)
        w = weights[rows]
        y = data[rows]

        def ssr(om):
            sub = _SubView(view, rows)
            m = model_fn(sub, td, np.full(rows.sum(), om))
            return float(np.sum((w * (m - y)) ** 2))

        return _scan_minimum(_omega_scan_grid(view), ssr)

    if tan_delta is None and not per_power:
        # joint fit: shared tan delta + one omega per power
        omega0 = [omega_init(ip, td_init) for ip in range(npow)]

        def residual(p):
            om_rows = np.asarray(p)[1 + view.power_index]
            return model_fn(view, p[0], om_rows) - data

        problem = FitProblem(
            residual=residual,
            x0=[td_init] + omega0,
            transforms=("log",) * (1 + npow),
            weights=weights,
        )
        fit = levenberg_marquardt(problem)
        omega = fit.estimates[1:]
        omega_err = fit.stderr[1:]
        shared = {"tan_delta": (float(fit.estimates[0]), float(fit.stderr[0]))}
        flags = np.ones(npow, dtype=bool)
        return HoleChannelSeries(
            n_pump=powers,
            omega=omega,
            omega_err=omega_err,
            converged=flags,
            shared=shared,
            fit=fit,
        )

    # independent per-power fits (fixed or per-power tan delta)
    def fit_one(ip):
        rows = view.rows_of(ip)
        sub = _SubView(view, rows)
        y = data[rows]
        w = weights[rows]
        if tan_delta is not None:
            td_fix = float(tan_delta)

            def residual(p):
                return model_fn(sub, td_fix, np.full(y.size, p[0])) - y

            x0 = [omega_init(ip, td_fix)]
            tf = ("log",)
        else:
            def residual(p):
                return model_fn(sub, p[0], np.full(y.size, p[1])) - y

            x0 = [td_init, omega_init(ip, td_init)]
            tf = ("log", "log")
        problem = FitProblem(residual=residual, x0=x0, transforms=tf, weights=w)
        try:
            return levenberg_marquardt(problem), True
        except ConvergenceFailure as exc:
            return exc.result, False

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(fit_one, range(npow)))
    else:
        outcomes = [fit_one(ip) for ip in range(npow)]

    omega = np.empty(npow)
    omega_err = np.empty(npow)
    flags = np.empty(npow, dtype=bool)
    td_est = []
    for ip, (fit, ok) in enumerate(outcomes):
        flags[ip] = ok
        if tan_delta is not None:
            omega[ip] = fit.estimates[0]
            omega_err[ip] = fit.stderr[0]
        else:
            omega[ip] = fit.estimates[1]
            omega_err[ip] = fit.stderr[1]
            td_est.append((fit.estimates[0], fit.stderr[0]))
    if tan_delta is not None:
        shared = {"tan_delta": (float(tan_delta), 0.0)}
    else:
        vals = np.array([v for v, _ in td_est])
        errs = np.array([e for _, e in td_est])
        shared = {"tan_delta": (float(np.mean(vals)), float(np.mean(errs)))}
    return HoleChannelSeries(
        n_pump=powers,
        omega=omega,
        omega_err=omega_err,
        converged=flags,
        shared=shared,
    )


class _SubView:
    """Row-sliced view with the attributes the channel models read."""

    def __init__(self, view, rows):
        self.dw = view.dw[rows]
        self.f_probe = view.f_probe[rows]
        self.th = view.th[rows]


def _fit_stm_global(view, data, weights, model_fn, td_init, powers):
    from .models import RabiScaling  # local import to avoid cycle at module load

    ln_n = np.log(powers)

    # seed from quick per-power estimates
    per_power = _fit_stm_channel(view, data, weights, model_fn, td_init, None, False, 1)
    good = per_power.converged & (per_power.omega > 0)
    pl = powerlaw_fit(powers[good], per_power.omega[good])
    k0 = min(max(pl.exponent, 0.05), 0.95)

    def residual(p):
        om_rows = p[1] * view.n_pump ** p[2]
        return model_fn(view, p[0], om_rows) - data

    problem = FitProblem(
        residual=residual,
        x0=[per_power.shared["tan_delta"][0], pl.amplitude, k0],
        transforms=("log", "log", "identity"),
        weights=weights,
    )
    fit = levenberg_marquardt(problem)
    fit.param_names = ("tan_delta", "omega0", "k")
    td, omega0, k = fit.estimates
    RabiScaling(omega0=omega0, k=k)  # validates the recovered scaling
    # propagate (omega0, k) covariance onto ln omega(n) = ln omega0 + k ln n
    cov = fit.covariance
    var_ln = (
        cov[1, 1] / omega0**2
        + ln_n**2 * cov[2, 2]
        + 2.0 * ln_n * cov[1, 2] / omega0
    )
    omega = omega0 * powers**k
    omega_err = omega * np.sqrt(np.maximum(var_ln, 0.0))
    return HoleChannelSeries(
        n_pump=powers,
        omega=omega,
        omega_err=omega_err,
        converged=np.ones(powers.size, dtype=bool),
        shared={"tan_delta": (float(td), float(fit.stderr[0]))},
        fit=fit,
    )


def fit_hole_stm(
    tmap: TwoToneMap,
    ctx: ThermalContext,
    mode: str = "per-power",
    tan_delta: float | None = None,
    per_power_tan_delta: bool = False,
    threads: int = 1,
) -> HoleFitSeries:
    """Extract effective Rabi frequencies from a two-tone map (STM profile).

    ``ctx`` holds the pump-mode frequency and temperature; probe-mode
    frequencies and thermal factors are derived per detuning. In
    ``per-power`` mode each pump power gets its own omega while tan delta is
    shared across powers (or fixed via ``tan_delta``, or fit per power with
    ``per_power_tan_delta``). In ``global`` mode a single power law
    omega0 * n**k is fit across all powers. Loss and shift channels are fit
    separately and both series are returned.
    """
    if mode not in ("per-power", "global"):
        raise ValueError(f"mode must be 'per-power' or 'global', got {mode!r}")
    view = _MapView(tmap, ctx)
    td_init_loss = float(np.max(view.loss / view.th))
    peak = float(np.max(np.abs(view.shift)))
    td_init_shift = 24.0 * peak / (math.sqrt(3.0) * float(np.max(view.f_probe * view.th)))

    if mode == "global":
        loss = _fit_stm_global(view, view.loss, view.loss_w, _stm_loss_model, td_init_loss, view.powers)
        shift = _fit_stm_global(view, view.shift, view.shift_w, _stm_shift_model, td_init_shift, view.powers)
    else:
        loss = _fit_stm_channel(
            view, view.loss, view.loss_w, _stm_loss_model,
            td_init_loss, tan_delta, per_power_tan_delta, threads,
        )
        shift = _fit_stm_channel(
            view, view.shift, view.shift_w, _stm_shift_model,
            td_init_shift, tan_delta, per_power_tan_delta, threads,
        )
    return HoleFitSeries(model="stm", loss=loss, shift=shift)


# --------------------------------------------------------------------------
# uniform-coupling (Capelle) hole fits
# --------------------------------------------------------------------------

def _capelle_loss_model(view, n_tilde_rows, gamma0, gamma2_rows):
    d = view.dw / gamma2_rows
    return (gamma0 / angular(view.f_probe)) * _kernels.capelle_loss(d, n_tilde_rows)


def _capelle_shift_model(view, n_tilde_rows, gamma0, gamma2_rows):
    d = view.dw / gamma2_rows
    return ordinary(gamma0 * _kernels.capelle_shift_core(d, n_tilde_rows))


def _fit_capelle_channel(view, data, weights, model_fn, gamma0_init, n_c):
    powers = view.powers
    npow = powers.size
    n_tilde_rows = view.n_pump / n_c
    nt_powers = powers / n_c

    def gamma2_init(ip, g0):
        rows = view.rows_of(ip)
        sub = _SubView(view, rows)
        y = data[rows]
        w = weights[rows]
        nt = n_tilde_rows[rows]

        def ssr(g2):
            m = model_fn(sub, nt, g0, np.full(y.size, g2))
            return float(np.sum((w * (m - y)) ** 2))

        scale = np.abs(view.dw)
        # hole width in detuning is ~ gamma2*(1+sqrt(1+nt)): scan gamma2 so the
        # width sweeps from far below to far above the measured detunings
        width = 1.0 + math.sqrt(1.0 + float(nt[0]))
        candidates = np.geomspace(1e-3 * scale.min() / width, 1e3 * scale.max() / width, 121)
        return _scan_minimum(candidates, ssr)

    gamma2_0 = [gamma2_init(ip, gamma0_init) for ip in range(npow)]

    def residual(p):
        g2_rows = np.asarray(p)[1 + view.power_index]
        return model_fn(view, n_tilde_rows, p[0], g2_rows) - data

    problem = FitProblem(
        residual=residual,
        x0=[gamma0_init] + gamma2_0,
        transforms=("log",) * (1 + npow),
        weights=weights,
    )
    fit = levenberg_marquardt(problem)
    gamma2 = fit.estimates[1:]
    gamma2_err = fit.stderr[1:]
    omega = rabi_capelle(nt_powers, 1.0) * gamma2
    omega_err = rabi_capelle(nt_powers, 1.0) * gamma2_err
    return HoleChannelSeries(
        n_pump=powers,
        omega=np.asarray(omega),
        omega_err=np.asarray(omega_err),
        converged=np.ones(npow, dtype=bool),
        shared={"gamma0": (float(fit.estimates[0]), float(fit.stderr[0]))},
        gamma2=gamma2,
        gamma2_err=gamma2_err,
        fit=fit,
    )


def fit_hole_capelle(tmap: TwoToneMap, n_c: float, ctx: ThermalContext, threads: int = 1) -> HoleFitSeries:
    """Extract per-power TLS linewidths under the uniform-coupling model.

    ``n_c`` comes from the single-mode saturation fit and is held fixed:
    the scaled phonon numbers are not free parameters here. Per power the
    linewidth gamma2 is free with the damping amplitude gamma0 shared; the
    effective Rabi frequency series follows as gamma2*sqrt(1 + n/n_c).
    """
    if not n_c > 0:
        raise ValueError("n_c must be positive")
    view = _MapView(tmap, ctx)
    g0_loss = float(np.max(view.loss * angular(view.f_probe)))
    # shift amplitude: |core| peaks at 0.5*nt/(2 q (1+q)) for each power
    nt = view.powers.max() / n_c
    q = math.sqrt(1.0 + nt)
    core_peak = 0.5 * nt / (2.0 * q * (1.0 + q))
    g0_shift = angular(float(np.max(np.abs(view.shift)))) / core_peak

    loss = _fit_capelle_channel(view, view.loss, view.loss_w, _capelle_loss_model, g0_loss, n_c)
    shift = _fit_capelle_channel(view, view.shift, view.shift_w, _capelle_shift_model, g0_shift, n_c)
    return HoleFitSeries(model="capelle", loss=loss, shift=shift)


# --------------------------------------------------------------------------
# scaling extraction and coherence time
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingExtraction:
    """Power-law fits of the Rabi series, per channel, plus sqrt-n references."""

    loss: PowerLawFit
    shift: PowerLawFit
    loss_sqrt_ref: PowerLawFit
    shift_sqrt_ref: PowerLawFit


def _channel_scaling(channel: HoleChannelSeries):
    good = channel.converged & np.isfinite(channel.omega) & (channel.omega > 0)
    if good.sum() < 3:
        raise ValueError("scaling extraction needs at least 3 converged powers")
    x = channel.n_pump[good]
    y = channel.omega[good]
    err = channel.omega_err[good]
    if np.any(err <= 0):
        err = None
    return (
        powerlaw_fit(x, y, err),
        powerlaw_fit(x, y, err, fixed_exponent=0.5),
    )


def extract_scaling(series: HoleFitSeries) -> ScalingExtraction:
    """Power-law regression of omega vs pump phonon number for both channels."""
    loss_free, loss_ref = _channel_scaling(series.loss)
    shift_free, shift_ref = _channel_scaling(series.shift)
    return ScalingExtraction(
        loss=loss_free, shift=shift_free,
        loss_sqrt_ref=loss_ref, shift_sqrt_ref=shift_ref,
    )


@dataclass(frozen=True)
class T2Report:
    """Coherence-time estimate with the assumptions that produced it."""

    t2_s: float
    omega0: float
    n_c: float
    assumptions: tuple

    def as_dict(self):
        return {
            "t2_s": self.t2_s,
            "omega0_hz": ordinary(self.omega0),
            "n_c": self.n_c,
            "assumptions": list(self.assumptions),
        }


def report_t2(saturation: FitResult, scaling: PowerLawFit) -> T2Report:
    """Coherence time from the saturation knee and the sqrt-n Rabi amplitude.

    ``scaling`` must be the k = 0.5 reference fit (its amplitude is the
    single-phonon Rabi frequency under forced square-root scaling); the
    returned report carries the two assumptions explicitly.
    """
    n_c, _ = saturation.param("n_c")
    omega0 = scaling.amplitude
    return T2Report(
        t2_s=t2_estimate(omega0, n_c),
        omega0=omega0,
        n_c=n_c,
        assumptions=T2_ASSUMPTIONS,
    )
