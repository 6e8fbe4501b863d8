"""Command-line interface: synth, fit and report.

Exit codes are a stable contract: 0 success, 1 I/O errors, 2 validation or
parse errors (including config schema violations), 3 fit failures (no
convergence, no resonance, unconstrained knee) -- fit results are still
written with ``converged: false`` where a partial result exists.

Configs are JSON documents with a ``schema_version`` field; unknown fields
are errors, not warnings. Synth commands write the dataset CSV plus a
``<output stem>.config.json`` sidecar echoing the fully resolved config
(including the effective seed) so any dataset can be regenerated.
"""

import argparse
import math
import sys

import numpy as np

from . import _kernels, formats
from .constants import angular, ordinary
from .errors import (
    ConfigError,
    ConvergenceFailure,
    HoleburnError,
    InsufficientSpan,
    NoResonance,
    NumericalBreakdown,
)
from .models import RabiScaling, STMSaturationParams, ThermalContext, thermal_factor_at, two_tone_shift_rel
from .pipeline import (
    HoleFitSeries,
    extract_scaling,
    fit_hole_capelle,
    fit_hole_stm,
    fit_saturation,
    report_t2,
    tls_saturation_landmark,
)
from .resonator import ModeFit, ModeGeometry, fit_resonance
from .synth import (
    CapelleTwoToneTruth,
    LogGrid,
    SaturationSynthConfig,
    StmTwoToneTruth,
    TraceSynthConfig,
    TwoToneSynthConfig,
    synth_saturation,
    synth_trace,
    synth_twotone,
)

DEFAULT_PUMP_FREQ_HZ = 2.399e9
DEFAULT_TEMPERATURE_K = 0.010


# --------------------------------------------------------------------------
# config object validation
# --------------------------------------------------------------------------

class _Obj:
    """Dict wrapper that type-checks fields and rejects unknown keys."""

    def __init__(self, data, where):
        if not isinstance(data, dict):
            raise ConfigError(f"{where}: expected a JSON object")
        self._data = data
        self._where = where
        self._seen = set()

    def _get(self, key, required, default):
        self._seen.add(key)
        if key not in self._data:
            if required:
                raise ConfigError(f"{self._where}: missing required field '{key}'")
            return default
        return self._data[key]

    def number(self, key, required=True, default=None, nullable=False):
        v = self._get(key, required, default)
        if v is None and (nullable or not required):
            return default if v is None and key not in self._data else None if nullable else default
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{self._where}: field '{key}' must be a number")
        return float(v)

    def integer(self, key, required=True, default=None):
        v = self._get(key, required, default)
        if v is None and not required:
            return default
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{self._where}: field '{key}' must be an integer")
        return int(v)

    def string(self, key, required=True, default=None, choices=None):
        v = self._get(key, required, default)
        if v is None and not required:
            return default
        if not isinstance(v, str):
            raise ConfigError(f"{self._where}: field '{key}' must be a string")
        if choices and v not in choices:
            raise ConfigError(
                f"{self._where}: field '{key}' must be one of {sorted(choices)}, got {v!r}"
            )
        return v

    def int_list(self, key, required=True):
        v = self._get(key, required, None)
        if v is None and not required:
            return None
        if not isinstance(v, list) or not v or not all(
            isinstance(x, int) and not isinstance(x, bool) for x in v
        ):
            raise ConfigError(f"{self._where}: field '{key}' must be a non-empty list of integers")
        return [int(x) for x in v]

    def obj(self, key, required=True):
        v = self._get(key, required, None)
        if v is None and not required:
            return None
        return _Obj(v, f"{self._where}.{key}")

    def finish(self):
        unknown = sorted(set(self._data) - self._seen)
        if unknown:
            raise ConfigError(f"{self._where}: unknown field(s): {', '.join(unknown)}")


def _require_schema(obj: _Obj):
    version = obj.integer("schema_version")
    if version != formats.SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}, expected {formats.SCHEMA_VERSION}")


def _wrap(where, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _grid_from(obj: _Obj, key):
    g = obj.obj(key)
    grid = _wrap(key, LogGrid, g.number("start"), g.number("stop"), g.integer("count"))
    g.finish()
    return grid


def _parse_saturation_config(doc, where):
    top = _Obj(doc, where)
    _require_schema(top)
    kind = top.string("kind", choices={"saturation"})
    p = top.obj("params")
    q_res = p.number("q_res", required=False, nullable=True)
    params = _wrap(
        "params", STMSaturationParams,
        q_tls0=p.number("q_tls0"), n_c=p.number("n_c"),
        beta=p.number("beta"), q_res=q_res,
    )
    p.finish()
    cfg = _wrap(where, SaturationSynthConfig,
        params=params,
        f_r_hz=top.number("f_r_hz"),
        temperature_k=top.number("temperature_k"),
        n_grid=_grid_from(top, "n_grid"),
        noise_fraction=top.number("noise_fraction", required=False, default=0.0),
        seed=top.integer("seed"),
    )
    top.finish()
    return kind, cfg


def _parse_twotone_config(doc, where):
    top = _Obj(doc, where)
    _require_schema(top)
    kind = top.string("kind", choices={"twotone"})
    model = top.string("model", choices={"stm", "capelle"})
    stm = capelle = None
    if model == "stm":
        s = top.obj("stm")
        stm = _wrap("stm", StmTwoToneTruth,
            tan_delta=s.number("tan_delta"),
            rabi=_wrap("stm", RabiScaling, omega0=angular(s.number("omega0_hz")), k=s.number("k")),
        )
        s.finish()
    else:
        c = top.obj("capelle")
        capelle = _wrap("capelle", CapelleTwoToneTruth,
            gamma0=angular(c.number("gamma0_hz")),
            gamma2_0=angular(c.number("gamma2_0_hz")),
            n_c=c.number("n_c"),
            gamma2_exponent=c.number("gamma2_exponent", required=False, default=0.0),
        )
        c.finish()
    fsr_hz = top.number("fsr_hz")
    geometry = None
    g = top.obj("geometry", required=False)
    if g is not None:
        geometry = _wrap("geometry", ModeGeometry,
            fsr=fsr_hz,
            stopband_center=g.number("stopband_center_hz"),
            stopband_width=g.number("stopband_width_hz"),
            mode_count=g.integer("mode_count"),
        )
        g.finish()
    cfg = _wrap(where, TwoToneSynthConfig,
        pump_frequency_hz=top.number("pump_frequency_hz"),
        fsr_hz=fsr_hz,
        temperature_k=top.number("temperature_k"),
        detuning_multiples=tuple(top.int_list("detuning_multiples")),
        n_grid=_grid_from(top, "n_grid"),
        stm=stm,
        capelle=capelle,
        noise_fraction=top.number("noise_fraction", required=False, default=0.0),
        seed=top.integer("seed"),
        geometry=geometry,
    )
    top.finish()
    return kind, cfg


def _parse_trace_config(doc, where):
    top = _Obj(doc, where)
    _require_schema(top)
    kind = top.string("kind", choices={"trace"})
    m = top.obj("mode")
    mode = _wrap("mode", ModeFit,
        f_r=m.number("f_r_hz"),
        q_int=m.number("q_int"),
        q_ext=m.number("q_ext"),
        amplitude=m.number("amplitude", required=False, default=1.0),
        phase=m.number("phase_rad", required=False, default=0.0),
        delay=m.number("delay_s", required=False, default=0.0),
    )
    m.finish()
    cfg = _wrap(where, TraceSynthConfig,
        mode=mode,
        span_linewidths=top.number("span_linewidths", required=False, default=20.0),
        points=top.integer("points", required=False, default=801),
        sigma=top.number("sigma", required=False, default=0.0),
        seed=top.integer("seed"),
    )
    top.finish()
    return kind, cfg


def _echo_saturation(cfg: SaturationSynthConfig):
    return {
        "schema_version": formats.SCHEMA_VERSION,
        "kind": "saturation",
        "params": {
            "q_tls0": cfg.params.q_tls0,
            "n_c": cfg.params.n_c,
            "beta": cfg.params.beta,
            "q_res": cfg.params.q_res,
        },
        "f_r_hz": cfg.f_r_hz,
        "temperature_k": cfg.temperature_k,
        "n_grid": {"start": cfg.n_grid.start, "stop": cfg.n_grid.stop, "count": cfg.n_grid.count},
        "noise_fraction": cfg.noise_fraction,
        "seed": cfg.seed,
    }


def _echo_twotone(cfg: TwoToneSynthConfig):
    doc = {
        "schema_version": formats.SCHEMA_VERSION,
        "kind": "twotone",
        "model": cfg.model,
        "pump_frequency_hz": cfg.pump_frequency_hz,
        "fsr_hz": cfg.fsr_hz,
        "temperature_k": cfg.temperature_k,
        "detuning_multiples": list(cfg.detuning_multiples),
        "n_grid": {"start": cfg.n_grid.start, "stop": cfg.n_grid.stop, "count": cfg.n_grid.count},
        "noise_fraction": cfg.noise_fraction,
        "seed": cfg.seed,
    }
    if cfg.stm is not None:
        doc["stm"] = {
            "tan_delta": cfg.stm.tan_delta,
            "omega0_hz": ordinary(cfg.stm.rabi.omega0),
            "k": cfg.stm.rabi.k,
        }
    else:
        doc["capelle"] = {
            "gamma0_hz": ordinary(cfg.capelle.gamma0),
            "gamma2_0_hz": ordinary(cfg.capelle.gamma2_0),
            "n_c": cfg.capelle.n_c,
            "gamma2_exponent": cfg.capelle.gamma2_exponent,
        }
    if cfg.geometry is not None:
        doc["geometry"] = {
            "stopband_center_hz": cfg.geometry.stopband_center,
            "stopband_width_hz": cfg.geometry.stopband_width,
            "mode_count": cfg.geometry.mode_count,
        }
    return doc


def _echo_trace(cfg: TraceSynthConfig):
    return {
        "schema_version": formats.SCHEMA_VERSION,
        "kind": "trace",
        "mode": {
            "f_r_hz": cfg.mode.f_r,
            "q_int": cfg.mode.q_int,
            "q_ext": cfg.mode.q_ext,
            "amplitude": cfg.mode.amplitude,
            "phase_rad": cfg.mode.phase,
            "delay_s": cfg.mode.delay,
        },
        "span_linewidths": cfg.span_linewidths,
        "points": cfg.points,
        "sigma": cfg.sigma,
        "seed": cfg.seed,
    }


def _sidecar_path(output):
    stem = output[:-4] if output.endswith(".csv") else output
    return stem + ".config.json"


def cmd_synth(args):
    doc = formats.read_json(args.config)
    parsers = {
        "saturation": _parse_saturation_config,
        "twotone": _parse_twotone_config,
        "trace": _parse_trace_config,
    }
    _, cfg = parsers[args.kind](doc, args.config)
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)

    if args.kind == "saturation":
        curve = synth_saturation(cfg)
        formats.write_saturation_csv(args.output, curve)
        echo = _echo_saturation(cfg)
    elif args.kind == "twotone":
        tmap = synth_twotone(cfg, threads=args.threads)
        formats.write_twotone_csv(args.output, tmap)
        echo = _echo_twotone(cfg)
    else:
        trace = synth_trace(cfg)
        formats.write_trace_csv(args.output, trace)
        echo = _echo_trace(cfg)
    formats.write_json(_sidecar_path(args.output), echo)
    return 0


# --------------------------------------------------------------------------
# fit commands
# --------------------------------------------------------------------------

def _series_doc(channel):
    rows = []
    for i in range(channel.n_pump.size):
        row = {
            "n_pump": float(channel.n_pump[i]),
            "omega_hz": ordinary(float(channel.omega[i])),
            "omega_err_hz": ordinary(float(channel.omega_err[i])),
            "converged": bool(channel.converged[i]),
        }
        if channel.gamma2 is not None:
            row["gamma2_hz"] = ordinary(float(channel.gamma2[i]))
            row["gamma2_err_hz"] = ordinary(float(channel.gamma2_err[i]))
        rows.append(row)
    return rows


def _channel_doc(channel, shared_in_hz=()):
    params = {}
    for name, (value, err) in channel.shared.items():
        if name in shared_in_hz:
            params[name + "_hz"] = {"value": ordinary(value), "stderr": ordinary(err)}
        else:
            params[name] = {"value": float(value), "stderr": float(err)}
    doc = {"params": params}
    if channel.fit is not None:
        doc["residual_norm"] = float(channel.fit.residual_norm)
        doc["n_iter"] = int(channel.fit.iterations)
        doc["converged"] = bool(channel.fit.converged)
    else:
        doc["converged"] = bool(np.all(channel.converged))
    return doc


def _hole_fit_doc(model, series: HoleFitSeries, config_echo):
    shared_in_hz = ("gamma0",) if model == "hole-capelle" else ()
    loss_doc = _channel_doc(series.loss, shared_in_hz)
    shift_doc = _channel_doc(series.shift, shared_in_hz)
    params = {}
    for tag, ch in (("loss", loss_doc), ("shift", shift_doc)):
        for name, value in ch["params"].items():
            params[f"{name}_{tag}"] = value
    n_iter = sum(
        ch.fit.iterations if ch.fit is not None else 0 for ch in (series.loss, series.shift)
    )
    residual_norm = math.hypot(
        series.loss.fit.residual_norm if series.loss.fit else 0.0,
        series.shift.fit.residual_norm if series.shift.fit else 0.0,
    )
    return {
        "model": model,
        "params": params,
        "covariance": [],
        "residual_norm": residual_norm,
        "n_iter": n_iter,
        "converged": bool(loss_doc["converged"] and shift_doc["converged"]),
        "config_echo": config_echo,
        "channels": {"loss": loss_doc, "shift": shift_doc},
        "series": {"loss": _series_doc(series.loss), "shift": _series_doc(series.shift)},
    }


def _write_failed_fit(args, model, config_echo, exc):
    result = getattr(exc, "result", None)
    if result is not None:
        doc = formats.fit_result_json(model, result, config_echo)
        doc["converged"] = False
        doc["error"] = str(exc)
        formats.write_json(args.output, doc)


def cmd_fit(args):
    if args.kind == "resonance":
        trace = formats.read_trace_csv(args.input)
        echo = {"command": "fit resonance", "input": args.input}
        try:
            result = fit_resonance(trace)
        except (ConvergenceFailure, NumericalBreakdown) as exc:
            _write_failed_fit(args, "resonance", echo, exc)
            raise
        formats.write_json(args.output, formats.fit_result_json("resonance", result, echo))
        return 0

    if args.kind == "saturation":
        curve = formats.read_saturation_csv(args.input)
        ctx = ThermalContext(args.f_r_hz, args.temperature_k)
        echo = {
            "command": "fit saturation",
            "input": args.input,
            "f_r_hz": args.f_r_hz,
            "temperature_k": args.temperature_k,
            "fix_beta": bool(args.fix_beta),
        }
        try:
            result = fit_saturation(curve, ctx, beta=1.0 if args.fix_beta else None)
        except (ConvergenceFailure, InsufficientSpan, NumericalBreakdown) as exc:
            _write_failed_fit(args, "saturation", echo, exc)
            raise
        doc = formats.fit_result_json("saturation", result, echo)
        n_c = result.param("n_c")[0]
        beta = result.param("beta")[0]
        doc["n_s_90pct"] = tls_saturation_landmark(n_c, beta)
        formats.write_json(args.output, doc)
        return 0

    # hole fits share the map reading and thermal context
    tmap = formats.read_twotone_csv(
        args.input, pump_frequency_hz=args.pump_freq_hz, temperature_k=args.temperature_k
    )
    ctx = ThermalContext(args.pump_freq_hz, args.temperature_k)
    if args.kind == "hole-stm":
        echo = {
            "command": "fit hole-stm",
            "input": args.input,
            "pump_freq_hz": args.pump_freq_hz,
            "temperature_k": args.temperature_k,
            "mode": args.mode,
            "per_power_tan_delta": bool(args.per_power_tan_delta),
            "tan_delta": args.tan_delta,
        }
        series = fit_hole_stm(
            tmap, ctx, mode=args.mode,
            tan_delta=args.tan_delta,
            per_power_tan_delta=args.per_power_tan_delta,
            threads=args.threads,
        )
        doc = _hole_fit_doc("hole-stm", series, echo)
        if args.mode == "global":
            for tag, ch in (("loss", series.loss), ("shift", series.shift)):
                fit = ch.fit
                doc["params"][f"omega0_hz_{tag}"] = {
                    "value": ordinary(fit.estimates[1]), "stderr": ordinary(fit.stderr[1]),
                }
                doc["params"][f"k_{tag}"] = {
                    "value": float(fit.estimates[2]), "stderr": float(fit.stderr[2]),
                }
        formats.write_json(args.output, doc)
        return 0

    # hole-capelle
    if args.n_c is None:
        raise ConfigError(
            "--n-c is required for hole-capelle: the scaled phonon numbers are "
            "not free parameters of this fit; supply the critical phonon number "
            "extracted from the single-mode saturation fit"
        )
    echo = {
        "command": "fit hole-capelle",
        "input": args.input,
        "pump_freq_hz": args.pump_freq_hz,
        "temperature_k": args.temperature_k,
        "n_c": args.n_c,
    }
    series = fit_hole_capelle(tmap, args.n_c, ctx, threads=args.threads)
    formats.write_json(args.output, _hole_fit_doc("hole-capelle", series, echo))
    return 0


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

def _load_series_rows(doc, channel):
    rows = doc["series"][channel]
    n = np.array([r["n_pump"] for r in rows])
    omega = np.array([angular(r["omega_hz"]) for r in rows])
    err = np.array([angular(r["omega_err_hz"]) for r in rows])
    flags = np.array([r["converged"] for r in rows], dtype=bool)
    return n, omega, err, flags


def _channel_from_doc(doc, channel):
    from .pipeline import HoleChannelSeries

    n, omega, err, flags = _load_series_rows(doc, channel)
    rows = doc["series"][channel]
    gamma2 = gamma2_err = None
    if rows and "gamma2_hz" in rows[0]:
        gamma2 = np.array([angular(r["gamma2_hz"]) for r in rows])
        gamma2_err = np.array([angular(r["gamma2_err_hz"]) for r in rows])
    shared = {}
    for name, payload in doc["channels"][channel]["params"].items():
        if name.endswith("_hz"):
            shared[name[:-3]] = (angular(payload["value"]), angular(payload["stderr"]))
        else:
            shared[name] = (payload["value"], payload["stderr"])
    return HoleChannelSeries(
        n_pump=n, omega=omega, omega_err=err, converged=flags,
        shared=shared, gamma2=gamma2, gamma2_err=gamma2_err,
    )


def _series_from_doc(doc):
    model = "stm" if doc["model"] == "hole-stm" else "capelle"
    return HoleFitSeries(
        model=model,
        loss=_channel_from_doc(doc, "loss"),
        shift=_channel_from_doc(doc, "shift"),
    )


def _report_saturation(outdir, sat_doc, curve, summary, svg):
    import os

    params = {k: v["value"] for k, v in sat_doc["params"].items()}
    th = thermal_factor_at(sat_doc["config_echo"]["f_r_hz"], sat_doc["config_echo"]["temperature_k"])
    q_res = params["q_res"]
    model_inv = _kernels.stm_inverse_q(
        curve.n, params["q_tls0"], params["n_c"], params["beta"],
        0.0 if q_res <= 0 or not np.isfinite(q_res) else 1.0 / q_res, float(th),
    )
    q_model = 1.0 / model_inv
    formats.atomic_write_text(
        os.path.join(outdir, "saturation_overlay.csv"),
        formats._csv_text(
            ["n", "q_int_data", "q_int_err", "q_int_model"],
            [curve.n, curve.q_int, curve.q_int_err, q_model],
        ),
    )
    summary["beta"] = sat_doc["params"]["beta"]
    summary["n_c"] = sat_doc["params"]["n_c"]
    summary["q_tls0"] = sat_doc["params"]["q_tls0"]
    summary["q_res"] = sat_doc["params"]["q_res"]
    summary["n_s_90pct"] = tls_saturation_landmark(params["n_c"], params["beta"])
    if svg:
        formats.write_svg_lines(
            os.path.join(outdir, "saturation.svg"),
            [(curve.n, curve.q_int, "data"), (curve.n, q_model, "model")],
            title="internal Q vs pump phonon number",
            log_x=True, log_y=True,
        )


def _hole_map_models(doc, series, tmap):
    echo = doc["config_echo"]
    f_pump = echo["pump_freq_hz"]
    temp = echo["temperature_k"]
    f_probe = f_pump + tmap.delta_hz
    th = np.asarray(thermal_factor_at(f_probe, temp))
    dw = angular(tmap.delta_hz)
    powers = series.loss.n_pump
    idx = np.searchsorted(powers, tmap.n_pump)
    if series.model == "stm":
        td_loss = series.loss.shared["tan_delta"][0]
        td_shift = series.shift.shared["tan_delta"][0]
        om_loss = series.loss.omega[idx]
        om_shift = series.shift.omega[idx]
        loss_model = th * td_loss * (1.0 + _kernels.two_tone_loss(dw, om_loss))
        shift_model = f_probe * np.asarray(two_tone_shift_rel(dw, om_shift, td_shift, 1.0)) * th
    else:
        g0_loss = series.loss.shared["gamma0"][0]
        g0_shift = series.shift.shared["gamma0"][0]
        n_c = echo["n_c"]
        nt = tmap.n_pump / n_c
        loss_model = (g0_loss / angular(f_probe)) * _kernels.capelle_loss(
            dw / series.loss.gamma2[idx], nt
        )
        shift_model = ordinary(
            g0_shift * _kernels.capelle_shift_core(dw / series.shift.gamma2[idx], nt)
        )
    return loss_model, shift_model


def cmd_report(args):
    import os

    inputs = [args.saturation_data, args.saturation_fit, args.twotone_data, args.hole_fit, args.capelle_fit]
    if all(v is None for v in inputs):
        raise ConfigError("report needs at least one input (see --help)")
    if (args.saturation_data is None) != (args.saturation_fit is None):
        raise ConfigError("--saturation-data and --saturation-fit must be given together")
    if args.twotone_data is not None and args.hole_fit is None and args.capelle_fit is None:
        raise ConfigError("--twotone-data needs --hole-fit or --capelle-fit for model overlays")

    os.makedirs(args.output_dir, exist_ok=True)
    summary = {"schema_version": formats.SCHEMA_VERSION}

    sat_doc = None
    if args.saturation_fit is not None:
        sat_doc = formats.read_json(args.saturation_fit)
        curve = formats.read_saturation_csv(args.saturation_data)
        _report_saturation(args.output_dir, sat_doc, curve, summary, args.svg)

    hole_doc = None
    hole_series = None
    if args.hole_fit is not None:
        hole_doc = formats.read_json(args.hole_fit)
        if hole_doc.get("model") != "hole-stm":
            raise ConfigError("--hole-fit must be a hole-stm fit document")
        hole_series = _series_from_doc(hole_doc)
        if sat_doc is not None:
            t_sat = sat_doc["config_echo"]["temperature_k"]
            t_hole = hole_doc["config_echo"]["temperature_k"]
            if t_sat != t_hole:
                raise ConfigError(
                    f"inconsistent inputs: saturation fit at {t_sat} K, hole fit at {t_hole} K"
                )

    capelle_doc = None
    capelle_series = None
    if args.capelle_fit is not None:
        capelle_doc = formats.read_json(args.capelle_fit)
        if capelle_doc.get("model") != "hole-capelle":
            raise ConfigError("--capelle-fit must be a hole-capelle fit document")
        capelle_series = _series_from_doc(capelle_doc)

    if args.twotone_data is not None:
        primary_doc = hole_doc if hole_doc is not None else capelle_doc
        primary_series = hole_series if hole_series is not None else capelle_series
        tmap = formats.read_twotone_csv(args.twotone_data)
        if not np.array_equal(np.unique(tmap.n_pump), primary_series.loss.n_pump):
            raise ConfigError(
                "inconsistent inputs: the two-tone data power grid does not match the hole fit"
            )
        loss_model, shift_model = _hole_map_models(primary_doc, primary_series, tmap)
        formats.atomic_write_text(
            os.path.join(args.output_dir, "hole_map.csv"),
            formats._csv_text(
                [
                    "delta_hz", "n_pump",
                    "inv_q_tls_data", "inv_q_tls_err", "inv_q_tls_model",
                    "dfreq_hz_data", "dfreq_err", "dfreq_hz_model",
                ],
                [
                    tmap.delta_hz, tmap.n_pump,
                    tmap.inv_q_tls, tmap.inv_q_tls_err, loss_model,
                    tmap.dfreq_hz, tmap.dfreq_err, shift_model,
                ],
            ),
        )

    if hole_series is not None:
        scaling = extract_scaling(hole_series)
        powers = hole_series.loss.n_pump
        sqrt_line = scaling.loss_sqrt_ref.amplitude * np.sqrt(powers)
        formats.atomic_write_text(
            os.path.join(args.output_dir, "scaling.csv"),
            formats._csv_text(
                [
                    "n_pump",
                    "omega_loss_hz", "omega_loss_err_hz",
                    "omega_shift_hz", "omega_shift_err_hz",
                    "omega_sqrt_ref_hz",
                ],
                [
                    powers,
                    ordinary(hole_series.loss.omega), ordinary(hole_series.loss.omega_err),
                    ordinary(hole_series.shift.omega), ordinary(hole_series.shift.omega_err),
                    ordinary(sqrt_line),
                ],
            ),
        )
        summary["scaling"] = {
            "loss": {
                "k": scaling.loss.exponent,
                "k_stderr": scaling.loss.exponent_stderr,
                "omega0_hz": ordinary(scaling.loss.amplitude),
                "r_squared": scaling.loss.r_squared,
            },
            "shift": {
                "k": scaling.shift.exponent,
                "k_stderr": scaling.shift.exponent_stderr,
                "omega0_hz": ordinary(scaling.shift.amplitude),
                "r_squared": scaling.shift.r_squared,
            },
            "sqrt_ref_omega0_hz": {
                "loss": ordinary(scaling.loss_sqrt_ref.amplitude),
                "shift": ordinary(scaling.shift_sqrt_ref.amplitude),
            },
        }
        if args.svg:
            formats.write_svg_lines(
                os.path.join(args.output_dir, "scaling.svg"),
                [
                    (powers, ordinary(hole_series.loss.omega), "loss"),
                    (powers, ordinary(hole_series.shift.omega), "shift"),
                    (powers, ordinary(sqrt_line), "sqrt(n) ref"),
                ],
                title="effective Rabi frequency vs pump phonon number",
                log_x=True, log_y=True,
            )
        if sat_doc is not None:
            sat_n = formats.read_saturation_csv(args.saturation_data).n
            if powers.min() > sat_n.max() or powers.max() < sat_n[sat_n > 0].min():
                raise ConfigError(
                    "inconsistent inputs: saturation and two-tone power grids do not overlap"
                )
            from .fitting import FitResult

            n_c = sat_doc["params"]["n_c"]["value"]
            sat_result = FitResult(
                estimates=np.array([sat_doc["params"][k]["value"] for k in ("q_tls0", "n_c", "beta", "q_res")]),
                stderr=np.zeros(4), covariance=np.zeros((4, 4)),
                residual_norm=0.0, iterations=0, converged=True,
                param_names=("q_tls0", "n_c", "beta", "q_res"),
            )
            t2 = report_t2(sat_result, scaling.loss_sqrt_ref)
            summary["t2"] = t2.as_dict()

    if capelle_series is not None:
        powers = capelle_series.loss.n_pump
        formats.atomic_write_text(
            os.path.join(args.output_dir, "gamma2.csv"),
            formats._csv_text(
                [
                    "n_pump",
                    "gamma2_loss_hz", "gamma2_loss_err_hz",
                    "gamma2_shift_hz", "gamma2_shift_err_hz",
                ],
                [
                    powers,
                    ordinary(capelle_series.loss.gamma2), ordinary(capelle_series.loss.gamma2_err),
                    ordinary(capelle_series.shift.gamma2), ordinary(capelle_series.shift.gamma2_err),
                ],
            ),
        )
        summary["gamma2_scaling"] = {}
        for tag, ch in (("loss", capelle_series.loss), ("shift", capelle_series.shift)):
            pl = None
            good = ch.converged & (ch.gamma2 > 0)
            if good.sum() >= 3:
                err = ch.gamma2_err[good]
                pl = (
                    None
                    if np.any(~np.isfinite(err)) else
                    __import__("holeburn.fitting", fromlist=["powerlaw_fit"]).powerlaw_fit(
                        ch.n_pump[good], ch.gamma2[good], err if np.all(err > 0) else None
                    )
                )
            if pl is not None:
                summary["gamma2_scaling"][tag] = {
                    "exponent": pl.exponent,
                    "exponent_stderr": pl.exponent_stderr,
                    "gamma2_0_hz": ordinary(pl.amplitude),
                }

    formats.write_json(os.path.join(args.output_dir, "summary.json"), summary)
    return 0


# --------------------------------------------------------------------------
# argument parsing and entry point
# --------------------------------------------------------------------------

def _add_thermal_args(p, pump=False):
    if pump:
        p.add_argument("--pump-freq-hz", type=float, default=DEFAULT_PUMP_FREQ_HZ,
                       help="pump mode frequency (default %(default)s)")
    else:
        p.add_argument("--f-r-hz", type=float, default=DEFAULT_PUMP_FREQ_HZ,
                       help="resonance frequency for the thermal factor (default %(default)s)")
    p.add_argument("--temperature-k", type=float, default=DEFAULT_TEMPERATURE_K,
                   help="bath temperature (default %(default)s)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="holeburn",
        description="TLS spectral hole-burning: synthetic data, fits and reports",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate synthetic datasets")
    p_synth.add_argument("kind", choices=["saturation", "twotone", "trace"])
    p_synth.add_argument("--config", required=True, help="JSON config document")
    p_synth.add_argument("--output", required=True, help="output CSV path")
    p_synth.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_synth.add_argument("--threads", type=int, default=1)
    p_synth.set_defaults(func=cmd_synth)

    p_fit = sub.add_parser("fit", help="fit a dataset")
    fit_sub = p_fit.add_subparsers(dest="kind", required=True)

    p_res = fit_sub.add_parser("resonance")
    p_res.add_argument("--input", required=True)
    p_res.add_argument("--output", required=True)
    p_res.set_defaults(func=cmd_fit, kind="resonance")

    p_sat = fit_sub.add_parser("saturation")
    p_sat.add_argument("--input", required=True)
    p_sat.add_argument("--output", required=True)
    p_sat.add_argument("--fix-beta", action="store_true", help="pin the exponent to 1")
    _add_thermal_args(p_sat)
    p_sat.set_defaults(func=cmd_fit, kind="saturation")

    p_hstm = fit_sub.add_parser("hole-stm")
    p_hstm.add_argument("--input", required=True)
    p_hstm.add_argument("--output", required=True)
    p_hstm.add_argument("--mode", choices=["per-power", "global"], default="per-power")
    p_hstm.add_argument("--per-power-tan-delta", action="store_true",
                        help="fit tan delta per power instead of shared")
    p_hstm.add_argument("--tan-delta", type=float, default=None,
                        help="hold tan delta fixed at this value")
    p_hstm.add_argument("--threads", type=int, default=1)
    _add_thermal_args(p_hstm, pump=True)
    p_hstm.set_defaults(func=cmd_fit, kind="hole-stm")

    p_hcap = fit_sub.add_parser("hole-capelle")
    p_hcap.add_argument("--input", required=True)
    p_hcap.add_argument("--output", required=True)
    p_hcap.add_argument("--n-c", type=float, default=None,
                        help="critical phonon number from the saturation fit (required)")
    p_hcap.add_argument("--threads", type=int, default=1)
    _add_thermal_args(p_hcap, pump=True)
    p_hcap.set_defaults(func=cmd_fit, kind="hole-capelle")

    p_rep = sub.add_parser("report", help="emit plot-ready tables and a summary")
    p_rep.add_argument("--saturation-data")
    p_rep.add_argument("--saturation-fit")
    p_rep.add_argument("--twotone-data")
    p_rep.add_argument("--hole-fit")
    p_rep.add_argument("--capelle-fit")
    p_rep.add_argument("--output-dir", required=True)
    p_rep.add_argument("--svg", action="store_true", help="also render SVG line plots")
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceFailure, InsufficientSpan, NoResonance, NumericalBreakdown) as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
