"""File formats: CSV schemas, result/config JSON, atomic writes, SVG plots.

CSV columns are fixed per dataset kind (headers below); floats are written
with 17 significant digits so write -> read -> write round trips are
byte-identical. Optional error columns are left empty when absent. All
writes go through a write-temp-then-rename so partial files never appear.
"""

import json
import os
import tempfile

import numpy as np

from .errors import ConfigError
from .resonator import ReflectionTrace
from .synth import SaturationCurve, TwoToneMap

TRACE_HEADER = ["freq_hz", "re_s11", "im_s11"]
SATURATION_HEADER = ["n", "q_int", "q_int_err"]
TWOTONE_HEADER = ["delta_hz", "n_pump", "inv_q_tls", "inv_q_tls_err", "dfreq_hz", "dfreq_err"]

SCHEMA_VERSION = 1


def fmt_float(x):
    return f"{x:.17g}"


def atomic_write_text(path, text):
    """Write text atomically: temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".holeburn-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def canonical_json(obj):
    """Deterministic JSON text: sorted keys, two-space indent, newline-terminated."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj):
    atomic_write_text(path, canonical_json(obj))


def read_json(path):
    try:
        with open(path, "r") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc


def csv_text(header, columns):
    n = len(columns[0]) if columns else 0
    lines = [",".join(header)]
    for i in range(n):
        cells = []
        for col in columns:
            v = col[i] if col is not None else None
            cells.append("" if v is None else fmt_float(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _read_csv(path, header):
    try:
        with open(path, "r") as fh:
            lines = fh.read().splitlines()
    except OSError:
        raise
    if not lines:
        raise ConfigError(f"{path}: empty file")
    got = lines[0].split(",")
    if got != header:
        raise ConfigError(
            f"{path}: expected header {','.join(header)!r}, got {lines[0]!r}"
        )
    rows = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise ConfigError(f"{path}:{ln}: expected {len(header)} columns, got {len(cells)}")
        try:
            rows.append([float(c) if c != "" else np.nan for c in cells])
        except ValueError as exc:
            raise ConfigError(f"{path}:{ln}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def _optional(col):
    return None if np.all(np.isnan(col)) else col


def write_trace_csv(path, trace: ReflectionTrace):
    cols = [trace.frequencies, trace.s11.real, trace.s11.imag]
    atomic_write_text(path, _csv_text(TRACE_HEADER, cols))


def read_trace_csv(path) -> ReflectionTrace:
    data = _read_csv(path, TRACE_HEADER)
    if np.any(np.isnan(data)):
        raise ConfigError(f"{path}: trace cells must not be empty")
    try:
        return ReflectionTrace(frequencies=data[:, 0], s11=data[:, 1] + 1j * data[:, 2])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_saturation_csv(path, curve: SaturationCurve):
    cols = [curve.n, curve.q_int, curve.q_int_err]
    atomic_write_text(path, _csv_text(SATURATION_HEADER, cols))


def read_saturation_csv(path) -> SaturationCurve:
    data = _read_csv(path, SATURATION_HEADER)
    if np.any(np.isnan(data[:, :2])):
        raise ConfigError(f"{path}: n and q_int cells must not be empty")
    try:
        return SaturationCurve(n=data[:, 0], q_int=data[:, 1], q_int_err=_optional(data[:, 2]))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_twotone_csv(path, tmap: TwoToneMap):
    cols = [
        tmap.delta_hz, tmap.n_pump,
        tmap.inv_q_tls, tmap.inv_q_tls_err,
        tmap.dfreq_hz, tmap.dfreq_err,
    ]
    atomic_write_text(path, _csv_text(TWOTONE_HEADER, cols))


def read_twotone_csv(path, pump_frequency_hz=None, fsr_hz=None, temperature_k=None) -> TwoToneMap:
    data = _read_csv(path, TWOTONE_HEADER)
    required = data[:, [0, 1, 2, 4]]
    if np.any(np.isnan(required)):
        raise ConfigError(f"{path}: delta_hz, n_pump, inv_q_tls and dfreq_hz must not be empty")
    try:
        return TwoToneMap(
            delta_hz=data[:, 0],
            n_pump=data[:, 1],
            inv_q_tls=data[:, 2],
            inv_q_tls_err=_optional(data[:, 3]),
            dfreq_hz=data[:, 4],
            dfreq_err=_optional(data[:, 5]),
            pump_frequency_hz=pump_frequency_hz,
            fsr_hz=fsr_hz,
            temperature_k=temperature_k,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def fit_result_json(model, result, config_echo, extra=None):
    """Self-describing fit document: params, covariance, convergence metadata."""
    names = result.param_names or tuple(f"p{i}" for i in range(len(result.estimates)))
    doc = {
        "model": model,
        "params": {
            name: {"value": float(v), "stderr": float(e)}
            for name, v, e in zip(names, result.estimates, result.stderr)
        },
        "covariance": [[float(v) for v in row] for row in result.covariance],
        "residual_norm": float(result.residual_norm),
        "n_iter": int(result.iterations),
        "converged": bool(result.converged),
        "config_echo": config_echo,
    }
    if extra:
        doc.update(extra)
    return doc


# --------------------------------------------------------------------------
# minimal self-contained SVG line plots (no plotting dependency)
# --------------------------------------------------------------------------

_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def write_svg_lines(path, series, title="", log_x=False, log_y=False, width=640, height=440):
    """Render (x, y, label) series as SVG polylines with a plain frame.

    Non-finite and (on log axes) non-positive points are dropped. This is a
    reporting convenience, not a plotting library.
    """
    margin = 56
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin

    def tx(vals):
        v = np.asarray(vals, dtype=np.float64)
        return np.log10(v) if log_x else v

    def ty(vals):
        v = np.asarray(vals, dtype=np.float64)
        return np.log10(np.abs(v)) if log_y else v

    cleaned = []
    for x, y, label in series:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        keep = np.isfinite(x) & np.isfinite(y)
        if log_x:
            keep &= x > 0
        if log_y:
            keep &= y != 0
        if keep.sum() >= 2:
            cleaned.append((tx(x[keep]), ty(y[keep]), label))
    if not cleaned:
        raise ValueError("nothing to plot")

    all_x = np.concatenate([c[0] for c in cleaned])
    all_y = np.concatenate([c[1] for c in cleaned])
    x0, x1 = float(all_x.min()), float(all_x.max())
    y0, y1 = float(all_y.min()), float(all_y.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(v):
        return margin + (v - x0) / (x1 - x0) * plot_w

    def py(v):
        return height - margin - (v - y0) / (y1 - y0) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#333" stroke-width="1"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="{margin / 2:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{title}</text>'
        )
    for i, (x, y, label) in enumerate(cleaned):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = margin + 16 + 16 * i
        parts.append(
            f'<line x1="{width - margin - 90}" y1="{ly - 4}" x2="{width - margin - 70}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{width - margin - 64}" y="{ly}" font-family="sans-serif" '
            f'font-size="11">{label}</text>'
        )
    parts.append("</svg>")
    atomic_write_text(path, "\n".join(parts) + "\n")
