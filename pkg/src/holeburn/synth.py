"""Deterministic synthetic datasets for every experiment shape in the toolkit.

All generators are pure functions of their configuration. Randomness comes
from counter-based Philox streams keyed by ``(seed, domain_tag, indices)``
through ``numpy.random.SeedSequence``, so

* identical configs produce bitwise-identical outputs,
* every (detuning, power) cell of a two-tone map owns its own stream and
  the result is independent of generation order (cells may be produced in
  parallel),
* outputs are emitted in canonical order (detuning ascending, then power).

Noise conventions: scalar observables (Q, TLS loss) carry multiplicative
Gaussian noise ``value * (1 + fraction * z)``; frequency shifts carry
additive Gaussian noise with sigma = fraction * RMS of the noiseless shift
over the grid; traces carry additive complex Gaussian noise with the given
sigma per quadrature.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .constants import angular, ordinary
from .models import (
    RabiScaling,
    STMSaturationParams,
    ThermalContext,
    rabi_from_phonons,
    stm_inverse_q,
    thermal_factor_at,
    two_tone_shift_rel,
)
from .resonator import ModeFit, ModeGeometry, ReflectionTrace, model_s11

__all__ = [
    "LogGrid",
    "StmTwoToneTruth",
    "CapelleTwoToneTruth",
    "SaturationSynthConfig",
    "TwoToneSynthConfig",
    "TraceSynthConfig",
    "SaturationCurve",
    "TwoToneMap",
    "synth_saturation",
    "synth_twotone",
    "synth_trace",
]

# domain tags for RNG stream splitting
_TAG_SATURATION = 1
_TAG_TWOTONE = 2
_TAG_TRACE = 3


def _cell_rng(seed, tag, *indices):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, tag) + indices)))


@dataclass(frozen=True)
class LogGrid:
    """Log-spaced grid given by endpoints and point count."""

    start: float
    stop: float
    count: int

    def __post_init__(self):
        if not 0 < self.start < self.stop:
            raise ValueError("need 0 < start < stop")
        if self.count < 2:
            raise ValueError("grid needs at least 2 points")

    def values(self):
        return np.geomspace(self.start, self.stop, self.count)


@dataclass(frozen=True)
class StmTwoToneTruth:
    """Ground truth for an STM-profile two-tone map.

    The unpumped TLS loss baseline is thermal_factor * tan_delta, i.e. the
    zero-power TLS quality factor is 1/tan_delta.
    """

    tan_delta: float
    rabi: RabiScaling

    def __post_init__(self):
        if not self.tan_delta > 0:
            raise ValueError("tan_delta must be positive")


@dataclass(frozen=True)
class CapelleTwoToneTruth:
    """Ground truth for a uniform-coupling two-tone map.

    ``gamma2_0``/``gamma2_exponent`` give the per-power intrinsic linewidth
    gamma2(n) = gamma2_0 * n**gamma2_exponent (rad/s); the exponent defaults
    to zero, a power-independent linewidth. ``n_c`` scales pump powers to
    n_tilde. The loss baseline is gamma0/omega_probe.
    """

    gamma0: float
    gamma2_0: float
    n_c: float
    gamma2_exponent: float = 0.0

    def __post_init__(self):
        if not self.gamma0 > 0 or not self.gamma2_0 > 0:
            raise ValueError("gamma0 and gamma2_0 must be positive")
        if not self.n_c > 0:
            raise ValueError("n_c must be positive")

    def gamma2(self, n):
        return self.gamma2_0 * np.asarray(n, dtype=np.float64) ** self.gamma2_exponent


@dataclass(frozen=True)
class SaturationSynthConfig:
    params: STMSaturationParams
    f_r_hz: float
    temperature_k: float
    n_grid: LogGrid
    noise_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        ThermalContext(self.f_r_hz, self.temperature_k)  # validates
        if self.noise_fraction < 0:
            raise ValueError("noise_fraction must be >= 0")


@dataclass(frozen=True)
class TwoToneSynthConfig:
    pump_frequency_hz: float
    fsr_hz: float
    temperature_k: float
    detuning_multiples: tuple
    n_grid: LogGrid
    stm: StmTwoToneTruth | None = None
    capelle: CapelleTwoToneTruth | None = None
    noise_fraction: float = 0.0
    seed: int = 0
    geometry: ModeGeometry | None = None

    def __post_init__(self):
        ThermalContext(self.pump_frequency_hz, self.temperature_k)
        if not self.fsr_hz > 0:
            raise ValueError("fsr_hz must be positive")
        mults = tuple(self.detuning_multiples)
        if len(mults) == 0:
            raise ValueError("detuning grid must not be empty")
        for m in mults:
            if int(m) != m or m == 0:
                raise ValueError(f"detuning multiples must be nonzero integers, got {m}")
        if len(set(mults)) != len(mults):
            raise ValueError("detuning multiples must be unique")
        if (self.stm is None) == (self.capelle is None):
            raise ValueError("exactly one of stm/capelle ground truth is required")
        if self.noise_fraction < 0:
            raise ValueError("noise_fraction must be >= 0")
        object.__setattr__(self, "detuning_multiples", tuple(int(m) for m in mults))

    @property
    def model(self):
        return "stm" if self.stm is not None else "capelle"


@dataclass(frozen=True)
class TraceSynthConfig:
    mode: ModeFit
    span_linewidths: float = 20.0
    points: int = 801
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.points < 8:
            raise ValueError("trace needs at least 8 points")
        if not self.span_linewidths > 0:
            raise ValueError("span must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


@dataclass(frozen=True)
class SaturationCurve:
    """Rows of (n, Q_int[, error]), strictly increasing in n."""

    n: np.ndarray
    q_int: np.ndarray
    q_int_err: np.ndarray | None = None

    def __post_init__(self):
        n = np.asarray(self.n, dtype=np.float64)
        q = np.asarray(self.q_int, dtype=np.float64)
        if n.shape != q.shape or n.ndim != 1:
            raise ValueError("n and q_int must be 1-D arrays of equal length")
        err = self.q_int_err
        if err is not None:
            err = np.asarray(err, dtype=np.float64)
            if err.shape != n.shape:
                raise ValueError("q_int_err must match n")
        order = np.argsort(n, kind="stable")
        n = n[order]
        q = q[order]
        err = err[order] if err is not None else None
        if np.any(n < 0):
            raise ValueError("phonon numbers must be >= 0")
        if np.any(np.diff(n) <= 0):
            raise ValueError("phonon numbers must be distinct")
        if np.any(q <= 0):
            raise ValueError("q_int must be positive")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "q_int", q)
        object.__setattr__(self, "q_int_err", err)


@dataclass(frozen=True)
class TwoToneMap:
    """Gridded probe response rows, canonically sorted by (detuning, power).

    ``pump_frequency_hz``/``fsr_hz``/``temperature_k`` are optional metadata
    carried along by the generators; CSV round trips preserve only the data
    columns.
    """

    delta_hz: np.ndarray
    n_pump: np.ndarray
    inv_q_tls: np.ndarray
    dfreq_hz: np.ndarray
    inv_q_tls_err: np.ndarray | None = None
    dfreq_err: np.ndarray | None = None
    pump_frequency_hz: float | None = None
    fsr_hz: float | None = None
    temperature_k: float | None = None

    def __post_init__(self):
        cols = {
            "delta_hz": np.asarray(self.delta_hz, dtype=np.float64),
            "n_pump": np.asarray(self.n_pump, dtype=np.float64),
            "inv_q_tls": np.asarray(self.inv_q_tls, dtype=np.float64),
            "dfreq_hz": np.asarray(self.dfreq_hz, dtype=np.float64),
        }
        size = cols["delta_hz"].size
        for name, arr in cols.items():
            if arr.ndim != 1 or arr.size != size:
                raise ValueError(f"{name} must be 1-D of length {size}")
        for name in ("inv_q_tls_err", "dfreq_err"):
            err = getattr(self, name)
            if err is not None:
                err = np.asarray(err, dtype=np.float64)
                if err.shape != (size,):
                    raise ValueError(f"{name} must match the data columns")
                cols[name] = err
        if np.any(cols["delta_hz"] == 0):
            raise ValueError("detunings must be nonzero")
        if np.any(cols["n_pump"] < 0):
            raise ValueError("pump phonon numbers must be >= 0")
        order = np.lexsort((cols["n_pump"], cols["delta_hz"]))
        for name in list(cols):
            cols[name] = cols[name][order]
        pairs = np.stack([cols["delta_hz"], cols["n_pump"]], axis=1)
        if len(np.unique(pairs, axis=0)) != size:
            raise ValueError("(delta, n_pump) pairs must be unique")
        if self.fsr_hz is not None:
            mult = cols["delta_hz"] / self.fsr_hz
            m = np.round(mult)
            if np.any(np.abs(cols["delta_hz"] - m * self.fsr_hz) > np.spacing(np.abs(cols["delta_hz"]))):
                raise ValueError("detunings must be integer multiples of the FSR")
        for name, arr in cols.items():
            object.__setattr__(self, name, arr)
        if "inv_q_tls_err" not in cols:
            object.__setattr__(self, "inv_q_tls_err", None)
        if "dfreq_err" not in cols:
            object.__setattr__(self, "dfreq_err", None)


def synth_saturation(cfg: SaturationSynthConfig) -> SaturationCurve:
    """Forward-evaluate the saturation law on a log grid of phonon numbers."""
    n = cfg.n_grid.values()
    ctx = ThermalContext(cfg.f_r_hz, cfg.temperature_k)
    q_true = 1.0 / np.asarray(stm_inverse_q(n, cfg.params, ctx))
    if cfg.noise_fraction == 0:
        return SaturationCurve(n=n, q_int=q_true)
    q = np.empty_like(q_true)
    for i in range(n.size):
        z = _cell_rng(cfg.seed, _TAG_SATURATION, i).standard_normal()
        q[i] = q_true[i] * max(1.0 + cfg.noise_fraction * z, 0.01)
    return SaturationCurve(n=n, q_int=q, q_int_err=cfg.noise_fraction * q_true)


def _twotone_truth(cfg: TwoToneSynthConfig, delta_hz, n):
    """Noiseless (inv_q_tls, dfreq_hz) arrays over powers at one detuning."""
    f_probe = cfg.pump_frequency_hz + delta_hz
    th = float(thermal_factor_at(f_probe, cfg.temperature_k))
    dw = np.full(n.shape, angular(delta_hz))
    if cfg.stm is not None:
        omega = np.asarray(rabi_from_phonons(n, cfg.stm.rabi))
        hole = _kernels.two_tone_loss(dw, omega)
        inv_q = th * cfg.stm.tan_delta * (1.0 + hole)
        dfreq = f_probe * np.asarray(two_tone_shift_rel(dw, omega, cfg.stm.tan_delta, th))
    else:
        cp = cfg.capelle
        n_tilde = n / cp.n_c
        gamma2 = cp.gamma2(n)
        d = dw / gamma2
        inv_q = (cp.gamma0 / angular(f_probe)) * _kernels.capelle_loss(d, n_tilde)
        dfreq = ordinary(cp.gamma0 * _kernels.capelle_shift_core(d, n_tilde))
    return inv_q, dfreq


def synth_twotone(cfg: TwoToneSynthConfig, threads: int = 1) -> TwoToneMap:
    """Generate a two-tone map over the detuning x power grid.

    Cells may be generated in parallel (``threads``); per-cell RNG streams
    keyed by (seed, detuning index, power index) make the output identical
    either way.
    """
    mults = sorted(cfg.detuning_multiples)
    n = cfg.n_grid.values()
    deltas = [m * cfg.fsr_hz for m in mults]

    def column(j):
        return _twotone_truth(cfg, deltas[j], n)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            truths = list(pool.map(column, range(len(deltas))))
    else:
        truths = [column(j) for j in range(len(deltas))]

    inv_q_true = np.concatenate([t[0] for t in truths])
    dfreq_true = np.concatenate([t[1] for t in truths])
    delta_col = np.repeat(deltas, n.size)
    n_col = np.tile(n, len(deltas))

    if cfg.noise_fraction == 0:
        return TwoToneMap(
            delta_hz=delta_col, n_pump=n_col,
            inv_q_tls=inv_q_true, dfreq_hz=dfreq_true,
            pump_frequency_hz=cfg.pump_frequency_hz, fsr_hz=cfg.fsr_hz,
            temperature_k=cfg.temperature_k,
        )

    sigma_df = cfg.noise_fraction * float(np.sqrt(np.mean(dfreq_true**2)))
    inv_q = np.empty_like(inv_q_true)
    dfreq = np.empty_like(dfreq_true)
    for j in range(len(deltas)):
        for i in range(n.size):
            row = j * n.size + i
            z = _cell_rng(cfg.seed, _TAG_TWOTONE, j, i).standard_normal(2)
            inv_q[row] = inv_q_true[row] * max(1.0 + cfg.noise_fraction * z[0], 0.01)
            dfreq[row] = dfreq_true[row] + sigma_df * z[1]
    return TwoToneMap(
        delta_hz=delta_col, n_pump=n_col,
        inv_q_tls=inv_q, dfreq_hz=dfreq,
        inv_q_tls_err=cfg.noise_fraction * inv_q_true,
        dfreq_err=np.full(dfreq.shape, sigma_df),
        pump_frequency_hz=cfg.pump_frequency_hz, fsr_hz=cfg.fsr_hz,
        temperature_k=cfg.temperature_k,
    )


def synth_trace(cfg: TraceSynthConfig) -> ReflectionTrace:
    """Sample the one-port model on a uniform grid around resonance."""
    m = cfg.mode
    half = 0.5 * cfg.span_linewidths * m.linewidth
    f = np.linspace(m.f_r - half, m.f_r + half, cfg.points)
    z = model_s11(f, m)
    if cfg.sigma > 0:
        rng = _cell_rng(cfg.seed, _TAG_TRACE)
        noise = rng.standard_normal((2, cfg.points))
        z = z + cfg.sigma * (noise[0] + 1j * noise[1])
    return ReflectionTrace(frequencies=f, s11=z)
