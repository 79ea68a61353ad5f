"""Smart-battery-interface simulation and error-vs-rate analysis.

Three interface kinds are modeled. `instant` reports the discharge current
of the most recent internal sample, `filtered` reports a trailing moving
average of internal samples (the laptop-style low-pass register), and
`capacity` reports remaining charge so that the consumer has to difference
two readings to get a mean current.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, ConfigurationError, RateError
from .tracesim import Trace, _ratio_as_int

INSTANT = "instant"
FILTERED = "filtered"
CAPACITY = "capacity"


@dataclass(frozen=True)
class BatteryInterfaceModel:
    """Fuel-gauge behavior knobs.

    noise_sigma is the relative std-dev of multiplicative Gaussian noise on
    each raw internal sample (for the capacity kind it applies to the
    remaining-capacity register). counter_sigma adds a zero-mean absolute
    error (coulombs) to the internal charge register of the instant kind;
    because consecutive readings difference that register, the resulting
    per-reading error telescopes and cancels under averaging faster than
    independent noise does.
    """

    kind: str
    reading_rate_hz: float
    supply_voltage_v: float = 12.0
    noise_sigma: float = 0.0
    counter_sigma_c: float = 0.0
    filter_window_s: float = 0.0
    filter_taps: int = 0
    quantization: float = 0.0          # A/LSB (instant, filtered) or C/LSB
    internal_rate_hz: float = 0.0      # 0 = one internal sample per reading
    initial_capacity_c: float = 20000.0

    def __post_init__(self):
        if self.kind not in (INSTANT, FILTERED, CAPACITY):
            raise ConfigurationError(f"unknown battery interface kind {self.kind!r}")
        if self.reading_rate_hz <= 0:
            raise ConfigurationError("reading rate must be > 0")
        if self.supply_voltage_v <= 0:
            raise ConfigurationError("supply voltage must be > 0")
        if self.noise_sigma < 0 or self.counter_sigma_c < 0:
            raise ConfigurationError("noise sigma must be >= 0")
        if self.quantization < 0:
            raise ConfigurationError("quantization must be >= 0")
        if self.kind == FILTERED:
            if self.filter_window_s <= 0 or self.filter_taps < 1:
                raise ConfigurationError(
                    "filtered kind needs window > 0 and taps >= 1")


@dataclass(frozen=True)
class BatteryReading:
    """One reading: current (A) for instant/filtered, capacity (C) otherwise."""

    timestamp_s: float
    value: float


class BatteryReadings:
    """A reading stream with its interface description attached."""

    def __init__(self, model: BatteryInterfaceModel,
                 times_s: np.ndarray, values: np.ndarray):
        self.model = model
        self.times_s = times_s
        self.values = values

    @property
    def kind(self) -> str:
        return self.model.kind

    @property
    def rate_hz(self) -> float:
        return self.model.reading_rate_hz

    @property
    def period_s(self) -> float:
        return 1.0 / self.model.reading_rate_hz

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int) -> BatteryReading:
        return BatteryReading(float(self.times_s[i]), float(self.values[i]))


def _quantize(values: np.ndarray, lsb: float) -> np.ndarray:
    if lsb <= 0:
        return values
    return np.floor(values / lsb + 1e-12) * lsb


def _internal_current_means(trace: Trace, internal_rate_hz: float) -> np.ndarray:
    """True mean current per internal sample window, one entry per window."""
    k = _ratio_as_int(1.0 / internal_rate_hz, trace.tick_s, "internal period")
    m = len(trace) // k
    return trace.power_w[: m * k].reshape(m, k).mean(axis=1)


def sample_instant(trace: Trace, model: BatteryInterfaceModel,
                   seed: int = 0) -> BatteryReadings:
    """Instant-kind readings at the model's rate.

    Reading k at t = k/rate is the true mean current of the internal sample
    ending at t, times (1 + noise), plus the telescoped charge-register
    error, floor-quantized.
    """
    if model.kind != INSTANT:
        raise ConfigurationError("sample_instant needs an instant-kind model")
    f_int = model.internal_rate_hz or model.reading_rate_hz
    if f_int < model.reading_rate_hz:
        raise ConfigurationError("internal rate must be >= reading rate")
    per_read = _ratio_as_int(f_int / model.reading_rate_hz, 1.0,
                             "internal samples per reading")
    means = _internal_current_means(trace, f_int) / model.supply_voltage_v
    n_read = len(means) // per_read
    # expose the last internal sample before each reading instant
    exposed = means[per_read - 1: n_read * per_read: per_read]
    rng = np.random.default_rng(seed)
    if model.noise_sigma > 0:
        exposed = exposed * (1.0 + rng.normal(0.0, model.noise_sigma, n_read))
    if model.counter_sigma_c > 0:
        eta = rng.normal(0.0, model.counter_sigma_c, n_read + 1)
        exposed = exposed + np.diff(eta) * model.reading_rate_hz
    times = (np.arange(n_read) + 1) / model.reading_rate_hz
    return BatteryReadings(model, times, _quantize(exposed, model.quantization))


def sample_filtered(trace: Trace, model: BatteryInterfaceModel,
                    seed: int = 0) -> BatteryReadings:
    """Filtered-kind readings: trailing mean of the last `taps` internal samples.

    Internal samples sit window/taps apart, each the true mean current of
    its own sub-window with multiplicative noise. Samples from before the
    trace start are zero, so a step input needs a full window to settle.
    """
    if model.kind != FILTERED:
        raise ConfigurationError("sample_filtered needs a filtered-kind model")
    spacing = model.filter_window_s / model.filter_taps
    f_int = 1.0 / spacing
    samples = _internal_current_means(trace, f_int) / model.supply_voltage_v
    rng = np.random.default_rng(seed)
    if model.noise_sigma > 0:
        samples = samples * (1.0 + rng.normal(0.0, model.noise_sigma, len(samples)))
    padded = np.concatenate([np.zeros(model.filter_taps), samples])
    cum = np.concatenate([[0.0], np.cumsum(padded)])
    trailing = (cum[model.filter_taps:] - cum[:-model.filter_taps]) / model.filter_taps
    # trailing[i] = mean of taps internal samples ending at time i*spacing
    n_read = int(math.floor(trace.duration_s * model.reading_rate_hz + 1e-9))
    times = (np.arange(n_read) + 1) / model.reading_rate_hz
    idx = np.floor(times / spacing + 1e-9).astype(np.int64)
    idx = np.clip(idx, 0, len(trailing) - 1)
    return BatteryReadings(model, times, _quantize(trailing[idx], model.quantization))


def sample_capacity(trace: Trace, model: BatteryInterfaceModel,
                    seed: int = 0) -> BatteryReadings:
    """Capacity-kind readings: remaining charge, noisy and quantized.

    Includes a reading at t = 0 so consumers can difference whole windows.
    """
    if model.kind != CAPACITY:
        raise ConfigurationError("sample_capacity needs a capacity-kind model")
    current = trace.power_w / model.supply_voltage_v
    charge = np.concatenate([[0.0], np.cumsum(current * trace.tick_s)])
    k = _ratio_as_int(1.0 / model.reading_rate_hz, trace.tick_s, "reading period")
    n_read = len(trace) // k
    idx = np.arange(n_read + 1) * k
    levels = model.initial_capacity_c - charge[idx]
    rng = np.random.default_rng(seed)
    if model.noise_sigma > 0:
        levels = levels * (1.0 + rng.normal(0.0, model.noise_sigma, len(levels)))
    times = np.arange(n_read + 1) / model.reading_rate_hz
    return BatteryReadings(model, times, _quantize(levels, model.quantization))


def sample_interface(trace: Trace, model: BatteryInterfaceModel,
                     seed: int = 0) -> BatteryReadings:
    """Dispatch to the sampler matching the interface kind."""
    if model.kind == INSTANT:
        return sample_instant(trace, model, seed)
    if model.kind == FILTERED:
        return sample_filtered(trace, model, seed)
    return sample_capacity(trace, model, seed)


def average_to_rate(readings: BatteryReadings, target_rate_hz: float) -> BatteryReadings:
    """Downsample a current stream by arithmetic mean over reading groups."""
    if target_rate_hz > readings.rate_hz + 1e-12:
        raise RateError(
            f"target rate {target_rate_hz} Hz above stream rate {readings.rate_hz} Hz")
    factor = readings.rate_hz / target_rate_hz
    k = int(round(factor))
    if abs(factor - k) > 1e-9:
        raise AlignmentError(f"decimation factor {factor} is not integral")
    if k == 1:
        return readings
    values = readings.values
    offset = 0
    if readings.kind == CAPACITY and len(values) % k == 1:
        offset = 1  # capacity streams carry a t=0 reading; keep group phase
    m = (len(values) - offset) // k
    grouped = values[offset: offset + m * k].reshape(m, k).mean(axis=1)
    times = readings.times_s[offset + k - 1: offset + m * k: k]
    derived = BatteryInterfaceModel(
        kind=readings.kind,
        reading_rate_hz=target_rate_hz,
        supply_voltage_v=readings.model.supply_voltage_v,
        filter_window_s=readings.model.filter_window_s,
        filter_taps=readings.model.filter_taps,
        initial_capacity_c=readings.model.initial_capacity_c,
    )
    return BatteryReadings(derived, times, grouped)


def rms_relative_error(estimates: np.ndarray, truth: np.ndarray) -> float:
    """sqrt(mean(((est - true) / true)^2)), skipping non-positive truths."""
    value, _ = rms_relative_error_detail(estimates, truth)
    return value


def rms_relative_error_detail(estimates: np.ndarray,
                              truth: np.ndarray) -> tuple[float, int]:
    """RMS relative error plus the count of excluded non-positive truths."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise AlignmentError(
            f"estimate/truth length mismatch: {est.shape} vs {tru.shape}")
    ok = tru > 0
    excluded = int((~ok).sum())
    if not ok.any():
        raise ConfigurationError("no positive truth values to compare against")
    rel = (est[ok] - tru[ok]) / tru[ok]
    return float(np.sqrt(np.mean(rel * rel))), excluded


def export_readings_csv(readings: BatteryReadings, path: str) -> None:
    """Write `t_s,value,kind` rows for a reading stream."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", "value", "kind"])
        for t, v in zip(readings.times_s, readings.values):
            writer.writerow([f"{t:.10g}", f"{v:.10g}", readings.kind])
