"""Synthetic athlete sensor streams, smoothing filters, windowing and window statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError

CHANNELS = ("heart_rate", "accel_x", "accel_y", "accel_z", "gyro_x", "gyro_y", "gyro_z")
MOTION_CHANNELS = CHANNELS[1:]
ACTION_CLASSES = ("A01", "A02", "A03", "A04", "A05", "A06")

# Per-class signature. ``freq`` is the movement fundamental in Hz; ``accel``
# and ``gyro`` give per-axis amplitudes (m/s^2, rad/s). Gyro channels add a
# second harmonic at ``harmonic`` times the fundamental amplitude.
#   A01 100 m dash, A02 400 m dash, A03 high jump,
#   A04 long jump, A05 shot put, A06 discus throw
CLASS_SIGNATURES = {
    "A01": {"freq": 4.5, "accel": (14.0, 4.0, 6.0), "gyro": (3.0, 1.0, 2.0), "harmonic": 0.3,
            "hr_base": 175.0, "hr_amp": 8.0},
    "A02": {"freq": 3.5, "accel": (10.0, 3.0, 5.0), "gyro": (2.5, 0.8, 1.5), "harmonic": 0.2,
            "hr_base": 165.0, "hr_amp": 10.0},
    "A03": {"freq": 2.0, "accel": (8.0, 2.0, 11.0), "gyro": (4.0, 2.5, 1.0), "harmonic": 0.5,
            "hr_base": 140.0, "hr_amp": 6.0},
    "A04": {"freq": 3.0, "accel": (12.0, 2.5, 9.0), "gyro": (3.5, 1.5, 1.2), "harmonic": 0.4,
            "hr_base": 155.0, "hr_amp": 7.0},
    "A05": {"freq": 1.0, "accel": (5.0, 7.0, 3.0), "gyro": (1.5, 3.0, 4.0), "harmonic": 0.6,
            "hr_base": 120.0, "hr_amp": 5.0},
    "A06": {"freq": 1.5, "accel": (6.0, 9.0, 4.0), "gyro": (2.0, 4.5, 5.0), "harmonic": 0.7,
            "hr_base": 130.0, "hr_amp": 5.0},
}

HR_PERIOD_S = 60.0
# Gaussian noise standard deviation per unit noise level
NOISE_SCALE = {"heart_rate": 2.0, "accel_x": 1.0, "accel_y": 1.0, "accel_z": 1.0,
               "gyro_x": 0.5, "gyro_y": 0.5, "gyro_z": 0.5}


@dataclass
class StreamConfig:
    action_class: str = "A01"
    duration_s: float = 300.0
    rates_hz: dict = field(default_factory=lambda: {c: 50.0 for c in CHANNELS})
    noise_level: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.action_class not in CLASS_SIGNATURES:
            raise ConfigError(f"unknown action class {self.action_class!r}")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be > 0")
        if self.noise_level < 0:
            raise ConfigError("noise_level must be >= 0")
        for ch, rate in self.rates_hz.items():
            if ch not in CHANNELS:
                raise ConfigError(f"unknown channel {ch!r}")
            if rate <= 0:
                raise ConfigError(f"sampling rate for {ch} must be > 0")


@dataclass(frozen=True)
class SensorSample:
    timestamp_ms: float
    channel: str
    value: float


@dataclass
class SensorStream:
    """Per-channel timestamp (ms) and value arrays."""

    timestamps: dict
    values: dict

    @property
    def channels(self):
        return list(self.values)

    def samples(self):
        for ch in self.values:
            for t, v in zip(self.timestamps[ch], self.values[ch]):
                yield SensorSample(float(t), ch, float(v))


def clean_signal(action_class, channel, t):
    """Noise-free value of ``channel`` at times ``t`` (seconds)."""
    sig = CLASS_SIGNATURES[action_class]
    f = sig["freq"]
    if channel == "heart_rate":
        return sig["hr_base"] + sig["hr_amp"] * np.sin(2 * np.pi * t / HR_PERIOD_S)
    axis = "xyz".index(channel[-1])
    if channel.startswith("accel"):
        return sig["accel"][axis] * np.sin(2 * np.pi * f * t)
    amp = sig["gyro"][axis]
    return amp * np.sin(2 * np.pi * f * t) + sig["harmonic"] * amp * np.sin(2 * np.pi * 2 * f * t)


def generate_stream(cfg):
    rng = np.random.default_rng(cfg.seed)
    timestamps, values = {}, {}
    for ch in CHANNELS:
        rate = cfg.rates_hz.get(ch)
        if rate is None:
            continue
        n = int(math.floor(cfg.duration_s * rate + 1e-9))
        t = np.arange(n) / rate
        v = clean_signal(cfg.action_class, ch, t)
        if cfg.noise_level > 0:
            v = v + rng.normal(0.0, cfg.noise_level * NOISE_SCALE[ch], size=n)
        timestamps[ch] = t * 1000.0
        values[ch] = v
    return SensorStream(timestamps, values)


# -- filters ----------------------------------------------------------------


@dataclass
class KalmanState:
    """Scalar random-walk Kalman filter state."""

    estimate: float = 0.0
    variance: float = 1.0
    q: float = 1e-2
    r: float = 1.0

    def __post_init__(self):
        if self.r <= 0:
            raise ConfigError("measurement noise r must be > 0")
        if self.q < 0 or self.variance < 0:
            raise ConfigError("q and the initial variance must be >= 0")

    def update(self, z):
        """Absorb one measurement; returns the Kalman gain used."""
        p = self.variance + self.q
        gain = p / (p + self.r)
        self.estimate += gain * (z - self.estimate)
        self.variance = (1.0 - gain) * p
        return gain


def kalman_filter(values, state):
    """Filtered estimates for ``values``; ``state`` is not modified."""
    st = KalmanState(state.estimate, state.variance, state.q, state.r)
    out = np.empty(len(values))
    for i, z in enumerate(values):
        z = float(z)
        if not math.isfinite(z):
            raise NumericError(f"non-finite sample at index {i}")
        st.update(z)
        out[i] = st.estimate
    return out


def lowpass_filter(values, alpha):
    """First-order exponential smoothing y_i = alpha*x_i + (1-alpha)*y_{i-1}, y_0 = x_0."""
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"alpha must be in (0, 1], got {alpha}")
    x = np.asarray(values, dtype=np.float64)
    y = np.empty_like(x)
    if x.size == 0:
        return y
    y[0] = x[0]
    for i in range(1, x.size):
        y[i] = alpha * x[i] + (1.0 - alpha) * y[i - 1]
    return y


# -- windows and features ---------------------------------------------------


@dataclass
class SensorWindow:
    channel: str
    values: np.ndarray
    period_ms: float = 20.0
    index: int = 0


def make_windows(values, window_len, stride, channel="", period_ms=20.0):
    if window_len < 2 or stride < 1:
        raise ConfigError("need window_len >= 2 and stride >= 1")
    x = np.asarray(values, dtype=np.float64)
    if x.size < window_len:
        return []
    count = (x.size - window_len) // stride + 1
    return [
        SensorWindow(channel, x[k * stride:k * stride + window_len], period_ms, k)
        for k in range(count)
    ]


FEATURE_NAMES = ("mean", "std_dev", "max", "min", "range", "rms", "peak_to_peak",
                 "iqr", "skewness", "kurtosis", "entropy")


@dataclass
class FeatureVector:
    mean: float
    std_dev: float
    max: float
    min: float
    range: float
    rms: float
    peak_to_peak: float
    iqr: float
    skewness: float
    kurtosis: float
    entropy: float
    degenerate: bool = False

    def as_array(self):
        return np.array([getattr(self, k) for k in FEATURE_NAMES])


def histogram_entropy(a, bin_count):
    lo, hi = a.min(), a.max()
    if hi == lo:
        return 0.0
    width = (hi - lo) / bin_count
    idx = np.minimum(((a - lo) / width).astype(np.int64), bin_count - 1)
    p = np.bincount(idx, minlength=bin_count) / a.size
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def extract_features(window, bin_count=16):
    """Window statistics with population (1/N) moments.

    Skewness and kurtosis are non-excess standardized moments; a constant
    window reports both as 0 and sets ``degenerate``. Quartiles interpolate
    linearly between order statistics. Entropy uses an equal-width histogram
    of ``bin_count`` bins spanning [min, max].
    """
    a = np.asarray(window.values if isinstance(window, SensorWindow) else window, dtype=np.float64)
    if a.size < 2:
        raise ValueError("feature extraction needs at least 2 samples")
    if bin_count < 1:
        raise ConfigError("bin_count must be positive")
    if not np.all(np.isfinite(a)):
        raise NumericError("window contains non-finite values")
    mean = float(a.mean())
    d = a - mean
    m2 = float(np.mean(d * d))
    std = math.sqrt(m2)
    hi, lo = float(a.max()), float(a.min())
    q1, q3 = np.percentile(a, [25.0, 75.0])
    degenerate = std == 0.0
    if degenerate:
        skew = kurt = 0.0
    else:
        # standardize first so tiny spreads cannot underflow std**3 or std**4
        z = d / std
        skew = float(np.mean(z ** 3))
        kurt = float(np.mean(z ** 4))
    return FeatureVector(
        mean=mean,
        std_dev=std,
        max=hi,
        min=lo,
        range=hi - lo,
        rms=math.sqrt(float(np.mean(a * a))),
        peak_to_peak=hi - lo,
        iqr=float(q3 - q1),
        skewness=skew,
        kurtosis=kurt,
        entropy=histogram_entropy(a, bin_count),
        degenerate=degenerate,
    )


# -- pipeline ---------------------------------------------------------------


@dataclass
class PipelineConfig:
    filter: str = "kalman"
    kalman_q: float = 1.0
    kalman_r: float = 1.0
    lowpass_alpha: float = 0.5
    window_len: int = 100
    stride: int = 100
    bin_count: int = 16

    def __post_init__(self):
        if self.filter not in ("kalman", "lowpass", "none"):
            raise ConfigError(f"unknown filter {self.filter!r}")
        if self.window_len < 2 or self.stride < 1 or self.bin_count < 1:
            raise ConfigError("invalid window_len/stride/bin_count")


def apply_filter(values, cfg):
    if cfg.filter == "kalman":
        x0 = float(values[0]) if len(values) else 0.0
        return kalman_filter(values, KalmanState(x0, 1.0, cfg.kalman_q, cfg.kalman_r))
    if cfg.filter == "lowpass":
        return lowpass_filter(values, cfg.lowpass_alpha)
    return np.asarray(values, dtype=np.float64)


def stream_features(stream, cfg):
    """Filter, window and featurize every channel of ``stream``.

    Returns ``{channel: [FeatureVector, ...]}`` with one entry per window.
    """
    out = {}
    for ch in stream.channels:
        ts = stream.timestamps[ch]
        period = float(ts[1] - ts[0]) if len(ts) > 1 else 0.0
        filtered = apply_filter(stream.values[ch], cfg)
        wins = make_windows(filtered, cfg.window_len, cfg.stride, ch, period)
        out[ch] = [extract_features(w, cfg.bin_count) for w in wins]
    return out


# -- CSV interfaces ---------------------------------------------------------

STREAM_HEADER = ["timestamp_ms", "channel", "value"]
FEATURE_HEADER = ["channel", "window_index", "degenerate_flag"] + list(FEATURE_NAMES)


def write_stream_csv(path, stream, channels=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STREAM_HEADER)
        for ch in channels or stream.channels:
            for t, v in zip(stream.timestamps[ch], stream.values[ch]):
                w.writerow([repr(float(t)), ch, repr(float(v))])


def read_stream_csv(path):
    timestamps, values = {}, {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ch = row["channel"]
            timestamps.setdefault(ch, []).append(float(row["timestamp_ms"]))
            values.setdefault(ch, []).append(float(row["value"]))
    return SensorStream(
        {k: np.array(v) for k, v in timestamps.items()},
        {k: np.array(v) for k, v in values.items()},
    )


def merge_streams(streams):
    ts, vs = {}, {}
    for s in streams:
        ts.update(s.timestamps)
        vs.update(s.values)
    return SensorStream(ts, vs)


def write_features_csv(path, features):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FEATURE_HEADER)
        for ch, vecs in features.items():
            for k, fv in enumerate(vecs):
                w.writerow([ch, k, int(fv.degenerate)] + [repr(float(v)) for v in fv.as_array()])

