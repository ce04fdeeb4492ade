"""Per-channel signal quality parameters.

Six numbers describe each channel: monotonicity, robustness, trendability,
detectability (outputs that should be high) and variance, rms. Every
state-averaged quantity weights states equally, whatever their sample counts.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
import pywt

from errors import ConfigError, ParameterError, SensorSelectionError, ShapeError, SingularityError, SchemaError
from sensor_utils import channel_label, channel_sort_key

METRIC_FIELDS = ("monotonicity", "robustness", "trendability", "detectability", "variance", "rms")
METRICS_CSV_COLUMNS = ("sensor_id", "load_pct") + METRIC_FIELDS + ("total_cost",)

TREND_MODES = ("normalized", "literal")
DEFAULT_DETECTABILITY_CAP = 1e6
ZERO_SAMPLE_EPS = 1e-12
# MAD -> standard deviation for Gaussian noise
MAD_SCALE = 0.6745


@dataclass(frozen=True)
class ChannelMetrics:
    monotonicity: float
    robustness: float
    trendability: float
    detectability: float
    variance: float
    rms: float

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DenoiseConfig:
    """Haar wavelet soft-threshold denoiser; levels=None picks min(4, floor(log2 N))."""
    levels: int = None
    threshold_rule: str = "universal"
    mode: str = "soft"

    def resolve_levels(self, n):
        max_level = int(math.floor(math.log2(n))) if n >= 2 else 0
        if self.threshold_rule != "universal":
            raise ConfigError(f"Unsupported threshold rule: {self.threshold_rule}")
        if self.mode != "soft":
            raise ConfigError(f"Unsupported threshold mode: {self.mode}")
        if self.levels is None:
            return min(4, max_level)
        if self.levels < 1:
            raise ConfigError(f"Denoise levels must be positive, got {self.levels}")
        if self.levels > max_level:
            raise ConfigError(f"Denoise levels {self.levels} too deep for length {n} (max {max_level})")
        return self.levels


@dataclass(frozen=True)
class MetricConfig:
    denoise: DenoiseConfig = field(default_factory=DenoiseConfig)
    trend_mode: str = "normalized"
    max_lag: int = None
    # None keeps zero-scatter channels flagged; a number caps detectability instead
    detectability_cap: float = None
    max_workers: int = 1


def _check_length(arr, minimum=2):
    if len(arr) < minimum:
        raise ShapeError(f"Need at least {minimum} samples per state, got {len(arr)}")


def monotonicity(channel):
    """Mean over states of |#positive diffs - #negative diffs| / (N - 1)."""
    scores = []
    for x in channel.state_arrays():
        _check_length(x)
        d = np.diff(x)
        scores.append(abs(int(np.sum(d > 0)) - int(np.sum(d < 0))) / (len(x) - 1))
    return float(np.mean(scores))


def smooth(samples, cfg=None):
    """Haar DWT, soft-threshold the detail coefficients, reconstruct.

    The noise level comes from the finest details (median |d| / 0.6745) and
    the universal threshold sigma * sqrt(2 ln N) is applied at every level.
    A zero threshold (most finest details exactly zero) returns the input.
    """
    cfg = cfg or DenoiseConfig()
    # pywt needs a writable buffer; loaded channels are read-only
    x = np.array(samples, dtype=float)
    _check_length(x)
    n = len(x)
    levels = cfg.resolve_levels(n)

    coeffs = pywt.wavedec(x, "haar", mode="periodization", level=levels)
    sigma = float(np.median(np.abs(coeffs[-1]))) / MAD_SCALE
    threshold = sigma * math.sqrt(2.0 * math.log(n))
    if threshold <= 0.0:
        return x
    denoised = [coeffs[0]] + [pywt.threshold(d, threshold, mode="soft") for d in coeffs[1:]]
    return pywt.waverec(denoised, "haar", mode="periodization")[:n]


def _state_robustness(x, smoothed):
    res = x - smoothed
    mask = np.abs(x) >= ZERO_SAMPLE_EPS
    if not np.any(mask):
        # all-zero state: nothing to perturb
        return 1.0
    return float(np.mean(np.exp(-np.abs(res[mask] / x[mask]))))


def robustness(channel, cfg=None, smoother=None):
    """Mean over states of mean(exp(-|res/x|)) with res = x - smooth(x).

    Samples with |x| < 1e-12 are left out of their state's average.
    smoother(samples, cfg) replaces the wavelet denoiser when given.
    """
    smoother = smoother or smooth
    scores = []
    for x in channel.state_arrays():
        _check_length(x)
        scores.append(_state_robustness(x, np.asarray(smoother(x, cfg), dtype=float)))
    return float(np.mean(scores))


def default_max_lag(n):
    return max(1, min(50, n // 4))


def _lag_correlation(x, lag):
    a, b = x[lag:], x[:-lag]
    if len(a) < 2:
        return 0.0
    sa, sb = np.std(a), np.std(b)
    if sa == 0 or sb == 0:
        return 0.0
    r = float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))
    return min(1.0, max(-1.0, r))


def trendability(channel, max_lag=None, mode="normalized"):
    """Lagged self-similarity of each state's signal.

    normalized: mean over states of mean_{lag=1..max_lag} |Pearson r(lag)|, in [0, 1].
    literal: mean over states of sum over lags and t of |x_t * x_{t-lag}|.
    """
    if mode not in TREND_MODES:
        raise ParameterError(f"Unknown trendability mode {mode!r}, expected one of {TREND_MODES}")
    scores = []
    for x in channel.state_arrays():
        n = len(x)
        _check_length(x)
        lag_max = default_max_lag(n) if max_lag is None else int(max_lag)
        if lag_max < 1 or lag_max >= n:
            raise ParameterError(f"max_lag must be in [1, {n - 1}], got {lag_max}")
        if mode == "literal":
            scores.append(float(sum(np.sum(np.abs(x[lag:] * x[:-lag])) for lag in range(1, lag_max + 1))))
        elif np.std(x) == 0:
            scores.append(0.0)
        else:
            scores.append(float(np.mean([abs(_lag_correlation(x, lag)) for lag in range(1, lag_max + 1)])))
    return float(np.mean(scores))


def detectability(channel, cap=None):
    """Fisher discriminant ratio between states for a scalar channel.

    Between-state scatter sum_j n_j (mean_j - grand_mean)^2 over within-state
    scatter sum_j sum_x (x - mean_j)^2. Zero within-state scatter raises
    SingularityError unless cap is given, in which case the value is capped.
    """
    arrays = channel.state_arrays()
    if len(arrays) < 2:
        raise ShapeError(f"Detectability needs at least 2 states, got {len(arrays)}")
    grand = float(np.mean(np.concatenate(arrays)))
    between = sum(len(x) * (float(np.mean(x)) - grand) ** 2 for x in arrays)
    within = sum(float(np.sum((x - np.mean(x)) ** 2)) for x in arrays)
    if within <= 0.0:
        if cap is None:
            raise SingularityError(
                f"{channel_label(channel.key)}: zero within-state scatter", channel=channel.key)
        return float(cap) if between > 0 else 0.0
    value = between / within
    return min(value, float(cap)) if cap is not None else value


def variance(channel):
    scores = []
    for x in channel.state_arrays():
        _check_length(x)
        scores.append(float(np.var(x, ddof=1)))
    return float(np.mean(scores))


def rms(channel):
    return float(np.mean([math.sqrt(float(np.mean(np.square(x)))) for x in channel.state_arrays()]))


def channel_metrics(channel, cfg=None):
    cfg = cfg or MetricConfig()
    return ChannelMetrics(
        monotonicity=monotonicity(channel),
        robustness=robustness(channel, cfg.denoise),
        trendability=trendability(channel, cfg.max_lag, cfg.trend_mode),
        detectability=detectability(channel, cfg.detectability_cap),
        variance=variance(channel),
        rms=rms(channel),
    )


def characterize(joined, cfg=None):
    """Compute ChannelMetrics for every channel.

    Returns:
        Tuple of (metrics, flagged)
        metrics: {channel key: ChannelMetrics} for channels that scored
        flagged: {channel key: error message} for channels that failed
    """
    cfg = cfg or MetricConfig()
    channels = list(joined.channels)
    logging.info(f"Characterizing {len(channels)} channel(s) with {cfg.max_workers} worker(s)")

    def _one(channel):
        try:
            return channel.key, channel_metrics(channel, cfg), None
        except SensorSelectionError as e:
            return channel.key, None, e

    with ThreadPoolExecutor(max_workers=max(1, cfg.max_workers)) as executor:
        outcomes = list(executor.map(_one, channels))

    metrics, flagged = {}, {}
    for key, result, error in outcomes:
        if error is not None:
            logging.warning(f"Flagged {channel_label(key)}: {error}")
            flagged[key] = str(error)
        else:
            metrics[key] = result
            logging.debug(f"{channel_label(key)}: {result}")
    logging.info(f"Characterized {len(metrics)} channel(s), flagged {len(flagged)}")
    return metrics, flagged


def write_metrics(metrics, joined, path):
    """Write the metrics CSV; total_cost comes from the joined cost table."""
    rows = []
    for key in sorted(metrics, key=channel_sort_key):
        m = metrics[key]
        rows.append([key[0], key[1]] + [repr(float(getattr(m, f))) for f in METRIC_FIELDS]
                    + [repr(float(joined.total_cost(key)))])
    pd.DataFrame(rows, columns=list(METRICS_CSV_COLUMNS)).to_csv(path, index=False, lineterminator="\n")
    logging.info(f"Wrote metrics for {len(rows)} channel(s) to {path}")
    return path


def load_metrics(path):
    """Read a metrics CSV back.

    Returns:
        Tuple of (metrics, costs): {key: ChannelMetrics}, {key: total cost}
    """
    frame = pd.read_csv(path, dtype={"sensor_id": str, "load_pct": str},
                        keep_default_na=False, float_precision="round_trip")
    missing = [c for c in METRICS_CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {missing}")
    metrics, costs = {}, {}
    for row in frame.to_dict("records"):
        key = (str(row["sensor_id"]), str(row["load_pct"]))
        metrics[key] = ChannelMetrics(**{f: float(row[f]) for f in METRIC_FIELDS})
        costs[key] = float(row["total_cost"])
    return metrics, costs
