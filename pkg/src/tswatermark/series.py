"""Time-series containers, patching, normalization, synthetic data and CSV IO.

Everything downstream works on univariate float64 vectors. Multivariate
files are exploded into independent channels.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class TimeSeriesWindow:
    """A history/horizon pair cut from one channel.

    ``origin_index`` is the position of ``horizon[0]`` in the source series,
    so the history occupies ``[origin_index - K, origin_index)``.
    """

    history: np.ndarray
    horizon: np.ndarray
    channel_id: int = 0
    origin_index: int = 0

    def __post_init__(self):
        hist = _as_vector(self.history, "history")
        hor = _as_vector(self.horizon, "horizon")
        if hist.size < 1 or hor.size < 1:
            raise DataError("history and horizon must each hold at least one sample")
        object.__setattr__(self, "history", _frozen(hist))
        object.__setattr__(self, "horizon", _frozen(hor))

    @property
    def K(self) -> int:
        return self.history.size

    @property
    def L(self) -> int:
        return self.horizon.size

    def series(self) -> np.ndarray:
        """History and horizon as one contiguous vector."""
        return np.concatenate([self.history, self.horizon])

    def with_horizon(self, horizon) -> "TimeSeriesWindow":
        return TimeSeriesWindow(self.history, horizon, self.channel_id, self.origin_index)


@dataclass(frozen=True)
class PatchConfig:
    patch_len: int
    stride: int

    def __post_init__(self):
        if int(self.patch_len) != self.patch_len or self.patch_len < 1:
            raise ConfigError(f"patch_len must be a positive integer, got {self.patch_len!r}")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ConfigError(f"stride must be a positive integer, got {self.stride!r}")
        if self.stride > self.patch_len:
            raise ConfigError(
                f"stride {self.stride} exceeds patch_len {self.patch_len}; samples would be dropped"
            )

    @classmethod
    def disjoint(cls, patch_len: int) -> "PatchConfig":
        return cls(patch_len, patch_len)


@dataclass(frozen=True)
class NormStats:
    """Per-channel z-normalization statistics."""

    mean: tuple
    std: tuple

    def __post_init__(self):
        mean = tuple(float(m) for m in np.atleast_1d(self.mean))
        std = tuple(max(float(s), STD_FLOOR) for s in np.atleast_1d(self.std))
        if len(mean) != len(std):
            raise ConfigError("mean and std must have one entry per channel")
        if not all(math.isfinite(v) for v in mean + std):
            raise DataError("normalization statistics must be finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def from_values(cls, channels: Sequence[np.ndarray]) -> "NormStats":
        """Fit statistics on a calibration split, one array per channel."""
        means, stds = [], []
        for values in channels:
            v = np.asarray(values, dtype=float).ravel()
            if v.size == 0:
                raise DataError("cannot fit normalization on an empty channel")
            means.append(float(np.mean(v)))
            stds.append(float(np.std(v)))
        return cls(tuple(means), tuple(stds))

    def to_dict(self) -> dict:
        return {"mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "NormStats":
        return cls(tuple(data["mean"]), tuple(data["std"]))


def _as_vector(values, name: str = "values") -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise DataError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains NaN or Inf")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


# -- patching ---------------------------------------------------------------


def n_patches(n: int, cfg: PatchConfig) -> int:
    """ceil((n - P) / S) + 1."""
    if n < cfg.patch_len:
        raise DataError(f"series shorter than patch length ({n} < {cfg.patch_len})")
    return -(-(n - cfg.patch_len) // cfg.stride) + 1


def patchify(values, cfg: PatchConfig) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Cut a series into overlapping or disjoint patches.

    Returns an ``(N, P)`` array and, per patch, its ``(start, stop)`` range in
    the unpadded series. When the last patch overruns the input it is
    right-padded with the last observed value.
    """
    x = np.asarray(values, dtype=float).ravel()
    P, S = cfg.patch_len, cfg.stride
    N = n_patches(x.size, cfg)
    total = (N - 1) * S + P
    if total > x.size:
        x = np.concatenate([x, np.full(total - x.size, x[-1])])
    idx = np.arange(N)[:, None] * S + np.arange(P)[None, :]
    n = np.asarray(values).size
    ranges = [(j * S, min(j * S + P, n)) for j in range(N)]
    return x[idx], ranges


# -- normalization ----------------------------------------------------------


def normalize(window, stats: NormStats, channel: int | None = None):
    """z-normalize an array or a :class:`TimeSeriesWindow`."""
    if isinstance(window, TimeSeriesWindow):
        ch = window.channel_id if channel is None else channel
        return TimeSeriesWindow(
            normalize(window.history, stats, ch),
            normalize(window.horizon, stats, ch),
            window.channel_id,
            window.origin_index,
        )
    ch = 0 if channel is None else channel
    return (np.asarray(window, dtype=float) - stats.mean[ch]) / stats.std[ch]


def denormalize(window, stats: NormStats, channel: int | None = None):
    if isinstance(window, TimeSeriesWindow):
        ch = window.channel_id if channel is None else channel
        return TimeSeriesWindow(
            denormalize(window.history, stats, ch),
            denormalize(window.horizon, stats, ch),
            window.channel_id,
            window.origin_index,
        )
    ch = 0 if channel is None else channel
    return np.asarray(window, dtype=float) * stats.std[ch] + stats.mean[ch]


# -- synthetic data ---------------------------------------------------------


@dataclass(frozen=True)
class SyntheticComponents:
    """Ranges the synthetic generator samples from, uniformly.

    ``trend`` is the largest absolute slope per sample; ``noise_std`` is the
    standard deviation of the additive Gaussian noise.
    """

    n_sines: tuple = (2, 4)
    amplitude: tuple = (0.5, 1.5)
    period: tuple = (16.0, 96.0)
    phase: tuple = (0.0, 2 * math.pi)
    trend: float = 0.005
    offset: tuple = (-0.5, 0.5)
    noise_std: float = 0.02

    def __post_init__(self):
        for name in ("n_sines", "amplitude", "period", "phase", "offset"):
            rng = tuple(getattr(self, name))
            if len(rng) != 2 or not rng[0] <= rng[1]:
                raise ConfigError(f"{name} must be an ordered (low, high) pair, got {rng!r}")
            object.__setattr__(self, name, rng)
        lo, hi = self.n_sines
        if int(lo) != lo or int(hi) != hi or lo < 1:
            raise ConfigError(f"n_sines must be integers >= 1, got {self.n_sines!r}")
        if self.period[0] <= 0:
            raise ConfigError("periods must be positive")
        if self.amplitude[0] < 0 or self.trend < 0 or self.noise_std < 0:
            raise ConfigError("amplitude, trend and noise_std must be non-negative")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: Mapping | None) -> "SyntheticComponents":
        if data is None:
            return cls()
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown synthetic component(s): {sorted(unknown)}")
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        return cls(**kwargs)


def generate_synthetic_dataset(
    seed: int,
    n_windows: int,
    K: int,
    L: int,
    components: SyntheticComponents | Mapping | None = None,
    stats_windows: int | None = None,
) -> tuple[list[TimeSeriesWindow], NormStats]:
    """Sample independent sinusoid + trend + noise windows.

    Windows are returned in raw units. The normalization statistics are fit
    on the first ``stats_windows`` windows (all of them by default).
    """
    if n_windows < 1:
        raise ConfigError("n_windows must be >= 1")
    if K < 1 or L < 1:
        raise ConfigError("K and L must be >= 1")
    if not isinstance(components, SyntheticComponents):
        components = SyntheticComponents.from_dict(components)
    c = components
    rng = np.random.default_rng(seed)
    t = np.arange(K + L, dtype=float)
    windows = []
    for w in range(n_windows):
        k = int(rng.integers(c.n_sines[0], c.n_sines[1] + 1))
        amp = rng.uniform(*c.amplitude, size=k)
        period = rng.uniform(*c.period, size=k)
        phase = rng.uniform(*c.phase, size=k)
        slope = rng.uniform(-c.trend, c.trend)
        offset = rng.uniform(*c.offset)
        noise = rng.standard_normal(K + L) * c.noise_std
        x = offset + slope * t + noise
        for a, p, ph in zip(amp, period, phase):
            x = x + a * np.sin(2 * np.pi * t / p + ph)
        windows.append(TimeSeriesWindow(x[:K], x[K:], 0, K))
    fit_on = windows[: stats_windows or n_windows]
    stats = NormStats.from_values([np.concatenate([w.series() for w in fit_on])])
    return windows, stats


# -- CSV --------------------------------------------------------------------


def load_csv(path) -> dict[str, np.ndarray]:
    """Read a CSV whose first column is a timestamp and the rest are channels."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        if len(header) < 2:
            raise DataError(f"{path}: header needs a timestamp column and at least one channel")
        names = [h.strip() for h in header[1:]]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}"
                )
            try:
                values = [float(cell) for cell in row[1:]]
            except ValueError:
                raise DataError(f"{path}: non-numeric value in row {lineno}") from None
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"{path}: non-finite value in row {lineno}")
            rows.append(values)
    data = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return {name: data[:, i].copy() for i, name in enumerate(names)}


def save_csv(path, channels: Mapping[str, Iterable[float]], timestamps=None) -> None:
    """Write equal-length channels; values use 17 significant digits."""
    names = list(channels)
    cols = [np.asarray(channels[n], dtype=float).ravel() for n in names]
    lengths = {c.size for c in cols}
    if len(lengths) > 1:
        raise DataError(f"channels have unequal lengths {sorted(lengths)}")
    n = lengths.pop() if lengths else 0
    if timestamps is None:
        timestamps = range(n)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", *names])
        for i, ts in enumerate(timestamps):
            writer.writerow([ts, *(repr(float(c[i])) for c in cols)])


# -- datasets on disk -------------------------------------------------------


@dataclass
class DatasetManifest:
    seed: int
    K: int
    L: int
    n_windows: int
    components: dict = field(default_factory=dict)
    norm_stats: dict | None = None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        data = json.loads(Path(path).read_text())
        try:
            return cls(**{k: data[k] for k in ("seed", "K", "L", "n_windows")},
                       components=data.get("components", {}),
                       norm_stats=data.get("norm_stats"))
        except KeyError as exc:
            raise DataError(f"{path}: dataset manifest missing field {exc}") from None


def windows_to_channels(windows: Sequence[TimeSeriesWindow]) -> dict[str, np.ndarray]:
    """One column per window (history followed by horizon)."""
    return {f"w{i}": w.series() for i, w in enumerate(windows)}


def channels_to_windows(
    channels: Mapping[str, np.ndarray], K: int, channel_id: int = 0
) -> list[TimeSeriesWindow]:
    """Inverse of :func:`windows_to_channels`; all windows share one channel."""
    out = []
    for i, values in enumerate(channels.values()):
        values = np.asarray(values, dtype=float)
        if values.size <= K:
            raise DataError(f"column {i} has {values.size} samples, need more than K={K}")
        out.append(TimeSeriesWindow(values[:K], values[K:], channel_id, K))
    return out
