"""Baseline and adversary harness.

* FSW: add a known sine pattern to one horizon segment; detect it with a
  matched filter.
* Distillation: fit a linear student on (clean history, watermarked horizon)
  pairs and check whether its forecasts still trip the detector.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.fft import dct

from .book import WatermarkBook
from .detector import DEFAULT_GAMMA, detect_zscore
from .embedder import EmbedConfig, embed
from .encoder import COS_FLOOR, PatchEncoderModel
from .errors import ConfigError, DataError, NumericError
from .series import TimeSeriesWindow

SEGMENT_RULES = ("fixed", "max_energy")
STUDENTS = ("linear", "dlinear")
HIGHPASS_FRACTION = 0.75


# -- FSW baseline -----------------------------------------------------------


@dataclass(frozen=True)
class FswConfig:
    amplitude: float = 0.5
    period: int = 8
    segment_len: int = 32
    segment_start_rule: str = "fixed"
    start: int = 0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ConfigError("amplitude must be >= 0")
        if int(self.period) != self.period or self.period < 1:
            raise ConfigError("period must be a positive integer")
        if int(self.segment_len) != self.segment_len or self.segment_len < 1:
            raise ConfigError("segment_len must be a positive integer")
        if self.segment_start_rule not in SEGMENT_RULES:
            raise ConfigError(f"segment_start_rule must be one of {SEGMENT_RULES}")
        if self.start < 0:
            raise ConfigError("start must be >= 0")

    def template(self) -> np.ndarray:
        t = np.arange(self.segment_len)
        return self.amplitude * np.sin(2 * np.pi * t / self.period)


def fsw_segment_start(horizon: np.ndarray, cfg: FswConfig) -> int:
    n = horizon.size
    if cfg.segment_len > n:
        raise ConfigError(f"segment_len {cfg.segment_len} exceeds horizon length {n}")
    if cfg.segment_start_rule == "fixed":
        if cfg.start + cfg.segment_len > n:
            raise ConfigError("fixed FSW segment runs past the end of the horizon")
        return cfg.start
    energy = np.convolve(horizon**2, np.ones(cfg.segment_len), mode="valid")
    return int(np.argmax(energy))


def fsw_embed(horizon, cfg: FswConfig) -> np.ndarray:
    x = np.array(horizon, dtype=float)
    start = fsw_segment_start(x, cfg)
    x[start:start + cfg.segment_len] += cfg.template()
    return x


def _highpass(n: int, period: int) -> np.ndarray:
    """Projector removing DCT components slower than 3/4 of the pattern frequency."""
    cutoff = int(HIGHPASS_FRACTION * 2 * n / period)
    B = dct(np.eye(n), norm="ortho", axis=0)[:cutoff]
    return np.eye(n) - B.T @ B


def fsw_correlation(candidate, cfg: FswConfig) -> float:
    """Largest normalized cross-correlation between the candidate and the pattern.

    The pattern and every candidate segment are first projected off their
    low-frequency DCT components, so offsets, trends and slow seasonality do
    not mask the sine. A flat segment scores 0.
    """
    x = np.asarray(candidate, dtype=float).ravel()
    n = cfg.segment_len
    if x.size < n:
        raise DataError(f"series shorter than the FSW segment ({x.size} < {n})")
    hp = _highpass(n, cfg.period)
    tmpl = hp @ np.sin(2 * np.pi * np.arange(n) / cfg.period)
    tn = np.linalg.norm(tmpl)
    if tn < COS_FLOOR:
        return 0.0
    segs = np.lib.stride_tricks.sliding_window_view(x, n) @ hp
    norms = np.linalg.norm(segs, axis=1)
    num = segs @ tmpl
    corr = np.where(norms < COS_FLOOR, 0.0, num / (np.where(norms < COS_FLOOR, 1.0, norms) * tn))
    return float(np.clip(corr.max(), -1.0, 1.0))


def fsw_detect(candidate, cfg: FswConfig, threshold: float = 0.5) -> bool:
    return fsw_correlation(candidate, cfg) > threshold


# -- distillation -----------------------------------------------------------


@dataclass(frozen=True)
class LinearForecaster:
    """``horizon = A @ history + c``."""

    A: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        c = np.array(self.c, dtype=float).ravel()
        if A.ndim != 2 or A.shape[0] != c.size:
            raise DataError(f"inconsistent forecaster shapes A{A.shape}, c({c.size})")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(c))):
            raise NumericError("forecaster weights are not finite")
        A.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)

    @property
    def K(self) -> int:
        return self.A.shape[1]

    @property
    def L(self) -> int:
        return self.A.shape[0]

    def predict(self, history) -> np.ndarray:
        """Forecast one history (K,) or a batch (n, K)."""
        h = np.asarray(history, dtype=float)
        if h.shape[-1] != self.K:
            raise DataError(f"history length {h.shape[-1]} does not match K={self.K}")
        return h @ self.A.T + self.c


def moving_average_matrix(K: int, kernel: int = 25) -> np.ndarray:
    """Linear operator of a centred moving average with edge replication."""
    half = (kernel - 1) // 2
    M = np.zeros((K, K))
    for i in range(K):
        for k in range(i - half, i - half + kernel):
            M[i, min(max(k, 0), K - 1)] += 1.0 / kernel
    return M


def _pairs_to_arrays(dataset) -> tuple[np.ndarray, np.ndarray]:
    hist, hor = [], []
    for item in dataset:
        if isinstance(item, TimeSeriesWindow):
            h, y = item.history, item.horizon
        else:
            h, y = item
        hist.append(np.asarray(h, dtype=float))
        hor.append(np.asarray(y, dtype=float))
    if not hist:
        raise DataError("training set is empty")
    try:
        return np.vstack(hist), np.vstack(hor)
    except ValueError:
        raise DataError("training pairs have inconsistent lengths") from None


def ridge_fit(X: np.ndarray, Y: np.ndarray, reg: float) -> tuple[np.ndarray, np.ndarray]:
    """Minimize ``sum ||B x + c - y||^2 + reg ||B||^2`` via normal equations.

    The intercept is not penalized. Returns ``(B, c)``.
    """
    if reg < 0:
        raise ConfigError("reg must be >= 0")
    x_mean, y_mean = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - x_mean, Y - y_mean
    G = Xc.T @ Xc + reg * np.eye(X.shape[1])
    if reg == 0 and np.linalg.matrix_rank(G) < G.shape[0]:
        raise NumericError("normal equations are singular; use reg > 0")
    try:
        B = np.linalg.solve(G, Xc.T @ Yc).T
    except np.linalg.LinAlgError:
        raise NumericError("normal equations are singular; use reg > 0") from None
    return B, y_mean - B @ x_mean


def distill_train(
    dataset: Sequence, reg: float = 1e-3, student: str = "linear", kernel: int = 25
) -> LinearForecaster:
    """Fit a student forecaster by ridge least squares.

    ``dataset`` holds ``(history, horizon)`` pairs or windows. The
    ``dlinear`` student splits each history into moving-average trend and
    remainder and fits one linear head per part; it is still linear in the
    history, so it is returned collapsed into a single ``A``.
    """
    if student not in STUDENTS:
        raise ConfigError(f"student must be one of {STUDENTS}")
    X, Y = _pairs_to_arrays(dataset)
    K, L = X.shape[1], Y.shape[1]
    if X.shape[0] < K + L:
        warnings.warn(f"only {X.shape[0]} training pairs for K={K}, L={L}; fit may be poor")
    if student == "linear":
        A, c = ridge_fit(X, Y, reg)
        return LinearForecaster(A, c)
    Mavg = moving_average_matrix(K, kernel)
    trend = X @ Mavg.T
    B, c = ridge_fit(np.hstack([X - trend, trend]), Y, reg)
    A = B[:, :K] @ (np.eye(K) - Mavg) + B[:, K:] @ Mavg
    return LinearForecaster(A, c)


@dataclass(frozen=True)
class TraceabilityReport:
    distilled_positive_rate: float
    clean_positive_rate: float
    watermarked_positive_rate: float
    reference_student_positive_rate: float
    n_train: int
    n_test: int
    gamma: float
    eta: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _rate(series_list, model, book, gamma) -> float:
    hits = sum(detect_zscore(s, model, book, gamma).decision for s in series_list)
    return hits / len(series_list)


def distill_and_probe(
    model: PatchEncoderModel,
    book: WatermarkBook,
    clean_dataset: Sequence[TimeSeriesWindow],
    embed_cfg: EmbedConfig = EmbedConfig(),
    gamma: float = DEFAULT_GAMMA,
    *,
    test_dataset: Sequence[TimeSeriesWindow] | None = None,
    test_fraction: float = 0.5,
    reg: float = 1e-3,
    student: str = "linear",
) -> TraceabilityReport:
    """Simulate an adversary distilling a student from watermarked outputs.

    Horizons in ``clean_dataset`` stand for the protected model's clean
    outputs. Without ``test_dataset`` the tail ``test_fraction`` of it is held
    out. Rates reported:

    * distilled: student forecasts on held-out histories;
    * clean: the held-out clean horizons;
    * watermarked: the held-out horizons after watermarking;
    * reference_student: a student trained on clean horizons (null model).
    """
    book.verify(model)
    if test_dataset is None:
        n_test = int(round(len(clean_dataset) * test_fraction))
        if not 0 < n_test < len(clean_dataset):
            raise ConfigError("test_fraction leaves an empty train or test split")
        train, test = list(clean_dataset[:-n_test]), list(clean_dataset[-n_test:])
    else:
        train, test = list(clean_dataset), list(test_dataset)
    if not train or not test:
        raise DataError("distillation needs non-empty train and test sets")

    wm_train = [(w.history, embed(w.horizon, model, book, embed_cfg)[0]) for w in train]
    distilled = distill_train(wm_train, reg, student)
    reference = distill_train([(w.history, w.horizon) for w in train], reg, student)

    hist = np.vstack([w.history for w in test])
    clean = [w.horizon for w in test]
    report = TraceabilityReport(
        distilled_positive_rate=_rate(list(distilled.predict(hist)), model, book, gamma),
        clean_positive_rate=_rate(clean, model, book, gamma),
        watermarked_positive_rate=_rate(
            [embed(h, model, book, embed_cfg)[0] for h in clean], model, book, gamma
        ),
        reference_student_positive_rate=_rate(list(reference.predict(hist)), model, book, gamma),
        n_train=len(train),
        n_test=len(test),
        gamma=gamma,
        eta=embed_cfg.eta,
    )
    if report.watermarked_positive_rate < report.distilled_positive_rate:
        warnings.warn(
            "distilled outputs are detected more often than directly watermarked ones "
            f"({report.distilled_positive_rate:.3f} > {report.watermarked_positive_rate:.3f})"
        )
    return report
