"""Cold-token mining, detection-statistic calibration and the watermark book."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoder import PatchEncoderModel, TokenTable, sim_matrix
from .errors import ConfigError, DataError, FingerprintError
from .series import PatchConfig, TimeSeriesWindow, patchify

SIGMA_FLOOR = 1e-8
STAT_MODES = ("per_window_max", "per_pair")
PATCH_CONVENTION = "disjoint"


@dataclass(frozen=True)
class WatermarkBook:
    cold_token_ids: tuple
    mu: float
    sigma: float
    model_fingerprint: str
    stat_mode: str = "per_window_max"
    calibration_size: int = 0
    window_len: int | None = None
    patch_convention: str = PATCH_CONVENTION

    def __post_init__(self):
        ids = tuple(int(i) for i in self.cold_token_ids)
        if not ids:
            raise DataError("watermark book needs at least one cold token")
        if len(set(ids)) != len(ids) or min(ids) < 0:
            raise DataError("cold token ids must be unique and non-negative")
        if self.stat_mode not in STAT_MODES:
            raise DataError(f"unknown stat_mode {self.stat_mode!r}")
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)) or self.sigma <= 0:
            raise DataError(f"sigma must be finite and > 0, got {self.sigma!r}")
        if not self.model_fingerprint:
            raise DataError("watermark book has no model fingerprint")
        if self.patch_convention != PATCH_CONVENTION:
            raise DataError(f"unsupported patch convention {self.patch_convention!r}")
        object.__setattr__(self, "cold_token_ids", ids)
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def M(self) -> int:
        return len(self.cold_token_ids)

    def ids(self) -> np.ndarray:
        return np.asarray(self.cold_token_ids, dtype=int)

    def tokens(self, model: PatchEncoderModel) -> np.ndarray:
        return model.table[self.ids()]

    def verify(self, model: PatchEncoderModel) -> None:
        """Raise unless this book was built for ``model``."""
        if self.model_fingerprint != model.fingerprint:
            raise FingerprintError(
                "watermark book fingerprint does not match the encoder "
                f"({self.model_fingerprint[:12]} vs {model.fingerprint[:12]})"
            )
        if max(self.cold_token_ids) >= model.table.vocab_size:
            raise DataError("cold token id outside the model vocabulary")

    def to_dict(self) -> dict:
        return {
            "cold_token_ids": list(self.cold_token_ids),
            "mu": self.mu,
            "sigma": self.sigma,
            "stat_mode": self.stat_mode,
            "model_fingerprint": self.model_fingerprint,
            "calibration_size": self.calibration_size,
            "M": self.M,
            "window_len": self.window_len,
            "patch_convention": self.patch_convention,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WatermarkBook":
        if "model_fingerprint" not in data:
            raise DataError("watermark book file has no model_fingerprint")
        try:
            book = cls(
                cold_token_ids=tuple(data["cold_token_ids"]),
                mu=data["mu"],
                sigma=data["sigma"],
                model_fingerprint=data["model_fingerprint"],
                stat_mode=data.get("stat_mode", "per_window_max"),
                calibration_size=int(data.get("calibration_size", 0)),
                window_len=data.get("window_len"),
                patch_convention=data.get("patch_convention", PATCH_CONVENTION),
            )
        except KeyError as exc:
            raise DataError(f"watermark book missing field {exc}") from None
        except TypeError as exc:
            raise DataError(f"malformed watermark book: {exc}") from None
        if "M" in data and data["M"] != book.M:
            raise DataError(f"book declares M={data['M']} but lists {book.M} ids")
        return book


def save_book(book: WatermarkBook, path) -> None:
    Path(path).write_text(json.dumps(book.to_dict(), indent=2, sort_keys=True) + "\n")


def load_book(path, model: PatchEncoderModel | None = None) -> WatermarkBook:
    """Load a book; if ``model`` is given its fingerprint must match."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from None
    book = WatermarkBook.from_dict(data)
    if model is not None:
        book.verify(model)
    return book


# -- mining -----------------------------------------------------------------


def _series(item) -> np.ndarray:
    if isinstance(item, TimeSeriesWindow):
        return item.series()
    return np.asarray(item, dtype=float).ravel()


def _detection_series(item) -> np.ndarray:
    if isinstance(item, TimeSeriesWindow):
        return item.horizon
    return np.asarray(item, dtype=float).ravel()


def accumulated_similarity(
    model: PatchEncoderModel, table: TokenTable | None, corpus: Sequence
) -> np.ndarray:
    """Sum over every corpus patch of its cosine similarity to each token.

    Patches use the encoder's own patch length and stride over the full
    window (history then horizon). Per-token sums are taken over sorted
    values so the result does not depend on corpus order.
    """
    if len(corpus) == 0:
        raise DataError("corpus is empty")
    table = model.table if table is None else table
    patches = np.vstack([patchify(_series(w), model.patch_cfg)[0] for w in corpus])
    S = sim_matrix(patches, model, table)
    return np.sort(S, axis=0).sum(axis=0)


def mine_cold_tokens(
    model: PatchEncoderModel, table: TokenTable | None, corpus: Sequence, M: int
) -> list[int]:
    """Ids of the ``M`` tokens with the lowest accumulated similarity.

    Ties go to the lower token id.
    """
    table = model.table if table is None else table
    if M < 1 or M >= table.vocab_size:
        raise ConfigError(f"M must satisfy 1 <= M < vocab_size ({table.vocab_size}), got {M}")
    acc = accumulated_similarity(model, table, corpus)
    return [int(i) for i in np.argsort(acc, kind="stable")[:M]]


# -- calibration ------------------------------------------------------------


def window_statistic(series, model: PatchEncoderModel, book_tokens: np.ndarray) -> np.ndarray:
    """Similarity matrix (patches x book tokens) under the disjoint convention."""
    patches, _ = patchify(series, PatchConfig.disjoint(model.P))
    return sim_matrix(patches, model, book_tokens)


def calibrate_stats(
    model: PatchEncoderModel,
    book_ids: Sequence[int],
    corpus: Sequence,
    stat_mode: str = "per_window_max",
) -> tuple[float, float]:
    """Mean and sample standard deviation of the clean detection statistic.

    Under ``per_window_max`` each window contributes the maximum similarity
    between any of its (disjoint) patches and any book token. Under
    ``per_pair`` every (patch, token) similarity is one sample. Windows
    contribute their horizon; bare arrays are used whole.
    """
    if stat_mode not in STAT_MODES:
        raise ConfigError(f"unknown stat_mode {stat_mode!r}")
    if len(corpus) == 0:
        raise DataError("calibration corpus is empty")
    if len(corpus) < 30:
        warnings.warn(f"calibrating on only {len(corpus)} windows; estimates will be noisy")
    tokens = model.table[np.asarray(book_ids, dtype=int)]
    samples: list[float] = []
    for item in corpus:
        S = window_statistic(_detection_series(item), model, tokens)
        if stat_mode == "per_window_max":
            samples.append(float(S.max()))
        else:
            samples.extend(S.ravel().tolist())
    return mean_std(samples)


def mean_std(samples: Sequence[float]) -> tuple[float, float]:
    """Two-pass mean and n-1 standard deviation with exactly rounded sums."""
    n = len(samples)
    mu = math.fsum(samples) / n
    if n < 2:
        return mu, SIGMA_FLOOR
    var = math.fsum((s - mu) ** 2 for s in samples) / (n - 1)
    return mu, max(math.sqrt(var), SIGMA_FLOOR)


def build_book(
    model: PatchEncoderModel,
    mining_corpus: Sequence,
    calibration_corpus: Sequence,
    M: int = 32,
    stat_mode: str = "per_window_max",
    window_len: int | None = None,
) -> WatermarkBook:
    """Mine cold tokens on one corpus and calibrate on another (may be the same)."""
    ids = mine_cold_tokens(model, model.table, mining_corpus, M)
    mu, sigma = calibrate_stats(model, ids, calibration_corpus, stat_mode)
    if window_len is None and calibration_corpus:
        window_len = int(_detection_series(calibration_corpus[0]).size)
    return WatermarkBook(
        cold_token_ids=tuple(ids),
        mu=mu,
        sigma=sigma,
        model_fingerprint=model.fingerprint,
        stat_mode=stat_mode,
        calibration_size=len(calibration_corpus),
        window_len=window_len,
    )
