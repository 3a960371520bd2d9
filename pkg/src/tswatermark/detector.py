"""Watermark detection: calibrated z-score test and the naive top-K test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .book import WatermarkBook, window_statistic
from .encoder import PatchEncoderModel, TokenTable, sim_matrix
from .errors import ConfigError, DataError
from .series import PatchConfig, patchify

DEFAULT_GAMMA = 2.0
DEFAULT_TOP_K = 5


@dataclass(frozen=True)
class DetectionResult:
    z_score: float
    max_similarity: float
    decision: bool
    best_patch_index: int
    best_token_id: int
    method: str
    gamma: float | None = None
    offset: int = 0

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "z": self.z_score,
            "max_sim": self.max_similarity,
            "decision": self.decision,
            "best_patch_index": self.best_patch_index,
            "best_token_id": self.best_token_id,
            "gamma": self.gamma,
        }


def _check(candidate, model: PatchEncoderModel, book: WatermarkBook) -> np.ndarray:
    book.verify(model)
    x = np.asarray(candidate, dtype=float).ravel()
    if x.size < model.P:
        raise DataError(f"series shorter than patch length ({x.size} < {model.P})")
    if not np.all(np.isfinite(x)):
        raise DataError("candidate contains NaN or Inf")
    return x


def scan_offsets(n: int, window_len: int | None, P: int) -> list[int]:
    """Start offsets of length-``window_len`` windows, stride P, end-aligned tail."""
    if not window_len or n <= window_len:
        return [0]
    offsets = list(range(0, n - window_len + 1, P))
    if offsets[-1] != n - window_len:
        offsets.append(n - window_len)
    return offsets


def max_book_similarity(candidate, model: PatchEncoderModel, book: WatermarkBook):
    """``(max_sim, patch_index, token_id, offset)`` over the sliding scan."""
    x = _check(candidate, model, book)
    tokens = book.tokens(model)
    best = None
    for off in scan_offsets(x.size, book.window_len, model.P):
        seg = x[off: off + book.window_len] if book.window_len else x
        S = window_statistic(seg, model, tokens)
        j, c = np.unravel_index(int(np.argmax(S)), S.shape)
        if best is None or S[j, c] > best[0]:
            best = (float(S[j, c]), off // model.P + int(j), int(book.cold_token_ids[c]), off)
    return best


def detect_zscore(
    candidate, model: PatchEncoderModel, book: WatermarkBook, gamma: float = DEFAULT_GAMMA
) -> DetectionResult:
    """z = (max patch/book cosine - mu) / sigma; watermarked iff z > gamma.

    Series longer than the book's window length are scanned with windows of
    that length at stride P and the largest statistic is reported.
    """
    s, j, tok, off = max_book_similarity(candidate, model, book)
    z = (s - book.mu) / book.sigma
    return DetectionResult(z, s, bool(z > gamma), j, tok, "zscore", gamma, off)


def detect_topk(
    candidate,
    model: PatchEncoderModel,
    table: TokenTable | None,
    book: WatermarkBook,
    K: int = DEFAULT_TOP_K,
) -> DetectionResult:
    """Watermarked iff some patch has a book token among its K nearest tokens.

    Nearest means highest cosine over the full vocabulary, ties to the lower
    id. ``z_score`` carries the z of the best book similarity as a diagnostic.
    """
    table = model.table if table is None else table
    x = _check(candidate, model, book)
    if not 1 <= K <= table.vocab_size:
        raise ConfigError(f"K must lie in [1, {table.vocab_size}], got {K}")
    patches, _ = patchify(x, PatchConfig.disjoint(model.P))
    S = sim_matrix(patches, model, table)
    order = np.argsort(-S, axis=1, kind="stable")[:, :K]
    book_ids = book.ids()
    in_book = np.isin(order, book_ids)
    book_sims = S[:, book_ids]
    if in_book.any():
        hits = [(S[j, order[j, r]], j, order[j, r]) for j, r in zip(*np.nonzero(in_book))]
        _, j, tok = max(hits, key=lambda h: (h[0], -h[1], -h[2]))
    else:
        j, c = np.unravel_index(int(np.argmax(book_sims)), book_sims.shape)
        tok = book_ids[c]
    s_max = float(book_sims.max())
    return DetectionResult(
        (s_max - book.mu) / book.sigma, s_max, bool(in_book.any()), int(j), int(tok), "topk"
    )
