"""Watermark insertion.

A horizon is cut into disjoint patches (stride = P). The ``alpha`` patch/token
pairs that are already most similar are selected, each selected segment gets
additive noise that pulls its embedding toward the chosen cold token, and
the noise is written back into a copy of the horizon.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .book import WatermarkBook
from .encoder import PatchEncoderModel, cosine_sim, encode, grad_alignment_loss, sim_matrix
from .errors import ConfigError, DataError, NumericError
from .series import PatchConfig, patchify

OPTIMIZERS = ("projected_gd", "projected_adam")
MODES = ("hard", "soft")
ADAM_BETA1, ADAM_BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass(frozen=True)
class EmbedConfig:
    alpha: int = 1
    eta: float = 0.01
    step: float = 0.1
    iters: int = 20
    optimizer: str = "projected_adam"
    lambda_soft: float = 0.1
    mode: str = "hard"
    keep_best: bool = True

    def __post_init__(self):
        if int(self.alpha) != self.alpha or self.alpha < 1:
            raise ConfigError(f"alpha must be a positive integer, got {self.alpha!r}")
        if not math.isfinite(self.eta) or self.eta < 0:
            raise ConfigError(f"eta must be finite and >= 0, got {self.eta!r}")
        if not self.step > 0:
            raise ConfigError(f"step must be > 0, got {self.step!r}")
        if int(self.iters) != self.iters or self.iters < 1:
            raise ConfigError(f"iters must be a positive integer, got {self.iters!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.lambda_soft < 0:
            raise ConfigError("lambda_soft must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data) -> "EmbedConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown embed option(s): {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class PlanEntry:
    patch_index: int
    segment_range: tuple
    target_token_id: int
    initial_sim: float
    final_sim: float
    epsilon: np.ndarray

    def to_dict(self) -> dict:
        return {
            "patch_index": self.patch_index,
            "segment_range": list(self.segment_range),
            "target_token_id": self.target_token_id,
            "initial_sim": self.initial_sim,
            "final_sim": self.final_sim,
            "epsilon": self.epsilon.tolist(),
        }

    @classmethod
    def from_dict(cls, data) -> "PlanEntry":
        return cls(
            int(data["patch_index"]),
            tuple(data["segment_range"]),
            int(data["target_token_id"]),
            float(data["initial_sim"]),
            float(data["final_sim"]),
            np.asarray(data["epsilon"], dtype=float),
        )


@dataclass(frozen=True)
class WatermarkPlan:
    entries: tuple
    config: EmbedConfig = field(default_factory=EmbedConfig)
    model_fingerprint: str = ""

    def to_dict(self) -> dict:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "config": self.config.to_dict(),
            "model_fingerprint": self.model_fingerprint,
        }

    @classmethod
    def from_dict(cls, data) -> "WatermarkPlan":
        return cls(
            tuple(PlanEntry.from_dict(e) for e in data["entries"]),
            EmbedConfig.from_dict(data["config"]),
            data.get("model_fingerprint", ""),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


# -- location selection -----------------------------------------------------


def select_from_matrix(S: np.ndarray, alpha: int) -> list[tuple[int, int]]:
    """Greedy top-``alpha`` pairs of a (patches x tokens) matrix, one per patch.

    Pairs are ranked by similarity, then lower patch index, then lower token
    column.
    """
    n_patch, n_tok = S.shape
    if alpha > n_patch:
        raise ConfigError(f"alpha={alpha} exceeds the {n_patch} available patches")
    flat = S.ravel()
    rows, cols = np.divmod(np.arange(flat.size), n_tok)
    order = np.lexsort((cols, rows, -flat))
    chosen, used = [], set()
    for k in order:
        j = int(rows[k])
        if j in used:
            continue
        chosen.append((j, int(cols[k])))
        used.add(j)
        if len(chosen) == alpha:
            break
    return chosen


def select_locations(
    horizon, model: PatchEncoderModel, book: WatermarkBook, alpha: int
) -> list[tuple[int, int]]:
    """The ``alpha`` most similar (patch index, cold token id) pairs."""
    book.verify(model)
    x = np.asarray(horizon, dtype=float)
    if x.size < model.P:
        raise DataError(f"horizon length {x.size} is shorter than patch length {model.P}")
    patches, _ = patchify(x, PatchConfig.disjoint(model.P))
    S = sim_matrix(patches, model, book.tokens(model))
    ids = book.ids()
    return [(j, int(ids[c])) for j, c in select_from_matrix(S, alpha)]


# -- noise optimization -----------------------------------------------------


def _tie_matrix(P: int, n_valid: int) -> np.ndarray:
    """Map the ``n_valid`` real samples of a padded patch onto all P slots."""
    T = np.zeros((P, n_valid))
    T[np.arange(n_valid), np.arange(n_valid)] = 1.0
    T[n_valid:, n_valid - 1] = 1.0
    return T


def project_linf(eps: np.ndarray, eta: float) -> np.ndarray:
    """Element-wise clip onto the l-infinity ball of radius ``eta``."""
    out = np.where(np.abs(eps) <= eta, eps, np.sign(eps) * eta)
    return out + 0.0


def _penalty_grad(eps: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(eps)
    return np.zeros_like(eps) if n == 0 else eps / n


def _optimize(segment, target, model, cfg: EmbedConfig, project: bool, lam: float, n_valid):
    segment = np.asarray(segment, dtype=float)
    P = model.P
    if segment.size != P:
        raise DataError(f"segment length {segment.size} does not match P={P}")
    n_valid = P if n_valid is None else int(n_valid)
    T = _tie_matrix(P, n_valid)
    target = np.asarray(target, dtype=float)

    def objective(eps):
        sim = cosine_sim(encode(segment + T @ eps, model), target)
        return 1.0 - sim + lam * np.linalg.norm(eps), sim

    eps = np.zeros(n_valid)
    m = np.zeros(n_valid)
    v = np.zeros(n_valid)
    best_obj, sim0 = objective(eps)
    best = eps.copy()
    trace = [sim0]
    for t in range(1, cfg.iters + 1):
        g = T.T @ grad_alignment_loss(segment, T @ eps, target, model).grad
        if lam:
            g = g + lam * _penalty_grad(eps)
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient during noise optimization")
        if cfg.optimizer == "projected_adam":
            m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
            v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
            m_hat = m / (1 - ADAM_BETA1**t)
            v_hat = v / (1 - ADAM_BETA2**t)
            eps = eps - cfg.step * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        else:
            eps = eps - cfg.step * g
        if project:
            eps = project_linf(eps, cfg.eta)
        if not np.all(np.isfinite(eps)):
            raise NumericError("noise optimization produced non-finite values")
        obj, sim = objective(eps)
        trace.append(sim)
        if obj < best_obj:
            best_obj, best = obj, eps.copy()
    return (best if cfg.keep_best else eps), np.asarray(trace)


def optimize_noise_hard(segment, target, model, cfg: EmbedConfig = EmbedConfig(), n_valid=None):
    """Projected descent on ``1 - cos`` inside the l-inf ball of radius eta.

    ``n_valid`` marks how many leading samples of ``segment`` are real; the
    rest are padding tied to the last real sample and receive no noise of
    their own. Returns ``(epsilon, trace)`` where ``trace[0]`` is the initial
    similarity and ``trace[t]`` the similarity after update ``t``. With
    ``cfg.keep_best`` the lowest-loss iterate is returned (the zero start
    included).
    """
    return _optimize(segment, target, model, cfg, True, 0.0, n_valid)


def optimize_noise_soft(segment, target, model, cfg: EmbedConfig = EmbedConfig(), n_valid=None):
    """Unconstrained descent on ``1 - cos + lambda_soft * ||eps||_2``."""
    return _optimize(segment, target, model, cfg, False, cfg.lambda_soft, n_valid)


# -- assembly ---------------------------------------------------------------


def embed(
    horizon, model: PatchEncoderModel, book: WatermarkBook, cfg: EmbedConfig = EmbedConfig()
) -> tuple[np.ndarray, WatermarkPlan]:
    """Watermark a horizon; returns the new horizon and the plan used.

    Indices outside the selected segments are copied bit for bit.
    """
    x = np.array(horizon, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise DataError("horizon must be a finite 1-D vector")
    pairs = select_locations(x, model, book, cfg.alpha)
    patches, ranges = patchify(x, PatchConfig.disjoint(model.P))
    optimize = optimize_noise_hard if cfg.mode == "hard" else optimize_noise_soft
    out = x.copy()
    entries = []
    for j, tok in pairs:
        start, stop = ranges[j]
        target = model.table[tok]
        eps, trace = optimize(patches[j], target, model, cfg, n_valid=stop - start)
        out[start:stop] = x[start:stop] + eps
        final = cosine_sim(encode(patchify(out, PatchConfig.disjoint(model.P))[0][j], model), target)
        entries.append(PlanEntry(j, (start, stop), tok, float(trace[0]), final, eps))
    return out, WatermarkPlan(tuple(entries), cfg, model.fingerprint)
