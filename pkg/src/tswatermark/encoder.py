"""Linear patch encoder, token table, cosine geometry and the synthetic
protected-model fixture.

The encoder maps a patch ``x`` (length P) to ``W @ x + b`` (length d). All
similarity work is cosine-based, so only directions matter.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.fft import dct

from .errors import ConfigError, DataError
from .series import PatchConfig

COS_FLOOR = 1e-12
ROW_FLOOR = 1e-8


@dataclass(frozen=True)
class TokenTable:
    embeddings: np.ndarray

    def __post_init__(self):
        emb = np.array(self.embeddings, dtype=float)
        if emb.ndim != 2 or emb.shape[0] < 1 or emb.shape[1] < 1:
            raise DataError(f"token table must be a non-empty 2-D matrix, got {emb.shape}")
        if not np.all(np.isfinite(emb)):
            raise DataError("token table contains NaN or Inf")
        norms = np.linalg.norm(emb, axis=1)
        if np.any(norms < ROW_FLOOR):
            bad = int(np.argmax(norms < ROW_FLOOR))
            raise DataError(f"token {bad} has a (near) zero embedding")
        emb.setflags(write=False)
        object.__setattr__(self, "embeddings", emb)

    @property
    def vocab_size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def __getitem__(self, ids):
        return self.embeddings[ids]


@dataclass(frozen=True)
class PatchEncoderModel:
    """Affine patch encoder plus the token table it is aligned with."""

    W: np.ndarray
    b: np.ndarray
    patch_cfg: PatchConfig
    table: TokenTable

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        b = np.array(self.b, dtype=float).ravel()
        if W.ndim != 2:
            raise DataError(f"W must be 2-D, got shape {W.shape}")
        d, P = W.shape
        if d < 2:
            raise DataError("embedding dimension must be >= 2")
        if P != self.patch_cfg.patch_len:
            raise DataError(f"W has {P} columns but patch_len is {self.patch_cfg.patch_len}")
        if b.size != d:
            raise DataError(f"bias has length {b.size}, expected {d}")
        if self.table.dim != d:
            raise DataError(f"token dim {self.table.dim} does not match encoder dim {d}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise DataError("encoder weights contain NaN or Inf")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "_fingerprint", _digest(_canonical_payload(self)))

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def P(self) -> int:
        return self.W.shape[1]

    @property
    def fingerprint(self) -> str:
        return self._fingerprint

    def replace(self, **changes) -> "PatchEncoderModel":
        fields = {"W": self.W, "b": self.b, "patch_cfg": self.patch_cfg, "table": self.table}
        fields.update(changes)
        return PatchEncoderModel(**fields)


def _canonical_payload(model: PatchEncoderModel) -> dict:
    return {
        "d": model.d,
        "P": model.P,
        "stride": model.patch_cfg.stride,
        "vocab_size": model.table.vocab_size,
        "W": model.W.ravel().tolist(),
        "b": model.b.tolist(),
        "token_embeddings": model.table.embeddings.ravel().tolist(),
    }


def _digest(payload: dict) -> str:
    # json renders floats with repr(), which round-trips float64 exactly
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def save_model(model: PatchEncoderModel, path) -> None:
    payload = _canonical_payload(model)
    payload["fingerprint"] = model.fingerprint
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def load_model(path) -> PatchEncoderModel:
    data = json.loads(Path(path).read_text())
    try:
        d, P, V = int(data["d"]), int(data["P"]), int(data["vocab_size"])
        model = PatchEncoderModel(
            W=np.reshape(data["W"], (d, P)),
            b=np.asarray(data["b"]),
            patch_cfg=PatchConfig(P, int(data.get("stride", P))),
            table=TokenTable(np.reshape(data["token_embeddings"], (V, d))),
        )
    except KeyError as exc:
        raise DataError(f"{path}: model file missing field {exc}") from None
    except ValueError as exc:
        raise DataError(f"{path}: malformed model file: {exc}") from None
    stored = data.get("fingerprint")
    if stored is not None and stored != model.fingerprint:
        raise DataError(f"{path}: stored fingerprint does not match the weights")
    return model


# -- geometry ---------------------------------------------------------------


def encode(patch, model: PatchEncoderModel) -> np.ndarray:
    """Embed one patch (length P) or a stack of patches (N x P)."""
    x = np.asarray(patch, dtype=float)
    if x.shape[-1] != model.P:
        raise DataError(f"patch length {x.shape[-1]} does not match P={model.P}")
    return x @ model.W.T + model.b


def cosine_sim(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise DataError(f"vector lengths differ ({a.size} vs {b.size})")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < COS_FLOOR or nb < COS_FLOOR:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _unit_rows(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    safe = np.where(norms < COS_FLOOR, 1.0, norms)
    return np.where(norms < COS_FLOOR, 0.0, M / safe)


def cosine_matrix(A, B) -> np.ndarray:
    """Row-wise cosine similarities between two stacks of vectors."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise DataError(f"vector lengths differ ({A.shape[1]} vs {B.shape[1]})")
    return np.clip(_unit_rows(A) @ _unit_rows(B).T, -1.0, 1.0)


def sim_matrix(patches, model: PatchEncoderModel, tokens=None) -> np.ndarray:
    """Cosine similarity of every encoded patch against every token.

    ``tokens`` may be a :class:`TokenTable`, a ``(m, d)`` array of token
    vectors, or ``None`` for the model's full table.
    """
    if tokens is None:
        tokens = model.table
    V = tokens.embeddings if isinstance(tokens, TokenTable) else np.asarray(tokens, dtype=float)
    V = np.atleast_2d(V)
    if V.shape[0] == 0 or V.size == 0:
        raise DataError("empty token set")
    E = encode(np.atleast_2d(patches), model)
    return cosine_matrix(E, V)


class AlignmentGrad(NamedTuple):
    grad: np.ndarray
    sim: float
    degenerate: bool


def grad_alignment_loss(segment, eps, target, model: PatchEncoderModel) -> AlignmentGrad:
    """Gradient of ``1 - cos(W (x + eps) + b, v)`` with respect to ``eps``."""
    x = np.asarray(segment, dtype=float) + np.asarray(eps, dtype=float)
    v = np.asarray(target, dtype=float)
    e = encode(x, model)
    ne, nv = np.linalg.norm(e), np.linalg.norm(v)
    if nv < COS_FLOOR:
        raise DataError("target token embedding is degenerate")
    if ne < COS_FLOOR:
        return AlignmentGrad(np.zeros(model.P), 0.0, True)
    sim = float(e @ v / (ne * nv))
    d_sim_de = v / (ne * nv) - sim * e / ne**2
    return AlignmentGrad(-(model.W.T @ d_sim_de), sim, False)


# -- synthetic protected model ----------------------------------------------


class SyntheticProtectedModel(NamedTuple):
    model: PatchEncoderModel
    table: TokenTable
    warm_ids: np.ndarray
    cold_ids: np.ndarray


def dct_basis(P: int) -> np.ndarray:
    """Orthonormal DCT-II basis; column k is the k-th frequency."""
    return dct(np.eye(P), norm="ortho", axis=0).T


def make_synthetic_protected_model(
    seed: int,
    vocab_size: int = 1024,
    d: int = 64,
    P: int = 16,
    warm_fraction: float = 0.5,
    *,
    stride: int | None = None,
    route_dim: int = 2,
    route_gain: float = 4.0,
    bias_scale: float = 3.0,
    leak: float = 0.02,
    cold_anisotropy: float = 0.0,
) -> SyntheticProtectedModel:
    """Build an encoder/token-table pair that exhibits cold tokens.

    Smooth (low-frequency) patch content is mapped into a "warm" subspace that
    also holds the bias direction and the warm tokens. The ``route_dim``
    highest DCT frequencies, which typical smooth data barely excites, are
    routed into a separate subspace of the complement where the cold tokens
    live. A small dense ``leak`` term keeps the geometry from being exactly
    block-diagonal.

    ``cold_anisotropy`` adds a shared direction to every cold token, inside the
    routed subspace, mimicking the anisotropy of real embedding tables.
    """
    if not 0 < warm_fraction < 1:
        raise ConfigError("warm_fraction must lie in (0, 1)")
    if d < 4:
        raise ConfigError("embedding dimension d must be >= 4")
    n_warm = int(np.floor(warm_fraction * vocab_size))
    if n_warm < 2:
        raise ConfigError(f"warm subset has {n_warm} tokens, need at least 2")
    if n_warm >= vocab_size:
        raise ConfigError("warm_fraction leaves no cold tokens")
    if P < 2:
        raise ConfigError("patch length must be >= 2")

    rng = np.random.default_rng(seed)
    warm_dim = max(2, d // 2)
    route_dim = int(min(route_dim, d - warm_dim - 1, P - 1))
    if route_dim < 1:
        raise ConfigError("no room for a routed cold subspace; increase d")

    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    u0 = Q[:, 0]
    Q_warm = Q[:, 1:warm_dim]
    Q_route = Q[:, warm_dim:warm_dim + route_dim]
    Q_cold = Q[:, warm_dim:]

    basis = dct_basis(P)
    low, high = basis[:, : P - route_dim], basis[:, P - route_dim:]

    mix = rng.standard_normal((warm_dim - 1, P - route_dim)) / np.sqrt(P - route_dim)
    W = Q_warm @ mix @ low.T
    W = W + route_gain * Q_route @ high.T
    W = W + leak * rng.standard_normal((d, P)) / np.sqrt(P)
    b = bias_scale * u0

    warm = u0[None, :] + 0.8 * rng.standard_normal((n_warm, warm_dim - 1)) @ Q_warm.T / np.sqrt(
        warm_dim - 1
    )
    n_cold = vocab_size - n_warm
    z = rng.standard_normal((n_cold, Q_cold.shape[1])) / np.sqrt(Q_cold.shape[1])
    cold = z @ Q_cold.T
    if cold_anisotropy:
        shared = Q_route @ rng.standard_normal(route_dim)
        cold = cold + cold_anisotropy * shared / np.linalg.norm(shared)
    tokens = np.vstack([warm, cold])
    tokens /= np.linalg.norm(tokens, axis=1, keepdims=True)

    order = rng.permutation(vocab_size)
    tokens = tokens[np.argsort(order)]
    warm_ids = np.sort(order[:n_warm])
    cold_ids = np.sort(order[n_warm:])

    table = TokenTable(tokens)
    model = PatchEncoderModel(W, b, PatchConfig(P, stride or max(1, P // 2)), table)
    return SyntheticProtectedModel(model, table, warm_ids, cold_ids)
