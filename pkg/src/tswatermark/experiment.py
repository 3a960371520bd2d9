"""End-to-end experiment orchestration driven by a JSON manifest.

Pipeline for the synthetic fixture:

1. sample train / calibration / test windows and z-normalize them with
   statistics from the train split;
2. build the synthetic protected encoder;
3. fit a reference forecaster on the train split; its forecasts are the
   "protected model outputs" that get watermarked;
4. mine the cold-token book on train windows, calibrate mu / sigma on clean
   forecasts of the calibration split;
5. watermark half of the test forecasts, mix with the clean half, detect,
   and score detectability (F1) and utility (MSE / MAE against the truth).
"""

from __future__ import annotations

import copy
import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .attacks import LinearForecaster, TraceabilityReport, distill_and_probe, distill_train
from .book import WatermarkBook, accumulated_similarity, build_book, load_book
from .detector import DEFAULT_GAMMA, DEFAULT_TOP_K, detect_topk, detect_zscore
from .embedder import EmbedConfig, embed
from .encoder import PatchEncoderModel, load_model, make_synthetic_protected_model
from .errors import ConfigError, DataError
from .metrics import f1, f1_over_delta_mse, false_positive_rate, mae, mse
from .series import (
    NormStats,
    TimeSeriesWindow,
    channels_to_windows,
    generate_synthetic_dataset,
    load_csv,
    normalize,
)

SEED_ENV = "TSWATERMARK_SEED"
DEFAULT_SEED = 7

DEFAULT_MANIFEST: dict = {
    "name": "synthetic-fixture",
    "seed": DEFAULT_SEED,
    "dataset": {
        "K": 96,
        "L": 96,
        "n_train": 1000,
        "n_calibration": 500,
        "n_test": 500,
        "components": {},
    },
    "model": {"vocab_size": 1024, "d": 64, "P": 16, "stride": 8, "warm_fraction": 0.5},
    "forecaster": {"reg": 1e-3, "student": "linear"},
    "book": {"M": 32, "stat_mode": "per_window_max"},
    "embed": {},
    "detect": {"method": "zscore", "gamma": DEFAULT_GAMMA, "top_k": DEFAULT_TOP_K},
    "pool": {"watermarked_fraction": 0.5},
    "workers": 1,
}

FIXTURE_KEYS = ("route_dim", "route_gain", "bias_scale", "leak", "cold_anisotropy")


def default_seed() -> int:
    value = os.environ.get(SEED_ENV)
    if value is None:
        return DEFAULT_SEED
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {value!r}") from None


def _merge(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_manifest(path_or_dict) -> dict:
    """Read a manifest and fill defaults; relative paths resolve against its folder."""
    if isinstance(path_or_dict, Mapping):
        raw, root = dict(path_or_dict), Path.cwd()
    else:
        path = Path(path_or_dict)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"manifest not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        root = path.parent
    if "seed" not in raw:
        raw["seed"] = default_seed()
    manifest = _merge(DEFAULT_MANIFEST, raw)
    manifest["_root"] = str(root)
    return manifest


def bundled_manifest(name: str = "fixture") -> dict:
    """A manifest shipped with the package (``fixture`` is the acceptance setup)."""
    text = resources.files("tswatermark").joinpath("manifests").joinpath(f"{name}.json").read_text()
    return load_manifest(json.loads(text))


def _resolve(manifest: Mapping, rel: str) -> Path:
    p = Path(rel)
    return p if p.is_absolute() else Path(manifest["_root"]) / p


# -- fixture assembly -------------------------------------------------------


@dataclass
class Fixture:
    """Everything an experiment needs, already normalized."""

    model: PatchEncoderModel
    book: WatermarkBook
    forecaster: LinearForecaster
    norm_stats: NormStats
    train: list
    calibration: list
    test: list
    warm_ids: np.ndarray | None = None
    cold_ids: np.ndarray | None = None

    def outputs(self, windows) -> list[TimeSeriesWindow]:
        """Windows whose horizon is replaced by the reference forecast."""
        return forecast_windows(self.forecaster, windows)


def forecast_windows(forecaster: LinearForecaster, windows) -> list[TimeSeriesWindow]:
    if not windows:
        return []
    preds = forecaster.predict(np.vstack([w.history for w in windows]))
    return [w.with_horizon(p) for w, p in zip(windows, preds)]


def _dataset(manifest: Mapping) -> tuple[list, list, list, NormStats]:
    ds = manifest["dataset"]
    K, L = int(ds["K"]), int(ds["L"])
    n_tr, n_ca, n_te = int(ds["n_train"]), int(ds["n_calibration"]), int(ds["n_test"])
    if min(n_tr, n_ca, n_te) < 1:
        raise ConfigError("every split needs at least one window")
    if "csv" in ds:
        windows = channels_to_windows(load_csv(_resolve(manifest, ds["csv"])), K)
        if any(w.L != L for w in windows):
            raise DataError(f"dataset windows do not all have horizon length L={L}")
        if len(windows) < n_tr + n_ca + n_te:
            raise DataError(f"dataset has {len(windows)} windows, manifest needs {n_tr + n_ca + n_te}")
    else:
        windows, _ = generate_synthetic_dataset(
            int(manifest["seed"]), n_tr + n_ca + n_te, K, L, ds.get("components") or {}
        )
    train = windows[:n_tr]
    stats = NormStats.from_values([np.concatenate([w.series() for w in train])])
    windows = [normalize(w, stats) for w in windows]
    return windows[:n_tr], windows[n_tr:n_tr + n_ca], windows[n_tr + n_ca:n_tr + n_ca + n_te], stats


def build_fixture(manifest: Mapping) -> Fixture:
    train, calib, test, stats = _dataset(manifest)
    mcfg = manifest["model"]
    warm = cold = None
    if "path" in mcfg:
        model = load_model(_resolve(manifest, mcfg["path"]))
    else:
        extra = {k: mcfg[k] for k in FIXTURE_KEYS if k in mcfg}
        fx = make_synthetic_protected_model(
            int(mcfg.get("seed", manifest["seed"])),
            int(mcfg["vocab_size"]),
            int(mcfg["d"]),
            int(mcfg["P"]),
            float(mcfg["warm_fraction"]),
            stride=int(mcfg["stride"]),
            **extra,
        )
        model, warm, cold = fx.model, fx.warm_ids, fx.cold_ids
    fcfg = manifest["forecaster"]
    forecaster = distill_train(
        [(w.history, w.horizon) for w in train], float(fcfg["reg"]), fcfg.get("student", "linear")
    )
    bcfg = manifest["book"]
    if "path" in bcfg:
        book = load_book(_resolve(manifest, bcfg["path"]), model)
    else:
        book = build_book(
            model,
            train,
            forecast_windows(forecaster, calib),
            int(bcfg["M"]),
            bcfg.get("stat_mode", "per_window_max"),
        )
    return Fixture(model, book, forecaster, stats, train, calib, test, warm, cold)


# -- evaluation -------------------------------------------------------------


@dataclass
class EvalReport:
    mse_clean: float
    mse_wm: float
    mae_clean: float
    mae_wm: float
    f1: float
    precision: float
    recall: float
    f1_over_delta_mse: float | str
    false_positive_rate: float
    n_pool: int
    n_watermarked: int
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    per_dataset: dict = field(default_factory=dict)
    book: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping) -> "EvalReport":
        return cls(**data)


@dataclass
class ExperimentResult:
    report: EvalReport
    rows: list
    token_rows: list
    fixture: Fixture


def _pmap(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _detector(manifest: Mapping, fixture: Fixture):
    dcfg = manifest["detect"]
    method = dcfg.get("method", "zscore")
    gamma = float(dcfg.get("gamma", DEFAULT_GAMMA))
    if method == "zscore":
        return lambda x: detect_zscore(x, fixture.model, fixture.book, gamma)
    if method == "topk":
        k = int(dcfg.get("top_k", DEFAULT_TOP_K))
        return lambda x: detect_topk(x, fixture.model, None, fixture.book, k)
    raise ConfigError(f"unknown detection method {method!r}")


def run_experiment(manifest, fixture: Fixture | None = None) -> ExperimentResult:
    """Run the mixed-pool detection experiment described by ``manifest``."""
    if not (isinstance(manifest, Mapping) and "_root" in manifest):
        manifest = load_manifest(manifest)
    fixture = fixture or build_fixture(manifest)
    cfg = EmbedConfig.from_dict(manifest["embed"])
    workers = int(manifest.get("workers", 1))
    seed = int(manifest["seed"])

    outputs = fixture.outputs(fixture.test)
    clean = [w.horizon for w in outputs]
    truth = [w.horizon for w in fixture.test]
    wm = _pmap(lambda h: embed(h, fixture.model, fixture.book, cfg), clean, workers)
    wm_series = [x for x, _ in wm]

    n = len(clean)
    frac = float(manifest["pool"]["watermarked_fraction"])
    n_wm = int(round(n * frac))
    labels = np.zeros(n, dtype=bool)
    labels[np.random.default_rng(seed).permutation(n)[:n_wm]] = True
    pool = [wm_series[i] if labels[i] else clean[i] for i in range(n)]
    detect = _detector(manifest, fixture)
    results = _pmap(detect, pool, workers)
    decisions = [r.decision for r in results]

    f1_score, precision, recall = f1(decisions, labels)
    mse_c, mse_w = mse(clean, truth), mse(wm_series, truth)
    metrics = {
        "mse_clean": mse_c,
        "mse_wm": mse_w,
        "mae_clean": mae(clean, truth),
        "mae_wm": mae(wm_series, truth),
        "f1": f1_score,
        "precision": precision,
        "recall": recall,
        "f1_over_delta_mse": f1_over_delta_mse(f1_score, mse_w, mse_c),
        "false_positive_rate": false_positive_rate(decisions, labels),
    }
    config = {k: v for k, v in manifest.items() if not k.startswith("_")}
    report = EvalReport(
        **metrics,
        n_pool=n,
        n_watermarked=n_wm,
        config=config,
        seeds={"dataset": seed, "model": int(manifest["model"].get("seed", seed)), "pool": seed},
        per_dataset={manifest.get("name", "dataset"): dict(metrics)},
        book={
            "M": fixture.book.M,
            "mu": fixture.book.mu,
            "sigma": fixture.book.sigma,
            "stat_mode": fixture.book.stat_mode,
            "model_fingerprint": fixture.book.model_fingerprint,
        },
    )
    rows = [
        {
            "index": i,
            "label": int(labels[i]),
            "z": r.z_score,
            "max_sim": r.max_similarity,
            "decision": int(r.decision),
            "best_patch_index": r.best_patch_index,
            "best_token_id": r.best_token_id,
        }
        for i, r in enumerate(results)
    ]
    acc = accumulated_similarity(fixture.model, None, fixture.train)
    book_ids = set(fixture.book.cold_token_ids)
    token_rows = [
        {"token_id": i, "accumulated_similarity": float(a), "in_book": int(i in book_ids)}
        for i, a in enumerate(acc)
    ]
    return ExperimentResult(report, rows, token_rows, fixture)


def rows_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def run_traceability(manifest, fixture: Fixture | None = None, eta: float | None = None) -> TraceabilityReport:
    """Distillation probe on the fixture: train on train outputs, test on test outputs."""
    if not (isinstance(manifest, Mapping) and "_root" in manifest):
        manifest = load_manifest(manifest)
    fixture = fixture or build_fixture(manifest)
    cfg_dict = dict(manifest["embed"])
    if eta is not None:
        cfg_dict["eta"] = eta
    fcfg = manifest["forecaster"]
    return distill_and_probe(
        fixture.model,
        fixture.book,
        fixture.outputs(fixture.train),
        EmbedConfig.from_dict(cfg_dict),
        float(manifest["detect"].get("gamma", DEFAULT_GAMMA)),
        test_dataset=fixture.outputs(fixture.test),
        reg=float(fcfg["reg"]),
        student=fcfg.get("student", "linear"),
    )
