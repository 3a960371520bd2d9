"""Output watermarking for patch-embedding time-series forecasters.

Selected horizon patches are nudged, within an l-infinity budget, toward
"cold" vocabulary tokens that clean patches almost never resemble; a
z-score on the maximum patch/cold-token similarity detects the nudge.
"""

from .attacks import (
    FswConfig,
    LinearForecaster,
    TraceabilityReport,
    distill_and_probe,
    distill_train,
    fsw_correlation,
    fsw_detect,
    fsw_embed,
)
from .book import WatermarkBook, build_book, calibrate_stats, load_book, mine_cold_tokens, save_book
from .detector import DetectionResult, detect_topk, detect_zscore
from .embedder import (
    EmbedConfig,
    WatermarkPlan,
    embed,
    optimize_noise_hard,
    optimize_noise_soft,
    select_locations,
)
from .encoder import (
    PatchEncoderModel,
    TokenTable,
    cosine_sim,
    encode,
    grad_alignment_loss,
    load_model,
    make_synthetic_protected_model,
    save_model,
    sim_matrix,
)
from .errors import ConfigError, DataError, FingerprintError, NumericError, WatermarkError
from .experiment import (
    build_fixture,
    bundled_manifest,
    load_manifest,
    run_experiment,
    run_traceability,
)
from .metrics import f1, f1_over_delta_mse, mae, mse
from .series import (
    NormStats,
    PatchConfig,
    SyntheticComponents,
    TimeSeriesWindow,
    denormalize,
    generate_synthetic_dataset,
    load_csv,
    normalize,
    patchify,
    save_csv,
)

__version__ = "0.1.0"
