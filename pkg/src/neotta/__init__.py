"""Test-time re-centering of embedding streams for frozen linear heads.

The core loop is a one-vector summary: keep a running mean of every target
embedding seen so far, subtract it from each incoming batch, then apply the
unchanged source classifier.  When the source features are collapsed
(class means of equal norm forming a simplex around an origin-centered
global mean), a corruption's shared offset is exactly what the running mean
recovers, so the correction costs one vector subtraction per row.

Modules: adapter (states, heads, updates, prediction), geometry (synthetic
collapsed layouts and shift models), diagnostics (shift decomposition and
transfer analysis), metrics (accuracy, calibration, evaluation protocols),
io (file formats), figures (report rendering), cli (the ``neo`` command).
"""

from .adapter import (
    AdapterState,
    EmbeddingBatch,
    LinearHead,
    PredictionBatch,
    UpdateMode,
    center,
    merge,
    predict,
    predict_mse,
    softmax_confidence,
    update,
    update_continual,
)
from .geometry import (
    EtfGeometry,
    NcReport,
    NcTolerances,
    PairedDataset,
    ShiftModel,
    apply_shift,
    build_etf,
    head_from_etf,
    random_class_shifts,
    random_global_shift,
    sample_clean,
    verify_nc,
)
from .diagnostics import (
    AdjustmentKind,
    AlignmentRow,
    AlignmentTable,
    ArgmaxConsistency,
    ShiftDecomposition,
    ShiftHistogram,
    TransferMatrices,
    alignment_table,
    check_cosine_argmax,
    decompose_shift,
    top_shift_histogram,
    transfer_matrix,
)
from .metrics import (
    AdaptMode,
    BinStats,
    EceReport,
    EvalReport,
    Protocol,
    accuracy,
    ece,
    evaluate,
)
from .io import (
    AdapterSnapshot,
    Manifest,
    ManifestDomain,
    load_head,
    load_manifest,
    load_state,
    read_csv_embeddings,
    read_embeddings,
    read_labels,
    save_head,
    save_state,
    write_embeddings,
    write_labels,
)
from . import errors

__version__ = "0.1.0"

__all__ = [
    "AdapterState",
    "EmbeddingBatch",
    "LinearHead",
    "PredictionBatch",
    "UpdateMode",
    "center",
    "merge",
    "predict",
    "predict_mse",
    "softmax_confidence",
    "update",
    "update_continual",
    "EtfGeometry",
    "NcReport",
    "NcTolerances",
    "PairedDataset",
    "ShiftModel",
    "apply_shift",
    "build_etf",
    "head_from_etf",
    "random_class_shifts",
    "random_global_shift",
    "sample_clean",
    "verify_nc",
    "AdjustmentKind",
    "AlignmentRow",
    "AlignmentTable",
    "ArgmaxConsistency",
    "ShiftDecomposition",
    "ShiftHistogram",
    "TransferMatrices",
    "alignment_table",
    "check_cosine_argmax",
    "decompose_shift",
    "top_shift_histogram",
    "transfer_matrix",
    "AdaptMode",
    "BinStats",
    "EceReport",
    "EvalReport",
    "Protocol",
    "accuracy",
    "ece",
    "evaluate",
    "AdapterSnapshot",
    "Manifest",
    "ManifestDomain",
    "load_head",
    "load_manifest",
    "load_state",
    "read_csv_embeddings",
    "read_embeddings",
    "read_labels",
    "save_head",
    "save_state",
    "write_embeddings",
    "write_labels",
    "errors",
    "__version__",
]
