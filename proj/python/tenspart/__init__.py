"""Sparse 3-tensor low-rank approximation, partitioning and rank-(2,2,1) expansion."""

from ._tenspart import (
    BlockNormTable,
    ExpansionResult,
    ExpansionTerm,
    IndexRange,
    PartitionReport,
    RankApproximation,
    RankedLabel,
    SignificanceRanking,
    SparseTensor,
    TensorError,
    ThresholdMode,
    approximate,
    block_norms,
    expand,
    form_B,
    load_coordinate_file,
    mode_multiply,
    multi_multiply,
    nonsymmetric_normalize,
    normalize_slices_adjacency,
    normalize_slices_frobenius,
    partition,
    save_coordinate_file,
    symmetric_embed,
    threshold_B,
)

__all__ = [
    "BlockNormTable",
    "ExpansionResult",
    "ExpansionTerm",
    "IndexRange",
    "PartitionReport",
    "RankApproximation",
    "RankedLabel",
    "SignificanceRanking",
    "SparseTensor",
    "TensorError",
    "ThresholdMode",
    "approximate",
    "block_norms",
    "expand",
    "form_B",
    "from_dense",
    "load_coordinate_file",
    "mode_multiply",
    "multi_multiply",
    "nonsymmetric_normalize",
    "normalize_slices_adjacency",
    "normalize_slices_frobenius",
    "partition",
    "save_coordinate_file",
    "symmetric_embed",
    "threshold_B",
]


def from_dense(array):
    """SparseTensor holding the nonzeros of a dense (l, m, n) array."""
    import numpy as np

    a = np.asarray(array, dtype=float)
    if a.ndim != 3:
        raise ValueError("expected a 3-dimensional array")
    idx = np.argwhere(a != 0)
    return SparseTensor(a.shape, idx, a[tuple(idx.T)])
