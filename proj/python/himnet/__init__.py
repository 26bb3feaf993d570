"""HimNet: heterogeneity-informed meta-parameter forecasting (C++ core)."""

from himnet._core import (
    HimNet,
    adaptive_graph_dynamic,
    adaptive_graph_static,
    encode_st,
    gcru_step,
    generate,
    generate_synthetic,
    graph_conv,
    metrics,
    zscore_apply,
    zscore_fit,
    zscore_invert,
)

__all__ = [
    "HimNet",
    "adaptive_graph_dynamic",
    "adaptive_graph_static",
    "encode_st",
    "gcru_step",
    "generate",
    "generate_synthetic",
    "graph_conv",
    "metrics",
    "zscore_apply",
    "zscore_fit",
    "zscore_invert",
]
