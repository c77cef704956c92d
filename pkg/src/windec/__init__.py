"""Merge-free parallel sliding-window decoding for surface-code memories.

The pipeline runs detector-error-model construction, shot sampling with
per-window truth labels, independent window decoding with an exact
minimum-weight matcher, and XOR combination of the windows' logical
bits.  No corrections ever cross a window boundary; seam audits measure
how often that independence shows.
"""

from .circuit import build_memory_circuit
from .dem import (DetectorModel, build_memory_dem, dem_from_text,
                  dem_to_text)
from .engine import (ParallelResult, basis_event_columns,
                     benchmark_throughput, committed_correction,
                     decode_global, decode_parallel, seam_audit,
                     seam_residual, seam_scan, window_contexts)
from .graph import (DecodingGraph, DecompositionError, decompose_to_graph,
                    graph_to_csv)
from .layout import CodeLayout, build_rotated_surface_code
from .mwpm import Correction, MatchContext, decode, decode_parity_batch
from .oracle import brute_force_decode
from .sampler import (SampleBatch, Shot, WindowLabels, derive_window_labels,
                      read_events, read_grouped_dataset, read_labels,
                      read_predictions, read_window_dataset, sample_events,
                      sample_shot, write_events, write_grouped_dataset,
                      write_labels, write_predictions, write_window_dataset)
from .stats import (DepCurves, FitResult, RoundCorrelation, bce_loss,
                    dep_curves, epsilon_from_pl, fit_epsilon,
                    independence_estimate, pl_from_epsilon, recurrent_loss,
                    round_correlation, soft_xor, soft_xor_grad)
from .windows import WindowPlan, plan_windows, window_subgraph

__version__ = "0.1.0"

__all__ = [
    "CodeLayout", "Correction", "DecodingGraph", "DecompositionError",
    "DepCurves", "DetectorModel", "FitResult", "MatchContext",
    "ParallelResult", "RoundCorrelation", "SampleBatch", "Shot",
    "WindowLabels", "WindowPlan", "basis_event_columns", "bce_loss",
    "benchmark_throughput", "brute_force_decode", "build_memory_circuit",
    "build_memory_dem", "build_rotated_surface_code", "committed_correction",
    "decode", "decode_global", "decode_parallel", "decode_parity_batch",
    "decompose_to_graph", "dem_from_text", "dem_to_text", "dep_curves",
    "derive_window_labels", "epsilon_from_pl", "fit_epsilon", "graph_to_csv",
    "independence_estimate", "pl_from_epsilon", "plan_windows",
    "read_events", "read_grouped_dataset", "read_labels", "read_predictions",
    "read_window_dataset", "recurrent_loss", "round_correlation",
    "sample_events", "sample_shot", "seam_audit", "seam_residual",
    "seam_scan", "soft_xor", "soft_xor_grad", "window_contexts",
    "window_subgraph", "write_events", "write_grouped_dataset",
    "write_labels", "write_predictions", "write_window_dataset",
]
