"""Multiuser detection laboratory for pre-equalized random-access
bandwidth-request channels: code matrices, channel mismatch statistics,
decoder designs, greedy and sparse-recovery detectors, and a reproducible
Monte Carlo harness."""

from .channel import (ChannelDraw, ChannelParams, SparseModel,
                      sample_active_set, sample_lambda, synthesize_received)
from .codes import generate_code_matrix, load_code_matrix, save_code_matrix
from .decoders import (DecoderMatrix, DesignError, coherence_stats,
                       decoder_objective, design_decoder_mmse,
                       design_decoder_optimal, mmse_delta,
                       scaled_code_decoder)
from .detectors import CmudDetector, LassoDetector, LpTlsDetector
from .greedy import (CoherenceThresholds, DetectionResult,
                     compute_thresholds, cmud_detect, detection_error_bound,
                     estimate_user_count, thresholds_from_stats)
from .harness import (ALGORITHMS, CmudSettings, ExperimentConfig,
                      FigureResult, LassoSettings, SweepResult, TlsSettings,
                      TrialRecord, audit_lemma1, config_sha256,
                      config_to_text, emit_figure_data, parse_config_text,
                      run_sweep, validate_config, wilson_interval)
from .mismatch import (LambdaMoments, mean_lambda_r, moments, pdf_lambda,
                       pdf_params, percentile_threshold,
                       second_moment_lambda_r)
from .sparse import (TlsConfig, TlsTrace, dual_function_and_gradient,
                     focuss_weights, lasso_detect, lp_tls_detect,
                     primal_from_dual, q_update)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "ChannelDraw",
    "ChannelParams",
    "CmudDetector",
    "CmudSettings",
    "CoherenceThresholds",
    "DecoderMatrix",
    "DesignError",
    "DetectionResult",
    "ExperimentConfig",
    "FigureResult",
    "LambdaMoments",
    "LassoDetector",
    "LassoSettings",
    "LpTlsDetector",
    "SparseModel",
    "SweepResult",
    "TlsConfig",
    "TlsSettings",
    "TlsTrace",
    "TrialRecord",
    "audit_lemma1",
    "coherence_stats",
    "compute_thresholds",
    "cmud_detect",
    "config_sha256",
    "config_to_text",
    "decoder_objective",
    "design_decoder_mmse",
    "design_decoder_optimal",
    "detection_error_bound",
    "dual_function_and_gradient",
    "emit_figure_data",
    "estimate_user_count",
    "focuss_weights",
    "generate_code_matrix",
    "lasso_detect",
    "load_code_matrix",
    "lp_tls_detect",
    "mean_lambda_r",
    "mmse_delta",
    "moments",
    "parse_config_text",
    "pdf_lambda",
    "pdf_params",
    "percentile_threshold",
    "primal_from_dual",
    "q_update",
    "run_sweep",
    "sample_active_set",
    "sample_lambda",
    "save_code_matrix",
    "scaled_code_decoder",
    "second_moment_lambda_r",
    "synthesize_received",
    "thresholds_from_stats",
    "validate_config",
    "wilson_interval",
]
