"""Widely separated MIMO radar with matrix-completion recovery.

Scene synthesis produces one low-rank pulse/range data matrix per tx-rx pair;
random sub-Nyquist sampling leaves partial observations that singular-value
thresholding completes at a fusion center, after which maximum-likelihood and
geometric estimators recover target position and velocity.  Ambiguity
surfaces and Cramer-Rao floors characterize the achievable accuracy.
"""

from .analysis import (AmbiguitySurface, CrlbReport, ambiguity, area_above,
                       crlb, effective_bandwidth, max_sidelobe)
from .completion import (CoherenceReport, CompletionError, SvtParams, SvtResult,
                         Theorem4Bounds, attach_bounds, beta_q_sup, bound_theorem4,
                         coherence, estimate_noise_var, noise_delta, relative_error,
                         singular_value_shrink, svt_complete, wrap_distance)
from .config import ConfigError, ExperimentConfig, default_config, parse_config, write_config
from .estimation import (DegenerateGeometryError, EstimationError, LocalizationResult,
                         SearchGrid, extract_peaks, geometric_localize, ml_localize,
                         ml_velocity, row_correlations, td_estimate)
from .geometry import (SPEED_OF_LIGHT, AntennaGeometry, GeometryError, RangeWindow,
                       Rect, Target, bistatic_range, common_range_window, delay,
                       doppler_shift, make_geometry, range_extremes, range_window,
                       sample_offset)
from .pipeline import (EstimationReport, PipelineContext, SweepCell, SweepResult,
                       build_context, derive_seed, emit_report, emit_sweep,
                       mse_points, run_pipeline, sweep)
from .scene import (OperatingConditionWarning, PulseDataMatrix, RadarConfig,
                    SceneError, SceneModel, add_noise, apply_mask, doppler_steering,
                    load_matrix_csv, noise_variance_for, save_matrix_csv, subsample,
                    synthesize_clean)
from .waveform import (PhaseCodeSet, WaveformError, autocorrelation,
                       autocorrelation_at, hadamard_codes, low_sidelobe_code,
                       sidelobe_energy, sylvester_hadamard)

__version__ = "0.1.0"
