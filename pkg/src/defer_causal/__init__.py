"""Causal evaluation of deferring systems (human-AI teams).

Scenario 1 (model and human predictions on deferred records) supports
individual effects, ATD and CATD; Scenario 2 (human only on deferred
records) supports regression-discontinuity estimation at the cutoff.
"""
__version__ = "0.1.0"

from .calibration import Cutoff, achieved_coverage, apply_policy, coverage_grid, estimate_cutoff
from .data import (ColumnSchema, EvaluationDataset, EvaluationRecord, Scenario, correctness,
                   emit_dataset, load_dataset, outcome_view, split_dataset, split_indices)
from .effects import (EffectEstimate, Unavailable, estimate_atd, estimate_catd, individual_effects,
                      model_accuracy, reweight_tau_delta, system_accuracy, tau_delta)
from .errors import (CalibrationError, ConfigError, DataError, DeferCausalError, DivergenceError,
                     InsufficientDataError, InsufficientSupportError, PolicyError, ScenarioError,
                     SingularFitError)
from .falsification import (DensityTestResult, density_test, placebo_cutoff_test, placebo_cutoffs,
                            placebo_outcome_test, placebo_side_test)
from .pipeline import (PipelineConfig, Report, bonferroni_threshold, emit_plotdata, emit_report,
                       run_pipeline)
from .rd import RdEstimate, RdFit, estimate_rd, local_linear_fit, rd_from_arrays, select_bandwidth
from .synthetic import (SynthConfig, build_surrogate, fit_logistic_sgd, generate_synth,
                        reject_score_cc, reject_score_sp)
