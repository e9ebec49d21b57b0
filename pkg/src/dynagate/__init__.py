"""Dynamic relevance gating for nonlinear (NARX) system identification."""

from .data import (STABLE_INPUT_RANGES, LaggedDataset, SimConfig,
                   StandardizeStats, SystemId, TimeSeriesPair, apply_stats,
                   build_arx, build_lagged, destandardize_target,
                   export_series_csv, generate_input, generate_series,
                   ground_truth_support, read_series_csv, simulate,
                   split_rows, stable_input_range, standardize)
from .fim import (CorrelationMatrix, EmpiricalFIM, correlation_matrix,
                  cramer_rao_toy, empirical_fim, first_layer_jacobian)
from .gates import (DecisionUnit, DropInGate, StochasticGate, decision_backward,
                    decision_forward, dropin_scores, init_decision_unit,
                    init_dropin_gate, init_stochastic_gate, sparsity_l1,
                    stochastic_forward, stochastic_mu_gradient, threshold_support)
from .harness import (AggregateResult, CellAggregate, ExperimentSpec, RunResult,
                      ingest_csv, run_suite, support_metrics)
from .network import (AdamState, Network, forward, backward, init_network,
                      input_gradient, load_checkpoint, optimizer_step,
                      save_checkpoint)
from .training import (FittedModel, LossBreakdown, TrainConfig, evaluate,
                       load_model, penalty_gradients, save_model, train,
                       variance_penalty)

__version__ = "0.1.0"
