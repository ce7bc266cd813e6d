"""Sampling-based sparsification laboratory for max-pooling graph networks.

Modules: graph_core (data structures and serialization), synth_data
(structured graph generator), gnn_model (one-layer max-aggregation model),
sampler (neighbor sampling and alpha bounds), trainer (prune-rewind-retrain
pipeline), analysis (lucky neurons, projection dynamics, VC construction),
experiments (Monte-Carlo sweeps), cli (command-line entry point).
"""

from .graph_core import (LabeledSubset, PatternSet, StructuredGraph,
                         load_graph, neighborhood, save_graph,
                         validate_assumptions)
from .synth_data import GenConfig, generate_graph, generate_patterns
from .gnn_model import (ModelState, NeighborhoodBatch, empirical_risk,
                        forward, generalization_error, gradient,
                        load_checkpoint, save_checkpoint)
from .sampler import (SamplingStrategy, alpha_bound_importance,
                      alpha_bound_partial, alpha_bound_uniform,
                      estimate_alpha, gamma_for_alpha, sample_neighbors)
from .trainer import (TrainConfig, TrialOutcome, magnitude_prune, pretrain,
                      random_prune, retrain, rewind, run_algorithm1,
                      theorem_bounds)
from .analysis import (LuckyReport, ProjectionTrace, detect_lucky,
                       neuron_scatter, track_projections, vc_construct,
                       vc_verify)
from .experiments import SweepResult, SweepSpec, run_sweep, write_outputs

__version__ = "0.1.0"

__all__ = [
    "LabeledSubset", "PatternSet", "StructuredGraph", "load_graph",
    "neighborhood", "save_graph", "validate_assumptions",
    "GenConfig", "generate_graph", "generate_patterns",
    "ModelState", "NeighborhoodBatch", "empirical_risk", "forward",
    "generalization_error", "gradient", "load_checkpoint", "save_checkpoint",
    "SamplingStrategy", "alpha_bound_importance", "alpha_bound_partial",
    "alpha_bound_uniform", "estimate_alpha", "gamma_for_alpha",
    "sample_neighbors",
    "TrainConfig", "TrialOutcome", "magnitude_prune", "pretrain",
    "random_prune", "retrain", "rewind", "run_algorithm1", "theorem_bounds",
    "LuckyReport", "ProjectionTrace", "detect_lucky", "neuron_scatter",
    "track_projections", "vc_construct", "vc_verify",
    "SweepResult", "SweepSpec", "run_sweep", "write_outputs",
]
