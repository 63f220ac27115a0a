"""Adaptive link selection for diffusion LMS/RLS estimation over networks."""

from .adapt import DivergenceError, NodeState, lms_adapt, rls_adapt, stability_bound
from .analysis import (HklRule, SteadyStateInputs, TheoryPrediction, UnstableConfiguration,
                       complexity_counts, mmse, steady_state_K_es_lms, steady_state_K_es_rls,
                       steady_state_K_si_lms, steady_state_K_si_rls, tracking_mse)
from .combine import (CombineInput, SiParams, combine_exhaustive, combine_fixed, combine_sparsity,
                      si_modify_errors)
from .experiments import sweep_snr
from .sim import ALGORITHMS, Scenario, SimResult, run_scenario
from .topology import (CandidateSet, Topology, TopologyError, enumerate_candidate_sets,
                       metropolis_matrix, metropolis_weights)

__version__ = "0.1.0"
