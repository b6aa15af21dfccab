"""Incentive-aware synthetic control: latent-factor panels, principal
component regression with finite-sample bounds, incentive-compatible
recommendation policies and overlap tests."""

from .agents import (
    Categorical,
    ExploreExploitDescriptor,
    PopulationKnowledge,
    UniformInterval,
    UnitPrior,
    event_prob_xi,
    respond,
    verify_bic_mc,
)
from .harness import ExperimentConfig, impossibility_demo, run_experiment
from .overlap_tests import asymptotic_overlap_test, nonasymptotic_overlap_test
from .panel_model import (
    LatentFactorModel,
    ModelConfig,
    SimDgpConfig,
    generate_impossibility_instance,
    generate_sim_instance,
)
from .pcr import (
    DonorSet,
    InsufficientSignalError,
    PCRRegressor,
    alpha_bound,
    confidence_params,
    delta_for_epsilon,
    fit_pcr,
    predict_avg_post,
)
from .policy_k import KArmPolicy, KPolicyConfig, required_batch_L_k
from .policy_two import (
    InfeasibleError,
    PolicyConfig,
    TwoArmPolicy,
    required_batch_L,
    required_n0,
)

__version__ = "0.1.0"
