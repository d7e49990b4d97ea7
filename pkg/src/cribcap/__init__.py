"""Rates and coding simulation for state-dependent channels with a cribbing helper."""

from .probability import (
    Alphabet,
    CondPmf,
    JointTable,
    Pmf,
    check_markov,
    entropy,
    marginalize,
    mutual_information,
)
from .channel import (
    AuxiliarySystem,
    ChannelSpec,
    RatePair,
    SpecValidationError,
    aux_from_dict,
    aux_from_joint_uv,
    aux_to_dict,
    build_joint,
    channel_from_dict,
    channel_to_dict,
    help_rate,
    load_aux,
    load_channel,
    rate_bound,
    rate_pair,
)
from .example import (
    ExampleAux,
    GapProbeReport,
    alpha_sweep,
    baselines,
    closed_form_rates,
    example_maps,
    make_example_aux,
    make_example_channel,
    strict_gap_probe,
)
from .search import (
    CardinalityBounds,
    SearchBudget,
    SearchResult,
    capacity_lower_bound,
    cardinality_bounds,
    enumerate_encoder_maps,
    enumerate_helper_maps,
    optimize_puv,
)
from .simulate import (
    Codebook,
    SchemeParams,
    SimReport,
    SimulationLimitError,
    TrialOutcome,
    backward_decode,
    encoder_step,
    estimate_error,
    generate_codebooks,
    helper_end_decode,
    helper_step,
    run_trial,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
