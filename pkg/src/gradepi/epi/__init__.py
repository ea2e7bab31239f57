"""Agent-based transmission model."""

from .engine import (
    RunContext,
    SimSettings,
    Simulator,
    aggregate_exposure,
    attribute_susceptibility,
    edge_transmission_rate,
    hazard_to_probability,
    random_infections,
    restriction_mask,
    run,
    seed_initial_infections,
    step,
)
from .modulator import ModulatorWeights, lstm_step, modulator_input, xavier_uniform
from .params import ATTRIBUTES, REFERENCE, AttributeFactors, DiseaseParams, ParamTensors
from .profile import DEFAULT_GATE_SHARPNESS, infectiousness_profile, lag_weights, normalized_gamma
from .state import NEVER, TRACE_HEADER, EpidemicState, EpidemicTrace, stage_totals

__all__ = [
    "ATTRIBUTES", "DEFAULT_GATE_SHARPNESS", "NEVER", "REFERENCE", "TRACE_HEADER",
    "AttributeFactors", "DiseaseParams", "EpidemicState", "EpidemicTrace", "ModulatorWeights",
    "ParamTensors", "RunContext", "SimSettings", "Simulator", "aggregate_exposure",
    "attribute_susceptibility", "edge_transmission_rate", "hazard_to_probability",
    "infectiousness_profile", "lag_weights", "lstm_step", "modulator_input", "normalized_gamma",
    "random_infections", "restriction_mask", "run", "seed_initial_infections", "stage_totals",
    "step", "xavier_uniform",
]
