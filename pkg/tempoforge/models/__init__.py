"""Typed records: pydantic run schemas and numeric domain dataclasses."""
from tempoforge.models.network import (
    CircuitParams,
    Gradients,
    Network,
    SpikeVector,
    VariationRealization,
    sentinelize,
)
from tempoforge.models.schemas import (
    PRESETS,
    EvaluationResult,
    Hyperparameters,
    InitSpec,
    MetricsRow,
    NeuronModel,
    Phase,
    RunConfig,
    SweepAxis,
    SweepRow,
    VariationMode,
    VariationSpec,
    parse_architecture,
    read_key_values,
)
from tempoforge.models.trace import CircuitCumulants, ForwardTrace, LayerTrace

__all__ = [
    "CircuitCumulants",
    "CircuitParams",
    "EvaluationResult",
    "ForwardTrace",
    "Gradients",
    "Hyperparameters",
    "InitSpec",
    "LayerTrace",
    "MetricsRow",
    "Network",
    "NeuronModel",
    "PRESETS",
    "Phase",
    "RunConfig",
    "SpikeVector",
    "SweepAxis",
    "SweepRow",
    "VariationMode",
    "VariationRealization",
    "VariationSpec",
    "parse_architecture",
    "read_key_values",
    "sentinelize",
]
