"""
Services package: simulation engines, training and verification.
"""
from .backprop_service import backprop_linear, cost, output_error, sgd_step, softmax_neg_time
from .circuit_service import (
    backprop_circuit,
    equilibrium_potential,
    export_conductances,
    fire_time_circuit,
    forward_circuit,
    segment_terminal,
)
from .engine import backward, forward, sample_pass
from .forward_service import ArrivalEvent, classify, fire_time_linear, forward_linear
from .network_service import init_network, load_network, save_network
from .training_service import TrainingService

__all__ = [
    "ArrivalEvent",
    "TrainingService",
    "backprop_circuit",
    "backprop_linear",
    "backward",
    "classify",
    "cost",
    "equilibrium_potential",
    "export_conductances",
    "fire_time_circuit",
    "fire_time_linear",
    "forward",
    "forward_circuit",
    "forward_linear",
    "init_network",
    "load_network",
    "output_error",
    "sample_pass",
    "save_network",
    "segment_terminal",
    "sgd_step",
    "softmax_neg_time",
]
