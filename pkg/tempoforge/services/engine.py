"""
Model-agnostic entry points: forward, backward and one per-sample training pass.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from tempoforge.models.network import Gradients, Network, SpikeVector, VariationRealization, sentinelize
from tempoforge.models.schemas import Hyperparameters, NeuronModel
from tempoforge.models.trace import ForwardTrace
from tempoforge.services.backprop_service import LossBreakdown, backprop_linear, cost, one_hot, output_error
from tempoforge.services.circuit_service import backprop_circuit, forward_circuit
from tempoforge.services.forward_service import classify, forward_linear


def forward(
    network: Network, spikes: SpikeVector, realization: Optional[VariationRealization] = None
) -> ForwardTrace:
    if network.neuron_model == NeuronModel.CIRCUIT:
        return forward_circuit(network, spikes, realization)
    return forward_linear(network, spikes, realization)


def backward(
    trace: ForwardTrace, network: Network, output_delta: np.ndarray, hyper: Hyperparameters
) -> Gradients:
    if trace.neuron_model == NeuronModel.CIRCUIT:
        return backprop_circuit(trace, network, output_delta, hyper)
    return backprop_linear(trace, network, output_delta, hyper)


def trace_cost(trace: ForwardTrace, label: int, hyper: Hyperparameters) -> LossBreakdown:
    t_out = sentinelize(trace.output, hyper.sentinel)
    return cost(t_out, one_hot(label, len(t_out)), hyper)


@dataclass(frozen=True)
class SampleResult:
    """Everything one forward/backward pass contributes to a mini-batch."""

    gradients: Gradients
    breakdown: LossBreakdown
    correct: bool
    trace: ForwardTrace


def sample_pass(
    network: Network,
    spikes: SpikeVector,
    label: int,
    hyper: Hyperparameters,
    realization: Optional[VariationRealization] = None,
) -> SampleResult:
    """Forward, cost, output error and backward for one encoded sample."""
    trace = forward(network, spikes, realization)
    t_out = sentinelize(trace.output, hyper.sentinel)
    kappa = one_hot(label, len(t_out))
    breakdown = cost(t_out, kappa, hyper)
    gradients = backward(trace, network, output_error(t_out, kappa, hyper), hyper)
    return SampleResult(
        gradients=gradients,
        breakdown=breakdown,
        correct=classify(trace, hyper.sentinel) == label,
        trace=trace,
    )
