"""
Forward-trace records consumed by the backprop engines.
"""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from tempoforge.models.network import SpikeVector
from tempoforge.models.schemas import NeuronModel


@dataclass(frozen=True)
class CircuitCumulants:
    """Per-neuron segment quantities of the circuit model.

    Every array is (N_l, F) where F is the number of fired presynaptic
    neurons; column k describes the segment opened by the k-th arrival.
    Only the first G columns of a row are meaningful.
    """

    sorted_weights: np.ndarray
    pulse_factors: np.ndarray
    slope_sums: np.ndarray  # A_k
    rate_sums: np.ndarray  # B_k
    widths: np.ndarray
    start_potentials: np.ndarray
    terminal_potentials: np.ndarray


@dataclass(frozen=True)
class LayerTrace:
    """Spike times plus the arrival ordering that produced them.

    Attributes:
        spikes: Spike times of this layer's neurons.
        order: (N_l, F) presynaptic indices of each neuron, sorted by arrival.
        arrivals: (N_l, F) arrival times matching ``order``.
        causal_count: Size G of each neuron's causal set (0 if it did not fire).
        thresholds: Thresholds used for this pass.
        cumulants: Circuit-model segment data, None for the linear model.
    """

    spikes: SpikeVector
    order: np.ndarray
    arrivals: np.ndarray
    causal_count: np.ndarray
    thresholds: np.ndarray
    cumulants: Optional[CircuitCumulants] = None

    @property
    def size(self) -> int:
        return len(self.spikes)

    def causal_set(self, neuron: int) -> np.ndarray:
        """Presynaptic indices whose spikes arrived before ``neuron`` fired."""
        return self.order[neuron, : self.causal_count[neuron]]

    def causal_prefix(self) -> np.ndarray:
        """(N_l, F) boolean mask selecting the first G sorted columns per row."""
        columns = np.arange(self.order.shape[1])[None, :]
        return columns < self.causal_count[:, None]

    def causal_mask(self, presynaptic_size: int) -> np.ndarray:
        """(N_l, N_{l-1}) boolean mask of causal connections."""
        mask = np.zeros((self.size, presynaptic_size), dtype=bool)
        rows = np.broadcast_to(np.arange(self.size)[:, None], self.order.shape)
        prefix = self.causal_prefix()
        mask[rows[prefix], self.order[prefix]] = True
        return mask


@dataclass(frozen=True)
class ForwardTrace:
    """Input spikes and one LayerTrace per weight layer."""

    input: SpikeVector
    layers: Tuple[LayerTrace, ...]
    neuron_model: NeuronModel = NeuronModel.LINEAR

    @property
    def output(self) -> SpikeVector:
        return self.layers[-1].spikes

    def spikes(self, layer: int) -> SpikeVector:
        """Spike vector of layer ``layer``; 0 is the input layer."""
        return self.input if layer == 0 else self.layers[layer - 1].spikes

    def signature(self) -> Tuple:
        """Hashable summary of firing flags and causal sets.

        Two traces with equal signatures share every branch decision of the
        event-driven solver, so spike times are smooth between them.
        """
        parts: List[Tuple] = []
        for layer in self.layers:
            counts = tuple(int(g) for g in layer.causal_count)
            sets = tuple(
                tuple(int(j) for j in layer.causal_set(i)) for i in range(layer.size)
            )
            parts.append((tuple(bool(f) for f in layer.spikes.fired), counts, sets))
        return tuple(parts)
