"""
Numeric domain objects: networks, spike vectors, gradients and variation
realizations.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from tempoforge.models.schemas import NeuronModel
from tempoforge.utils.errors import NetworkShapeError


@dataclass(frozen=True)
class SpikeVector:
    """Per-neuron first-spike times in ms; NaN marks a neuron that did not fire."""

    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        if times.ndim != 1:
            raise NetworkShapeError(f"spike vector must be 1-D, got shape {times.shape}")
        object.__setattr__(self, "times", times)

    @classmethod
    def from_optional(cls, values: Iterable[Optional[float]]) -> "SpikeVector":
        return cls(np.array([math.nan if v is None else float(v) for v in values], dtype=np.float64))

    @classmethod
    def silent(cls, size: int) -> "SpikeVector":
        return cls(np.full(size, np.nan))

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def fired(self) -> np.ndarray:
        return ~np.isnan(self.times)

    @property
    def fired_count(self) -> int:
        return int(np.count_nonzero(self.fired))

    def to_optional(self) -> List[Optional[float]]:
        return [None if math.isnan(t) else float(t) for t in self.times]

    def shifted(self, delta: float) -> "SpikeVector":
        return SpikeVector(self.times + delta)


def sentinelize(spikes: SpikeVector, t_max_sentinel: float) -> np.ndarray:
    """Dense copy of the spike times with non-fired entries set to the sentinel."""
    return np.where(spikes.fired, spikes.times, t_max_sentinel)


@dataclass(frozen=True)
class CircuitParams:
    """Supply pulse voltages of the resistive-memory circuit neuron."""

    v_plus: float = 128.0
    v_minus: float = -128.0

    def __post_init__(self):
        if not (self.v_plus > 0.0 and self.v_minus < 0.0):
            raise NetworkShapeError(
                f"pulse voltages need V+ > 0 > V-, got ({self.v_plus}, {self.v_minus})"
            )


@dataclass(frozen=True)
class Network:
    """Dense feedforward network; layer l maps N[l-1] inputs onto N[l] neurons."""

    layer_sizes: Tuple[int, ...]
    weights: Tuple[np.ndarray, ...]
    thresholds: Tuple[np.ndarray, ...]
    delays: Tuple[np.ndarray, ...]
    neuron_model: NeuronModel = NeuronModel.LINEAR
    circuit: CircuitParams = field(default_factory=CircuitParams)

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        if len(sizes) < 2:
            raise NetworkShapeError("a network needs at least an input and an output layer")
        if any(n < 1 for n in sizes):
            raise NetworkShapeError(f"layer sizes must be positive, got {list(sizes)}")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "neuron_model", NeuronModel(self.neuron_model))

        for name in ("weights", "thresholds", "delays"):
            arrays = tuple(np.asarray(a, dtype=np.float64) for a in getattr(self, name))
            if len(arrays) != len(sizes) - 1:
                raise NetworkShapeError(
                    f"{name}: expected {len(sizes) - 1} layers, got {len(arrays)}"
                )
            object.__setattr__(self, name, arrays)

        for l in range(1, len(sizes)):
            matrix = (sizes[l], sizes[l - 1])
            if self.weights[l - 1].shape != matrix:
                raise NetworkShapeError(
                    f"weights[{l}] has shape {self.weights[l - 1].shape}, expected {matrix}"
                )
            if self.delays[l - 1].shape != matrix:
                raise NetworkShapeError(
                    f"delays[{l}] has shape {self.delays[l - 1].shape}, expected {matrix}"
                )
            if self.thresholds[l - 1].shape != (sizes[l],):
                raise NetworkShapeError(
                    f"thresholds[{l}] has shape {self.thresholds[l - 1].shape}, expected ({sizes[l]},)"
                )
            if np.any(self.thresholds[l - 1] < 0):
                raise NetworkShapeError(f"thresholds[{l}] contains negative values")

    @property
    def depth(self) -> int:
        """Number of weight layers M."""
        return len(self.layer_sizes) - 1

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def architecture(self) -> str:
        return "-".join(str(n) for n in self.layer_sizes)

    def with_weights(self, weights: Sequence[np.ndarray]) -> "Network":
        return replace(self, weights=tuple(weights))

    def with_delays(self, delays: Sequence[np.ndarray]) -> "Network":
        return replace(self, delays=tuple(delays))


@dataclass(frozen=True)
class Gradients:
    """dC/dw per layer, shaped like Network.weights."""

    weights: Tuple[np.ndarray, ...]

    @classmethod
    def zeros_like(cls, network: Network) -> "Gradients":
        return cls(tuple(np.zeros_like(w) for w in network.weights))

    def __add__(self, other: "Gradients") -> "Gradients":
        return Gradients(tuple(a + b for a, b in zip(self.weights, other.weights)))

    def scaled(self, factor: float) -> "Gradients":
        return Gradients(tuple(g * factor for g in self.weights))

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(g))) if g.size else 0.0) for g in self.weights)

    def is_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(g))) for g in self.weights)


@dataclass(frozen=True)
class VariationRealization:
    """Realized device parameters: per-neuron thresholds and per-connection delays."""

    thresholds: Tuple[np.ndarray, ...]
    delays: Tuple[np.ndarray, ...]

    @classmethod
    def nominal(cls, network: Network) -> "VariationRealization":
        """The realization equal to the network's own (variation-free) parameters."""
        return cls(network.thresholds, network.delays)

    def check_against(self, network: Network) -> None:
        if len(self.thresholds) != network.depth or len(self.delays) != network.depth:
            raise NetworkShapeError("realization depth does not match the network")
        for l in range(network.depth):
            if self.thresholds[l].shape != network.thresholds[l].shape:
                raise NetworkShapeError(f"realization thresholds[{l + 1}] shape mismatch")
            if self.delays[l].shape != network.delays[l].shape:
                raise NetworkShapeError(f"realization delays[{l + 1}] shape mismatch")

    def with_delay_offsets(self, offsets: Sequence[float]) -> "VariationRealization":
        return VariationRealization(
            self.thresholds, tuple(d + a for d, a in zip(self.delays, offsets))
        )
