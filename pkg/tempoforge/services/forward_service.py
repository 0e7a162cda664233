"""
Exact event-driven forward pass of the non-leaky integrate-and-fire neuron.

Between consecutive arrivals the membrane grows linearly with slope
A_k = sum of the weights received so far, so with W_k = sum(w * t_arrival)
the potential on segment k is A_k*t - W_k and the threshold crossing is
t* = (v_th + W_k) / A_k. Every postsynaptic neuron of a layer is solved at
once on an (N_l, F) matrix of arrival-sorted events.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from tempoforge.models.network import Network, SpikeVector, VariationRealization, sentinelize
from tempoforge.models.schemas import NeuronModel
from tempoforge.models.trace import ForwardTrace, LayerTrace
from tempoforge.utils.errors import NetworkShapeError

logger = logging.getLogger(__name__)

# Relative slack when accepting a crossing that rounds to just before its segment start
_TIME_TOL = 1e-12


@dataclass(frozen=True)
class ArrivalEvent:
    """One presynaptic spike as seen by one postsynaptic neuron."""

    index: int
    time: float
    weight: float


@dataclass(frozen=True)
class Firing:
    """Spike time of one neuron plus the presynaptic indices that caused it."""

    time: float
    causal: Tuple[int, ...]


def sort_arrivals(
    presynaptic: np.ndarray, delays: Optional[np.ndarray], n_post: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Arrival-sort the fired presynaptic spikes for every postsynaptic neuron.

    Ties keep presynaptic index order (stable sort), so the ordering is the
    total order by (arrival time, index).

    Returns:
        (order, arrivals), both (n_post, F) with F the fired presynaptic count
    """
    fired = np.flatnonzero(~np.isnan(presynaptic))
    base = presynaptic[fired]
    if delays is None or not np.any(delays[:, fired]):
        perm = np.argsort(base, kind="stable")
        order = np.tile(fired[perm], (n_post, 1))
        arrivals = np.tile(base[perm], (n_post, 1))
        return order, arrivals

    arrival_matrix = base[None, :] + delays[:, fired]
    perm = np.argsort(arrival_matrix, axis=1, kind="stable")
    return fired[perm], np.take_along_axis(arrival_matrix, perm, axis=1)


def segment_upper_bounds(arrivals: np.ndarray) -> np.ndarray:
    """End of every segment: the next arrival, or +inf for the last one."""
    tail = np.full((arrivals.shape[0], 1), np.inf)
    return np.concatenate([arrivals[:, 1:], tail], axis=1)


def linear_crossings(
    arrivals: np.ndarray, sorted_weights: np.ndarray, thresholds: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    First threshold crossing of every row of arrival-sorted events.

    A segment is accepted when its slope is positive, it has nonzero width
    (which merges simultaneous arrivals into one boundary) and the crossing
    falls in [t_k, t_{k+1}).

    Returns:
        (times, causal_count); times is NaN and the count 0 where no segment qualifies
    """
    n_post, n_events = arrivals.shape
    times = np.full(n_post, np.nan)
    counts = np.zeros(n_post, dtype=np.int64)
    if n_events == 0:
        return times, counts

    slopes = np.cumsum(sorted_weights, axis=1)
    weighted = np.cumsum(sorted_weights * arrivals, axis=1)
    upper = segment_upper_bounds(arrivals)
    with np.errstate(divide="ignore", invalid="ignore"):
        candidates = (thresholds[:, None] + weighted) / slopes
    lower = arrivals - _TIME_TOL * (1.0 + np.abs(arrivals))
    accepted = (slopes > 0) & (upper > arrivals) & (candidates < upper) & (candidates >= lower)

    has = accepted.any(axis=1)
    first = np.argmax(accepted, axis=1)
    rows = np.flatnonzero(has)
    k = first[rows]
    times[rows] = np.maximum(candidates[rows, k], arrivals[rows, k])
    counts[rows] = k + 1
    return times, counts


def fire_time_linear(events: Sequence[ArrivalEvent], v_th: float) -> Optional[Firing]:
    """
    Closed-form spike time of a single linear neuron.

    Args:
        events: Arrival events, sorted by arrival time
        v_th: Firing threshold (>= 0)

    Returns:
        The firing, or None when the membrane never reaches the threshold
    """
    ordered = sorted(events, key=lambda e: (e.time, e.index))
    if not ordered:
        return None
    arrivals = np.array([[e.time for e in ordered]], dtype=np.float64)
    weights = np.array([[e.weight for e in ordered]], dtype=np.float64)
    times, counts = linear_crossings(arrivals, weights, np.array([float(v_th)]))
    if counts[0] == 0:
        return None
    return Firing(float(times[0]), tuple(e.index for e in ordered[: counts[0]]))


def _resolve_parameters(
    network: Network, realization: Optional[VariationRealization]
) -> Tuple[Tuple[np.ndarray, ...], Tuple[np.ndarray, ...]]:
    if realization is None:
        return network.thresholds, network.delays
    realization.check_against(network)
    return realization.thresholds, realization.delays


def _check_input(network: Network, spikes: SpikeVector) -> None:
    if len(spikes) != network.input_size:
        raise NetworkShapeError(
            f"input has {len(spikes)} entries, network expects {network.input_size}"
        )


def forward_linear(
    network: Network,
    spikes: SpikeVector,
    realization: Optional[VariationRealization] = None,
) -> ForwardTrace:
    """
    Propagate input spikes through a linear network, layer by layer.

    Args:
        network: The network (its thresholds and delays are nominal values)
        spikes: Input spike vector of length N0
        realization: Realized thresholds and delays replacing the nominal ones

    Returns:
        Trace holding times, arrival orders and causal counts per layer

    Raises:
        NetworkShapeError: If the input length does not match N0
    """
    _check_input(network, spikes)
    thresholds, delays = _resolve_parameters(network, realization)

    layers: List[LayerTrace] = []
    presynaptic = spikes.times
    for l in range(network.depth):
        n_post = network.layer_sizes[l + 1]
        order, arrivals = sort_arrivals(presynaptic, delays[l], n_post)
        rows = np.arange(n_post)[:, None]
        sorted_weights = network.weights[l][rows, order]
        times, counts = linear_crossings(arrivals, sorted_weights, thresholds[l])
        layers.append(LayerTrace(
            spikes=SpikeVector(times),
            order=order,
            arrivals=arrivals,
            causal_count=counts,
            thresholds=thresholds[l],
        ))
        presynaptic = times

    return ForwardTrace(input=spikes, layers=tuple(layers), neuron_model=NeuronModel.LINEAR)


def classify(trace: ForwardTrace, t_max_sentinel: float = np.inf) -> int:
    """Index of the earliest output spike; non-fired outputs count as the sentinel, ties go low."""
    return int(np.argmin(sentinelize(trace.output, t_max_sentinel)))


@dataclass(frozen=True)
class NetworkStats:
    """Activity summary of one forward pass."""

    silent_hidden: int
    hidden_total: int
    mean_output_time: float


def network_stats(trace: ForwardTrace) -> NetworkStats:
    hidden = trace.layers[:-1]
    silent = sum(layer.size - layer.spikes.fired_count for layer in hidden)
    total = sum(layer.size for layer in hidden)
    fired = trace.output.times[trace.output.fired]
    mean_time = float(np.mean(fired)) if fired.size else float("nan")
    return NetworkStats(silent_hidden=silent, hidden_total=total, mean_output_time=mean_time)
