"""
Circuit neuron without operational amplifiers.

Each received spike adds a conductance to the membrane node, so after k
arrivals dv/dt = A_k - B_k*v with A_k the sum of the sorted weights and
B_k = sum(w * c), c = 1/V+ for w >= 0 and 1/V- otherwise. Segments are
exponential relaxations toward A_k/B_k and every quantity the backward
pass needs is recorded in CircuitCumulants.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from tempoforge.models.network import Gradients, Network, SpikeVector, VariationRealization
from tempoforge.models.schemas import Hyperparameters, NeuronModel
from tempoforge.models.trace import CircuitCumulants, ForwardTrace, LayerTrace
from tempoforge.services.forward_service import (
    ArrivalEvent,
    _check_input,
    _resolve_parameters,
    segment_upper_bounds,
    sort_arrivals,
)
from tempoforge.utils.numerics import B_TOL, decay, relaxation_curvature, relaxation_gain

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CircuitFiring:
    time: float
    causal_count: int
    cumulants: CircuitCumulants


@dataclass(frozen=True)
class ConductancePair:
    """Sign-split conductances of one weight layer."""

    plus: np.ndarray
    minus: np.ndarray

    def reconstruct(self, v_plus: float, v_minus: float) -> np.ndarray:
        return self.plus * v_plus + self.minus * v_minus


def pulse_factors(weights: np.ndarray, v_plus: float, v_minus: float) -> np.ndarray:
    """1/V+ for nonnegative weights, 1/V- for negative ones."""
    return np.where(weights >= 0, 1.0 / v_plus, 1.0 / v_minus)


def segment_terminal(v_start, slope, rate, width):
    """Membrane at the end of a segment of the given width.

    Exact relaxation toward slope/rate; the linear limit v_start + slope*width
    once rate <= B_TOL.
    """
    return v_start * decay(rate, width) + slope * relaxation_gain(rate, width)


def equilibrium_potential(
    events: Sequence[ArrivalEvent], v_plus: float, v_minus: float
) -> Optional[float]:
    """Asymptote sum(w) / sum(w * c) reached after every event has arrived."""
    weights = np.array([e.weight for e in events], dtype=np.float64)
    rate = float(np.sum(weights * pulse_factors(weights, v_plus, v_minus)))
    if rate <= B_TOL:
        return None
    return float(np.sum(weights)) / rate


def circuit_crossings(
    arrivals: np.ndarray,
    sorted_weights: np.ndarray,
    thresholds: np.ndarray,
    v_plus: float,
    v_minus: float,
) -> Tuple[np.ndarray, np.ndarray, CircuitCumulants]:
    """
    Walk the segments of every row at once and stop each row at its first crossing.

    Within segment k the membrane reaches v_th iff the drive A_k - B_k*v_th is
    positive; the crossing delay is log1p(B*r)/B with r = (v_th - v_start)/drive
    (r itself in the linear limit).

    Returns:
        (times, causal_count, cumulants)
    """
    n_post, n_events = arrivals.shape
    factors = pulse_factors(sorted_weights, v_plus, v_minus)
    slopes = np.cumsum(sorted_weights, axis=1)
    rates = np.cumsum(sorted_weights * factors, axis=1)
    upper = segment_upper_bounds(arrivals)
    widths = upper - arrivals
    starts = np.zeros((n_post, n_events))
    terminals = np.zeros((n_post, n_events))

    times = np.full(n_post, np.nan)
    counts = np.zeros(n_post, dtype=np.int64)
    active = np.ones(n_post, dtype=bool)
    v = np.zeros(n_post)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for k in range(n_events):
            if not active.any():
                break
            a, b, t_k = slopes[:, k], rates[:, k], arrivals[:, k]
            starts[:, k] = v
            drive = a - b * thresholds
            remaining = np.maximum(thresholds - v, 0.0) / drive
            delay = np.where(b > B_TOL, np.log1p(b * remaining) / np.where(b > B_TOL, b, 1.0), remaining)
            candidate = t_k + delay
            hit = active & (upper[:, k] > t_k) & (drive > 0) & (candidate < upper[:, k])

            times[hit] = candidate[hit]
            counts[hit] = k + 1
            widths[hit, k] = candidate[hit] - t_k[hit]
            v_end = segment_terminal(v, a, b, widths[:, k])
            terminals[:, k] = np.where(hit, thresholds, v_end)
            active &= ~hit
            v = np.where(active, v_end, v)

    cumulants = CircuitCumulants(
        sorted_weights=sorted_weights,
        pulse_factors=factors,
        slope_sums=slopes,
        rate_sums=rates,
        widths=widths,
        start_potentials=starts,
        terminal_potentials=terminals,
    )
    return times, counts, cumulants


def fire_time_circuit(
    events: Sequence[ArrivalEvent], v_th: float, v_plus: float, v_minus: float
) -> Optional[CircuitFiring]:
    """Closed-form spike time of a single circuit neuron; None if it never fires."""
    ordered = sorted(events, key=lambda e: (e.time, e.index))
    if not ordered:
        return None
    arrivals = np.array([[e.time for e in ordered]], dtype=np.float64)
    weights = np.array([[e.weight for e in ordered]], dtype=np.float64)
    times, counts, cumulants = circuit_crossings(
        arrivals, weights, np.array([float(v_th)]), v_plus, v_minus
    )
    if counts[0] == 0:
        return None
    return CircuitFiring(float(times[0]), int(counts[0]), cumulants)


def forward_circuit(
    network: Network,
    spikes: SpikeVector,
    realization: Optional[VariationRealization] = None,
) -> ForwardTrace:
    """Circuit-model counterpart of forward_linear, recording cumulants per layer."""
    _check_input(network, spikes)
    thresholds, delays = _resolve_parameters(network, realization)
    v_plus, v_minus = network.circuit.v_plus, network.circuit.v_minus

    layers: List[LayerTrace] = []
    presynaptic = spikes.times
    for l in range(network.depth):
        n_post = network.layer_sizes[l + 1]
        order, arrivals = sort_arrivals(presynaptic, delays[l], n_post)
        rows = np.arange(n_post)[:, None]
        sorted_weights = network.weights[l][rows, order]
        times, counts, cumulants = circuit_crossings(
            arrivals, sorted_weights, thresholds[l], v_plus, v_minus
        )
        layers.append(LayerTrace(
            spikes=SpikeVector(times),
            order=order,
            arrivals=arrivals,
            causal_count=counts,
            thresholds=thresholds[l],
            cumulants=cumulants,
        ))
        presynaptic = times

    return ForwardTrace(input=spikes, layers=tuple(layers), neuron_model=NeuronModel.CIRCUIT)


def _reverse_cumsum(x: np.ndarray) -> np.ndarray:
    return np.cumsum(x[:, ::-1], axis=1)[:, ::-1]


def circuit_sensitivities(layer: LayerTrace, epsilon: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sorted-order derivatives of every spike time of one layer.

    Reverse-mode walk over the segments 1..G: the terminal potential of
    segment k depends on A_k, B_k, its width and the previous terminal value
    (with factor exp(-B_k*width)). The adjoint of each segment is the product
    of the later decay factors.

    Returns:
        (dt_dw, dt_darrival), both (N_l, F) in arrival-sorted order; zero past G
        and for neurons that did not fire
    """
    cu = layer.cumulants
    n_post, n_events = layer.order.shape
    if n_events == 0:
        empty = np.zeros((n_post, 0))
        return empty, empty

    valid = layer.causal_prefix()
    a = cu.slope_sums
    b = cu.rate_sums
    width = np.where(valid, cu.widths, 0.0)
    v_prev = cu.start_potentials

    e = np.where(valid, decay(b, width), 1.0)
    d_slope = np.where(valid, relaxation_gain(b, width), 0.0)
    d_rate = np.where(valid, -a * relaxation_curvature(b, width) - v_prev * width * e, 0.0)
    d_width = np.where(valid, (a - b * v_prev) * e, 0.0)

    tail = np.cumprod(e[:, ::-1], axis=1)[:, ::-1]
    adjoint = np.concatenate([tail[:, 1:], np.ones((n_post, 1))], axis=1)
    adjoint = np.where(valid, adjoint, 0.0)

    # A_k and B_k include weight j for every k >= j
    slope_part = _reverse_cumsum(adjoint * d_slope)
    rate_part = _reverse_cumsum(adjoint * d_rate)
    dv_dw = np.where(valid, slope_part + cu.pulse_factors * rate_part, 0.0)

    # arrival j ends segment j-1 and starts segment j
    flow = adjoint * d_width
    shifted = np.concatenate([np.zeros((n_post, 1)), flow[:, :-1]], axis=1)
    dv_dt = np.where(valid, shifted - flow, 0.0)

    fired = layer.causal_count > 0
    last = np.maximum(layer.causal_count - 1, 0)
    rows = np.arange(n_post)
    drive = a[rows, last] - b[rows, last] * layer.thresholds
    with np.errstate(divide="ignore", invalid="ignore"):
        dt_dv = np.where(fired, -1.0 / (epsilon + drive), 0.0)
    return dt_dv[:, None] * dv_dw, dt_dv[:, None] * dv_dt


def backprop_circuit(
    trace: ForwardTrace,
    network: Network,
    output_delta: np.ndarray,
    hyper: Hyperparameters,
) -> Gradients:
    """
    Gradients of the cost for a circuit-model trace.

    Args:
        trace: Trace produced by forward_circuit on ``network``
        network: The network
        output_delta: dC/dt of the output layer
        hyper: Supplies epsilon for the crossing-slope denominator

    Returns:
        Per-layer weight gradients in the original (unsorted) index order
    """
    delta = np.where(trace.output.fired, np.asarray(output_delta, dtype=np.float64), 0.0)
    grads: List[np.ndarray] = [np.zeros_like(w) for w in network.weights]

    for l in reversed(range(network.depth)):
        layer = trace.layers[l]
        n_post, n_events = layer.order.shape
        n_pre = network.layer_sizes[l]
        dt_dw, dt_darrival = circuit_sensitivities(layer, hyper.epsilon)
        rows = np.broadcast_to(np.arange(n_post)[:, None], layer.order.shape)

        grad = np.zeros((n_post, n_pre))
        grad[rows, layer.order] = delta[:, None] * dt_dw
        grads[l] = grad

        if l > 0:
            upstream = np.zeros(n_pre)
            np.add.at(upstream, layer.order.ravel(), (delta[:, None] * dt_darrival).ravel())
            delta = np.where(trace.layers[l - 1].spikes.fired, upstream, 0.0)

    return Gradients(tuple(grads))


def _exact_quotient(w: np.ndarray, v: float) -> np.ndarray:
    """w / v, moved by one ulp where that makes the product reproduce w exactly."""
    q = w / v
    for candidate in (np.nextafter(q, np.inf), np.nextafter(q, -np.inf)):
        q = np.where((q * v != w) & (candidate * v == w), candidate, q)
    return q


def export_conductances(
    network: Network, v_plus: Optional[float] = None, v_minus: Optional[float] = None
) -> List[ConductancePair]:
    """
    Map every weight onto one nonzero conductance of the matching polarity.

    sigma * V reproduces w bit-exactly for power-of-two voltages and whenever a
    one-ulp neighbour of w / V does; otherwise it is within one ulp of w.
    """
    v_plus = network.circuit.v_plus if v_plus is None else v_plus
    v_minus = network.circuit.v_minus if v_minus is None else v_minus
    pairs = []
    for w in network.weights:
        plus = np.where(w >= 0, _exact_quotient(w, v_plus), 0.0)
        minus = np.where(w < 0, _exact_quotient(w, v_minus), 0.0)
        pairs.append(ConductancePair(plus=plus, minus=minus))
    return pairs


def write_conductance_table(
    pairs: Sequence[ConductancePair], path: Union[str, Path], v_plus: float, v_minus: float
) -> int:
    """Write one 'layer i j sigma_plus sigma_minus' row per connection; returns the row count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = 0
    with path.open("w") as fh:
        fh.write("# conductances normalized so that w = sigma_plus*V+ + sigma_minus*V-\n")
        fh.write(f"# V+ = {v_plus!r}\n# V- = {v_minus!r}\n")
        fh.write("layer i j sigma_plus sigma_minus\n")
        for l, pair in enumerate(pairs, start=1):
            for (i, j), plus in np.ndenumerate(pair.plus):
                fh.write(f"{l} {i} {j} {float(plus)!r} {float(pair.minus[i, j])!r}\n")
                rows += 1
    logger.info(f"Wrote {rows} conductance rows to {path}")
    return rows
