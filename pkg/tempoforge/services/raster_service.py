"""
Spike rasters and membrane trajectories for figure reproduction.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from tempoforge.models.network import Network, SpikeVector, VariationRealization
from tempoforge.models.schemas import NeuronModel
from tempoforge.services.circuit_service import pulse_factors, segment_terminal
from tempoforge.services.engine import forward
from tempoforge.services.oracle_service import integrate_membrane, layer_events

logger = logging.getLogger(__name__)

RASTER_HEADER = "# tempoforge raster v2"


def membrane_trace(
    network: Network,
    spikes: SpikeVector,
    layer: int,
    neurons: Sequence[int],
    times: np.ndarray,
    realization: Optional[VariationRealization] = None,
) -> np.ndarray:
    """
    Closed-form membrane potentials of selected neurons at the given times.

    The membrane is 0 before the first arrival and is held at 0 from the
    neuron's own spike onward.

    Returns:
        (len(neurons), len(times)) potentials
    """
    trace = forward(network, spikes, realization)
    lt = trace.layers[layer - 1]
    times = np.asarray(times, dtype=np.float64)
    out = np.zeros((len(neurons), times.shape[0]))

    for r, i in enumerate(neurons):
        arrivals = lt.arrivals[i]
        if arrivals.shape[0] == 0:
            continue
        w = network.weights[layer - 1][i, lt.order[i]]
        slopes = np.cumsum(w)
        if network.neuron_model == NeuronModel.CIRCUIT:
            rates = np.cumsum(w * pulse_factors(w, network.circuit.v_plus, network.circuit.v_minus))
        else:
            rates = np.zeros_like(slopes)

        starts = np.zeros_like(slopes)
        for k in range(1, slopes.shape[0]):
            starts[k] = segment_terminal(
                starts[k - 1], slopes[k - 1], rates[k - 1], arrivals[k] - arrivals[k - 1]
            )

        k = np.searchsorted(arrivals, times, side="right") - 1
        kk = np.clip(k, 0, None)
        values = segment_terminal(starts[kk], slopes[kk], rates[kk], np.maximum(times - arrivals[kk], 0.0))
        values = np.where(k < 0, 0.0, values)
        if lt.spikes.fired[i]:
            values = np.where(times >= lt.spikes.times[i], 0.0, values)
        out[r] = values
    return out


@dataclass
class RasterData:
    """Parsed raster: (neuron, time) pairs per layer and sampled trajectories.

    Trajectory rows are (t, integrated v, closed-form v).
    """

    spikes: Dict[int, List[Tuple[int, float]]] = field(default_factory=dict)
    membranes: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)


def _subsample(times: np.ndarray, potentials: np.ndarray, max_points: int):
    if times.shape[0] <= max_points:
        return times, potentials
    keep = np.unique(np.linspace(0, times.shape[0] - 1, max_points).astype(int))
    return times[keep], potentials[keep]


def dump_raster(
    network: Network,
    spikes: SpikeVector,
    path: Union[str, Path],
    realization: Optional[VariationRealization] = None,
    membrane_layers: Optional[Sequence[int]] = None,
    max_neurons: int = 10,
    dt: float = 1e-3,
    max_points: int = 500,
) -> RasterData:
    """
    Write a raster file for one sample.

    Args:
        network: Network to simulate
        spikes: Encoded input sample
        path: Output file
        realization: Optional variation realization
        membrane_layers: Layers whose trajectories are sampled (default: output layer)
        max_neurons: Trajectories per layer
        dt: Integrator step for the trajectories (ms)
        max_points: Samples kept per trajectory

    Returns:
        The data written
    """
    trace = forward(network, spikes, realization)
    thresholds = realization.thresholds if realization else network.thresholds
    delays = realization.delays if realization else network.delays
    data = RasterData()
    for l in range(network.depth + 1):
        layer_spikes = trace.spikes(l)
        data.spikes[l] = [(int(i), float(layer_spikes.times[i])) for i in np.flatnonzero(layer_spikes.fired)]

    for l in membrane_layers or [network.depth]:
        presynaptic = trace.spikes(l - 1).times
        for i in range(min(max_neurons, network.layer_sizes[l])):
            events = layer_events(presynaptic, network.weights[l - 1][i], delays[l - 1][i])
            if not events:
                continue
            t_end = max(e.time for e in events) + 10.0
            if trace.spikes(l).fired[i]:
                t_end = max(t_end, trace.spikes(l).times[i] + 1.0)
            result = integrate_membrane(
                network.neuron_model, events, float(thresholds[l - 1][i]),
                network.circuit.v_plus, network.circuit.v_minus, dt=dt, t_end=t_end,
            )
            t, v = _subsample(result.times, result.potentials, max_points)
            closed = membrane_trace(network, spikes, l, [i], t, realization)[0]
            data.membranes[(l, i)] = np.column_stack([t, v, closed])

    write_raster(data, path)
    logger.info(
        f"Wrote raster to {path}: "
        + ", ".join(f"layer {l}: {len(ev)} spikes" for l, ev in data.spikes.items())
    )
    return data


def write_raster(data: RasterData, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(RASTER_HEADER + "\n")
        for l, events in sorted(data.spikes.items()):
            fh.write(f"layer {l} {len(events)}\n")
            for i, t in events:
                fh.write(f"{i} {float(t)!r}\n")
        for (l, i), samples in sorted(data.membranes.items()):
            fh.write(f"membrane {l} {i} {samples.shape[0]}\n")
            for row in samples:
                fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def parse_raster(path: Union[str, Path]) -> RasterData:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != RASTER_HEADER:
        raise ValueError(f"{path} is not a raster file")
    data = RasterData()
    pos = 1
    while pos < len(lines):
        head = lines[pos].split()
        pos += 1
        if head[0] == "layer":
            count = int(head[2])
            data.spikes[int(head[1])] = [
                (int(a), float(b)) for a, b in (lines[pos + n].split() for n in range(count))
            ]
        elif head[0] == "membrane":
            count = int(head[3])
            rows = [tuple(float(x) for x in lines[pos + n].split()) for n in range(count)]
            data.membranes[(int(head[1]), int(head[2]))] = np.array(rows).reshape(count, 3)
        else:
            raise ValueError(f"{path}:{pos}: unexpected line {lines[pos - 1]!r}")
        pos += count
    return data
