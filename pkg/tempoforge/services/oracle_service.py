"""
Independent verification: step-based membrane integration and
finite-difference gradients.

Nothing here is used on the training path.
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Hashable, List, Optional, Sequence, Tuple, Union

import numpy as np

from tempoforge.models.network import Network, SpikeVector, VariationRealization
from tempoforge.models.schemas import Hyperparameters, NeuronModel
from tempoforge.services.dataset_service import EncodedSample
from tempoforge.services.engine import forward, sample_pass, trace_cost
from tempoforge.services.forward_service import ArrivalEvent

logger = logging.getLogger(__name__)

DEFAULT_DT = 1e-4
DEFAULT_HORIZON = 50.0
BISECTION_TOL = 1e-10


@dataclass(frozen=True)
class OracleResult:
    crossing: Optional[float]
    times: np.ndarray
    potentials: np.ndarray


def rk4_step(f: Callable[[float], float], v: float, h: float) -> float:
    k1 = f(v)
    k2 = f(v + 0.5 * h * k1)
    k3 = f(v + 0.5 * h * k2)
    k4 = f(v + h * k3)
    return v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _bisect_step(f, v_start: float, h: float, v_th: float) -> float:
    lo, hi = 0.0, h
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if rk4_step(f, v_start, mid) >= v_th:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def integrate_membrane(
    model: NeuronModel,
    events: Sequence[ArrivalEvent],
    v_th: float,
    v_plus: float = 128.0,
    v_minus: float = -128.0,
    dt: float = DEFAULT_DT,
    t_end: Optional[float] = None,
    record: bool = True,
) -> OracleResult:
    """
    Fixed-step RK4 integration of one neuron's membrane.

    Steps are aligned to arrival times so no step straddles an input; the
    first step ending at or above ``v_th`` is refined by bisection on its
    step size.

    Args:
        model: Linear or circuit right-hand side
        events: Arrival events
        v_th: Threshold
        v_plus: Positive pulse voltage (circuit only)
        v_minus: Negative pulse voltage (circuit only)
        dt: Maximum step (ms)
        t_end: End of integration (default: last arrival + 50 ms)
        record: Keep the trajectory

    Returns:
        Crossing time (None if the membrane never reaches v_th) and the trajectory
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    ordered = sorted(events, key=lambda e: (e.time, e.index))
    if not ordered:
        return OracleResult(None, np.zeros(1), np.zeros(1))

    if t_end is None:
        t_end = ordered[-1].time + DEFAULT_HORIZON
    boundaries = sorted({e.time for e in ordered if e.time < t_end}) + [t_end]

    times: List[float] = [boundaries[0]]
    potentials: List[float] = [0.0]
    v = 0.0
    drive = 0.0
    leak = 0.0
    next_event = 0

    for start, stop in zip(boundaries[:-1], boundaries[1:]):
        while next_event < len(ordered) and ordered[next_event].time <= start:
            w = ordered[next_event].weight
            drive += w
            if model == NeuronModel.CIRCUIT:
                leak += w / (v_plus if w >= 0 else v_minus)
            next_event += 1

        def rhs(x, _a=drive, _b=leak):
            return _a - _b * x

        # a membrane sitting at a zero threshold fires as soon as the drive turns positive
        if v >= v_th and drive - leak * v_th > 0:
            return OracleResult(start, np.array(times), np.array(potentials))

        # after the last arrival dv/dt = a - b*v cannot carry v past v_th unless a > b*v_th
        if not record and next_event == len(ordered) and v < v_th and drive - leak * v_th <= 0:
            break

        steps = max(1, math.ceil((stop - start) / dt))
        h = (stop - start) / steps
        for s in range(steps):
            v_next = rk4_step(rhs, v, h)
            t_next = start + (s + 1) * h
            if v < v_th <= v_next:
                crossing = start + s * h + _bisect_step(rhs, v, h, v_th)
                if record:
                    times.append(crossing)
                    potentials.append(v_th)
                return OracleResult(crossing, np.array(times), np.array(potentials))
            v = v_next
            if record:
                times.append(t_next)
                potentials.append(v)

    return OracleResult(None, np.array(times), np.array(potentials))


def layer_events(
    presynaptic: np.ndarray, weights_row: np.ndarray, delays_row: np.ndarray
) -> List[ArrivalEvent]:
    return [
        ArrivalEvent(int(j), float(presynaptic[j] + delays_row[j]), float(weights_row[j]))
        for j in np.flatnonzero(~np.isnan(presynaptic))
    ]


def oracle_forward(
    network: Network,
    spikes: SpikeVector,
    realization: Optional[VariationRealization] = None,
    dt: float = DEFAULT_DT,
    horizon: float = DEFAULT_HORIZON,
) -> List[SpikeVector]:
    """Spike vectors of every layer obtained purely by numeric integration."""
    thresholds = realization.thresholds if realization else network.thresholds
    delays = realization.delays if realization else network.delays
    layers = []
    presynaptic = spikes.times
    for l in range(network.depth):
        times = np.full(network.layer_sizes[l + 1], np.nan)
        for i in range(network.layer_sizes[l + 1]):
            events = layer_events(presynaptic, network.weights[l][i], delays[l][i])
            if not events:
                continue
            result = integrate_membrane(
                network.neuron_model,
                events,
                float(thresholds[l][i]),
                network.circuit.v_plus,
                network.circuit.v_minus,
                dt=dt,
                t_end=max(e.time for e in events) + horizon,
                record=False,
            )
            if result.crossing is not None:
                times[i] = result.crossing
        layers.append(SpikeVector(times))
        presynaptic = times
    return layers


@dataclass(frozen=True)
class FiniteDifference:
    estimate: float
    stable: bool


def fd_gradient(
    probe: Callable[[float], Union[float, Tuple[float, Hashable]]],
    w: float,
    h: Optional[float] = None,
) -> FiniteDifference:
    """
    Central difference (C(w+h) - C(w-h)) / 2h.

    ``probe`` may return the cost alone or (cost, signature); the estimate
    is flagged unstable when the signatures of the two evaluations differ.
    """
    if h is None:
        h = 1e-5 * (abs(w) + 1.0)
    if h <= 0:
        raise ValueError("h must be positive")

    def split(result):
        if isinstance(result, tuple):
            return float(result[0]), result[1]
        return float(result), None

    c_plus, sig_plus = split(probe(w + h))
    c_minus, sig_minus = split(probe(w - h))
    return FiniteDifference(float((c_plus - c_minus) / (2.0 * h)), bool(sig_plus == sig_minus))


def weight_probe(
    network: Network,
    spikes: SpikeVector,
    label: int,
    hyper: Hyperparameters,
    layer: int,
    i: int,
    j: int,
    realization: Optional[VariationRealization] = None,
) -> Callable[[float], Tuple[float, Hashable]]:
    """Cost of one sample as a function of the single weight w[layer][i, j] (layer is 1-based)."""

    def probe(value: float) -> Tuple[float, Hashable]:
        weights = [w.copy() for w in network.weights]
        weights[layer - 1][i, j] = value
        trace = forward(network.with_weights(weights), spikes, realization)
        return trace_cost(trace, label, hyper).cost, trace.signature()

    return probe


@dataclass(frozen=True)
class GradcheckRow:
    layer: int
    i: int
    j: int
    analytic: float
    numeric: float
    stable: bool

    @property
    def rel_error(self) -> float:
        scale = max(abs(self.analytic), abs(self.numeric))
        return 0.0 if scale == 0 else abs(self.analytic - self.numeric) / scale

    def passed(self, rel_tol: float = 1e-4, abs_tol: float = 1e-7) -> bool:
        if abs(self.numeric) < 1e-3 and abs(self.analytic - self.numeric) < abs_tol:
            return True
        return self.rel_error < rel_tol


def gradcheck(
    network: Network,
    samples: Sequence[EncodedSample],
    hyper: Hyperparameters,
    probes: int,
    rng: np.random.Generator,
    realization: Optional[VariationRealization] = None,
    causal_only: bool = True,
    h: Optional[float] = None,
) -> List[GradcheckRow]:
    """
    Compare backprop gradients with central differences at random weights.

    Args:
        network: Network under test
        samples: Encoded samples (or (spikes, label) pairs); probes cycle through them
        hyper: Hyperparameters (epsilon = 0 makes the analytic gradient exact)
        probes: Number of weights to check
        rng: Generator choosing the probed weights
        realization: Optional variation realization
        causal_only: Only probe connections inside some causal set
        h: Finite-difference step (default relative to |w| + 1)

    Returns:
        One row per probe
    """
    rows: List[GradcheckRow] = []
    for p in range(probes):
        spikes, label = samples[p % len(samples)]
        result = sample_pass(network, spikes, label, hyper, realization)
        candidates = []
        for l, layer in enumerate(result.trace.layers, start=1):
            if causal_only:
                mask = layer.causal_mask(network.layer_sizes[l - 1])
            else:
                mask = np.ones(network.weights[l - 1].shape, dtype=bool)
            candidates.extend((l, int(i), int(j)) for i, j in zip(*np.nonzero(mask)))
        if not candidates:
            logger.debug(f"Probe {p}: sample has no causal connections, skipped")
            continue
        l, i, j = candidates[int(rng.integers(len(candidates)))]
        probe = weight_probe(network, spikes, label, hyper, l, i, j, realization)
        fd = fd_gradient(probe, float(network.weights[l - 1][i, j]), h)
        rows.append(GradcheckRow(
            layer=l, i=i, j=j,
            analytic=float(result.gradients.weights[l - 1][i, j]),
            numeric=fd.estimate,
            stable=fd.stable,
        ))
    return rows


def write_gradcheck_report(rows: Sequence[GradcheckRow], path: Union[str, Path]) -> Tuple[int, int]:
    """Write the plain-text table; returns (stable probes, stable probes that passed)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stable = [r for r in rows if r.stable]
    passed = [r for r in stable if r.passed()]
    with path.open("w") as fh:
        fh.write("layer i j analytic fd rel_err stable\n")
        for r in rows:
            fh.write(
                f"{r.layer} {r.i} {r.j} {r.analytic!r} {r.numeric!r} {r.rel_error:.3e} "
                f"{'yes' if r.stable else 'no'}\n"
            )
        fh.write(f"# probes = {len(rows)}\n# stable = {len(stable)}\n# passed = {len(passed)}\n")
    logger.info(f"Gradcheck: {len(passed)}/{len(stable)} stable probes passed ({len(rows)} total)")
    return len(stable), len(passed)
