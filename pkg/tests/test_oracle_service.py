import math

import numpy as np
import pytest

from tempoforge.models.schemas import Hyperparameters, NeuronModel
from tempoforge.services.circuit_service import fire_time_circuit
from tempoforge.services.engine import forward
from tempoforge.services.forward_service import ArrivalEvent, fire_time_linear
from tempoforge.services.oracle_service import (
    GradcheckRow,
    fd_gradient,
    gradcheck,
    integrate_membrane,
    oracle_forward,
    rk4_step,
    write_gradcheck_report,
)
from tests.helpers import make_network, random_spikes


def test_linear_single_event_crossing():
    result = integrate_membrane(NeuronModel.LINEAR, [ArrivalEvent(0, 0.0, 2.0)], 1.0, dt=1e-3)
    assert result.crossing == pytest.approx(0.5, abs=1e-8)
    assert result.potentials[-1] == 1.0


def test_circuit_single_event_crossing():
    result = integrate_membrane(NeuronModel.CIRCUIT, [ArrivalEvent(0, 0.0, 1.0)], 1.0, 2.0, -2.0, dt=1e-3)
    assert result.crossing == pytest.approx(2.0 * math.log(2.0), abs=1e-7)


def test_no_positive_drive():
    result = integrate_membrane(NeuronModel.LINEAR, [ArrivalEvent(0, 0.0, -1.0)], 1.0, dt=1e-2, t_end=5.0)
    assert result.crossing is None
    assert np.all(np.diff(result.potentials) <= 0.0)


def test_zero_threshold_fires_at_first_positive_drive():
    events = [ArrivalEvent(0, 1.0, 2.0)]
    linear = integrate_membrane(NeuronModel.LINEAR, events, 0.0, dt=1e-3)
    circuit = integrate_membrane(NeuronModel.CIRCUIT, events, 0.0, 4.0, -4.0, dt=1e-3)
    assert linear.crossing == fire_time_linear(events, 0.0).time == 1.0
    assert circuit.crossing == fire_time_circuit(events, 0.0, 4.0, -4.0).time == 1.0


def test_zero_threshold_after_inhibition():
    # v = -1 at t = 1, then rises with slope 2
    events = [ArrivalEvent(0, 0.0, -1.0), ArrivalEvent(1, 1.0, 3.0)]
    result = integrate_membrane(NeuronModel.LINEAR, events, 0.0, dt=1e-3)
    assert result.crossing == pytest.approx(fire_time_linear(events, 0.0).time, abs=1e-8)
    assert result.crossing == pytest.approx(1.5, abs=1e-8)


def test_trajectory_starts_at_first_arrival():
    events = [ArrivalEvent(0, 1.0, 0.5), ArrivalEvent(1, 2.0, 0.5)]
    result = integrate_membrane(NeuronModel.LINEAR, events, 10.0, dt=0.1, t_end=3.0)
    assert result.times[0] == 1.0
    assert result.potentials[0] == 0.0
    # v = 0.5 (t - 1) + 0.5 (t - 2) at t = 3
    assert result.potentials[-1] == pytest.approx(1.5, abs=1e-12)


def test_rk4_fourth_order():
    # dv/dt = 1 - v from 0 over one unit; halving h cuts the error about 16x
    f = lambda v: 1.0 - v
    exact = 1.0 - math.exp(-1.0)

    def solve(steps):
        v = 0.0
        for _ in range(steps):
            v = rk4_step(f, v, 1.0 / steps)
        return abs(v - exact)

    ratio = solve(10) / solve(20)
    assert 14.0 < ratio < 18.0


def test_invalid_step():
    with pytest.raises(ValueError):
        integrate_membrane(NeuronModel.LINEAR, [ArrivalEvent(0, 0.0, 1.0)], 1.0, dt=0.0)


def test_fd_of_quadratic():
    fd = fd_gradient(lambda w: w * w, 3.0, h=1e-5)
    assert fd.estimate == pytest.approx(6.0, abs=1e-6)
    assert fd.stable


def test_fd_flags_signature_change():
    probe = lambda w: (abs(w), w > 0)
    fd = fd_gradient(probe, 0.0, h=1e-3)
    assert not fd.stable


def test_gradcheck_row_tolerances():
    assert GradcheckRow(1, 0, 0, 1.0, 1.00001, True).passed()
    assert not GradcheckRow(1, 0, 0, 1.0, 1.01, True).passed()
    assert GradcheckRow(1, 0, 0, 1e-5, 1e-5 + 5e-8, True).passed()
    assert GradcheckRow(1, 0, 0, 0.0, 0.0, True).rel_error == 0.0


def test_gradcheck_report(tmp_path):
    rows = [
        GradcheckRow(1, 0, 2, 0.5, 0.5, True),
        GradcheckRow(2, 1, 0, 0.5, 0.9, True),
        GradcheckRow(2, 0, 0, 0.1, 3.0, False),
    ]
    stable, passed = write_gradcheck_report(rows, tmp_path / "report.txt")
    assert (stable, passed) == (2, 1)
    text = (tmp_path / "report.txt").read_text()
    assert text.splitlines()[0] == "layer i j analytic fd rel_err stable"
    assert "# passed = 1" in text


def test_gradcheck_skips_silent_samples():
    net = make_network([4, 3, 2])
    rows = gradcheck(net, [(random_spikes(4, np.random.default_rng(0), missing=1.0), 0)],
                     Hyperparameters(), probes=3, rng=np.random.default_rng(0))
    assert rows == []


@pytest.mark.parametrize("model,dt,tol,networks", [
    (NeuronModel.LINEAR, 1e-2, 1e-6, 200),
    (NeuronModel.CIRCUIT, 2e-3, 1e-5, 100),
])
def test_event_driven_matches_integration(model, dt, tol, networks):
    rng = np.random.default_rng(100 if model == NeuronModel.LINEAR else 200)
    compared = 0
    for seed in range(networks):
        sizes = [int(n) for n in rng.integers(2, 9, size=int(rng.integers(3, 5)))]
        net = make_network(sizes, seed=seed, model=model, v_pulse=[2.0, 4.0, 8.0][seed % 3],
                           delay_std=0.5 if seed % 2 else 0.0)
        spikes = random_spikes(sizes[0], rng)
        trace = forward(net, spikes)
        reference = oracle_forward(net, spikes, dt=dt, horizon=1e4)
        for l, oracle_layer in enumerate(reference, start=1):
            event = trace.spikes(l)
            np.testing.assert_array_equal(event.fired, oracle_layer.fired)
            np.testing.assert_allclose(event.times[event.fired], oracle_layer.times[oracle_layer.fired], atol=tol)
            compared += event.fired_count
    assert compared > 300
