"""
Cost, output error and error backpropagation for the linear neuron model.
"""
import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from tempoforge.models.network import Gradients, Network
from tempoforge.models.schemas import Hyperparameters
from tempoforge.models.trace import ForwardTrace

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossBreakdown:
    """Cost C = L + (gamma/2) R together with its parts."""

    loss: float
    penalty: float
    cost: float
    softmax: np.ndarray
    target: np.ndarray


def one_hot(label: int, size: int) -> np.ndarray:
    kappa = np.zeros(size)
    kappa[label] = 1.0
    return kappa


def softmax_neg_time(t_out: np.ndarray) -> np.ndarray:
    """Softmax of -t, shifted by the earliest time before exponentiation."""
    t = np.asarray(t_out, dtype=np.float64)
    z = np.exp(-(t - np.min(t)))
    return z / np.sum(z)


def _log_softmax_neg_time(t: np.ndarray) -> np.ndarray:
    shifted = -(t - np.min(t))
    return shifted - np.log(np.sum(np.exp(shifted)))


def cost(t_out: np.ndarray, kappa: np.ndarray, hyper: Hyperparameters) -> LossBreakdown:
    """
    Cross-entropy of the negative-time softmax plus the temporal penalty.

    Args:
        t_out: Sentinelized output spike times
        kappa: One-hot target
        hyper: Supplies gamma, t_ref and the penalty exponent

    Returns:
        The loss breakdown
    """
    t = np.asarray(t_out, dtype=np.float64)
    kappa = np.asarray(kappa, dtype=np.float64)
    loss = float(-np.sum(kappa * _log_softmax_neg_time(t)))
    penalty = float(np.sum(np.abs(t - hyper.t_ref) ** hyper.penalty_exponent))
    return LossBreakdown(
        loss=loss,
        penalty=penalty,
        cost=loss + 0.5 * hyper.gamma * penalty,
        softmax=softmax_neg_time(t),
        target=kappa,
    )


def output_error(t_out: np.ndarray, kappa: np.ndarray, hyper: Hyperparameters) -> np.ndarray:
    """
    dC/dt of the output layer.

    With S proportional to exp(-t), d(-sum kappa ln S)/dt_i = kappa_i - S_i,
    so the cross-entropy term carries that sign.
    """
    t = np.asarray(t_out, dtype=np.float64)
    x = t - hyper.t_ref
    if hyper.penalty_exponent == 2.0:
        penalty_grad = x
    else:
        penalty_grad = 0.75 * np.sign(x) * np.sqrt(np.abs(x))
    return np.asarray(kappa, dtype=np.float64) - softmax_neg_time(t) + hyper.gamma * penalty_grad


def linear_sensitivities(layer, weights: np.ndarray, epsilon: float):
    """
    Sorted-order derivatives of one linear layer.

    dt_i/dw_ij = -(t_i - t_arrival_j) / D_i and dt_i/dt_j = w_ij / D_i for
    j in the causal set, with D_i = epsilon + sum of the causal weights.

    Returns:
        (dt_dw, dt_darrival), both (N_l, F) in arrival-sorted order
    """
    n_post = layer.order.shape[0]
    causal = layer.causal_prefix()
    sorted_weights = weights[np.arange(n_post)[:, None], layer.order]
    causal_weights = np.where(causal, sorted_weights, 0.0)
    denominator = epsilon + np.sum(causal_weights, axis=1)

    fired = layer.causal_count > 0
    inverse = np.where(fired, 1.0 / np.where(fired, denominator, 1.0), 0.0)
    lag = np.where(causal, layer.spikes.times[:, None] - layer.arrivals, 0.0)
    return -lag * inverse[:, None], causal_weights * inverse[:, None]


def backprop_linear(
    trace: ForwardTrace,
    network: Network,
    output_delta: np.ndarray,
    hyper: Hyperparameters,
) -> Gradients:
    """
    Backpropagate the output error through a linear-model trace.

    Non-fired neurons receive zero gradient and pass nothing upstream.

    Args:
        trace: Trace produced by forward_linear on ``network``
        network: The network
        output_delta: dC/dt of the output layer
        hyper: Supplies epsilon

    Returns:
        Per-layer weight gradients
    """
    delta = np.where(trace.output.fired, np.asarray(output_delta, dtype=np.float64), 0.0)
    grads: List[np.ndarray] = [np.zeros_like(w) for w in network.weights]

    for l in reversed(range(network.depth)):
        layer = trace.layers[l]
        n_post = layer.size
        n_pre = network.layer_sizes[l]
        dt_dw, dt_darrival = linear_sensitivities(layer, network.weights[l], hyper.epsilon)
        rows = np.broadcast_to(np.arange(n_post)[:, None], layer.order.shape)

        grad = np.zeros((n_post, n_pre))
        grad[rows, layer.order] = delta[:, None] * dt_dw
        grads[l] = grad

        if l > 0:
            upstream = np.zeros(n_pre)
            np.add.at(upstream, layer.order.ravel(), (delta[:, None] * dt_darrival).ravel())
            delta = np.where(trace.layers[l - 1].spikes.fired, upstream, 0.0)

    return Gradients(tuple(grads))


def sgd_step(network: Network, gradients: Gradients, eta: float) -> Network:
    """w <- w - eta * g; thresholds and delays untouched."""
    return network.with_weights(w - eta * g for w, g in zip(network.weights, gradients.weights))

