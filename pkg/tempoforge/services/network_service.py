"""
Network construction, initialization and persistence.
"""
import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from tempoforge.models.network import CircuitParams, Network
from tempoforge.models.schemas import InitSpec, NeuronModel
from tempoforge.utils.binary_io import decode_container, encode_container, read_container, write_container
from tempoforge.utils.errors import ModelFileError, NetworkShapeError

logger = logging.getLogger(__name__)

MODEL_KIND = "network"
DEFAULT_TAU_IN = 5.0


def init_network(
    layer_sizes: Sequence[int],
    neuron_model: NeuronModel = NeuronModel.LINEAR,
    init_spec: Optional[InitSpec] = None,
    rng_seed: int = 0,
    circuit: Optional[CircuitParams] = None,
    tau_in: float = DEFAULT_TAU_IN,
) -> Network:
    """
    Draw a freshly initialized network.

    Weights of layer l are i.i.d. Gaussian with the per-layer mean and
    standard deviation resolved from ``init_spec``; thresholds are 1 and
    delays 0.

    Args:
        layer_sizes: N0..NM
        neuron_model: Linear or circuit dynamics
        init_spec: Per-layer weight distribution (default: scaled mean, std = mean)
        rng_seed: Seed of the weight generator
        circuit: Pulse voltages (circuit model only)
        tau_in: Input window used by the default mean scaling

    Returns:
        The initialized network

    Raises:
        NetworkShapeError: If any layer size is not positive
    """
    sizes = [int(n) for n in layer_sizes]
    if len(sizes) < 2 or any(n < 1 for n in sizes):
        raise NetworkShapeError(f"invalid layer sizes {sizes}")

    init_spec = init_spec or InitSpec()
    try:
        moments = init_spec.resolve(sizes, tau_in)
    except ValueError as e:
        raise NetworkShapeError(str(e))

    rng = np.random.default_rng(rng_seed)
    weights = []
    for l, (mean, std) in enumerate(moments, start=1):
        weights.append(rng.normal(mean, std, size=(sizes[l], sizes[l - 1])))
        logger.debug(f"Layer {l}: {sizes[l]}x{sizes[l - 1]} weights ~ N({mean:.5g}, {std:.5g})")

    network = Network(
        layer_sizes=tuple(sizes),
        weights=tuple(weights),
        thresholds=tuple(np.ones(n) for n in sizes[1:]),
        delays=tuple(np.zeros((sizes[l], sizes[l - 1])) for l in range(1, len(sizes))),
        neuron_model=neuron_model,
        circuit=circuit or CircuitParams(),
    )
    logger.info(f"Initialized {network.neuron_model.value} network {network.architecture} (seed {rng_seed})")
    return network


def _network_sections(network: Network) -> dict:
    sections = {}
    for l in range(network.depth):
        sections[f"weights.{l + 1}"] = network.weights[l]
        sections[f"thresholds.{l + 1}"] = network.thresholds[l]
        sections[f"delays.{l + 1}"] = network.delays[l]
    return sections


def _network_meta(network: Network) -> dict:
    return {
        "layers": network.architecture,
        "neuron_model": network.neuron_model.value,
        "v_plus": repr(float(network.circuit.v_plus)),
        "v_minus": repr(float(network.circuit.v_minus)),
    }


def encode_network(network: Network) -> bytes:
    return encode_container(MODEL_KIND, _network_sections(network), _network_meta(network))


def decode_network(data: bytes) -> Network:
    container = decode_container(data, expected_kind=MODEL_KIND)
    return _network_from_container(container)


def _network_from_container(container) -> Network:
    try:
        sizes = tuple(int(n) for n in container.meta["layers"].split("-"))
        model = NeuronModel(container.meta["neuron_model"])
        circuit = CircuitParams(float(container.meta["v_plus"]), float(container.meta["v_minus"]))
    except KeyError as e:
        raise ModelFileError(f"missing metadata {e}", section="header")
    except ValueError as e:
        raise ModelFileError(f"bad metadata: {e}", section="header")

    depth = len(sizes) - 1
    expected = {f"{kind}.{l}" for kind in ("weights", "thresholds", "delays") for l in range(1, depth + 1)}
    unexpected = set(container.sections) - expected
    if unexpected:
        raise ModelFileError(f"unexpected sections {sorted(unexpected)}", section="payload")

    return Network(
        layer_sizes=sizes,
        weights=tuple(container.section(f"weights.{l}") for l in range(1, depth + 1)),
        thresholds=tuple(container.section(f"thresholds.{l}") for l in range(1, depth + 1)),
        delays=tuple(container.section(f"delays.{l}") for l in range(1, depth + 1)),
        neuron_model=model,
        circuit=circuit,
    )


def save_network(network: Network, path: Union[str, Path]) -> None:
    write_container(path, MODEL_KIND, _network_sections(network), _network_meta(network))
    logger.info(f"Saved network {network.architecture} to {path}")


def load_network(path: Union[str, Path]) -> Network:
    """
    Load a network written by :func:`save_network`.

    Raises:
        ModelFileError: If the container is corrupt or truncated
        NetworkShapeError: If a section disagrees with the declared layer sizes
    """
    network = _network_from_container(read_container(path, expected_kind=MODEL_KIND))
    logger.info(f"Loaded network {network.architecture} from {path}")
    return network
