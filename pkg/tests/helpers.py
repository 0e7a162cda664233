"""
Builders shared by the test modules.
"""
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from tempoforge.models.network import CircuitParams, Network, SpikeVector
from tempoforge.models.schemas import NeuronModel


def make_network(
    sizes: Sequence[int],
    seed: int = 0,
    mean: float = 0.4,
    std: float = 0.6,
    model: NeuronModel = NeuronModel.LINEAR,
    v_pulse: float = 4.0,
    delay_std: float = 0.0,
) -> Network:
    rng = np.random.default_rng(seed)
    weights = [rng.normal(mean, std, size=(sizes[l], sizes[l - 1])) for l in range(1, len(sizes))]
    if delay_std:
        delays = [rng.normal(0.0, delay_std, size=w.shape) for w in weights]
    else:
        delays = [np.zeros(w.shape) for w in weights]
    return Network(
        layer_sizes=tuple(sizes),
        weights=tuple(weights),
        thresholds=tuple(np.ones(n) for n in sizes[1:]),
        delays=tuple(delays),
        neuron_model=model,
        circuit=CircuitParams(v_pulse, -v_pulse),
    )


def random_spikes(n: int, rng: np.random.Generator, tau_in: float = 5.0, missing: float = 0.2) -> SpikeVector:
    times = rng.uniform(0.0, tau_in, size=n)
    times[rng.random(n) < missing] = np.nan
    return SpikeVector(times)


def write_idx(directory: Path, prefix: str, images: np.ndarray, labels: np.ndarray) -> None:
    """Write an IDX3/IDX1 pair named the way the MNIST distribution names them."""
    n, rows, cols = images.shape
    (directory / f"{prefix}-images-idx3-ubyte").write_bytes(
        struct.pack(">IIII", 0x00000803, n, rows, cols) + images.astype(np.uint8).tobytes()
    )
    (directory / f"{prefix}-labels-idx1-ubyte").write_bytes(
        struct.pack(">II", 0x00000801, n) + labels.astype(np.uint8).tobytes()
    )


def synthetic_digits(n: int, seed: int = 0):
    """28x28 images where class k lights up a horizontal band."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=n)
    images = np.zeros((n, 28, 28), dtype=np.uint8)
    for idx, k in enumerate(labels):
        row = 2 + 2 * int(k)
        images[idx, row:row + 3, 4:24] = rng.integers(150, 256, size=(3, 20))
    return images, labels
