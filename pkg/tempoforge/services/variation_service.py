"""
Device variation of firing thresholds and spike delays.
"""
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from tempoforge.models.network import Network, VariationRealization
from tempoforge.models.schemas import Phase, VariationMode, VariationSpec
from tempoforge.utils.binary_io import read_container, write_container
from tempoforge.utils.errors import ModelFileError

logger = logging.getLogger(__name__)

REALIZATION_KIND = "realization"
_TEST_STREAM = 1


def sample_realization(
    spec: VariationSpec, network: Network, rng: np.random.Generator
) -> VariationRealization:
    """
    Draw realized thresholds and delays around the network's nominal values.

    Thresholds follow a Gaussian clipped at 0; delays are Gaussian around
    the nominal delays (zero offset by default).
    """
    thresholds = tuple(
        np.maximum(rng.normal(th, spec.sigma_vth), 0.0) for th in network.thresholds
    )
    delays = tuple(rng.normal(d, spec.sigma_tau) for d in network.delays)
    return VariationRealization(thresholds=thresholds, delays=delays)


class VariationSampler:
    """Hands out realizations according to a variation mode.

    Training draws come from one sequential generator; test draws are keyed
    by the evaluation repetition so that every evaluation sees the same R
    realizations.
    """

    def __init__(
        self,
        spec: VariationSpec,
        network: Network,
        known: Optional[VariationRealization] = None,
    ):
        self.spec = spec
        self.network = network
        self.rng = np.random.default_rng(spec.rng_seed)
        self._known = known
        if spec.mode == VariationMode.KNOWN and self._known is None:
            self._known = sample_realization(spec, network, np.random.default_rng(spec.rng_seed))
            logger.info(
                f"Froze known realization (sigma_vth={spec.sigma_vth}, sigma_tau={spec.sigma_tau}, "
                f"seed {spec.rng_seed})"
            )

    @property
    def known(self) -> Optional[VariationRealization]:
        return self._known

    def apply_mode(self, phase: Phase, sample_index: int = 0) -> VariationRealization:
        """
        Realization to use for one training batch or one test repetition.

        Args:
            phase: Train or test
            sample_index: Test repetition index (ignored for training draws)
        """
        if self.spec.mode == VariationMode.NONE:
            return VariationRealization.nominal(self.network)
        if self.spec.mode == VariationMode.KNOWN:
            return self._known
        if phase == Phase.TRAIN:
            return sample_realization(self.spec, self.network, self.rng)
        test_rng = np.random.default_rng([self.spec.rng_seed, _TEST_STREAM, sample_index])
        return sample_realization(self.spec, self.network, test_rng)

    def get_state(self) -> Dict[str, Any]:
        return self.rng.bit_generator.state

    def set_state(self, state: Dict[str, Any]) -> None:
        self.rng.bit_generator.state = state


def save_realization(realization: VariationRealization, path: Union[str, Path]) -> None:
    sections = {}
    for l, (th, d) in enumerate(zip(realization.thresholds, realization.delays), start=1):
        sections[f"thresholds.{l}"] = th
        sections[f"delays.{l}"] = d
    write_container(path, REALIZATION_KIND, sections, {"layers": str(len(realization.thresholds))})
    logger.info(f"Saved variation realization to {path}")


def load_realization(path: Union[str, Path]) -> VariationRealization:
    container = read_container(path, expected_kind=REALIZATION_KIND)
    try:
        depth = int(container.meta["layers"])
    except (KeyError, ValueError):
        raise ModelFileError("missing or bad layer count", section="header")
    return VariationRealization(
        thresholds=tuple(container.section(f"thresholds.{l}") for l in range(1, depth + 1)),
        delays=tuple(container.section(f"delays.{l}") for l in range(1, depth + 1)),
    )
