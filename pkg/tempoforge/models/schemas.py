"""
Pydantic models for run configuration, hyperparameters and emitted records.
"""
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic.config import ConfigDict


class NeuronModel(str, Enum):
    """Membrane dynamics used by the forward and backward engines."""

    LINEAR = "linear"
    CIRCUIT = "circuit"


class VariationMode(str, Enum):
    """How device variation is applied during training and evaluation."""

    NONE = "none"
    SAMPLED = "sampled"
    KNOWN = "known"


class Phase(str, Enum):
    TRAIN = "train"
    TEST = "test"


class SweepAxis(str, Enum):
    VPULSE = "vpulse"
    SIGMA_VTH = "sigma_vth"
    SIGMA_TAU = "sigma_tau"


class InitSpec(BaseModel):
    """Per-layer Gaussian weight initialization."""

    scale: float = Field(
        4.0,
        gt=0.0,
        description="c in mean_l = c * V_th / (N_{l-1} * tau_in)",
    )
    means: Optional[List[float]] = Field(None, description="Explicit per-layer means")
    stds: Optional[List[float]] = Field(None, description="Explicit per-layer standard deviations")

    @field_validator("stds")
    @classmethod
    def check_stds(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is not None and any(s < 0 for s in v):
            raise ValueError("standard deviations must be nonnegative")
        return v

    def resolve(
        self, layer_sizes: List[int], tau_in: float, v_th: float = 1.0
    ) -> List[Tuple[float, float]]:
        """Return (mean, std) for every weight layer."""
        n_layers = len(layer_sizes) - 1
        defaults = [self.scale * v_th / (layer_sizes[l] * tau_in) for l in range(n_layers)]
        means = self.means if self.means is not None else defaults
        stds = self.stds if self.stds is not None else [abs(m) for m in means]
        if len(means) != n_layers or len(stds) != n_layers:
            raise ValueError(
                f"init spec lists {len(means)} means and {len(stds)} stds "
                f"for {n_layers} weight layers"
            )
        return list(zip(means, stds))


class Hyperparameters(BaseModel):
    """One record controlling a training run."""

    eta: float = Field(1500.0, ge=0.0, description="Learning rate (0 freezes the weights)")
    gamma: float = Field(100.0, ge=0.0, description="Temporal penalty coefficient")
    epsilon: float = Field(4.0, ge=0.0, description="Derivative denominator stabilizer")
    t_ref: float = Field(21.0, description="Reference output spike time (ms)")
    tau_in: float = Field(5.0, gt=0.0, description="Input encoding window (ms)")
    sigma_t: float = Field(0.0, ge=0.0, description="Train-phase input jitter std (ms)")
    penalty_exponent: float = Field(2.0, description="Penalty exponent, 2 or 1.5")
    t_max_sentinel: Optional[float] = Field(
        None, description="Stand-in time for non-firing neurons (default 10 * t_ref)"
    )
    batch_size: int = Field(10, ge=1, description="Mini-batch size")
    epochs: int = Field(100, ge=1, description="Maximum number of epochs")
    rng_seed: int = Field(0, description="Run seed (init, shuffling, jitter)")

    @field_validator("penalty_exponent")
    @classmethod
    def check_exponent(cls, v: float) -> float:
        if v not in (2.0, 1.5):
            raise ValueError("penalty_exponent must be 2 or 1.5")
        return v

    @property
    def sentinel(self) -> float:
        if self.t_max_sentinel is not None:
            return self.t_max_sentinel
        return 10.0 * self.t_ref


class VariationSpec(BaseModel):
    """Device-variation configuration for one phase."""

    sigma_vth: float = Field(0.0, ge=0.0, description="Threshold std (clipped Gaussian)")
    sigma_tau: float = Field(0.0, ge=0.0, description="Delay std (ms)")
    mode: VariationMode = Field(VariationMode.NONE, description="none, sampled or known")
    rng_seed: int = Field(1, description="Seed of the variation generator")
    resample_per: Literal["batch", "sample"] = Field(
        "batch", description="Train-phase resampling cadence in sampled mode"
    )


class RunConfig(BaseModel):
    """Complete description of a training or evaluation run."""

    hyper: Hyperparameters = Field(default_factory=Hyperparameters)
    architecture: str = Field("784-800-10", description="Layer sizes joined by dashes")
    neuron_model: NeuronModel = Field(NeuronModel.LINEAR)
    v_pulse_plus: float = Field(128.0, gt=0.0, description="Positive pulse voltage")
    v_pulse_minus: float = Field(-128.0, lt=0.0, description="Negative pulse voltage")
    init: InitSpec = Field(default_factory=InitSpec)
    train_variation: VariationSpec = Field(default_factory=VariationSpec)
    test_variation: VariationSpec = Field(default_factory=VariationSpec)
    test_repetitions: int = Field(10, ge=1, description="Test realizations per evaluation")

    data_dir: Optional[str] = Field(None, description="Directory of the IDX files")
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    shrink: bool = Field(False, description="Use the 13x13 shrunk images")
    train_subset: Optional[int] = Field(None, ge=1, description="Use the first N training samples")
    test_subset: Optional[int] = Field(None, ge=1, description="Use the first N test samples")
    jitter_clamp: bool = Field(True, description="Clamp jittered input times at 0")

    output_dir: str = Field("runs/default", description="Checkpoints and metrics")
    eval_every: int = Field(1, ge=1, description="Evaluate every N epochs")
    early_stop_patience: int = Field(20, ge=1, description="Stagnant evaluations before stopping")
    trials: int = Field(1, ge=1, description="Independent initial-weight seeds")
    workers: Optional[int] = Field(None, ge=1, description="Worker processes (default from settings)")

    model_config = ConfigDict(validate_assignment=True)

    @field_validator("architecture")
    @classmethod
    def check_architecture(cls, v: str) -> str:
        parse_architecture(v)
        return v

    @model_validator(mode="after")
    def check_input_size(self) -> "RunConfig":
        sizes = parse_architecture(self.architecture)
        if self.shrink and sizes[0] != 169:
            raise ValueError(f"shrunk images need 169 inputs, architecture has {sizes[0]}")
        return self

    @property
    def layer_sizes(self) -> List[int]:
        return parse_architecture(self.architecture)

    # Flat key-value surface shared by the CLI flags and config files
    @classmethod
    def from_flat(cls, values: Dict[str, Any], base: Optional["RunConfig"] = None) -> "RunConfig":
        data = (base or cls()).model_dump()
        for raw_key, value in values.items():
            key = raw_key.strip().replace("-", "_")
            if key not in FLAT_KEYS:
                raise ValueError(f"unknown configuration key {raw_key!r}")
            target = data
            path = FLAT_KEYS[key]
            for part in path[:-1]:
                target = target[part]
            target[path[-1]] = value
        return cls.model_validate(data)

    @classmethod
    def from_file(cls, path: Union[str, Path], base: Optional["RunConfig"] = None) -> "RunConfig":
        return cls.from_flat(read_key_values(path), base=base)

    def to_flat(self) -> Dict[str, Any]:
        data = self.model_dump(mode="json")
        flat = {}
        for key, path in FLAT_KEYS.items():
            value = data
            for part in path:
                value = value[part]
            flat[key] = value
        return flat


FLAT_KEYS: Dict[str, Tuple[str, ...]] = {
    **{name: ("hyper", name) for name in Hyperparameters.model_fields},
    "architecture": ("architecture",),
    "neuron_model": ("neuron_model",),
    "v_pulse_plus": ("v_pulse_plus",),
    "v_pulse_minus": ("v_pulse_minus",),
    "init_scale": ("init", "scale"),
    "init_means": ("init", "means"),
    "init_stds": ("init", "stds"),
    "sigma_vth_train": ("train_variation", "sigma_vth"),
    "sigma_tau_train": ("train_variation", "sigma_tau"),
    "variation_mode_train": ("train_variation", "mode"),
    "variation_seed_train": ("train_variation", "rng_seed"),
    "resample_per": ("train_variation", "resample_per"),
    "sigma_vth_test": ("test_variation", "sigma_vth"),
    "sigma_tau_test": ("test_variation", "sigma_tau"),
    "variation_mode_test": ("test_variation", "mode"),
    "variation_seed_test": ("test_variation", "rng_seed"),
    "test_repetitions": ("test_repetitions",),
    "data_dir": ("data_dir",),
    "train_images": ("train_images",),
    "train_labels": ("train_labels",),
    "test_images": ("test_images",),
    "test_labels": ("test_labels",),
    "shrink": ("shrink",),
    "train_subset": ("train_subset",),
    "test_subset": ("test_subset",),
    "jitter_clamp": ("jitter_clamp",),
    "output_dir": ("output_dir",),
    "eval_every": ("eval_every",),
    "early_stop_patience": ("early_stop_patience",),
    "trials": ("trials",),
    "workers": ("workers",),
}

LIST_KEYS = {"init_means", "init_stds"}


def parse_architecture(text: str) -> List[int]:
    """Parse '784-800-10' into [784, 800, 10]."""
    try:
        sizes = [int(part) for part in text.strip().split("-")]
    except ValueError:
        raise ValueError(f"architecture {text!r} must be integers joined by '-'")
    if len(sizes) < 2:
        raise ValueError(f"architecture {text!r} needs at least an input and an output layer")
    if any(s < 1 for s in sizes):
        raise ValueError(f"architecture {text!r} has a non-positive layer size")
    return sizes


def read_key_values(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a plain-text ``key = value`` file; '#' starts a comment."""
    values: Dict[str, Any] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        normalized = key.replace("-", "_")
        if normalized in LIST_KEYS:
            values[normalized] = [float(v) for v in value.replace(",", " ").split()]
        elif value.lower() in ("none", "null", ""):
            values[normalized] = None
        else:
            values[normalized] = value
    return values


PRESETS: Dict[str, Dict[str, Any]] = {
    "mnist-784-800-10": {
        "architecture": "784-800-10",
        "eta": 1500.0, "t_ref": 21.0, "gamma": 100.0, "epsilon": 4.0,
    },
    "mnist-784-400-400-10": {
        "architecture": "784-400-400-10",
        "eta": 1500.0, "t_ref": 60.0, "gamma": 100.0, "epsilon": 1.0,
    },
    "shrunk-169-300-10-circuit": {
        "architecture": "169-300-10", "shrink": True, "neuron_model": "circuit",
        "eta": 1500.0, "t_ref": 21.0, "gamma": 8.0, "epsilon": 10.0,
        "penalty_exponent": 1.5,
    },
    "shrunk-169-300-10": {
        "architecture": "169-300-10", "shrink": True,
        "eta": 1500.0, "t_ref": 21.0, "gamma": 8.0, "epsilon": 10.0,
        "penalty_exponent": 1.5,
    },
    "variation-784-500-10": {
        "architecture": "784-500-10",
        "eta": 1500.0, "t_ref": 21.0, "gamma": 100.0, "epsilon": 1.0,
    },
}


class MetricsRow(BaseModel):
    """One evaluation point of a training run."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    epoch: int = Field(..., ge=0)
    train_loss: float = Field(..., description="Mean cost over the epoch")
    train_accuracy: float = Field(..., ge=0.0, le=1.0)
    test_accuracy: float = Field(..., ge=0.0, le=1.0)
    test_accuracy_std: float = Field(0.0, ge=0.0)
    silent_hidden_fraction: float = Field(..., ge=0.0, le=1.0)
    mean_output_time: float = Field(..., description="Mean fired output spike time (ms)")
    wall_time: float = Field(..., ge=0.0, description="Seconds since the run started")

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(cls.model_fields)

    def to_csv(self) -> str:
        return ",".join(repr(getattr(self, name)) for name in type(self).model_fields)

    @classmethod
    def from_csv(cls, line: str) -> "MetricsRow":
        return cls(**dict(zip(cls.model_fields, line.strip().split(","))))


class EvaluationResult(BaseModel):
    """Accuracy over R test realizations."""

    mean: float = Field(..., ge=0.0, le=1.0)
    std: float = Field(..., ge=0.0)
    accuracies: List[float] = Field(default_factory=list)
    silent_hidden_fraction: float = 0.0
    mean_output_time: float = 0.0


class SweepRow(BaseModel):
    """Aggregated result of one sweep value."""

    axis: SweepAxis
    value: float
    trials: int = Field(..., ge=1)
    accuracy_mean: float
    accuracy_std: float = Field(..., ge=0.0)

    model_config = ConfigDict(use_enum_values=True)
