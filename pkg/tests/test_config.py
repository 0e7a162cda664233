import pytest
from pydantic import ValidationError

from tempoforge.config import Settings, resolve_data_path, validate_settings
from tempoforge.models.schemas import (
    PRESETS,
    Hyperparameters,
    InitSpec,
    NeuronModel,
    RunConfig,
    VariationMode,
    parse_architecture,
    read_key_values,
)


def test_settings_read_environment(monkeypatch):
    monkeypatch.setenv("TEMPOFORGE_WORKERS", "4")
    monkeypatch.setenv("TEMPOFORGE_DATA_DIR", "/data/mnist")
    s = Settings()
    assert s.workers == 4
    assert s.data_dir == "/data/mnist"
    assert s.train_images == "train-images-idx3-ubyte"


def test_settings_reject_bad_worker_count(monkeypatch):
    monkeypatch.setenv("TEMPOFORGE_WORKERS", "0")
    with pytest.raises(ValidationError):
        Settings()


def test_resolve_data_path(tmp_path):
    assert resolve_data_path("a.idx", str(tmp_path)) == tmp_path / "a.idx"
    # absolute names ignore the directory
    absolute = tmp_path / "b.idx"
    assert resolve_data_path(str(absolute), "/elsewhere") == absolute


def test_validate_settings_missing_data_dir(quiet_settings, monkeypatch, tmp_path):
    monkeypatch.setattr(quiet_settings, "data_dir", str(tmp_path / "missing"))
    with pytest.raises(ValueError, match="TEMPOFORGE_DATA_DIR"):
        validate_settings()


def test_validate_settings_bad_log_level(quiet_settings, monkeypatch):
    monkeypatch.setattr(quiet_settings, "log_level", "chatty")
    with pytest.raises(ValueError):
        validate_settings()


def test_hyperparameter_defaults():
    h = Hyperparameters()
    assert (h.eta, h.gamma, h.epsilon, h.t_ref, h.tau_in) == (1500.0, 100.0, 4.0, 21.0, 5.0)
    assert h.sentinel == 210.0
    assert Hyperparameters(t_max_sentinel=50.0).sentinel == 50.0


def test_hyperparameters_validate():
    with pytest.raises(ValidationError):
        Hyperparameters(penalty_exponent=3.0)
    with pytest.raises(ValidationError):
        Hyperparameters(eta=-1.0)
    with pytest.raises(ValidationError):
        Hyperparameters(tau_in=0.0)
    assert Hyperparameters(penalty_exponent=1.5).penalty_exponent == 1.5


def test_parse_architecture():
    assert parse_architecture("784-800-10") == [784, 800, 10]
    for bad in ("784", "784-x-10", "784-0-10"):
        with pytest.raises(ValueError):
            parse_architecture(bad)


def test_init_spec_defaults_scale_with_fan_in():
    moments = InitSpec().resolve([784, 800, 10], tau_in=5.0)
    assert moments[0] == pytest.approx((4.0 / (784 * 5.0), 4.0 / (784 * 5.0)))
    assert moments[1][0] == pytest.approx(4.0 / (800 * 5.0))


def test_init_spec_length_mismatch():
    with pytest.raises(ValueError):
        InitSpec(means=[0.1]).resolve([4, 3, 2], tau_in=5.0)


def test_run_config_from_flat_coerces_strings():
    config = RunConfig.from_flat({"eta": "0", "neuron-model": "circuit", "sigma_vth_train": "0.15",
                                  "variation_mode_train": "sampled", "shrink": "false"})
    assert config.hyper.eta == 0.0
    assert config.neuron_model == NeuronModel.CIRCUIT
    assert config.train_variation.sigma_vth == 0.15
    assert config.train_variation.mode == VariationMode.SAMPLED


def test_run_config_unknown_key():
    with pytest.raises(ValueError, match="unknown configuration key"):
        RunConfig.from_flat({"learning_rate": 1.0})


def test_shrink_needs_169_inputs():
    with pytest.raises(ValidationError):
        RunConfig(shrink=True)
    assert RunConfig(shrink=True, architecture="169-300-10").layer_sizes == [169, 300, 10]


def test_flat_surface_is_lossless():
    config = RunConfig.from_flat(PRESETS["shrunk-169-300-10-circuit"])
    assert RunConfig.from_flat(config.to_flat()) == config


def test_presets_are_valid():
    for name, values in PRESETS.items():
        config = RunConfig.from_flat(values)
        assert config.hyper.t_ref > 0, name
    circuit = RunConfig.from_flat(PRESETS["shrunk-169-300-10-circuit"])
    assert circuit.hyper.gamma == 8.0
    assert circuit.hyper.epsilon == 10.0
    assert circuit.hyper.penalty_exponent == 1.5
    deep = RunConfig.from_flat(PRESETS["mnist-784-400-400-10"])
    assert deep.hyper.t_ref == 60.0
    assert deep.layer_sizes == [784, 400, 400, 10]


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# desk-scale run\n"
        "architecture = 169-300-10\n"
        "shrink = true\n"
        "init_means = 0.01, 0.02\n"
        "train_subset = 5000   # first 5000 samples\n"
        "t_max_sentinel = none\n"
    )
    values = read_key_values(path)
    assert values["init_means"] == [0.01, 0.02]
    assert values["t_max_sentinel"] is None
    config = RunConfig.from_file(path)
    assert config.shrink is True
    assert config.train_subset == 5000
    assert config.init.means == [0.01, 0.02]


def test_config_file_bad_line(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("architecture 784-800-10\n")
    with pytest.raises(ValueError, match="key = value"):
        read_key_values(path)
