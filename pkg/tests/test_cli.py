import pytest

from tempoforge.commands.cli import build_config, build_parser, run_cli
from tempoforge.models.schemas import FLAT_KEYS, LIST_KEYS
from tempoforge.services.network_service import load_network
from tempoforge.utils.errors import ConfigurationError


def _train(mnist_dir, out, *extra):
    argv = [
        "train",
        "--data-dir", str(mnist_dir),
        "--architecture", "784-20-10",
        "--epochs", "1",
        "--batch-size", "10",
        "--eta", "1",
        "--output-dir", str(out),
        *extra,
    ]
    return run_cli(argv)


def test_flags_override_preset(tmp_path):
    args = build_parser().parse_args(["train", "--preset", "mnist-784-400-400-10", "--eta", "2.5", "--no-shrink"])
    config = build_config(args)
    assert config.architecture == "784-400-400-10"
    assert config.hyper.t_ref == 60.0
    assert config.hyper.eta == 2.5
    assert config.shrink is False


def test_config_file_then_flags(tmp_path):
    path = tmp_path / "run.txt"
    path.write_text("gamma = 3\nepochs = 7\ninit_means = 0.1, 0.2\n")
    args = build_parser().parse_args(["train", "--config", str(path), "--epochs", "2"])
    config = build_config(args)
    assert config.hyper.gamma == 3.0
    assert config.hyper.epochs == 2
    assert config.init.means == [0.1, 0.2]


def test_bad_configuration_is_a_configuration_error():
    args = build_parser().parse_args(["train", "--penalty-exponent", "3"])
    with pytest.raises(ConfigurationError):
        build_config(args)


def test_train_writes_model(mnist_dir, tmp_path, capsys):
    out = tmp_path / "run"
    assert _train(mnist_dir, out) == 0
    assert "best test accuracy" in capsys.readouterr().out
    network = load_network(out / "final" / "network.tfm")
    assert network.layer_sizes == (784, 20, 10)
    assert len((out / "metrics.csv").read_text().splitlines()) == 2


def test_train_resume(mnist_dir, tmp_path):
    out = tmp_path / "run"
    assert _train(mnist_dir, out) == 0
    assert _train(mnist_dir, out, "--resume", "--epochs", "2") == 0
    assert len((out / "metrics.csv").read_text().splitlines()) == 3


def test_eval_prints_accuracy(mnist_dir, tmp_path, capsys):
    out = tmp_path / "run"
    _train(mnist_dir, out)
    capsys.readouterr()
    code = run_cli([
        "eval", "--model", str(out / "final" / "network.tfm"),
        "--data-dir", str(mnist_dir), "--architecture", "784-20-10",
        "--variation-mode-test", "sampled", "--sigma-vth-test", "0.1", "--test-repetitions", "3",
    ])
    assert code == 0
    printed = capsys.readouterr().out
    assert "accuracy_mean = " in printed
    assert "repetitions = 3" in printed


def test_dump_raster_and_export(mnist_dir, tmp_path, capsys):
    out = tmp_path / "run"
    _train(mnist_dir, out)
    model = str(out / "final" / "network.tfm")

    raster = tmp_path / "raster.txt"
    assert run_cli(["dump-raster", "--model", model, "--data-dir", str(mnist_dir),
                    "--architecture", "784-20-10", "--index", "2", "--output", str(raster)]) == 0
    assert raster.read_text().startswith("#")

    table = tmp_path / "g.txt"
    assert run_cli(["export-conductance", "--model", model, "--v-plus", "2", "--v-minus", "-4",
                    "--output", str(table)]) == 0
    rows = [line for line in table.read_text().splitlines() if line and line[0].isdigit()]
    assert len(rows) == 784 * 20 + 20 * 10
    assert f"{784 * 20 + 20 * 10} conductance pairs" in capsys.readouterr().out


def test_raster_index_out_of_range(mnist_dir, tmp_path):
    out = tmp_path / "run"
    _train(mnist_dir, out)
    code = run_cli(["dump-raster", "--model", str(out / "final" / "network.tfm"),
                    "--data-dir", str(mnist_dir), "--architecture", "784-20-10", "--index", "99"])
    assert code == 2


def test_export_rejects_bad_voltages(mnist_dir, tmp_path):
    out = tmp_path / "run"
    _train(mnist_dir, out)
    code = run_cli(["export-conductance", "--model", str(out / "final" / "network.tfm"), "--v-plus", "-1"])
    assert code == 2


def test_synthetic_gradcheck_passes(tmp_path, capsys):
    report = tmp_path / "gradcheck.txt"
    code = run_cli([
        "gradcheck", "--synthetic", "--architecture", "6-5-3",
        "--epsilon", "0", "--gamma", "1", "--t-ref", "6", "--t-max-sentinel", "10",
        "--init-means", "0.4", "0.4", "--init-stds", "0.6", "0.6",
        "--probes", "40", "--samples", "5", "--report", str(report),
    ])
    assert code == 0
    assert "stable probes passed" in capsys.readouterr().out
    assert report.read_text().startswith("layer i j analytic fd rel_err stable\n")


def test_sweep_over_saved_model(mnist_dir, tmp_path, capsys):
    out = tmp_path / "run"
    _train(mnist_dir, out)
    capsys.readouterr()
    code = run_cli([
        "sweep", "--axis", "sigma_vth", "--values", "0", "0.2",
        "--model", str(out / "final" / "network.tfm"),
        "--data-dir", str(mnist_dir), "--architecture", "784-20-10",
        "--test-repetitions", "2", "--output-dir", str(tmp_path / "sweep"),
    ])
    assert code == 0
    assert "sigma_vth 0.2:" in capsys.readouterr().out
    assert (tmp_path / "sweep" / "sweep.csv").exists()


@pytest.mark.parametrize("argv,expected", [
    (["eval", "--model", "does-not-exist.tfm"], 4),
    (["train", "--penalty-exponent", "3"], 2),
])
def test_exit_codes(tmp_path, capsys, argv, expected):
    assert run_cli(argv) == expected
    assert "error[" in capsys.readouterr().err


def test_missing_dataset_exit_code(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    code = run_cli(["train", "--data-dir", str(empty), "--architecture", "784-20-10",
                    "--output-dir", str(tmp_path / "run")])
    assert code == 3
    assert "error[data]" in capsys.readouterr().err


def test_list_flags_parse_as_lists():
    assert LIST_KEYS <= set(FLAT_KEYS)
    args = build_parser().parse_args(["train", "--init-means", "0.1", "0.2", "--init-stds", "0.3", "0.3"])
    config = build_config(args)
    assert config.init.means == [0.1, 0.2]
    assert config.init.stds == [0.3, 0.3]
