"""
Command-line surface: train, eval, gradcheck, sweep, dump-raster and
export-conductance.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from tempoforge.config import validate_settings
from tempoforge.models.network import SpikeVector
from tempoforge.models.schemas import FLAT_KEYS, LIST_KEYS, PRESETS, RunConfig, SweepAxis
from tempoforge.services.circuit_service import export_conductances, write_conductance_table
from tempoforge.services.dataset_service import EncodedSample, encode, load_split
from tempoforge.services.network_service import load_network
from tempoforge.services.oracle_service import gradcheck, write_gradcheck_report
from tempoforge.services.raster_service import dump_raster
from tempoforge.services.training_service import TrainingService
from tempoforge.services.variation_service import load_realization
from tempoforge.utils.errors import ConfigurationError, TempoForgeError

logger = logging.getLogger(__name__)

_BOOL_KEYS = {"shrink", "jitter_clamp"}


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("run configuration")
    group.add_argument("--preset", choices=sorted(PRESETS), help="Named hyperparameter preset")
    group.add_argument("--config", type=Path, help="Plain-text 'key = value' run configuration")
    for key in FLAT_KEYS:
        flag = "--" + key.replace("_", "-")
        if key in _BOOL_KEYS:
            group.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction, default=None)
        elif key in LIST_KEYS:
            group.add_argument(flag, dest=key, type=float, nargs="+", default=None)
        else:
            group.add_argument(flag, dest=key, default=None)


def build_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then preset, then config file, then explicit flags."""
    try:
        config = RunConfig()
        if args.preset:
            config = RunConfig.from_flat(PRESETS[args.preset], base=config)
        if args.config:
            config = RunConfig.from_file(args.config, base=config)
        overrides = {k: getattr(args, k) for k in FLAT_KEYS if getattr(args, k, None) is not None}
        if overrides:
            config = RunConfig.from_flat(overrides, base=config)
    except (ValidationError, ValueError, OSError) as e:
        raise ConfigurationError(f"invalid run configuration: {e}")
    logger.debug(f"Run configuration: {config.to_flat()}")
    return config


def cmd_train(args: argparse.Namespace) -> int:
    config = build_config(args)
    train_set = load_split(config, "train")
    test_set = load_split(config, "test")
    service = TrainingService(config)
    if args.resume:
        result = service.train(train_set, test_set, resume=True)
        results = [result]
    else:
        results = service.train_trials(train_set, test_set)
    for r in results:
        print(f"{r.output_dir}: best test accuracy {r.best_accuracy:.4f} after {len(r.metrics)} evaluations")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = build_config(args)
    network = load_network(args.model)
    known = load_realization(args.realization) if args.realization else None
    test_set = load_split(config, "test")
    service = TrainingService(config)
    with service.worker_pool() as pool:
        result = service.evaluate(network, test_set, known=known, pool=pool)
    print(f"accuracy_mean = {result.mean!r}")
    print(f"accuracy_std = {result.std!r}")
    print(f"repetitions = {len(result.accuracies)}")
    return 0


def _synthetic_samples(n_inputs: int, n_outputs: int, tau_in: float, count: int, rng) -> List[EncodedSample]:
    samples = []
    for _ in range(count):
        times = rng.uniform(0.0, tau_in, size=n_inputs)
        times[rng.random(n_inputs) < 0.2] = np.nan
        samples.append(EncodedSample(SpikeVector(times), int(rng.integers(n_outputs))))
    return samples


def cmd_gradcheck(args: argparse.Namespace) -> int:
    config = build_config(args)
    hyper = config.hyper
    rng = np.random.default_rng(args.seed)
    network = load_network(args.model) if args.model else TrainingService(config).build_network()
    if args.synthetic:
        samples = _synthetic_samples(
            network.input_size, network.layer_sizes[-1], hyper.tau_in, args.samples, rng
        )
    else:
        samples = load_split(config, "test").subset(args.samples).encoded(hyper.tau_in)
    rows = gradcheck(network, samples, hyper, args.probes, rng)
    stable, passed = write_gradcheck_report(rows, args.report)
    print(f"{passed}/{stable} stable probes passed; report written to {args.report}")
    return 0 if passed == stable else 1


def cmd_sweep(args: argparse.Namespace) -> int:
    config = build_config(args)
    service = TrainingService(config)
    test_set = load_split(config, "test")
    if args.model:
        network = load_network(args.model)
        known = load_realization(args.realization) if args.realization else None
        rows = service.sweep(args.axis, args.values, None, test_set, network=network, known=known)
    else:
        rows = service.sweep(args.axis, args.values, load_split(config, "train"), test_set)
    for r in rows:
        print(f"{r.axis} {r.value:g}: {r.accuracy_mean:.4f} +- {r.accuracy_std:.4f} ({r.trials} trials)")
    return 0


def cmd_dump_raster(args: argparse.Namespace) -> int:
    config = build_config(args)
    network = load_network(args.model)
    known = load_realization(args.realization) if args.realization else None
    dataset = load_split(config, args.split)
    if not 0 <= args.index < len(dataset):
        raise ConfigurationError(f"sample index {args.index} outside 0..{len(dataset) - 1}")
    spikes = encode(dataset.images[args.index], config.hyper.tau_in)
    dump_raster(network, spikes, args.output, realization=known)
    print(f"label {int(dataset.labels[args.index])}; raster written to {args.output}")
    return 0


def cmd_export_conductance(args: argparse.Namespace) -> int:
    network = load_network(args.model)
    v_plus = args.v_plus if args.v_plus is not None else network.circuit.v_plus
    v_minus = args.v_minus if args.v_minus is not None else network.circuit.v_minus
    if not (v_plus > 0 > v_minus):
        raise ConfigurationError("pulse voltages need V+ > 0 > V-")
    rows = write_conductance_table(export_conductances(network, v_plus, v_minus), args.output, v_plus, v_minus)
    print(f"{rows} conductance pairs written to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tempoforge",
        description="Train and verify time-to-first-spike spiking neural networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="Train a network")
    _add_run_flags(train)
    train.add_argument("--resume", action="store_true", help="Continue from <output-dir>/checkpoint")
    train.set_defaults(handler=cmd_train)

    evaluate = sub.add_parser("eval", help="Evaluate a saved network")
    _add_run_flags(evaluate)
    evaluate.add_argument("--model", type=Path, required=True)
    evaluate.add_argument("--realization", type=Path, help="Frozen realization for known mode")
    evaluate.set_defaults(handler=cmd_eval)

    check = sub.add_parser("gradcheck", help="Compare backprop with finite differences")
    _add_run_flags(check)
    check.add_argument("--model", type=Path, help="Saved network (default: freshly initialized)")
    check.add_argument("--probes", type=int, default=100)
    check.add_argument("--samples", type=int, default=5)
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--synthetic", action="store_true", help="Random input spikes instead of MNIST")
    check.add_argument("--report", type=Path, default=Path("gradcheck.txt"))
    check.set_defaults(handler=cmd_gradcheck)

    sweep = sub.add_parser("sweep", help="Train or evaluate along one axis")
    _add_run_flags(sweep)
    sweep.add_argument("--axis", type=SweepAxis, choices=list(SweepAxis), required=True)
    sweep.add_argument("--values", type=float, nargs="+", required=True)
    sweep.add_argument("--model", type=Path, help="Evaluate this network instead of training")
    sweep.add_argument("--realization", type=Path)
    sweep.set_defaults(handler=cmd_sweep)

    raster = sub.add_parser("dump-raster", help="Write spike raster and membrane traces of one sample")
    _add_run_flags(raster)
    raster.add_argument("--model", type=Path, required=True)
    raster.add_argument("--realization", type=Path)
    raster.add_argument("--index", type=int, default=0)
    raster.add_argument("--split", choices=["train", "test"], default="test")
    raster.add_argument("--output", type=Path, default=Path("raster.txt"))
    raster.set_defaults(handler=cmd_dump_raster)

    export = sub.add_parser("export-conductance", help="Write the conductance table of a network")
    export.add_argument("--model", type=Path, required=True)
    export.add_argument("--v-plus", type=float)
    export.add_argument("--v-minus", type=float)
    export.add_argument("--output", type=Path, default=Path("conductances.txt"))
    export.set_defaults(handler=cmd_export_conductance)

    return parser


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, dispatch, and map failures onto exit codes."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        try:
            validate_settings()
        except ValueError as e:
            raise ConfigurationError(str(e))
        return args.handler(args)
    except TempoForgeError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error[{e.category}]: {e}", file=sys.stderr)
        return e.exit_code
