"""
Training loop, evaluation and experiment sweeps.

One coordinator owns the network, the run generator and every file
write; per-sample forward/backward passes may be fanned out to a
multiprocessing pool and are reduced in a fixed chunk order.
"""
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass
from multiprocessing.pool import Pool
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from pydantic.config import ConfigDict
from tqdm import tqdm

from tempoforge.config import Settings, get_settings
from tempoforge.models.network import CircuitParams, Gradients, Network, SpikeVector, VariationRealization
from tempoforge.models.schemas import (
    EvaluationResult,
    MetricsRow,
    NeuronModel,
    Phase,
    RunConfig,
    SweepAxis,
    SweepRow,
    VariationMode,
    VariationSpec,
)
from tempoforge.services.backprop_service import sgd_step
from tempoforge.services.dataset_service import Dataset, batches, encode_batch, epoch_order, jitter
from tempoforge.services.engine import forward, sample_pass
from tempoforge.services.forward_service import classify, network_stats
from tempoforge.services.network_service import init_network, load_network, save_network
from tempoforge.services.variation_service import VariationSampler, load_realization, save_realization
from tempoforge.utils.errors import ConfigurationError, TrainingDivergedError

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
CHECKPOINT_DIR = "checkpoint"
BEST_DIR = "best"
FINAL_DIR = "final"
NETWORK_FILE = "network.tfm"
REALIZATION_FILE = "realization.tfm"
STATE_FILE = "state.json"
PREVIOUS_BEST_FILE = "previous-best.tfm"


@dataclass
class BatchSummary:
    """Reduction of per-sample passes; add() keeps the summation order fixed."""

    gradients: Optional[Gradients] = None
    cost: float = 0.0
    correct: int = 0
    count: int = 0
    silent_hidden: int = 0
    hidden_total: int = 0
    output_time_sum: float = 0.0
    output_time_count: int = 0

    def add(self, other: "BatchSummary") -> None:
        if other.gradients is not None:
            self.gradients = other.gradients if self.gradients is None else self.gradients + other.gradients
        self.cost += other.cost
        self.correct += other.correct
        self.count += other.count
        self.silent_hidden += other.silent_hidden
        self.hidden_total += other.hidden_total
        self.output_time_sum += other.output_time_sum
        self.output_time_count += other.output_time_count

    def record_trace(self, trace) -> None:
        stats = network_stats(trace)
        self.silent_hidden += stats.silent_hidden
        self.hidden_total += stats.hidden_total
        if not np.isnan(stats.mean_output_time):
            self.output_time_sum += stats.mean_output_time
            self.output_time_count += 1

    @property
    def silent_fraction(self) -> float:
        return self.silent_hidden / self.hidden_total if self.hidden_total else 0.0

    @property
    def mean_output_time(self) -> float:
        return self.output_time_sum / self.output_time_count if self.output_time_count else float("nan")


def _train_chunk(args) -> BatchSummary:
    network, times, labels, hyper, realizations = args
    summary = BatchSummary()
    for row, label, realization in zip(times, labels, realizations):
        result = sample_pass(network, SpikeVector(row), int(label), hyper, realization)
        summary.add(BatchSummary(
            gradients=result.gradients,
            cost=result.breakdown.cost,
            correct=int(result.correct),
            count=1,
        ))
        summary.record_trace(result.trace)
    return summary


def _eval_chunk(args) -> BatchSummary:
    network, times, labels, sentinel, realization = args
    summary = BatchSummary()
    for row, label in zip(times, labels):
        trace = forward(network, SpikeVector(row), realization)
        summary.correct += int(classify(trace, sentinel) == int(label))
        summary.count += 1
        summary.record_trace(trace)
    return summary


def _split(n: int, parts: int) -> List[slice]:
    bounds = np.linspace(0, n, min(parts, n) + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


class TrainingState(BaseModel):
    """Everything needed to resume a run bit-exactly."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    epoch: int = 0
    batch_counter: int = 0
    best_accuracy: float = -1.0
    stagnant: int = 0
    elapsed: float = 0.0
    rng_state: Dict[str, Any] = Field(default_factory=dict)
    variation_state: Dict[str, Any] = Field(default_factory=dict)
    metrics: List[MetricsRow] = Field(default_factory=list)


def accuracy_spread(accuracies: Sequence[float]) -> Tuple[float, float]:
    """Mean and population std; identical accuracies give exactly (value, 0.0)."""
    values = np.asarray(accuracies, dtype=np.float64)
    if np.ptp(values) == 0:
        return float(values[0]), 0.0
    return float(np.mean(values)), float(np.std(values))


@dataclass
class TrainingResult:
    network: Network
    best_network: Network
    metrics: List[MetricsRow]
    best_accuracy: float
    output_dir: Path
    known_realization: Optional[VariationRealization] = None


class TrainingService:
    """Runs training, evaluation and sweeps for one RunConfig."""

    def __init__(self, config: RunConfig, settings: Optional[Settings] = None):
        self.config = config
        self.settings = settings or get_settings()
        self.hyper = config.hyper
        self.workers = config.workers or self.settings.workers

    @contextmanager
    def worker_pool(self) -> Iterator[Optional[Pool]]:
        if self.workers <= 1:
            yield None
            return
        logger.info(f"Starting pool of {self.workers} workers")
        with Pool(processes=self.workers) as pool:
            yield pool

    def build_network(self, seed: Optional[int] = None) -> Network:
        return init_network(
            self.config.layer_sizes,
            self.config.neuron_model,
            self.config.init,
            self.hyper.rng_seed if seed is None else seed,
            CircuitParams(self.config.v_pulse_plus, self.config.v_pulse_minus),
            tau_in=self.hyper.tau_in,
        )

    def _check_dataset(self, dataset: Dataset, name: str) -> None:
        n_inputs = int(np.prod(dataset.images.shape[1:]))
        if n_inputs != self.config.layer_sizes[0]:
            raise ConfigurationError(
                f"{name} images have {n_inputs} pixels but the architecture expects "
                f"{self.config.layer_sizes[0]} inputs"
            )

    def _run_batch(
        self,
        pool: Optional[Pool],
        network: Network,
        times: np.ndarray,
        labels: np.ndarray,
        realizations: Sequence[VariationRealization],
    ) -> BatchSummary:
        if pool is None:
            return _train_chunk((network, times, labels, self.hyper, realizations))
        chunks = [
            (network, times[s], labels[s], self.hyper, realizations[s])
            for s in _split(len(labels), self.workers)
        ]
        summary = BatchSummary()
        for part in pool.map(_train_chunk, chunks):
            summary.add(part)
        return summary

    def evaluate(
        self,
        network: Network,
        dataset: Dataset,
        spec: Optional[VariationSpec] = None,
        repetitions: Optional[int] = None,
        known: Optional[VariationRealization] = None,
        pool: Optional[Pool] = None,
    ) -> EvaluationResult:
        """
        Classify a dataset under R test realizations.

        Args:
            network: Network to evaluate
            dataset: Test samples
            spec: Test-phase variation (default: the config's test variation)
            repetitions: R (default: the config's test repetitions); forced to 1
                unless the mode draws fresh realizations
            known: Frozen realization used in known mode
            pool: Optional worker pool

        Returns:
            Mean and population std of the accuracy across realizations
        """
        spec = spec or self.config.test_variation
        repetitions = repetitions or self.config.test_repetitions
        if spec.mode != VariationMode.SAMPLED:
            repetitions = 1
        sampler = VariationSampler(spec, network, known=known if spec.mode == VariationMode.KNOWN else None)
        times = encode_batch(dataset.images, self.hyper.tau_in)

        accuracies = []
        total = BatchSummary()
        for r in range(repetitions):
            realization = sampler.apply_mode(Phase.TEST, r)
            if pool is None:
                summary = _eval_chunk((network, times, dataset.labels, self.hyper.sentinel, realization))
            else:
                summary = BatchSummary()
                chunks = [
                    (network, times[s], dataset.labels[s], self.hyper.sentinel, realization)
                    for s in _split(len(dataset), self.workers)
                ]
                for part in pool.map(_eval_chunk, chunks):
                    summary.add(part)
            accuracies.append(summary.correct / max(summary.count, 1))
            total.add(summary)

        mean, std = accuracy_spread(accuracies)
        result = EvaluationResult(
            mean=mean,
            std=std,
            accuracies=accuracies,
            silent_hidden_fraction=total.silent_fraction,
            mean_output_time=total.mean_output_time,
        )
        logger.debug(f"Evaluated {len(dataset)} samples x {repetitions}: {result.mean:.4f} +- {result.std:.4f}")
        return result

    def _save_checkpoint(
        self,
        directory: Path,
        network: Network,
        state: TrainingState,
        known: Optional[VariationRealization],
    ) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        save_network(network, directory / NETWORK_FILE)
        if known is not None:
            save_realization(known, directory / REALIZATION_FILE)
        (directory / STATE_FILE).write_text(state.model_dump_json(indent=2))

    def train(
        self,
        train_set: Dataset,
        test_set: Dataset,
        network: Optional[Network] = None,
        resume: bool = False,
        output_dir: Optional[Path] = None,
    ) -> TrainingResult:
        """
        Shuffled mini-batch SGD with periodic evaluation and checkpoints.

        Args:
            train_set: Training samples
            test_set: Evaluation samples
            network: Starting network (default: freshly initialized)
            resume: Continue from ``<output_dir>/checkpoint``
            output_dir: Run directory (default: the config's output_dir)

        Returns:
            Final and best networks with the metrics history

        Raises:
            TrainingDivergedError: If a batch produces a non-finite cost
        """
        self._check_dataset(train_set, "training")
        self._check_dataset(test_set, "test")
        out = Path(output_dir or self.config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        metrics_path = out / METRICS_FILE
        hyper = self.hyper

        rng = np.random.default_rng(hyper.rng_seed)
        state = TrainingState()
        known = None
        if resume:
            checkpoint = out / CHECKPOINT_DIR
            network = load_network(checkpoint / NETWORK_FILE)
            state = TrainingState.model_validate_json((checkpoint / STATE_FILE).read_text())
            if (checkpoint / REALIZATION_FILE).exists():
                known = load_realization(checkpoint / REALIZATION_FILE)
            logger.info(f"Resuming {out} after epoch {state.epoch}")
        else:
            network = network or self.build_network()
            (out / CHECKPOINT_DIR / PREVIOUS_BEST_FILE).unlink(missing_ok=True)
            (out / "config.txt").write_text(
                "".join(f"{k} = {v}\n" for k, v in self.config.to_flat().items())
            )
        # a resumed run drops rows past its checkpoint (an off-schedule final evaluation)
        metrics_path.write_text(
            MetricsRow.csv_header() + "\n" + "".join(f"{row.to_csv()}\n" for row in state.metrics)
        )

        sampler = VariationSampler(self.config.train_variation, network, known=known)
        known = sampler.known
        if resume:
            rng.bit_generator.state = state.rng_state
            sampler.set_state(state.variation_state)
        test_known = known if self.config.train_variation.mode == VariationMode.KNOWN else None

        train_times = encode_batch(train_set.images, hyper.tau_in)
        n = len(train_set)
        best_network = network
        previous_best = out / CHECKPOINT_DIR / PREVIOUS_BEST_FILE
        if resume and previous_best.exists():
            best_network = load_network(previous_best)
            save_network(best_network, out / BEST_DIR / NETWORK_FILE)
            previous_best.unlink()
        elif resume and state.best_accuracy >= 0 and (out / BEST_DIR / NETWORK_FILE).exists():
            best_network = load_network(out / BEST_DIR / NETWORK_FILE)
        started = time.monotonic() - state.elapsed
        per_sample = self.config.train_variation.resample_per == "sample"

        with self.worker_pool() as pool:
            for epoch in range(state.epoch + 1, hyper.epochs + 1):
                order = epoch_order(n, rng)
                epoch_summary = BatchSummary()
                progress = tqdm(
                    batches(order, hyper.batch_size),
                    desc=f"epoch {epoch}/{hyper.epochs}",
                    disable=not self.settings.progress,
                    leave=False,
                )
                for idx in progress:
                    state.batch_counter += 1
                    if per_sample:
                        realizations = [sampler.apply_mode(Phase.TRAIN) for _ in idx]
                    else:
                        realizations = [sampler.apply_mode(Phase.TRAIN)] * len(idx)
                    times = np.stack([
                        jitter(SpikeVector(train_times[k]), hyper.sigma_t, rng, self.config.jitter_clamp).times
                        for k in idx
                    ])
                    summary = self._run_batch(pool, network, times, train_set.labels[idx], realizations)
                    if not np.isfinite(summary.cost) or not summary.gradients.is_finite():
                        logger.error(f"Non-finite cost in batch {state.batch_counter} of epoch {epoch}")
                        raise TrainingDivergedError(
                            "training diverged", state.batch_counter, summary.gradients.max_abs()
                        )
                    network = sgd_step(network, summary.gradients.scaled(1.0 / len(idx)), hyper.eta)
                    epoch_summary.add(BatchSummary(
                        cost=summary.cost,
                        correct=summary.correct,
                        count=summary.count,
                        silent_hidden=summary.silent_hidden,
                        hidden_total=summary.hidden_total,
                        output_time_sum=summary.output_time_sum,
                        output_time_count=summary.output_time_count,
                    ))
                    progress.set_postfix(cost=f"{summary.cost / len(idx):.4f}")
                    logger.debug(f"Batch {state.batch_counter}: mean cost {summary.cost / len(idx):.6f}")

                state.epoch = epoch
                state.rng_state = rng.bit_generator.state
                state.variation_state = sampler.get_state()
                scheduled = epoch % self.config.eval_every == 0
                final_only = not scheduled and epoch == hyper.epochs
                if final_only:
                    # the checkpoint keeps only scheduled evaluations so a resumed run replays them
                    state.elapsed = time.monotonic() - started
                    self._save_checkpoint(out / CHECKPOINT_DIR, network, state, known)
                    state = state.model_copy(deep=True)

                stop = False
                if scheduled or final_only:
                    evaluation = self.evaluate(network, test_set, known=test_known, pool=pool)
                    row = MetricsRow(
                        epoch=epoch,
                        train_loss=epoch_summary.cost / n,
                        train_accuracy=epoch_summary.correct / n,
                        test_accuracy=evaluation.mean,
                        test_accuracy_std=evaluation.std,
                        silent_hidden_fraction=evaluation.silent_hidden_fraction,
                        mean_output_time=evaluation.mean_output_time,
                        wall_time=time.monotonic() - started,
                    )
                    state.metrics.append(row)
                    with metrics_path.open("a") as fh:
                        fh.write(row.to_csv() + "\n")
                    logger.info(
                        f"Epoch {epoch}: loss {row.train_loss:.4f}, train acc {row.train_accuracy:.4f}, "
                        f"test acc {row.test_accuracy:.4f} +- {row.test_accuracy_std:.4f}"
                    )
                    if evaluation.mean > state.best_accuracy:
                        if final_only and state.best_accuracy >= 0:
                            save_network(best_network, out / CHECKPOINT_DIR / PREVIOUS_BEST_FILE)
                        state.best_accuracy = evaluation.mean
                        state.stagnant = 0
                        best_network = network
                        save_network(network, out / BEST_DIR / NETWORK_FILE)
                    else:
                        state.stagnant += 1
                    if scheduled and state.stagnant >= self.config.early_stop_patience:
                        logger.info(f"Stopping early: {state.stagnant} evaluations without improvement")
                        stop = True

                if not final_only:
                    state.elapsed = time.monotonic() - started
                    self._save_checkpoint(out / CHECKPOINT_DIR, network, state, known)
                if stop:
                    break

        self._save_checkpoint(out / FINAL_DIR, network, state, known)
        logger.info(f"Training finished after epoch {state.epoch}; best test accuracy {state.best_accuracy:.4f}")
        return TrainingResult(
            network=network,
            best_network=best_network,
            metrics=state.metrics,
            best_accuracy=state.best_accuracy,
            output_dir=out,
            known_realization=known,
        )

    def train_trials(self, train_set: Dataset, test_set: Dataset) -> List[TrainingResult]:
        """Repeat training with seeds rng_seed, rng_seed + 1, ..."""
        if self.config.trials == 1:
            return [self.train(train_set, test_set)]
        results = []
        base = Path(self.config.output_dir)
        for trial in range(self.config.trials):
            hyper = self.hyper.model_copy(update={"rng_seed": self.hyper.rng_seed + trial})
            trial_config = self.config.model_copy(update={"hyper": hyper})
            service = TrainingService(trial_config, self.settings)
            results.append(service.train(train_set, test_set, output_dir=base / f"trial-{trial}"))
        mean, std = accuracy_spread([r.best_accuracy for r in results])
        logger.info(f"{self.config.trials} trials: best test accuracy {mean:.4f} +- {std:.4f}")
        return results

    def _sweep_config(self, axis: SweepAxis, value: float) -> RunConfig:
        config = self.config.model_copy(deep=True)
        if axis == SweepAxis.VPULSE:
            return config.model_copy(update={
                "neuron_model": NeuronModel.CIRCUIT,
                "v_pulse_plus": value,
                "v_pulse_minus": -value,
            })
        key = "sigma_vth" if axis == SweepAxis.SIGMA_VTH else "sigma_tau"
        variation = config.train_variation.model_copy(update={key: value})
        if variation.mode == VariationMode.NONE:
            variation = variation.model_copy(update={"mode": VariationMode.SAMPLED})
        return config.model_copy(update={"train_variation": variation})

    def sweep(
        self,
        axis: SweepAxis,
        values: Sequence[float],
        train_set: Optional[Dataset],
        test_set: Dataset,
        network: Optional[Network] = None,
        known: Optional[VariationRealization] = None,
    ) -> List[SweepRow]:
        """
        One train+evaluate cycle per value, or evaluate-only when a trained
        network is given (test-phase sigma sweeps).

        Writes sweep.csv and sweep_summary.txt to the output directory.
        """
        axis = SweepAxis(axis)
        if network is not None and axis == SweepAxis.VPULSE:
            raise ConfigurationError("a pulse-voltage sweep needs training; omit the trained model")
        if network is None and train_set is None:
            raise ConfigurationError("a training sweep needs a training set")

        out = Path(self.config.output_dir)
        rows: List[SweepRow] = []
        for value in values:
            if network is not None:
                key = "sigma_vth" if axis == SweepAxis.SIGMA_VTH else "sigma_tau"
                spec = self.config.test_variation.model_copy(update={key: value})
                if spec.mode == VariationMode.NONE:
                    spec = spec.model_copy(update={"mode": VariationMode.SAMPLED})
                evaluation = self.evaluate(network, test_set, spec, known=known)
                accuracies = evaluation.accuracies
            else:
                config = self._sweep_config(axis, value)
                config = config.model_copy(update={"output_dir": str(out / f"{axis.value}-{value:g}")})
                results = TrainingService(config, self.settings).train_trials(train_set, test_set)
                accuracies = [r.best_accuracy for r in results]
            mean, std = accuracy_spread(accuracies)
            row = SweepRow(
                axis=axis,
                value=value,
                trials=len(accuracies),
                accuracy_mean=mean,
                accuracy_std=std,
            )
            rows.append(row)
            logger.info(f"Sweep {axis.value}={value:g}: {row.accuracy_mean:.4f} +- {row.accuracy_std:.4f}")

        write_sweep(rows, out)
        return rows


def write_sweep(rows: Sequence[SweepRow], directory: Path) -> Tuple[Path, Path]:
    """Comma-separated table plus a key-value summary with one metric per line."""
    directory.mkdir(parents=True, exist_ok=True)
    table = directory / "sweep.csv"
    summary = directory / "sweep_summary.txt"
    with table.open("w") as fh:
        fh.write("axis,value,trials,accuracy_mean,accuracy_std\n")
        for r in rows:
            fh.write(f"{r.axis},{r.value!r},{r.trials},{r.accuracy_mean!r},{r.accuracy_std!r}\n")
    with summary.open("w") as fh:
        for r in rows:
            prefix = f"{r.axis}.{r.value:g}"
            fh.write(f"{prefix}.accuracy_mean = {r.accuracy_mean!r}\n")
            fh.write(f"{prefix}.accuracy_std = {r.accuracy_std!r}\n")
            fh.write(f"{prefix}.trials = {r.trials}\n")
    return table, summary
