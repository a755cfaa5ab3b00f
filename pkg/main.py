"""
Command-line entry point of lob-arena.

This module chains the stages of the pipeline: simulating a week of the market, checking its
stylized facts, building the archetype dataset, training the classifier, its baselines and the
per-archetype cloners, evaluating them and regenerating every chart. Each stage reads files
written by earlier stages and writes a manifest listing its outputs with checksums.
"""

import csv
import functools
import json
import logging
import sys
import time
from pathlib import Path

import click
import numpy as np
from pydantic import ValidationError

from analysis.stylized_facts import histogram, stylized_facts_report
from config import CLONER_HYPERPARAMS, DEFAULT_TEST_DAYS, DEFAULT_TRAIN_DAYS, HISTOGRAM_BINS
from errors import DatasetError, LobArenaError, TrainingError
from learning.baselines import BASELINE_FACTORIES
from learning.cloning import clone_actions, fit_cloner
from learning.dataset import (CLASS_NAMES, ZScoreParams, build_dataset, cloning_targets, load_zscore, read_dataset_csv,
                              validation_split, zscore_apply)
from learning.metrics import evaluate, ks_statistic
from learning.mlp import Hyperparams, load_model, predict_labels, save_model, train_classifier
from learning.tuner import SearchSpace, random_search
from market.scenario import ScenarioConfig, config_error_from, day_directories, run_scenario
from reporting.manifest import RunManifest, sha256_text
from reporting.svg_constructor import SVGConstructor
from settings_manager import SettingsManager

logger = logging.getLogger(__name__)

PREDICTION_HEADER = ["index", "true_label", "predicted_label"]
CLONING_HEADER = ["true_price", "true_size", "pred_price", "pred_size"]
CLONING_TARGETS = ["price", "size"]


def _write_csv(path: Path, header: list, rows) -> Path:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _read_predictions(path: Path) -> tuple:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        if next(reader, None) != PREDICTION_HEADER:
            raise DatasetError(f"{path}: header does not match {','.join(PREDICTION_HEADER)}", field="predictions")
        rows = [[int(v) for v in row] for row in reader]
    rows = np.array(rows, dtype=np.int64).reshape(-1, 3)
    return rows[:, 1], rows[:, 2]


def _prediction_sources(directories) -> dict:
    """Classifier name to its prediction file; the first directory naming a classifier wins."""
    sources = {}
    for directory in directories:
        for path in sorted(Path(directory).glob("predictions_*.csv")):
            sources.setdefault(path.stem.removeprefix("predictions_"), path)
    return sources


def _run_layout(run_dir: Path) -> tuple:
    """
    The scenario and the day directories of a simulation run.

    Raises:
        DatasetError: If the run has no day directories or no scenario.json.
    """
    days = day_directories(run_dir)
    path = Path(run_dir) / "scenario.json"
    if not path.is_file():
        raise DatasetError(f"{path} is missing", field="run")
    return ScenarioConfig.model_validate_json(path.read_text()), days


def _read_cloning(path: Path) -> np.ndarray:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        if next(reader, None) != CLONING_HEADER:
            raise DatasetError(f"{path}: header does not match {','.join(CLONING_HEADER)}", field="cloning")
        return np.array([[float(v) for v in row] for row in reader], dtype=float).reshape(-1, 4)


class Pipeline:
    """
    Runs the pipeline stages; every stage writes a manifest into its output directory.

    Args:
        settings (SettingsManager): Source of the parallelism cap.
    """

    def __init__(self, settings: SettingsManager):
        self.settings = settings

    @staticmethod
    def _manifest(command: str, options: dict, seed=None, inputs=()) -> RunManifest:
        config_hash = sha256_text(json.dumps(options, sort_keys=True, default=str))
        return RunManifest(command=command, config_hash=config_hash, seed=seed, inputs=[str(p) for p in inputs])

    @staticmethod
    def _finish(manifest: RunManifest, out_dir: Path, outputs: list, started: float) -> RunManifest:
        for path in sorted(set(outputs)):
            manifest.add_output(path, out_dir)
        manifest.wall_time_s = round(time.perf_counter() - started, 3)
        manifest.write(out_dir)
        return manifest

    def simulate(self, cfg: ScenarioConfig, out_dir: Path) -> RunManifest:
        artifacts = run_scenario(cfg, out_dir, self.settings.max_workers())
        logger.info(f"Simulated {len(artifacts.days)} days into {out_dir}")
        return artifacts.manifest

    def stylized_facts(self, run_dir: Path, out_dir: Path, bins: int = HISTOGRAM_BINS) -> RunManifest:
        started = time.perf_counter()
        cfg, days = _run_layout(run_dir)
        l2_paths = [day / "l2.csv" for day in days]
        manifest = self._manifest("stylized-facts", {"run": str(run_dir), "bins": bins}, inputs=l2_paths)
        stylized_facts_report(l2_paths, out_dir, (cfg.session_open_ns, cfg.session_close_ns), bins=bins)
        return self._finish(manifest, out_dir, [p for p in Path(out_dir).iterdir() if p.name != "manifest.json"],
                            started)

    def dataset(self, run_dir: Path, out_dir: Path, seed: int, train_days: int, test_days: int) -> RunManifest:
        started = time.perf_counter()
        days = day_directories(run_dir)
        manifest = self._manifest("dataset", {"run": str(run_dir), "train_days": train_days,
                                              "test_days": test_days}, seed, days)
        build_dataset(days, out_dir, seed, train_days, test_days)
        outputs = [Path(out_dir) / name for name in ("train.csv", "test.csv", "train_full.csv", "test_full.csv",
                                                     "zscore.json", "dataset.json")]
        return self._finish(manifest, out_dir, outputs, started)

    def train_classifier(self, dataset_dir: Path, out_dir: Path, seed: int, hp: Hyperparams, search_budget: int,
                         baselines: list) -> RunManifest:
        """
        Trains the MLP classifier and the baselines, saving the model and the baselines' test-set
        predictions.

        The last training day is held out to pick the hyperparameters (when search_budget is positive)
        and the epoch count with the lowest validation loss; the final model then trains on every
        training day for that many epochs.
        """
        started = time.perf_counter()
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = self._manifest("train-classifier", {"dataset": str(dataset_dir), "hyperparams": hp.model_dump(),
                                                       "search_budget": search_budget, "baselines": baselines},
                                  seed, [dataset_dir / "train.csv", dataset_dir / "test.csv"])
        train = read_dataset_csv(dataset_dir / "train.csv")
        test = read_dataset_csv(dataset_dir / "test.csv")
        params = load_zscore(dataset_dir / "zscore.json")
        fit, valid = validation_split(train)
        fit_x = zscore_apply(params, fit.x)
        valid_pair = (zscore_apply(params, valid.x), valid.y)
        outputs = []

        if search_budget > 0:
            def objective(candidate: Hyperparams) -> float:
                model, _ = train_classifier(fit_x, fit.y, candidate, seed)
                return evaluate(predict_labels(model, valid_pair[0]), valid_pair[1], CLASS_NAMES).macro_f1

            result = random_search(SearchSpace(), search_budget, objective, seed, hp)
            hp = result.best
            outputs.append(out_dir / "search.json")
            outputs[-1].write_text(result.model_dump_json(indent=2))

        _, selection = train_classifier(fit_x, fit.y, hp, seed, valid_pair)
        hp = hp.model_copy(update={"epochs": selection.best_epoch()})
        logger.info(f"Validation loss is lowest after {hp.epochs} epochs")
        model, history = train_classifier(zscore_apply(params, train.x), train.y, hp, seed)
        model.meta["zscore"] = params.model_dump()
        model.meta["class_names"] = CLASS_NAMES
        outputs.append(save_model(model, out_dir / "classifier.npz"))
        outputs.append(out_dir / "history.json")
        outputs[-1].write_text(json.dumps({"selected_epochs": hp.epochs, "selection": selection.model_dump(),
                                           "final": history.model_dump()}, indent=2))

        x_train, x_test = zscore_apply(params, train.x), zscore_apply(params, test.x)
        for name in baselines:
            logger.info(f"Training baseline {name}")
            predictions = BASELINE_FACTORIES[name](seed).fit(x_train, train.y).predict(x_test)
            outputs.append(_write_csv(out_dir / f"predictions_{name}.csv", PREDICTION_HEADER,
                                      zip(range(len(test)), test.y.tolist(), predictions.tolist())))
        return self._finish(manifest, out_dir, outputs, started)

    def train_cloners(self, dataset_dir: Path, out_dir: Path, seed: int, hp: Hyperparams,
                      search_budget: int = 0) -> RunManifest:
        """
        Trains one cloning regressor per archetype on its training-day orders and writes actions
        sampled from it on the held-out days, in the normalized units of the true orders.
        """
        started = time.perf_counter()
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = self._manifest("train-cloner", {"dataset": str(dataset_dir), "hyperparams": hp.model_dump(),
                                                   "search_budget": search_budget},
                                  seed, [dataset_dir / "train_full.csv", dataset_dir / "test_full.csv"])
        train = read_dataset_csv(dataset_dir / "train_full.csv")
        test = read_dataset_csv(dataset_dir / "test_full.csv")
        summary, outputs = {}, []
        for label, name in enumerate(CLASS_NAMES):
            archetype_train = train.subset(train.y == label)
            archetype_test = test.subset(test.y == label)
            try:
                model, search = fit_cloner(archetype_train, hp, seed + label, search_budget)
            except (TrainingError, DatasetError) as e:
                logger.warning(f"Cloner for {name} refused: {e}")
                summary[name] = {"status": "refused", "reason": str(e)}
                continue
            model.meta["archetype"] = name
            outputs.append(save_model(model, out_dir / f"cloner_{name}.npz"))
            summary[name] = {"status": "trained", "train_samples": len(archetype_train),
                             "test_samples": len(archetype_test), "epochs": model.meta["hyperparams"]["epochs"]}
            if search is not None:
                outputs.append(out_dir / f"search_{name}.json")
                outputs[-1].write_text(search.model_dump_json(indent=2))
            if len(archetype_test) == 0:
                continue
            target_params = ZScoreParams.model_validate(model.meta["target_zscore"])
            truth = zscore_apply(target_params, cloning_targets(archetype_test))
            predicted = zscore_apply(target_params, clone_actions(model, archetype_test,
                                                                  np.random.default_rng(seed + label)))
            outputs.append(_write_csv(out_dir / f"cloning_{name}.csv", CLONING_HEADER,
                                      ([repr(float(v)) for v in row] for row in np.hstack([truth, predicted]))))
            summary[name]["targets"] = cloning_summary(truth, predicted)
        outputs.append(out_dir / "cloning.json")
        outputs[-1].write_text(json.dumps(summary, indent=2, sort_keys=True))
        return self._finish(manifest, out_dir, outputs, started)

    def evaluate(self, model_path: Path, dataset_dir: Path, out_dir: Path, predictions_dir: Path = None) -> RunManifest:
        """
        Scores the classifier on the test split and every baseline prediction file beside it.
        """
        started = time.perf_counter()
        out_dir.mkdir(parents=True, exist_ok=True)
        predictions_dir = Path(predictions_dir or model_path.parent)
        manifest = self._manifest("evaluate", {"model": str(model_path), "dataset": str(dataset_dir)},
                                  inputs=[model_path, dataset_dir / "test.csv"])
        model = load_model(model_path)
        test = read_dataset_csv(dataset_dir / "test.csv")
        params = ZScoreParams.model_validate(model.meta["zscore"])
        predictions = predict_labels(model, zscore_apply(params, test.x))
        outputs = [_write_csv(out_dir / "predictions_mlp.csv", PREDICTION_HEADER,
                              zip(range(len(test)), test.y.tolist(), predictions.tolist()))]
        sources = _prediction_sources([out_dir, predictions_dir])

        summary = {}
        for name, path in sources.items():
            truths, predicted = _read_predictions(path)
            report = evaluate(predicted, truths, CLASS_NAMES)
            outputs.append(out_dir / f"eval_{name}.json")
            outputs[-1].write_text(report.model_dump_json(indent=2))
            outputs.append(SVGConstructor.write(
                SVGConstructor.construct_heatmap(report.confusion, CLASS_NAMES, f"Confusion matrix: {name}"),
                out_dir / f"confusion_{name}.svg"))
            summary[name] = {"macro_f1": report.macro_f1, "accuracy": report.accuracy,
                             "f1": {c: m.f1 for c, m in zip(CLASS_NAMES, report.per_class)}}
            logger.info(f"{name}: macro F1 {report.macro_f1:.3f}, accuracy {report.accuracy:.3f}")
        outputs.append(out_dir / "evaluation.json")
        outputs[-1].write_text(json.dumps(summary, indent=2, sort_keys=True))
        return self._finish(manifest, out_dir, outputs, started)

    def report(self, run_dir: Path, out_dir: Path, prediction_dirs: tuple = (), cloner_dir: Path = None,
               bins: int = HISTOGRAM_BINS) -> RunManifest:
        """
        Regenerates every chart from files on disk: return histograms from the L2 logs, confusion
        heatmaps from prediction files and predicted-versus-true histograms from cloning files.
        """
        started = time.perf_counter()
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = self._manifest("report", {"run": str(run_dir), "predictions": [str(d) for d in prediction_dirs],
                                             "cloners": str(cloner_dir), "bins": bins})
        cfg, days = _run_layout(run_dir)
        stylized_facts_report([day / "l2.csv" for day in days], out_dir / "facts",
                              (cfg.session_open_ns, cfg.session_close_ns), bins=bins)
        outputs = list((out_dir / "facts").iterdir())

        for name, path in _prediction_sources(prediction_dirs).items():
            truths, predicted = _read_predictions(path)
            report = evaluate(predicted, truths, CLASS_NAMES)
            outputs.append(SVGConstructor.write(
                SVGConstructor.construct_heatmap(report.confusion, CLASS_NAMES, f"Confusion matrix: {name}"),
                out_dir / f"confusion_{name}.svg"))

        if cloner_dir is not None:
            for path in sorted(Path(cloner_dir).glob("cloning_*.csv")):
                name = path.stem.removeprefix("cloning_")
                values = _read_cloning(path)
                for column, target in enumerate(CLONING_TARGETS):
                    truth, predicted = values[:, column], values[:, column + 2]
                    both = np.concatenate([truth, predicted])
                    edges, _ = histogram(both, bins)
                    if len(edges) == 0:
                        continue
                    true_counts, _ = np.histogram(truth, bins=edges)
                    pred_counts, _ = np.histogram(predicted, bins=edges)
                    outputs.append(SVGConstructor.write(
                        SVGConstructor.construct_histogram(edges, {"true": true_counts, "predicted": pred_counts},
                                                           f"{name}: {target}", f"z-scored {target}"),
                        out_dir / f"cloning_{name}_{target}.svg"))
        return self._finish(manifest, out_dir, outputs, started)


def cloning_summary(truth: np.ndarray, predicted: np.ndarray) -> dict:
    """Per target: mean difference in units of the true standard deviation, and the KS distance."""
    summary = {}
    for column, target in enumerate(CLONING_TARGETS):
        true_std = float(truth[:, column].std())
        difference = abs(float(predicted[:, column].mean() - truth[:, column].mean()))
        summary[target] = {"mean_difference_in_std": difference / true_std if true_std > 0 else None,
                           "ks": ks_statistic(truth[:, column], predicted[:, column])}
    return summary


def handle_errors(command):
    """Turns pipeline errors into one stderr line and exit code 2."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ValidationError as e:
            error = config_error_from(e)
        except LobArenaError as e:
            error = e
        logger.error(error.one_line())
        click.echo(error.one_line(), err=True)
        sys.exit(2)

    return wrapper


def load_scenario(scenario: str, preset: str, seed: int, days: int) -> ScenarioConfig:
    cfg = ScenarioConfig.from_json_file(scenario) if scenario else ScenarioConfig.preset(preset)
    update = {"seed": seed}
    if days is not None:
        update["days"] = days
    return ScenarioConfig.model_validate(cfg.model_dump() | update)


def hyperparams_from(epochs: int, hidden: str, base: dict = None) -> Hyperparams:
    """Hyperparameters from the base settings (the classifier defaults when None) and the CLI overrides."""
    update = dict(base or {})
    if epochs is not None:
        update["epochs"] = epochs
    if hidden:
        sizes = [int(size) for size in hidden.split(",")]
        update["hidden_sizes"] = sizes
        update["activations"] = ["relu"] * (len(sizes) - 1) + ["sigmoid"]
    return Hyperparams(**update)


seed_option = click.option("--seed", type=click.IntRange(min=0), required=True, help="Master seed of every draw.")
scenario_options = [
    click.option("--scenario", type=click.Path(dir_okay=False), default=None, help="Scenario JSON file."),
    click.option("--preset", type=click.Choice(["default", "small"]), default="default", show_default=True),
    click.option("--days", type=click.IntRange(min=1), default=None, help="Override the number of days."),
]
training_options = [
    click.option("--epochs", type=click.IntRange(min=1), default=None, help="Override the epoch count."),
    click.option("--hidden", default=None, help="Comma-separated hidden layer sizes, e.g. 64,64."),
]


def apply_options(options):
    def decorator(command):
        for option in reversed(options):
            command = option(command)
        return command
    return decorator


@click.group()
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]), default="INFO",
              show_default=True)
@click.pass_context
def cli(ctx, log_level):
    """Simulate a limit order book market and learn its trader archetypes."""
    logging.basicConfig(level=getattr(logging, log_level), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    ctx.obj = Pipeline(SettingsManager())


@cli.command()
@apply_options(scenario_options)
@seed_option
@click.option("--out", type=click.Path(file_okay=False), default="runs/sim", show_default=True)
@click.pass_obj
@handle_errors
def simulate(pipeline, scenario, preset, days, seed, out):
    """Run the market and write per-day order, trade and L2 logs."""
    pipeline.simulate(load_scenario(scenario, preset, seed, days), Path(out))


@cli.command("stylized-facts")
@click.option("--run", "run_dir", type=click.Path(file_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), default="runs/facts", show_default=True)
@click.option("--bins", type=click.IntRange(min=1), default=HISTOGRAM_BINS, show_default=True)
@click.pass_obj
@handle_errors
def stylized_facts(pipeline, run_dir, out, bins):
    """Summarize mid-price log returns at 1 and 10 minutes."""
    pipeline.stylized_facts(Path(run_dir), Path(out), bins)


@cli.command()
@click.option("--run", "run_dir", type=click.Path(file_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), default="runs/dataset", show_default=True)
@seed_option
@click.option("--train-days", type=click.IntRange(min=1), default=DEFAULT_TRAIN_DAYS, show_default=True)
@click.option("--test-days", type=click.IntRange(min=1), default=DEFAULT_TEST_DAYS, show_default=True)
@click.pass_obj
@handle_errors
def dataset(pipeline, run_dir, out, seed, train_days, test_days):
    """Build the balanced archetype dataset from a simulation run."""
    pipeline.dataset(Path(run_dir), Path(out), seed, train_days, test_days)


@cli.command("train-classifier")
@click.option("--dataset", "dataset_dir", type=click.Path(file_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), default="runs/models", show_default=True)
@seed_option
@apply_options(training_options)
@click.option("--search-budget", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--baselines/--no-baselines", default=True, show_default=True)
@click.pass_obj
@handle_errors
def train_classifier_command(pipeline, dataset_dir, out, seed, epochs, hidden, search_budget, baselines):
    """Train the MLP archetype classifier and the baseline classifiers."""
    names = list(BASELINE_FACTORIES) if baselines else []
    pipeline.train_classifier(Path(dataset_dir), Path(out), seed, hyperparams_from(epochs, hidden), search_budget,
                              names)


@cli.command("train-cloner")
@click.option("--dataset", "dataset_dir", type=click.Path(file_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), default="runs/cloners", show_default=True)
@seed_option
@apply_options(training_options)
@click.option("--search-budget", type=click.IntRange(min=0), default=0, show_default=True,
              help="Random-search trials per archetype.")
@click.pass_obj
@handle_errors
def train_cloner_command(pipeline, dataset_dir, out, seed, epochs, hidden, search_budget):
    """Train one behavioral-cloning regressor per archetype."""
    pipeline.train_cloners(Path(dataset_dir), Path(out), seed, hyperparams_from(epochs, hidden, CLONER_HYPERPARAMS),
                           search_budget)


@cli.command("evaluate")
@click.option("--model", "model_path", type=click.Path(dir_okay=False), required=True)
@click.option("--dataset", "dataset_dir", type=click.Path(file_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), default="runs/eval", show_default=True)
@click.option("--predictions", "predictions_dir", type=click.Path(file_okay=False), default=None,
              help="Directory of baseline prediction files; defaults to the model's directory.")
@click.pass_obj
@handle_errors
def evaluate_command(pipeline, model_path, dataset_dir, out, predictions_dir):
    """Score the classifier and the baselines on the test days."""
    pipeline.evaluate(Path(model_path), Path(dataset_dir), Path(out), predictions_dir)


@cli.command()
@click.option("--run", "run_dir", type=click.Path(file_okay=False), required=True)
@click.option("--predictions", "prediction_dirs", type=click.Path(file_okay=False), multiple=True,
              help="Directory holding predictions_<name>.csv files; repeatable.")
@click.option("--cloners", "cloner_dir", type=click.Path(file_okay=False), default=None)
@click.option("--out", type=click.Path(file_okay=False), default="runs/report", show_default=True)
@click.option("--bins", type=click.IntRange(min=1), default=HISTOGRAM_BINS, show_default=True)
@click.pass_obj
@handle_errors
def report(pipeline, run_dir, prediction_dirs, cloner_dir, out, bins):
    """Regenerate every chart from logs, prediction and cloning files."""
    pipeline.report(Path(run_dir), Path(out), prediction_dirs, cloner_dir, bins)


@cli.command("all")
@apply_options(scenario_options)
@seed_option
@apply_options(training_options)
@click.option("--search-budget", type=click.IntRange(min=0), default=0, show_default=True,
              help="Random-search trials for the classifier and for each cloner.")
@click.option("--out", type=click.Path(file_okay=False), default="runs", show_default=True)
@click.pass_obj
@handle_errors
def run_all(pipeline, scenario, preset, days, seed, epochs, hidden, search_budget, out):
    """Run every stage in order, each into its own subdirectory."""
    root = Path(out)
    cfg = load_scenario(scenario, preset, seed, days)
    hp = hyperparams_from(epochs, hidden)
    cloner_hp = hyperparams_from(epochs, hidden, CLONER_HYPERPARAMS)
    pipeline.simulate(cfg, root / "sim")
    pipeline.stylized_facts(root / "sim", root / "facts")
    pipeline.dataset(root / "sim", root / "dataset", seed, DEFAULT_TRAIN_DAYS, DEFAULT_TEST_DAYS)
    pipeline.train_classifier(root / "dataset", root / "models", seed, hp, search_budget, list(BASELINE_FACTORIES))
    pipeline.train_cloners(root / "dataset", root / "cloners", seed, cloner_hp, search_budget)
    pipeline.evaluate(root / "models" / "classifier.npz", root / "dataset", root / "eval")
    pipeline.report(root / "sim", root / "report", (root / "eval", root / "models"), root / "cloners")


if __name__ == "__main__":
    cli()
