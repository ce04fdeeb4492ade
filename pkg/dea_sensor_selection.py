#!/usr/bin/env python3
"""
DEA Sensor Selection
Scores vibration sensor channels with data envelopment analysis, keeps the
efficient ones and benchmarks fault classifiers on the selection.

Subcommands:
  synth         write a seeded synthetic signals.csv + costs.csv
  characterize  signals + costs -> metrics.csv
  dea           metrics.csv -> efficiency_<model>.csv + selection_<model>.json
  select        re-apply threshold / top_n to saved efficiency reports
  train         selection + signals -> model_<model>_<clf>.json + predictions
  evaluate      predictions -> results.csv + roc_<model>_<clf>.csv
  pipeline      all of the above in one run

Settings come from dotted keys (`dea.eps = 1e-7`), read from --config and
overridable per key (`--dea.eps 1e-7`) or with the shortcut flags.
"""

import argparse
import configparser
import json
import logging
import os
import sys
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, fields, replace

import classifier_utils
import dea_utils
import eval_utils
import metric_utils
import selector
import sensor_utils
import synth_utils
from errors import ConfigError, SensorSelectionError, UsageError

LOG_FORMAT = '%(asctime)s [%(levelname)s] %(message)s'
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
METHOD_LABELS = {"ccr": "CCR", "iobcc": "IOBCC", "oobcc": "OOBCC", "additive": "Additive",
                 selector.PEARSON: "Pearson"}


# ==================== Configuration ====================

def _optional(parse):
    def _parse(text):
        text = str(text).strip()
        if text.lower() in ("", "none", "auto"):
            return None
        return parse(text)
    return _parse


def _boolean(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _cap(text):
    if str(text).strip().lower() == "default":
        return metric_utils.DEFAULT_DETECTABILITY_CAP
    return _optional(float)(text)


def _kinds(allowed):
    def _parse(text):
        parts = tuple(p.strip().lower() for p in str(text).split(",") if p.strip())
        if parts == ("all",):
            return tuple(allowed)
        return parts
    return _parse


def _numbers(parse):
    def _parse(text):
        return tuple(parse(p) for p in str(text).split(",") if p.strip())
    return _parse


def _key(name, parse, default, help_text):
    return field(default=default, metadata={"key": name, "parse": parse, "help": help_text})


@dataclass(frozen=True)
class PipelineConfig:
    paths_signals: str = _key("paths.signals", str, None, "signals CSV (default <out>/signals.csv)")
    paths_costs: str = _key("paths.costs", str, None, "costs CSV (default <out>/costs.csv)")
    paths_metrics: str = _key("paths.metrics", str, None, "metrics CSV (default <out>/metrics.csv)")
    paths_selection: str = _key("paths.selection", str, None, "selection JSON to train on")
    paths_predictions: str = _key("paths.predictions", str, None, "predictions CSV to evaluate")
    paths_out: str = _key("paths.out", str, "out", "output directory")
    data_positive_code: int = _key("data.positive_code", int, sensor_utils.DEFAULT_POSITIVE_CODE,
                                   "state code of the positive (healthy) class")
    denoise_levels: int = _key("denoise.levels", _optional(int), None, "wavelet levels (auto: min(4, log2 N))")
    trend_mode: str = _key("trend.mode", str, "normalized", "trendability mode: normalized or literal")
    trend_max_lag: int = _key("trend.max_lag", _optional(int), None, "largest trendability lag")
    metrics_detectability_cap: float = _key("metrics.detectability_cap", _cap, None,
                                            "cap detectability instead of flagging zero-scatter channels ('default' = 1e6)")
    dea_models: tuple = _key("dea.models", _kinds(dea_utils.MODEL_KINDS), dea_utils.MODEL_KINDS,
                             "comma-separated DEA models or 'all'")
    dea_eps: float = _key("dea.eps", float, dea_utils.DEFAULT_EPS, "lower bound on ratio-model weights")
    dea_tolerance: float = _key("dea.tolerance", float, dea_utils.DEFAULT_TOLERANCE, "efficiency tolerance")
    dea_threshold: float = _key("dea.threshold", _optional(float), None, "selection threshold")
    dea_top_n: int = _key("dea.top_n", _optional(int), None, "keep at most N selected channels")
    dea_normalize_additive: bool = _key("dea.normalize_additive", _boolean, True,
                                        "scale columns by their maximum for the additive model")
    classify_classifiers: tuple = _key("classify.classifiers", _kinds(classifier_utils.CLASSIFIER_KINDS),
                                       classifier_utils.CLASSIFIER_KINDS, "comma-separated classifiers or 'all'")
    classify_knn_grid: tuple = _key("classify.knn_grid", _numbers(int), classifier_utils.DEFAULT_GRIDS["knn"],
                                    "KNN k candidates")
    classify_svm_grid: tuple = _key("classify.svm_grid", _numbers(float), classifier_utils.DEFAULT_GRIDS["svm"],
                                    "SVM C candidates")
    classify_svm_epochs: int = _key("classify.svm_epochs", int, classifier_utils.DEFAULT_EPOCHS, "SVM epochs")
    classify_test_size: float = _key("classify.test_size", float, 0.5, "held-out fraction")
    classify_folds: int = _key("classify.folds", int, classifier_utils.DEFAULT_FOLDS, "cross-validation folds")
    baseline_pearson: bool = _key("baseline.pearson", _boolean, False, "also evaluate the Pearson ranking")
    baseline_top_n: int = _key("baseline.top_n", _optional(int), None, "channels kept by the Pearson ranking")
    synth_channels: int = _key("synth.channels", int, 40, "synthetic channel count")
    synth_samples: int = _key("synth.samples", int, 500, "synthetic samples per state")
    synth_good_fraction: float = _key("synth.good_fraction", float, 0.5, "share of informative channels")
    run_seed: int = _key("run.seed", int, 42, "seed for data, splits and training")
    run_max_workers: int = _key("run.max_workers", int, 1, "worker threads")
    run_log_level: str = _key("run.log_level", lambda t: str(t).strip().upper(), "INFO", "log level")

    @classmethod
    def keys(cls):
        return {f.metadata["key"]: f for f in fields(cls)}

    def updated(self, raw, source):
        """Copy with the dotted-key text values in raw applied."""
        specs = self.keys()
        changes = {}
        for key, text in raw.items():
            spec = specs.get(key)
            if spec is None:
                raise ConfigError(f"{source}: unknown setting {key!r}")
            try:
                changes[spec.name] = spec.metadata["parse"](text)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"{source}: bad value for {key}: {text!r} ({e})")
        return replace(self, **changes)

    def validate(self):
        for model in self.dea_models:
            if model not in dea_utils.MODEL_KINDS:
                raise ConfigError(f"Unknown DEA model {model!r}, expected one of {dea_utils.MODEL_KINDS}")
        for kind in self.classify_classifiers:
            if kind not in classifier_utils.CLASSIFIER_KINDS:
                raise ConfigError(f"Unknown classifier {kind!r}, expected one of {classifier_utils.CLASSIFIER_KINDS}")
        if not self.dea_models or not self.classify_classifiers:
            raise ConfigError("At least one DEA model and one classifier are required")
        if self.trend_mode not in metric_utils.TREND_MODES:
            raise ConfigError(f"Unknown trend.mode {self.trend_mode!r}, expected one of {metric_utils.TREND_MODES}")
        if self.dea_eps < 0 or self.dea_tolerance < 0:
            raise ConfigError("dea.eps and dea.tolerance must be non-negative")
        if self.dea_top_n is not None and self.dea_top_n < 1:
            raise ConfigError(f"dea.top_n must be positive, got {self.dea_top_n}")
        if not 0 < self.classify_test_size < 1:
            raise ConfigError(f"classify.test_size must be in (0, 1), got {self.classify_test_size}")
        if self.classify_folds < 2:
            raise ConfigError(f"classify.folds must be >= 2, got {self.classify_folds}")
        if self.classify_svm_epochs < 1:
            raise ConfigError(f"classify.svm_epochs must be positive, got {self.classify_svm_epochs}")
        if self.run_max_workers < 1:
            raise ConfigError(f"run.max_workers must be positive, got {self.run_max_workers}")
        if self.run_log_level not in LOG_LEVELS:
            raise ConfigError(f"run.log_level must be one of {LOG_LEVELS}, got {self.run_log_level!r}")
        return self

    # ---- derived settings ----

    @property
    def verbose(self):
        return self.run_log_level == "DEBUG"

    def out_path(self, name):
        return os.path.join(self.paths_out, name)

    def metric_config(self):
        return metric_utils.MetricConfig(
            denoise=metric_utils.DenoiseConfig(levels=self.denoise_levels),
            trend_mode=self.trend_mode,
            max_lag=self.trend_max_lag,
            detectability_cap=self.metrics_detectability_cap,
            max_workers=self.run_max_workers,
        )

    def dea_options(self):
        return dea_utils.DeaOptions(eps=self.dea_eps, tolerance=self.dea_tolerance,
                                    normalize_additive=self.dea_normalize_additive,
                                    max_workers=self.run_max_workers, verbose=self.verbose)

    def grid(self, kind):
        if kind == "knn":
            return self.classify_knn_grid
        if kind == "svm":
            return self.classify_svm_grid
        return None

    def selection_models(self):
        return tuple(self.dea_models) + ((selector.PEARSON,) if self.baseline_pearson else ())


def read_config_file(path):
    """Read `section.key = value` lines into a {dotted key: text} dict."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    try:
        with open(path, "r", encoding="utf-8") as f:
            parser.read_string("[settings]\n" + f.read(), source=path)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}")
    return dict(parser.items("settings"))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="settings file with dotted keys")
    common.add_argument("--seed", type=int, help="shortcut for run.seed")
    common.add_argument("--model", choices=list(dea_utils.MODEL_KINDS) + ["all"], help="shortcut for dea.models")
    common.add_argument("--classifier", choices=list(classifier_utils.CLASSIFIER_KINDS) + ["all"],
                        help="shortcut for classify.classifiers")
    common.add_argument("--out", help="shortcut for paths.out")
    common.add_argument("--verbose", action="store_true", help="debug logging and simplex tableau dumps")
    for key, spec in PipelineConfig.keys().items():
        common.add_argument(f"--{key}", dest=key, default=None, metavar="VALUE", help=spec.metadata["help"])

    parser = argparse.ArgumentParser(
        prog="dea_sensor_selection",
        description="Sensor channel selection with data envelopment analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "generate synthetic signals and costs"),
        ("characterize", "compute channel quality metrics"),
        ("dea", "score channels and select the efficient ones"),
        ("select", "re-select channels from saved efficiency reports"),
        ("train", "tune and train classifiers on selected channels"),
        ("evaluate", "score saved predictions"),
        ("pipeline", "run every stage end to end"),
    ):
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def build_config(args):
    """Defaults < config file < dotted flags < shortcut flags."""
    config = PipelineConfig()
    if args.config:
        config = config.updated(read_config_file(args.config), args.config)
    flags = vars(args)
    dotted = {key: flags[key] for key in PipelineConfig.keys() if flags.get(key) is not None}
    config = config.updated(dotted, "command line")

    shortcuts = {}
    if args.seed is not None:
        shortcuts["run.seed"] = str(args.seed)
    if args.model:
        shortcuts["dea.models"] = args.model
    if args.classifier:
        shortcuts["classify.classifiers"] = args.classifier
    if args.out:
        shortcuts["paths.out"] = args.out
    if args.verbose:
        shortcuts["run.log_level"] = "DEBUG"
    return config.updated(shortcuts, "command line").validate()


def configure_logging(config):
    """Console plus debug.log in the output directory; returns the file handler."""
    os.makedirs(config.paths_out, exist_ok=True)
    file_handler = logging.FileHandler(config.out_path("debug.log"), encoding="utf-8")
    logging.basicConfig(
        level=getattr(logging, config.run_log_level),
        format=LOG_FORMAT,
        handlers=[file_handler, logging.StreamHandler()],
        force=True,
    )
    return file_handler


# ==================== Stages ====================

def method_label(model, kind):
    return f"{METHOD_LABELS.get(model, model)}-{classifier_utils.CLASSIFIER_LABELS[kind]}"


def _input_path(configured, config, default_name):
    return configured if configured else config.out_path(default_name)


def load_dataset(config):
    return sensor_utils.load_signals(_input_path(config.paths_signals, config, "signals.csv"),
                                     positive_code=config.data_positive_code)


def load_joined(config):
    dataset = load_dataset(config)
    costs = sensor_utils.load_costs(_input_path(config.paths_costs, config, "costs.csv"))
    return sensor_utils.join(dataset, costs)


def score_models(config, dmus):
    """Run every configured DEA model, writing efficiency and selection files.

    Returns:
        Tuple of (selections, failures)
        selections: {model: SelectionResult}
        failures: {model: error message} for models that could not be scored
    """
    selections, failures = {}, {}
    options = config.dea_options()
    for model in config.dea_models:
        try:
            results = dea_utils.score_all(dmus, model, options)
            dea_utils.write_efficiency_report(results, config.out_path(f"efficiency_{model}.csv"),
                                              len(selector.OUTPUT_FIELDS), len(selector.INPUT_FIELDS))
            selection = selector.select_by_efficiency(results, config.dea_threshold, config.dea_top_n,
                                                      config.dea_tolerance)
            selector.write_selection(selection, config.out_path(f"selection_{model}.json"))
            selections[model] = selection
            bad = [r for r in results if not r.ok]
            if bad:
                failures[model] = f"{len(bad)} DMU(s) failed"
        except SensorSelectionError as e:
            logging.error(f"{dea_utils.MODEL_LABELS[model]} failed: {e}")
            failures[model] = str(e)
    return selections, failures


def fit_pair(dataset, selection, kind, config):
    """Split, cross-validate on the training part, predict the held-out part.

    Returns:
        Tuple of (CvReport, test FeatureMatrix, predicted labels, scores)
    """
    fm = classifier_utils.build_features(dataset, selection)
    train_fm, test_fm = classifier_utils.split_train_test(fm, config.classify_test_size, config.run_seed)
    report = classifier_utils.cross_validate(
        train_fm, kind, config.grid(kind), seed=config.run_seed, folds=config.classify_folds,
        epochs=config.classify_svm_epochs,
    )
    labels, scores = classifier_utils.predict(report.model, test_fm.X)
    return report, test_fm, labels, scores


def run_pair(dataset, selection, kind, config):
    """One (selection x classifier) pair end to end.

    Returns:
        Tuple of (success, info); info holds row, summary and roc on success,
        the error message otherwise
    """
    label = method_label(selection.model, kind)
    try:
        report, test_fm, labels, scores = fit_pair(dataset, selection, kind, config)
        cm, metrics, roc = eval_utils.evaluate(test_fm.y, labels, scores, positive=1)
    except SensorSelectionError as e:
        logging.error(f"{label} failed: {e}")
        return False, f"{type(e).__name__}: {e}"
    summary = classifier_utils.model_summary(
        report,
        method=label,
        n_selected=selection.count,
        selected=[{"sensor_id": k[0], "load_pct": k[1]} for k in selection.selected],
        confusion=cm.as_dict(),
        degenerate=list(metrics.degenerate),
    )
    logging.info(f"{label}: accuracy {metrics.accuracy:.4f}, AUC {metrics.auc:.4f} on {cm.total} test rows")
    return True, {"row": metrics.as_row(label, selection.count), "summary": summary, "roc": roc}


def _run_pairs(dataset, pairs, config):
    """Fan the pairs out over the worker pool; outcomes come back in pair order."""
    outcomes = {}
    with ThreadPoolExecutor(max_workers=max(1, config.run_max_workers)) as executor:
        futures = {executor.submit(run_pair, dataset, selection, kind, config): i
                   for i, (selection, kind) in enumerate(pairs)}
        while futures:
            done, _ = wait(futures, return_when=FIRST_COMPLETED)
            for future in done:
                i = futures.pop(future)
                try:
                    outcomes[i] = future.result()
                except Exception as e:
                    logging.error(f"Pair {i} crashed: {e}", exc_info=True)
                    outcomes[i] = (False, f"{type(e).__name__}: {e}")
    return [outcomes[i] for i in range(len(pairs))]


def _failed_row(label, n_selected):
    return {"method": label, "n_selected": n_selected}


# ==================== Commands ====================

def cmd_synth(config):
    spec = synth_utils.SynthSpec(channels=config.synth_channels, samples_per_state=config.synth_samples,
                                 seed=config.run_seed, good_fraction=config.synth_good_fraction)
    signals_path, costs_path = synth_utils.synth(spec, config.paths_out)
    logging.info(f"Synthetic data written to {signals_path} and {costs_path}")
    return 0


def cmd_characterize(config):
    joined = load_joined(config)
    metrics, flagged = metric_utils.characterize(joined, config.metric_config())
    metric_utils.write_metrics(metrics, joined, config.out_path("metrics.csv"))
    if flagged:
        for key, reason in flagged.items():
            logging.error(f"{sensor_utils.channel_label(key)} not scored: {reason}")
        return 1
    return 0


def cmd_dea(config):
    metrics, costs = metric_utils.load_metrics(_input_path(config.paths_metrics, config, "metrics.csv"))
    dmus, _ = selector.assemble_dmus(metrics, costs)
    if not dmus:
        raise UsageError("Metrics file has no channels")
    _, failures = score_models(config, dmus)
    return 1 if failures else 0


def cmd_select(config):
    for model in config.dea_models:
        results = dea_utils.load_efficiency_report(config.out_path(f"efficiency_{model}.csv"))
        selection = selector.select_by_efficiency(results, config.dea_threshold, config.dea_top_n,
                                                  config.dea_tolerance)
        selector.write_selection(selection, config.out_path(f"selection_{model}.json"))
    if config.baseline_pearson:
        ranking = selector.pearson_rank(load_dataset(config), config.baseline_top_n)
        selector.write_selection(ranking, config.out_path(f"selection_{selector.PEARSON}.json"))
    return 0


def cmd_train(config):
    dataset = load_dataset(config)
    if config.paths_selection:
        selections = [selector.load_selection(config.paths_selection)]
    else:
        selections = [selector.load_selection(config.out_path(f"selection_{m}.json"))
                      for m in config.selection_models()]

    status = 0
    for selection in selections:
        for kind in config.classify_classifiers:
            label = method_label(selection.model, kind)
            try:
                report, test_fm, labels, scores = fit_pair(dataset, selection, kind, config)
            except SensorSelectionError as e:
                logging.error(f"{label} failed: {e}")
                status = max(status, e.exit_code)
                continue
            stem = f"{selection.model}_{kind}"
            summary = classifier_utils.model_summary(report, include_timing=True, method=label,
                                                     n_selected=selection.count)
            classifier_utils.write_model_summary(summary, config.out_path(f"model_{stem}.json"))
            eval_utils.write_predictions(test_fm.y, labels, scores, config.out_path(f"predictions_{stem}.csv"))
    return status


def _prediction_files(config):
    if config.paths_predictions:
        return [config.paths_predictions]
    return [config.out_path(f"predictions_{m}_{k}.csv")
            for m in config.selection_models() for k in config.classify_classifiers]


def cmd_evaluate(config):
    rows = []
    for path in _prediction_files(config):
        stem = os.path.splitext(os.path.basename(path))[0]
        stem = stem[len("predictions_"):] if stem.startswith("predictions_") else stem
        model, _, kind = stem.rpartition("_")
        label = method_label(model, kind) if kind in classifier_utils.CLASSIFIER_LABELS else stem

        n_selected = None
        summary_path = os.path.join(os.path.dirname(path), f"model_{stem}.json")
        if os.path.exists(summary_path):
            with open(summary_path, "r", encoding="utf-8") as f:
                n_selected = json.load(f).get("n_selected")

        truth, predicted, scores = eval_utils.load_predictions(path)
        _, metrics, roc = eval_utils.evaluate(truth, predicted, scores, positive=1)
        eval_utils.write_roc(roc, config.out_path(f"roc_{stem}.csv"))
        rows.append(metrics.as_row(label, n_selected))
    eval_utils.write_results(rows, config.out_path("results.csv"))
    return 0


def cmd_pipeline(config):
    joined = load_joined(config)
    metrics, flagged = metric_utils.characterize(joined, config.metric_config())
    metric_utils.write_metrics(metrics, joined, config.out_path("metrics.csv"))

    dmus, shifts = selector.assemble_dmus(metrics, joined)
    if not dmus:
        raise UsageError("No channel could be characterized; nothing to select from")
    selections, model_failures = score_models(config, dmus)
    if config.baseline_pearson:
        ranking = selector.pearson_rank(joined.dataset, config.baseline_top_n)
        selector.write_selection(ranking, config.out_path(f"selection_{selector.PEARSON}.json"))
        selections[selector.PEARSON] = ranking

    pairs = [(selections[m], kind) for m in config.selection_models() if m in selections
             for kind in config.classify_classifiers]
    logging.info(f"Evaluating {len(pairs)} (selection x classifier) pair(s)")
    outcomes = _run_pairs(joined.dataset, pairs, config)

    rows, pair_status = [], []
    for (selection, kind), (success, info) in zip(pairs, outcomes):
        label = method_label(selection.model, kind)
        stem = f"{selection.model}_{kind}"
        if success:
            classifier_utils.write_model_summary(info["summary"], config.out_path(f"model_{stem}.json"))
            eval_utils.write_roc(info["roc"], config.out_path(f"roc_{stem}.csv"))
            rows.append(info["row"])
        else:
            rows.append(_failed_row(label, selection.count))
        pair_status.append({"method": label, "model": selection.model, "classifier": kind,
                            "status": "ok" if success else info})
    eval_utils.write_results(rows, config.out_path("results.csv"))

    summary = {
        "channels": len(joined.channels),
        "flagged": [{"sensor_id": k[0], "load_pct": k[1], "reason": reason}
                    for k, reason in sorted(flagged.items(), key=lambda kv: sensor_utils.channel_sort_key(kv[0]))],
        "shifts": shifts,
        "models": {m: {"selected": selections[m].count if m in selections else None,
                       "status": model_failures.get(m, "ok")}
                   for m in config.selection_models()},
        "pairs": pair_status,
    }
    with open(config.out_path("pipeline_summary.json"), "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")

    failed = sum(1 for s in pair_status if s["status"] != "ok")
    logging.info(f"Pipeline finished: {len(pair_status) - failed}/{len(pair_status)} pair(s) succeeded")
    return 1 if failed or any(m not in selections for m in config.dea_models) else 0


COMMANDS = {
    "synth": cmd_synth,
    "characterize": cmd_characterize,
    "dea": cmd_dea,
    "select": cmd_select,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}


# ==================== Main ====================

def main(argv=None):
    """Parse arguments, run one subcommand, return the process exit code."""
    args = build_parser().parse_args(argv)
    try:
        config = build_config(args)
    except SensorSelectionError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2

    file_handler = configure_logging(config)
    try:
        logging.info(f"Running '{args.command}' (output: {config.paths_out}, seed {config.run_seed})")
        return COMMANDS[args.command](config)
    except SensorSelectionError as e:
        logging.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except FileNotFoundError as e:
        logging.error(str(e))
        return 2
    except Exception as e:
        logging.error(f"Unexpected error: {e}", exc_info=True)
        return 1
    finally:
        logging.getLogger().removeHandler(file_handler)
        file_handler.close()


if __name__ == "__main__":
    sys.exit(main())
