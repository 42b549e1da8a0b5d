"""Experiment orchestration: Monte Carlo cross-validation over seeds.

Each seed index runs an independent pipeline: draw or load the data, encode,
split, standardise on the training split, train the classifier, pick its
decision threshold on validation, evaluate the untouched model on the test
split, then fit every configured debiasing method using only the validation
split and evaluate it on the test split. Per-seed randomness is derived from
(master seed, seed index, purpose) so extending the seed list never reshuffles
earlier runs.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import (CsvSchema, Dataset, SplitSpec, append_protected_feature, load_csv,
                   one_hot_encode, split, standardize)
from .gda import GdaConfig, run_gda
from .metrics import BiasSpec, balanced_accuracy
from .network import MlpModel, fc_classifier
from .postprocess import (RandomPerturbConfig, eqodds_apply, eqodds_fit, random_perturb,
                          roc_apply, roc_fit, save_rule)
from .pruning import PruneConfig, run_pruning
from .synth import LohConfig, ZafarConfig, gen_loh, gen_zafar
from .training import TrainConfig, select_threshold, train

METHOD_NAMES = ("standard", "prune", "gda", "roc", "eqodds", "random")

# purpose codes for per-seed rng derivation
PURPOSE_GEN = 0
PURPOSE_SPLIT = 1
PURPOSE_INIT = 2
PURPOSE_TRAIN = 3
PURPOSE_METHOD_BASE = 10

RESULT_COLUMNS = ("method", "seed", "bias", "ba", "threshold", "feasible", "error")


class ConfigError(ValueError):
    """Experiment configuration does not validate."""


def child_seed(master: int, seed_index: int, purpose: int) -> int:
    """Stable per-(seed index, purpose) integer seed derived from the master."""
    return int(np.random.SeedSequence([master, seed_index, purpose]).generate_state(1)[0])


@dataclass(frozen=True)
class DataSourceConfig:
    kind: str                              # "loh", "zafar" or "csv"
    n: int = 10000
    alpha: float = 1.0
    theta: float = 1.2
    embed_hidden: int = 16
    embed_out: int = 20
    path: str = ""
    schema: CsvSchema | None = None
    one_hot_columns: tuple[str, ...] | None = None   # None = per-kind default
    protected_as_feature: bool | None = None         # None = per-kind default

    def __post_init__(self):
        if self.kind not in ("loh", "zafar", "csv"):
            raise ConfigError(f"unknown data source kind: {self.kind!r}")
        if self.kind == "csv" and (not self.path or self.schema is None):
            raise ConfigError("csv data source needs a path and a schema")

    @property
    def encoded_columns(self) -> tuple[str, ...]:
        if self.one_hot_columns is not None:
            return self.one_hot_columns
        # the category-valued x6 column behaves like any categorical CSV column
        return ("x6",) if self.kind == "loh" else ()

    @property
    def appends_protected(self) -> bool:
        if self.protected_as_feature is not None:
            return self.protected_as_feature
        # the logit family draws features independent of the attribute, so the
        # attribute must be visible to the classifier for any disparity to arise
        return self.kind == "loh"


@dataclass(frozen=True)
class MethodConfig:
    name: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in METHOD_NAMES:
            raise ConfigError(f"unknown method: {self.name!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    data_source: DataSourceConfig
    split_ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    stratify_by_label: bool = False
    hidden: tuple[int, ...] = (32,) * 11
    dropout_p: float = 0.05
    batchnorm: bool = True
    train: TrainConfig = TrainConfig()
    bias_spec: BiasSpec = BiasSpec("spd")
    methods: tuple[MethodConfig, ...] = (MethodConfig("standard"),)
    num_seeds: int = 1
    seed: int = 0
    seed_indices: tuple[int, ...] | None = None
    output_dir: str = "out"
    workers: int = 1
    save_checkpoints: bool = True

    def __post_init__(self):
        if self.num_seeds < 1:
            raise ConfigError("num_seeds must be at least 1")
        if not self.methods:
            raise ConfigError("at least one method required")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    @property
    def indices(self) -> tuple[int, ...]:
        return self.seed_indices if self.seed_indices is not None else tuple(range(self.num_seeds))

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        try:
            return cls._parse(doc)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def _parse(cls, doc: dict) -> "ExperimentConfig":
        src = dict(doc["data_source"])
        if "schema" in src and src["schema"] is not None:
            sch = dict(src["schema"])
            if "drop_columns" in sch:
                sch["drop_columns"] = tuple(sch["drop_columns"])
            src["schema"] = CsvSchema(**sch)
        if "one_hot_columns" in src and src["one_hot_columns"] is not None:
            src["one_hot_columns"] = tuple(src["one_hot_columns"])
        data_source = DataSourceConfig(**src)
        kwargs: dict = {"data_source": data_source}
        if "split" in doc:
            sp = doc["split"]
            if "ratios" in sp:
                kwargs["split_ratios"] = tuple(sp["ratios"])
            if "stratify_by_label" in sp:
                kwargs["stratify_by_label"] = bool(sp["stratify_by_label"])
        if "architecture" in doc:
            arch = doc["architecture"]
            if "hidden" in arch:
                kwargs["hidden"] = tuple(arch["hidden"])
            for key in ("dropout_p", "batchnorm"):
                if key in arch:
                    kwargs[key] = arch[key]
        if "train" in doc:
            kwargs["train"] = TrainConfig(**doc["train"])
        if "bias_spec" in doc:
            kwargs["bias_spec"] = BiasSpec(doc["bias_spec"])
        if "methods" in doc:
            methods = []
            for m in doc["methods"]:
                m = dict(m)
                methods.append(MethodConfig(m.pop("name"), m))
            kwargs["methods"] = tuple(methods)
        for key in ("num_seeds", "seed", "output_dir", "workers", "save_checkpoints"):
            if key in doc:
                kwargs[key] = doc[key]
        if "seed_indices" in doc and doc["seed_indices"] is not None:
            kwargs["seed_indices"] = tuple(doc["seed_indices"])
        return cls(**kwargs)


@dataclass
class ResultRow:
    """Per-method aggregate over seeds plus the underlying per-seed records."""

    method: str
    bias_mean: float
    bias_sd: float
    ba_mean: float
    ba_sd: float
    records: list[dict]
    failures: int = 0


# ------------------------------------------------------------------ pipeline


def _generate(cfg: ExperimentConfig, seed_index: int) -> Dataset:
    src = cfg.data_source
    gen_seed = child_seed(cfg.seed, seed_index, PURPOSE_GEN)
    if src.kind == "loh":
        return gen_loh(LohConfig(src.n, src.alpha, gen_seed))
    if src.kind == "zafar":
        return gen_zafar(ZafarConfig(src.n, src.theta, src.embed_hidden,
                                     src.embed_out, gen_seed))
    return load_csv(src.path, src.schema)


def prepare_seed_data(cfg: ExperimentConfig, seed_index: int) -> tuple[Dataset, Dataset, Dataset]:
    """Generate/load, encode, split and standardise the data for one seed."""
    data = _generate(cfg, seed_index)
    if cfg.data_source.encoded_columns:
        data = one_hot_encode(data, cfg.data_source.encoded_columns)
    if cfg.data_source.appends_protected:
        data = append_protected_feature(data)
    spec = SplitSpec(cfg.split_ratios, child_seed(cfg.seed, seed_index, PURPOSE_SPLIT),
                     cfg.stratify_by_label)
    train_d, valid_d, test_d = split(data, spec)
    (train_d, valid_d, test_d), _ = standardize(train_d, valid_d, test_d)
    return train_d, valid_d, test_d


def train_standard(cfg: ExperimentConfig, seed_index: int,
                   train_d: Dataset, valid_d: Dataset) -> MlpModel:
    """Train the classifier for one seed and fix its decision threshold."""
    specs = fc_classifier(cfg.hidden, cfg.dropout_p, cfg.batchnorm)
    init = MlpModel.initialize(train_d.features.shape[1], specs,
                               child_seed(cfg.seed, seed_index, PURPOSE_INIT))
    trained = train(init, train_d, valid_d,
                    replace(cfg.train, seed=child_seed(cfg.seed, seed_index, PURPOSE_TRAIN)))
    trained.threshold = select_threshold(trained.forward(valid_d.features), valid_d.labels)
    return trained


def evaluate_hard(model: MlpModel, data: Dataset, spec: BiasSpec) -> tuple[float, float]:
    scores = model.forward(data.features)
    yhat = (scores >= model.threshold).astype(np.float64)
    return spec.bias(yhat, data.labels, data.protected), balanced_accuracy(yhat, data.labels)


def _method_row(method: str, seed_index: int, bias: float, ba: float,
                threshold: float, feasible: bool) -> dict:
    return {"method": method, "seed": seed_index, "bias": bias, "ba": ba,
            "threshold": threshold, "feasible": feasible, "error": ""}


@dataclass
class MethodArtifacts:
    """Whatever a method produced besides its result row."""

    outcome: object = None   # DebiasOutcome for prune/gda/random
    rule: object = None      # RocRule or EqOddsRule
    model: MlpModel | None = None


def apply_method(cfg: ExperimentConfig, method: MethodConfig, position: int,
                 seed_index: int, model: MlpModel, valid_d: Dataset, test_d: Dataset,
                 out_dir: Path | None) -> tuple[dict, MethodArtifacts]:
    """Fit one debiasing method on validation data and evaluate it on test."""
    spec = cfg.bias_spec
    seed = child_seed(cfg.seed, seed_index, PURPOSE_METHOD_BASE + position)
    name = method.name
    opts = dict(method.options)
    artifacts = _artifact_paths(out_dir, name, seed_index)
    if name == "standard":
        bias, ba = evaluate_hard(model, test_d, spec)
        return (_method_row(name, seed_index, bias, ba, model.threshold, True),
                MethodArtifacts(model=model))
    if name == "roc":
        vscores = model.forward(valid_d.features)
        rule = roc_fit(vscores, valid_d.labels, valid_d.protected,
                       model.threshold, spec, **opts)
        vhat = roc_apply(vscores, valid_d.protected, model.threshold, rule)
        vbias = spec.bias(vhat, valid_d.labels, valid_d.protected)
        tscores = model.forward(test_d.features)
        yhat = roc_apply(tscores, test_d.protected, model.threshold, rule)
        bias = spec.bias(yhat, test_d.labels, test_d.protected)
        ba = balanced_accuracy(yhat, test_d.labels)
        if artifacts:
            save_rule(rule, artifacts["rule"])
        bound = opts.get("bias_bound", 0.05) + opts.get("margin", 0.01)
        return (_method_row(name, seed_index, bias, ba, model.threshold,
                            abs(vbias) <= bound),
                MethodArtifacts(rule=rule))
    if name == "eqodds":
        vscores = model.forward(valid_d.features)
        vhat = (vscores >= model.threshold).astype(np.float64)
        rule = eqodds_fit(vhat, valid_d.labels, valid_d.protected)
        tscores = model.forward(test_d.features)
        that = (tscores >= model.threshold).astype(np.float64)
        yhat = eqodds_apply(that, test_d.protected, rule, np.random.default_rng(seed))
        bias = spec.bias(yhat, test_d.labels, test_d.protected)
        ba = balanced_accuracy(yhat, test_d.labels)
        if artifacts:
            save_rule(rule, artifacts["rule"])
        return (_method_row(name, seed_index, bias, ba, model.threshold, True),
                MethodArtifacts(rule=rule))
    if name == "prune":
        outcome = run_pruning(model, valid_d, PruneConfig(bias_spec=spec, **opts))
    elif name == "gda":
        outcome = run_gda(model, valid_d, GdaConfig(bias_spec=spec, seed=seed, **opts))
    elif name == "random":
        outcome = random_perturb(model, valid_d,
                                 RandomPerturbConfig(seed=seed, **opts), spec)
    else:  # pragma: no cover
        raise ConfigError(f"unknown method: {name!r}")
    bias, ba = evaluate_hard(outcome.model, test_d, spec)
    if artifacts:
        outcome.write_trajectory(artifacts["trajectory"])
        if cfg.save_checkpoints:
            outcome.model.save(artifacts["checkpoint"])
    return (_method_row(name, seed_index, bias, ba, outcome.model.threshold,
                        outcome.feasible),
            MethodArtifacts(outcome=outcome, model=outcome.model))


def _artifact_paths(out_dir: Path | None, method: str, seed_index: int) -> dict | None:
    if out_dir is None:
        return None
    tdir = out_dir / "trajectories"
    cdir = out_dir / "checkpoints"
    rdir = out_dir / "rules"
    for d in (tdir, cdir, rdir):
        d.mkdir(parents=True, exist_ok=True)
    stem = f"{method}_seed{seed_index}"
    return {"trajectory": tdir / f"{stem}.jsonl",
            "checkpoint": cdir / f"{stem}.json",
            "rule": rdir / f"{stem}.json"}


def run_seed(cfg: ExperimentConfig, seed_index: int, out_dir: Path | None) -> list[dict]:
    """All result rows for one seed; a failure inside a method yields an error
    row for that method, a failure before training fails every row."""
    try:
        train_d, valid_d, test_d = prepare_seed_data(cfg, seed_index)
        model = train_standard(cfg, seed_index, train_d, valid_d)
    except Exception as exc:  # noqa: BLE001 - recorded, not swallowed
        msg = f"{type(exc).__name__}: {exc}"
        rows = [_error_row("standard", seed_index, msg)]
        rows += [_error_row(m.name, seed_index, msg)
                 for m in cfg.methods if m.name != "standard"]
        return rows
    if out_dir is not None and cfg.save_checkpoints:
        paths = _artifact_paths(out_dir, "standard", seed_index)
        model.save(paths["checkpoint"])
    rows = [apply_method(cfg, MethodConfig("standard"), 0, seed_index,
                         model, valid_d, test_d, out_dir)[0]]
    for position, method in enumerate(cfg.methods):
        if method.name == "standard":
            continue
        try:
            rows.append(apply_method(cfg, method, position, seed_index,
                                     model, valid_d, test_d, out_dir)[0])
        except Exception as exc:  # noqa: BLE001
            rows.append(_error_row(method.name, seed_index,
                                   f"{type(exc).__name__}: {exc}"))
    return rows


def _error_row(method: str, seed_index: int, message: str) -> dict:
    return {"method": method, "seed": seed_index, "bias": None, "ba": None,
            "threshold": None, "feasible": None, "error": message}


def _run_seed_worker(args) -> list[dict]:
    cfg, seed_index, out_dir = args
    return run_seed(cfg, seed_index, Path(out_dir) if out_dir else None)


def run_experiment(cfg: ExperimentConfig, write_outputs: bool = True) -> list[ResultRow]:
    """Execute every seed, write result files, and aggregate per method."""
    out_dir = Path(cfg.output_dir) if write_outputs else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    indices = cfg.indices
    if cfg.workers > 1 and len(indices) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            per_seed = list(pool.map(_run_seed_worker,
                                     [(cfg, i, str(out_dir) if out_dir else "") for i in indices]))
    else:
        per_seed = [run_seed(cfg, i, out_dir) for i in indices]
    records = [row for rows in per_seed for row in rows]
    records.sort(key=lambda r: (r["method"], r["seed"]))
    result_rows = aggregate(records)
    if out_dir is not None:
        write_results_csv(records, out_dir / "results.csv")
        write_summary_csv(result_rows, out_dir / "results_summary.csv")
    return result_rows


def aggregate(records: list[dict]) -> list[ResultRow]:
    """Mean and sample standard deviation per method over successful seeds."""
    by_method: dict[str, list[dict]] = {}
    for rec in records:
        by_method.setdefault(rec["method"], []).append(rec)
    rows = []
    for method in sorted(by_method):
        recs = by_method[method]
        ok = [r for r in recs if not r["error"]]
        failures = len(recs) - len(ok)
        if ok:
            biases = np.array([r["bias"] for r in ok])
            bas = np.array([r["ba"] for r in ok])
            bias_mean, ba_mean = float(biases.mean()), float(bas.mean())
            bias_sd = float(biases.std(ddof=1)) if len(ok) > 1 else 0.0
            ba_sd = float(bas.std(ddof=1)) if len(ok) > 1 else 0.0
        else:
            bias_mean = bias_sd = ba_mean = ba_sd = float("nan")
        rows.append(ResultRow(method, bias_mean, bias_sd, ba_mean, ba_sd, recs, failures))
    return rows


def total_failures(rows: list[ResultRow]) -> int:
    return sum(r.failures for r in rows)


# ------------------------------------------------------------------ file io


def _fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_results_csv(records: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for rec in records:
            writer.writerow([_fmt_cell(rec[c]) for c in RESULT_COLUMNS])


def read_results_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(RESULT_COLUMNS) - set(reader.fieldnames):
            raise ValueError(f"{path}: not a results file")
        records = []
        for rec in reader:
            records.append({
                "method": rec["method"],
                "seed": int(rec["seed"]),
                "bias": float(rec["bias"]) if rec["bias"] else None,
                "ba": float(rec["ba"]) if rec["ba"] else None,
                "threshold": float(rec["threshold"]) if rec["threshold"] else None,
                "feasible": rec["feasible"] == "true" if rec["feasible"] else None,
                "error": rec["error"],
            })
    return records


def write_summary_csv(rows: list[ResultRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "n_seeds", "bias_mean", "bias_sd",
                         "ba_mean", "ba_sd", "n_failed"])
        for row in rows:
            writer.writerow([row.method, len(row.records), repr(row.bias_mean),
                             repr(row.bias_sd), repr(row.ba_mean), repr(row.ba_sd),
                             row.failures])


# ------------------------------------------------------------------ sweeps


SWEEP_PARAMETERS = {"alpha": "loh", "theta": "zafar"}


def sweep(cfg: ExperimentConfig, parameter: str, values) -> dict[float, list[ResultRow]]:
    """Run the experiment once per parameter value and emit the grid summary."""
    values = list(values)
    if not values:
        raise ConfigError("empty sweep values")
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"unknown sweep parameter: {parameter!r}")
    if cfg.data_source.kind != SWEEP_PARAMETERS[parameter]:
        raise ConfigError(
            f"sweep over {parameter!r} needs the {SWEEP_PARAMETERS[parameter]!r} data source")
    base_out = Path(cfg.output_dir)
    grid: dict[float, list[ResultRow]] = {}
    for value in values:
        sub = replace(cfg,
                      data_source=replace(cfg.data_source, **{parameter: value}),
                      output_dir=str(base_out / f"{parameter}_{value:g}"))
        grid[value] = run_experiment(sub)
    base_out.mkdir(parents=True, exist_ok=True)
    with open(base_out / "sweep_summary.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([parameter, "method", "bias_mean", "bias_sd", "ba_mean", "ba_sd"])
        for value in values:
            for row in grid[value]:
                writer.writerow([repr(float(value)), row.method, repr(row.bias_mean),
                                 repr(row.bias_sd), repr(row.ba_mean), repr(row.ba_sd)])
    return grid
