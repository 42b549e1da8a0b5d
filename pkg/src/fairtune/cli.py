"""Command-line surface.

Every data-touching subcommand reads a single JSON experiment configuration;
individual keys can be overridden on the command line with repeated
``--set dotted.path=value`` flags (values are parsed as JSON, falling back to
plain strings). Exit codes: 0 on success, 1 on configuration or input errors,
2 when an experiment finished with partial per-seed failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import CsvFormatError, save_csv
from .experiment import (ConfigError, ExperimentConfig, MethodConfig, apply_method,
                         evaluate_hard, prepare_seed_data, run_experiment, sweep,
                         total_failures, train_standard)
from .network import MlpModel
from .outcome import DebiasOutcome
from .postprocess import save_rule
from .synth import LohConfig, ZafarConfig, gen_loh, gen_zafar

DEBIAS_METHODS = ("prune", "gda", "roc", "eqodds", "random")


def _apply_override(doc: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    dotted, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    target = doc
    *parents, leaf = dotted.split(".")
    for key in parents:
        target = target.setdefault(key, {})
        if not isinstance(target, dict):
            raise ConfigError(f"cannot override through non-object key {key!r}")
    target[leaf] = value


def load_config(path: str, overrides) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    for assignment in overrides or ():
        _apply_override(doc, assignment)
    return ExperimentConfig.from_dict(doc)


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="experiment config JSON")
    parser.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                        help="override a config key by dotted path (repeatable)")
    parser.add_argument("--seed-index", type=int, default=0,
                        help="which Monte Carlo replicate to run (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairtune",
                                     description="Train and debias tabular classifiers.")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic dataset as CSV")
    synth_sub = synth.add_subparsers(dest="generator", required=True)
    loh = synth_sub.add_parser("loh", help="logit-model generator")
    loh.add_argument("--n", type=int, required=True)
    loh.add_argument("--alpha", type=float, required=True)
    loh.add_argument("--seed", type=int, default=0)
    loh.add_argument("--out", required=True)
    zafar = synth_sub.add_parser("zafar", help="rotated-Gaussian generator")
    zafar.add_argument("--n", type=int, required=True)
    zafar.add_argument("--theta", type=float, required=True)
    zafar.add_argument("--embed-hidden", type=int, default=16)
    zafar.add_argument("--embed-out", type=int, default=20)
    zafar.add_argument("--seed", type=int, default=0)
    zafar.add_argument("--out", required=True)

    tr = sub.add_parser("train", help="train the classifier for one seed index")
    _add_config_args(tr)
    tr.add_argument("--out", required=True, help="model checkpoint path")

    db = sub.add_parser("debias", help="debias a trained model on validation data")
    db_sub = db.add_subparsers(dest="method", required=True)
    for name in DEBIAS_METHODS:
        mp = db_sub.add_parser(name)
        _add_config_args(mp)
        mp.add_argument("--model", required=True, help="trained model checkpoint")
        mp.add_argument("--out", help="debiased model checkpoint (prune/gda/random)")
        mp.add_argument("--rule", help="fitted rule JSON (roc/eqodds)")
        mp.add_argument("--trajectory", help="JSON-lines trajectory output")

    ev = sub.add_parser("eval", help="evaluate a model checkpoint on one split")
    _add_config_args(ev)
    ev.add_argument("--model", required=True)
    ev.add_argument("--split", choices=("train", "valid", "test"), default="test")

    ex = sub.add_parser("experiment", help="run the full multi-seed experiment")
    ex.add_argument("--config", required=True)
    ex.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE")

    sw = sub.add_parser("sweep", help="run the experiment across parameter values")
    sw.add_argument("--config", required=True)
    sw.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE")
    sw.add_argument("--parameter", choices=("alpha", "theta"), required=True)
    sw.add_argument("--values", required=True, help="comma-separated values")

    rp = sub.add_parser("report", help="format result tables and render figures")
    rp.add_argument("--results", nargs="+", required=True, help="results.csv paths")
    rp.add_argument("--out-dir", required=True)
    rp.add_argument("--no-figures", action="store_true")
    return parser


def _cmd_synth(args) -> int:
    if args.generator == "loh":
        data = gen_loh(LohConfig(args.n, args.alpha, args.seed))
    else:
        data = gen_zafar(ZafarConfig(args.n, args.theta, args.embed_hidden,
                                     args.embed_out, args.seed))
    save_csv(data, args.out)
    print(f"wrote {len(data)} rows to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config, args.overrides)
    train_d, valid_d, test_d = prepare_seed_data(cfg, args.seed_index)
    model = train_standard(cfg, args.seed_index, train_d, valid_d)
    model.save(args.out)
    bias, ba = evaluate_hard(model, test_d, cfg.bias_spec)
    print(f"saved model to {args.out} (threshold {model.threshold:.2f})")
    print(f"test {cfg.bias_spec.measure}={bias:+.4f} ba={ba:.4f}")
    return 0


def _method_config(cfg: ExperimentConfig, name: str) -> tuple[MethodConfig, int]:
    for position, method in enumerate(cfg.methods):
        if method.name == name:
            return method, position
    return MethodConfig(name), len(cfg.methods)


def _cmd_debias(args) -> int:
    cfg = load_config(args.config, args.overrides)
    model = MlpModel.load(args.model)
    _, valid_d, test_d = prepare_seed_data(cfg, args.seed_index)
    method, position = _method_config(cfg, args.method)
    row, artifacts = apply_method(cfg, method, position, args.seed_index,
                                  model, valid_d, test_d, None)
    if artifacts.rule is not None and args.rule:
        save_rule(artifacts.rule, args.rule)
        print(f"wrote rule to {args.rule}")
    outcome: DebiasOutcome | None = artifacts.outcome
    if outcome is not None:
        if args.out:
            outcome.model.save(args.out)
            print(f"wrote debiased model to {args.out}")
        if args.trajectory:
            outcome.write_trajectory(args.trajectory)
            print(f"wrote trajectory to {args.trajectory}")
        print(f"feasible={outcome.feasible} chosen_index={outcome.chosen_index}")
    print(f"test {cfg.bias_spec.measure}={row['bias']:+.4f} ba={row['ba']:.4f}")
    return 0


def _cmd_eval(args) -> int:
    cfg = load_config(args.config, args.overrides)
    model = MlpModel.load(args.model)
    splits = dict(zip(("train", "valid", "test"), prepare_seed_data(cfg, args.seed_index)))
    bias, ba = evaluate_hard(model, splits[args.split], cfg.bias_spec)
    print(f"{args.split} {cfg.bias_spec.measure}={bias:+.4f} ba={ba:.4f} "
          f"threshold={model.threshold:.2f}")
    return 0


def _cmd_experiment(args) -> int:
    cfg = load_config(args.config, args.overrides)
    rows = run_experiment(cfg)
    from .report import render_table
    print(render_table(rows), end="")
    print(f"results written to {cfg.output_dir}")
    return 2 if total_failures(rows) else 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.overrides)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    grid = sweep(cfg, args.parameter, values)
    from .figures import sweep_figure
    sweep_figure(grid, args.parameter, Path(cfg.output_dir) / "sweep.png")
    failures = sum(total_failures(rows) for rows in grid.values())
    for value in values:
        print(f"--- {args.parameter} = {value:g} ---")
        from .report import render_table
        print(render_table(grid[value]), end="")
    print(f"sweep outputs written to {cfg.output_dir}")
    return 2 if failures else 0


def _cmd_report(args) -> int:
    from .report import write_report
    text = write_report(args.results, args.out_dir, figures=not args.no_figures)
    print(text, end="")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"synth": _cmd_synth, "train": _cmd_train, "debias": _cmd_debias,
                "eval": _cmd_eval, "experiment": _cmd_experiment,
                "sweep": _cmd_sweep, "report": _cmd_report}
    try:
        return handlers[args.command](args)
    except (ConfigError, CsvFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
