"""``sdpm`` command line: preprocess, tune, train, evaluate, sweep, report.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ade import optimize, write_history_csv
from .anra import anra_pipeline, clean_and_normalize
from .config import REPORT_FORMATS, RunConfig, parse_config, parse_overrides
from .dataset import load_csv, write_csv
from .errors import ConfigError, DatasetError, NumericError
from .evaluation import evaluate_predictions, hyper_from_values, make_objective, read_report_csv, tp_sweep
from .model import load_checkpoint, predict_dataset, save_checkpoint, train

__all__ = ["main", "run", "build_parser"]

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2, which we reserve for data errors
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="run configuration file")
    common.add_argument("--data", metavar="PATH", help="input CSV (overrides [data] path)")
    common.add_argument("--seed", type=int, help="run seed (overrides [run] seed)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides [run] output_dir)")
    common.add_argument("--tp", type=int, action="append", metavar="N",
                        help="training percentage; repeat for several (sweep)")
    common.add_argument("--format", choices=REPORT_FORMATS, help="report format")
    common.add_argument("--model-out", metavar="PATH", help="checkpoint to write (train)")
    common.add_argument("--model-in", metavar="PATH", help="checkpoint to read (evaluate)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any config key, e.g. --set ade.pop_size=30")

    parser = _Parser(prog="sdpm", description="ADE-tuned QVAET software defect prediction")
    parser.add_argument("--version", action="version", version=f"sdpm {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    sub.add_parser("preprocess", parents=[common], help="clean, normalize and balance a dataset")
    sub.add_parser("tune", parents=[common], help="ADE hyperparameter search")
    tr = sub.add_parser("train", parents=[common], help="train QVAET and write a checkpoint")
    tr.add_argument("--tuned", metavar="PATH", help="tuned.json from `sdpm tune` to take hyperparameters from")
    sub.add_parser("evaluate", parents=[common], help="score a checkpoint on a dataset")
    sub.add_parser("sweep", parents=[common], help="training-percentage sweep of ADE-QVAET and baselines")
    rep = sub.add_parser("report", parents=[common], help="render a stored sweep report")
    rep.add_argument("--from", dest="source", metavar="PATH", help="stored report CSV (default OUT/report.csv)")
    return parser


def _resolve(args) -> RunConfig:
    overrides = parse_overrides(args.set)
    run = overrides.setdefault("run", {})
    if args.seed is not None:
        run["seed"] = str(args.seed)
    if args.out is not None:
        run["output_dir"] = args.out
    if args.format is not None:
        run["report_format"] = args.format
    if args.tp:
        run["tps"] = ",".join(str(t) for t in args.tp)
    if args.data is not None:
        overrides.setdefault("data", {})["path"] = args.data
    return parse_config(args.config, overrides)


def _require_data(cfg: RunConfig):
    if cfg.data_path is None:
        raise ConfigError("no input data: pass --data or set [data] path")
    return load_csv(cfg.data_path, cfg.schema)


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(out)
    (out / "seed.txt").write_text(f"{cfg.seed}\n", encoding="utf-8")
    return out


def _metrics_dict(model, dataset):
    m = evaluate_predictions(predict_dataset(model, model.norm.transform(dataset.X)), dataset.y)
    return {**m.as_dict(), "n": dataset.n, "degenerate": list(m.degenerate)}


def cmd_preprocess(cfg, args, out):
    data = _require_data(cfg)
    pre = anra_pipeline(data, cfg.anra)
    write_csv(pre.data, out / "preprocessed.csv", with_origin=True)
    _write_json(out / "provenance.json", {
        "seed": cfg.seed,
        "input": cfg.data_path,
        **pre.provenance,
        "class_counts": {str(k): v for k, v in pre.data.class_counts().items()},
        "norm_mean": pre.norm.mean.tolist(),
        "norm_std": pre.norm.std.tolist(),
        "clip_bounds": pre.clip_bounds.tolist(),
    })
    print(f"preprocessed {data.n} -> {pre.data.n} records: {pre.provenance}")


def cmd_tune(cfg, args, out):
    data = _require_data(cfg)
    clean = clean_and_normalize(data, cfg.anra)
    objective = make_objective(clean, cfg.space, cfg.hyper, cfg.seed, cfg.anra, cfg.fitness_metric)
    result = optimize(objective, cfg.space, cfg.ade)
    write_history_csv(result.history, out / "ade_history.csv")
    _write_json(out / "tuned.json", {
        "seed": cfg.seed,
        "best_fitness": result.best_fitness,
        "fitness_metric": cfg.fitness_metric,
        "hyperparameters": result.best_decoded,
        "evaluations": result.evaluations,
    })
    print(f"best {cfg.fitness_metric} {result.best_fitness:.4f} with {result.best_decoded}")


def cmd_train(cfg, args, out):
    data = _require_data(cfg)
    hyper = cfg.hyper
    if args.tuned:
        path = Path(args.tuned)
        if not path.is_file():
            raise FileNotFoundError(f"tuned parameters not found: {path}")
        try:
            values = json.loads(path.read_text(encoding="utf-8"))["hyperparameters"]
            hyper = hyper_from_values(hyper, values)
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: not a tuned.json file ({exc})") from None
    pre = anra_pipeline(data, cfg.anra)
    model = train(pre, hyper, cfg.seed)
    model_path = Path(args.model_out) if args.model_out else out / "model.ckpt"
    model_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, model_path)
    record = {"seed": cfg.seed, "data": cfg.data_path, "checkpoint": str(model_path),
              "hyperparameters": hyper.to_dict(), "final_loss": model.loss_history[-1] if model.loss_history else None,
              "metrics": _metrics_dict(model, data)}
    _write_json(out / "train_metrics.json", record)
    print(f"wrote {model_path}; metrics on {data.n} input records: "
          f"f1 {record['metrics']['f1']:.4f}, accuracy {record['metrics']['accuracy']:.4f}")


def cmd_evaluate(cfg, args, out):
    if not args.model_in:
        raise ConfigError("evaluate needs --model-in PATH")
    model = load_checkpoint(args.model_in)
    data = _require_data(cfg)
    if data.schema.arity != model.arity:
        raise DatasetError(f"checkpoint expects {model.arity} features, data has {data.schema.arity}")
    record = {"seed": cfg.seed, "data": cfg.data_path, "checkpoint": str(args.model_in),
              "metrics": _metrics_dict(model, data)}
    _write_json(out / "metrics.json", record)
    print(json.dumps(record["metrics"]))


def cmd_sweep(cfg, args, out):
    data = _require_data(cfg)
    report = tp_sweep(data, cfg.tps, cfg.sweep_config(), cfg.seed)
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    if cfg.report_format != "csv":
        (out / f"report.{cfg.report_format}").write_text(report.render(cfg.report_format), encoding="utf-8")
    details = {str(tp): {k: v for k, v in info.items() if k not in ("train_rows", "test_rows")}
               for tp, info in report.details.items()}
    _write_json(out / "sweep_details.json", details)
    sys.stdout.write(report.to_markdown())


def cmd_report(cfg, args, out):
    source = Path(args.source) if args.source else Path(cfg.output_dir) / "report.csv"
    if not source.is_file():
        raise FileNotFoundError(f"stored report not found: {source}")
    report = read_report_csv(source)
    text = report.render(cfg.report_format)
    target = out / f"report.{cfg.report_format}"
    if target.resolve() != source.resolve():
        target.write_text(text, encoding="utf-8")
    sys.stdout.write(text)


COMMANDS = {
    "preprocess": cmd_preprocess,
    "tune": cmd_tune,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def run(argv=None) -> int:
    """Parse ``argv`` and run one subcommand; returns the exit code."""
    try:
        args = build_parser().parse_args(argv)
        cfg = _resolve(args)
        out = _out_dir(cfg)
        with np.errstate(over="ignore", invalid="ignore"):
            COMMANDS[args.command](cfg, args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
