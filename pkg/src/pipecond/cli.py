"""Command-line interface.

Every subcommand exits 0 on success. On failure it prints a JSON error
document (``{"status": "error", "kind": ..., "message": ...}``) and exits 1.
Set ``PIPECOND_LOG`` (e.g. ``DEBUG``) to change the log level.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import evaluate
from .dataset import CleaningConfig, clean, load_table, write_drop_log
from .errors import ConfigError, PipecondError
from .models import load_checkpoint, mlr_recipe, ann_recipe
from .numeric import RandomSource
from .pipeline import (
    AnnSection,
    MlrSection,
    RunConfig,
    dump_json,
    dumps,
    emit_report,
    load_json,
    run_pipeline,
)
from .synth import GeneratorConfig, generate

log = logging.getLogger("pipecond")


def _error_doc(exc):
    if isinstance(exc, PipecondError):
        kind = exc.kind
    elif isinstance(exc, OSError):
        kind = "io"
    elif isinstance(exc, (ValueError, KeyError, TypeError)):
        kind = "config"
    else:
        kind = "internal"
    doc = {"status": "error", "kind": kind, "type": type(exc).__name__, "message": str(exc)}
    fold = getattr(exc, "fold", None)
    if fold is not None:
        doc["fold"] = fold
    return doc


def _base_config(args):
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = RunConfig.from_dict(load_json(args.config))
    updates = {}
    if getattr(args, "input", None):
        updates["input"] = args.input
    if getattr(args, "out", None):
        updates["output"] = args.out
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    return replace(cfg, **updates)


def cmd_generate(args):
    cfg = GeneratorConfig(n=args.n, seed=args.seed)
    if args.noise_sigma is not None:
        cfg = replace(cfg, noise_sigma=args.noise_sigma)
    if args.clamp is not None:
        cfg = replace(cfg, clamp_target=tuple(args.clamp))
    table = generate(cfg)
    table.to_csv(args.out)
    sys.stdout.write(dumps(cfg.provenance()))


def cmd_clean(args):
    cfg = _base_config(args)
    cleaning = cfg.cleaning
    if args.whisker is not None:
        cleaning = replace(cleaning, whisker=args.whisker)
    if args.quantile is not None:
        cleaning = replace(cleaning, quantile=args.quantile)
    if args.no_iqr:
        cleaning = replace(cleaning, iqr=False)
    if args.no_mahalanobis:
        cleaning = replace(cleaning, mahalanobis=False)
    raw = load_table(cfg.input, cfg.table_schema())
    t = clean(raw, cleaning)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    t.to_csv(out / "cleaned.csv")
    write_drop_log(t, out / "drop_log.csv")
    sys.stdout.write(dumps({"input_rows": raw.n_rows, "kept_rows": t.n_rows,
                            "dropped": len(t.provenance.drops)}))


def _mlr_section(args, cfg):
    sec = cfg.mlr or MlrSection()
    if args.confidence is not None:
        sec = replace(sec, confidence=args.confidence)
    if args.ridge is not None:
        sec = replace(sec, ridge_lambda=args.ridge)
    if args.lasso is not None:
        sec = replace(sec, lasso_lambda=args.lasso)
    return sec


def _ann_section(args, cfg):
    sec = cfg.ann or AnnSection()
    for name in ("epochs", "batch_size", "learning_rate", "optimizer", "dropout_rate"):
        value = getattr(args, name, None)
        if value is not None:
            sec = replace(sec, **{name: value})
    if getattr(args, "hidden", None):
        sec = replace(sec, hidden=tuple(args.hidden))
    if getattr(args, "sigmoid", False):
        sec = replace(sec, output_activation="sigmoid")
    if getattr(args, "patience", None) is not None:
        sec = replace(sec, early_stopping={"patience": args.patience,
                                           "min_delta": args.min_delta or 0.0})
    return sec


def _finish_run(cfg):
    out = run_pipeline(cfg)
    sys.stdout.write(dumps({"status": "ok", "output": str(out),
                            "metrics": load_json(out / "metrics.json")}))


def cmd_fit_mlr(args):
    cfg = _base_config(args)
    _finish_run(replace(cfg, mlr=_mlr_section(args, cfg), ann=None))


def cmd_train_ann(args):
    cfg = _base_config(args)
    _finish_run(replace(cfg, ann=_ann_section(args, cfg), mlr=None))


def cmd_run(args):
    _finish_run(_base_config(args))


def _load_model(args):
    return load_checkpoint(load_json(args.model))


def cmd_evaluate(args):
    model = _load_model(args)
    t = clean(load_table(args.input), CleaningConfig(iqr=False, mahalanobis=False))
    y, yhat = model.target(t), model.predict_table(t)
    report = evaluate.compute_metrics(y, yhat)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        dump_json(report.to_dict(), out / "metrics.json")
        evaluate.error_histogram(y, yhat, args.bins).to_csv(out / "fig1_error_histogram.csv")
        evaluate.write_scatter(out / "fig3_scatter.csv", y, yhat)
    sys.stdout.write(dumps(report.to_dict()))


def cmd_cross_validate(args):
    cfg = _base_config(args)
    t = clean(load_table(cfg.input, cfg.table_schema()), cfg.cleaning)
    if args.model == "ann" or (args.model is None and cfg.ann is not None):
        a = _ann_section(args, cfg)
        recipe = ann_recipe(a.hidden, a.train_config(cfg.seed), a.output_activation)
    else:
        m = cfg.mlr or MlrSection()
        recipe = mlr_recipe(m.confidence, m.ridge_lambda, m.lasso_lambda)
    from .dataset import k_fold_plan

    plan = k_fold_plan(t.n_rows, args.k, cfg.seed)
    result = evaluate.cross_validate(recipe, t, plan, cfg.seed)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        dump_json(result.to_dict(), Path(args.out) / "cross_validation.json")
    sys.stdout.write(dumps(result.to_dict()))


def cmd_importance(args):
    model = _load_model(args)
    t = clean(load_table(args.input), CleaningConfig(iqr=False, mahalanobis=False))
    d = model.design(t)
    groups = {f: d.groups[f] for f in model.features}
    rep = evaluate.permutation_importance(model.predict_design, d.X, d.y,
                                          RandomSource(args.seed), args.repeats, groups)
    if args.out:
        rep.to_csv(args.out)
    sys.stdout.write(dumps({"baseline_rmse": rep.baseline, "repeats": rep.repeats,
                            "features": [{"name": f.name, "importance": f.score,
                                          "std": f.std, "rank": f.rank}
                                         for f in rep.ranked()]}))


def cmd_sensitivity(args):
    model = _load_model(args)
    t = clean(load_table(args.input), CleaningConfig(iqr=False, mahalanobis=False))
    curve = evaluate.sensitivity_analysis(model, t, args.feature, args.grid_size)
    if args.out:
        curve.to_csv(args.out)
    sys.stdout.write(dumps({"feature": curve.feature, "grid": curve.grid,
                            "outputs": curve.outputs, "held_at": curve.held_at}))


def cmd_report(args):
    path = emit_report(args.run)
    sys.stdout.write(path.read_text(encoding="utf-8"))


def build_parser():
    p = argparse.ArgumentParser(prog="pipecond", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model_flags=False):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--input", help="input CSV")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)

    g = sub.add_parser("generate", help="write a synthetic inventory CSV")
    g.add_argument("--n", type=int, default=612)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--out", required=True, help="output CSV path")
    g.add_argument("--noise-sigma", type=float)
    g.add_argument("--clamp", type=float, nargs=2, metavar=("LO", "HI"))
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("clean", help="drop incomplete rows and outliers")
    common(c)
    c.add_argument("--whisker", type=float)
    c.add_argument("--quantile", type=float)
    c.add_argument("--no-iqr", action="store_true")
    c.add_argument("--no-mahalanobis", action="store_true")
    c.set_defaults(func=cmd_clean)

    def mlr_flags(sp):
        sp.add_argument("--confidence", type=float)
        sp.add_argument("--ridge", type=float, help="ridge penalty lambda")
        sp.add_argument("--lasso", type=float, help="lasso penalty lambda")

    def ann_flags(sp):
        sp.add_argument("--hidden", type=int, nargs="+")
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--batch-size", type=int)
        sp.add_argument("--learning-rate", type=float)
        sp.add_argument("--optimizer", choices=["adam", "sgd_momentum"])
        sp.add_argument("--dropout-rate", type=float)
        sp.add_argument("--patience", type=int, help="enable early stopping")
        sp.add_argument("--min-delta", type=float)
        sp.add_argument("--sigmoid", action="store_true", help="sigmoid output head")

    f = sub.add_parser("fit-mlr", help="full run with the regression model")
    common(f)
    mlr_flags(f)
    f.set_defaults(func=cmd_fit_mlr)

    a = sub.add_parser("train-ann", help="full run with the neural network")
    common(a)
    ann_flags(a)
    a.set_defaults(func=cmd_train_ann)

    r = sub.add_parser("run", help="full run as described by --config")
    common(r)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("evaluate", help="score a saved model on a CSV")
    e.add_argument("--model", required=True, help="model.json from a run")
    e.add_argument("--input", required=True)
    e.add_argument("--out")
    e.add_argument("--bins", type=int, default=20)
    e.set_defaults(func=cmd_evaluate)

    cv = sub.add_parser("cross-validate", help="k-fold cross-validation")
    common(cv)
    cv.add_argument("--k", type=int, default=5)
    cv.add_argument("--model", choices=["mlr", "ann"])
    ann_flags(cv)
    cv.set_defaults(func=cmd_cross_validate)

    im = sub.add_parser("importance", help="permutation importance of a saved model")
    im.add_argument("--model", required=True)
    im.add_argument("--input", required=True)
    im.add_argument("--repeats", type=int, default=10)
    im.add_argument("--seed", type=int, default=42)
    im.add_argument("--out", help="output CSV")
    im.set_defaults(func=cmd_importance)

    se = sub.add_parser("sensitivity", help="one-feature sweep of a saved model")
    se.add_argument("--model", required=True)
    se.add_argument("--input", required=True, help="training CSV defining the ranges")
    se.add_argument("--feature", required=True)
    se.add_argument("--grid-size", type=int, default=25)
    se.add_argument("--out", help="output CSV")
    se.set_defaults(func=cmd_sensitivity)

    rp = sub.add_parser("report", help="render report.txt for a run directory")
    rp.add_argument("--run", required=True)
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    logging.basicConfig(level=os.environ.get("PIPECOND_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error document
        doc = _error_doc(exc)
        log.debug("command failed", exc_info=True)
        out = getattr(args, "out", None)
        if out and args.command in ("run", "fit-mlr", "train-ann", "clean"):
            try:
                Path(out).mkdir(parents=True, exist_ok=True)
                dump_json(doc, Path(out) / "error.json")
            except OSError:
                pass
        sys.stdout.write(dumps(doc))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
