"""End-to-end run: clean -> split -> fit -> evaluate -> artifacts + report.

A run directory is self-describing: ``config.json`` echoes every resolved
setting, ``manifest.json`` lists the artifacts, and ``report.txt`` renders
the regression / ANOVA / coefficient / performance tables.
"""

from __future__ import annotations

import hashlib
import json
import math
import shutil
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import ann, evaluate
from .dataset import (
    DEFAULT_SCHEMA,
    CleaningConfig,
    ColumnSchema,
    clean,
    k_fold_plan,
    load_table,
    train_test_split,
    write_drop_log,
)
from .errors import ConfigError, IncompleteRun
from .models import ann_recipe, fit_ann, fit_mlr, mlr_recipe
from .numeric import RandomSource, derive_seed

# --------------------------------------------------------------------------
# JSON with shortest round-trip floats and no bare NaN/Infinity tokens


def _sanitize(obj):
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj):
    return json.dumps(_sanitize(obj), indent=2, allow_nan=False) + "\n"


def dump_json(obj, path):
    Path(path).write_text(dumps(obj), encoding="utf-8")


def load_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# configuration


@dataclass
class MlrSection:
    confidence: float = 0.95
    ridge_lambda: float | None = None
    lasso_lambda: float | None = None


@dataclass
class AnnSection:
    hidden: tuple = (64, 32)
    output_activation: str = ann.LINEAR
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    dropout_rate: float = 0.0
    early_stopping: dict | None = None  # {"patience": int, "min_delta": float}
    validation_fraction: float = 0.2

    def train_config(self, seed):
        es = ann.EarlyStopping(**self.early_stopping) if self.early_stopping else None
        return ann.TrainConfig(self.epochs, self.batch_size, self.learning_rate, self.optimizer,
                               self.beta1, self.beta2, self.eps, self.momentum,
                               self.dropout_rate, es, self.validation_fraction, seed)


@dataclass
class EvaluationSection:
    histogram_bins: int = 20
    importance_repeats: int = 10
    cv_folds: int | None = None
    sensitivity_features: tuple = ()
    sensitivity_grid_size: int = 25


@dataclass
class RunConfig:
    input: str = ""
    output: str = "run"
    seed: int = 42
    schema: list | None = None
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    train_fraction: float = 0.8
    mlr: MlrSection | None = None
    ann: AnnSection | None = None
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)

    @property
    def model_kind(self):
        return "mlr" if self.mlr is not None else "ann"

    def validate(self):
        if (self.mlr is None) == (self.ann is None):
            raise ConfigError("exactly one of the 'mlr' and 'ann' sections is required")
        if not self.input:
            raise ConfigError("no input file configured")

    def table_schema(self):
        if self.schema is None:
            return DEFAULT_SCHEMA
        return tuple(ColumnSchema(**c) for c in self.schema)

    def to_dict(self):
        d = asdict(self)
        d["cleaning"]["columns"] = (list(self.cleaning.columns)
                                    if self.cleaning.columns is not None else None)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "cleaning" in d:
                c = dict(d["cleaning"])
                if c.get("columns") is not None:
                    c["columns"] = tuple(c["columns"])
                d["cleaning"] = CleaningConfig(**c)
            if d.get("mlr") is not None:
                d["mlr"] = MlrSection(**d["mlr"])
            if d.get("ann") is not None:
                a = dict(d["ann"])
                if "hidden" in a:
                    a["hidden"] = tuple(a["hidden"])
                d["ann"] = AnnSection(**a)
            if "evaluation" in d:
                e = dict(d["evaluation"])
                if "sensitivity_features" in e:
                    e["sensitivity_features"] = tuple(e["sensitivity_features"])
                d["evaluation"] = EvaluationSection(**e)
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# run


MANIFEST = "manifest.json"


def _importance(model, table, seed, repeats):
    d = model.design(table)
    groups = {f: d.groups[f] for f in model.features}
    return evaluate.permutation_importance(model.predict_design, d.X, d.y,
                                           RandomSource(seed), repeats, groups)


def _write_artifacts(cfg, stage):
    """Run every stage, writing into ``stage``; returns the artifact list."""
    written = []

    def out(name):
        written.append(name)
        return stage / name

    # the destination is not part of the experiment, so runs stay relocatable
    dump_json({k: v for k, v in cfg.to_dict().items() if k != "output"}, out("config.json"))
    raw = load_table(cfg.input, cfg.table_schema())
    cleaned = clean(raw, cfg.cleaning)
    cleaned.to_csv(out("cleaned.csv"))
    write_drop_log(cleaned, out("drop_log.csv"))

    split = train_test_split(cleaned, cfg.train_fraction, cfg.seed)
    train, test = cleaned.take(np.sort(split.train)), cleaned.take(np.sort(split.test))

    if cfg.mlr is not None:
        m = cfg.mlr
        model = fit_mlr(train, m.confidence, m.ridge_lambda, m.lasso_lambda)
        model.ols.write_csv_tables(stage)
        written += ["regression_statistics.csv", "anova.csv", "coefficients.csv"]
        recipe = mlr_recipe(m.confidence, m.ridge_lambda, m.lasso_lambda)
    else:
        a = cfg.ann
        tc = a.train_config(cfg.seed)
        model = fit_ann(train, a.hidden, tc, a.output_activation)
        model.history.to_csv(out("fig2_loss_curves.csv"))
        dump_json({"stopped_epoch": model.history.stopped_epoch,
                   "best_epoch": model.history.best_epoch}, out("training.json"))
        recipe = ann_recipe(a.hidden, tc, a.output_activation)
    dump_json(model.to_dict(), out("model.json"))

    y_tr, yhat_tr = model.target(train), model.predict_table(train)
    y_te, yhat_te = model.target(test), model.predict_table(test)
    metrics = {
        "model": cfg.model_kind,
        "train": evaluate.compute_metrics(y_tr, yhat_tr).to_dict(),
        "test": evaluate.compute_metrics(y_te, yhat_te).to_dict(),
        "rows": {"input": raw.n_rows, "cleaned": cleaned.n_rows,
                 "train": train.n_rows, "test": test.n_rows},
    }
    dump_json(metrics, out("metrics.json"))

    ev = cfg.evaluation
    evaluate.error_histogram(y_te, yhat_te, ev.histogram_bins).to_csv(out("fig1_error_histogram.csv"))
    evaluate.write_scatter(out("fig3_scatter.csv"), y_te, yhat_te)
    _importance(model, test, derive_seed(cfg.seed, 1), ev.importance_repeats).to_csv(
        out("fig4_importance.csv"))
    for feat in ev.sensitivity_features:
        curve = evaluate.sensitivity_analysis(model, train, feat, ev.sensitivity_grid_size)
        curve.to_csv(out(f"sensitivity_{feat}.csv"))
    if ev.cv_folds:
        plan = k_fold_plan(cleaned.n_rows, ev.cv_folds, cfg.seed)
        cv = evaluate.cross_validate(recipe, cleaned, plan, cfg.seed)
        dump_json(cv.to_dict(), out("cross_validation.json"))

    dump_json({"model": cfg.model_kind, "artifacts": sorted(written + ["report.txt"])},
              stage / MANIFEST)
    emit_report(stage)
    return written + ["report.txt", MANIFEST]


def run_pipeline(cfg):
    """Execute ``cfg`` and publish artifacts to ``cfg.output``; returns the directory.

    Everything is written to a staging directory first, so a failed run
    leaves no partial artifacts behind.
    """
    cfg.validate()
    dest = Path(cfg.output)
    dest.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".pipecond-", dir=dest.parent))
    try:
        names = _write_artifacts(cfg, stage)
        dest.mkdir(exist_ok=True)
        # retire the previous run's artifacts; unrelated files are left alone
        stale = ["error.json"]
        if (dest / MANIFEST).exists():
            stale += load_json(dest / MANIFEST).get("artifacts", []) + [MANIFEST]
        for name in stale:
            (dest / name).unlink(missing_ok=True)
        for name in names:
            shutil.move(str(stage / name), str(dest / name))
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return dest


# --------------------------------------------------------------------------
# report


def config_hash(run_dir):
    return hashlib.sha256((Path(run_dir) / "config.json").read_bytes()).hexdigest()


def _table(rows, header=None):
    cells = ([header] if header else []) + rows
    widths = [max(len(str(r[i])) for r in cells) for i in range(len(cells[0]))]
    lines = []
    for k, r in enumerate(cells):
        lines.append("  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip())
        if header and k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _num(v):
    return "" if v is None else (v if isinstance(v, str) else repr(v))


def _p(value, mantissa, exponent):
    if value in (None, 0.0) and mantissa is not None:
        return f"{mantissa!r}e{exponent:+04d}"
    return _num(value)


def emit_report(run_dir):
    run_dir = Path(run_dir)
    manifest_path = run_dir / MANIFEST
    if not manifest_path.exists():
        raise IncompleteRun([MANIFEST])
    manifest = load_json(manifest_path)
    required = ["config.json", "metrics.json", "model.json"]
    missing = [a for a in required if not (run_dir / a).exists()]
    if missing:
        raise IncompleteRun(missing)

    cfg = load_json(run_dir / "config.json")
    metrics = load_json(run_dir / "metrics.json")
    model = load_json(run_dir / "model.json")
    parts = [f"Pipe condition model report ({manifest['model']})", ""]

    if model["kind"] == "mlr" and model.get("ols"):
        ols = model["ols"]
        rs = ols["regression_statistics"]
        parts += ["Regression Statistics", _table([
            ["Multiple R", _num(rs["multiple_r"])],
            ["R Square", _num(rs["r_square"])],
            ["Adjusted R Square", _num(rs["adjusted_r_square"])],
            ["Standard Error", _num(rs["standard_error"])],
            ["Observations", rs["observations"]],
        ]), ""]
        a = ols["anova"]
        reg = a["regression"]
        parts += ["ANOVA", _table([
            ["Regression", reg["df"], _num(reg["ss"]), _num(reg["ms"]), _num(reg["f"]),
             _p(reg["significance_f"], reg["significance_f_mantissa"],
                reg["significance_f_exponent"])],
            ["Residual", a["residual"]["df"], _num(a["residual"]["ss"]),
             _num(a["residual"]["ms"]), "", ""],
            ["Total", a["total"]["df"], _num(a["total"]["ss"]), "", "", ""],
        ], ["", "df", "SS", "MS", "F", "Significance F"]), ""]
        level = f"{100 * ols['confidence']:g}%"
        rows = []
        for c in ols["coefficients"]:
            rows.append([c["name"], _num(c["coefficient"]), _num(c["standard_error"]),
                         _num(c["t_stat"]),
                         _p(c["p_value"], c["p_value_mantissa"], c["p_value_exponent"]),
                         _num(c[f"lower_{level}"]), _num(c[f"upper_{level}"])])
        parts += ["Coefficients", _table(rows, ["", "Coefficient", "SE", "t Stat", "P-value",
                                                f"Lower {level}", f"Upper {level}"]), ""]
        if model["estimator"] != "ols":
            parts += [f"Prediction coefficients ({model['estimator']}, "
                      f"lambda={model['lambda']!r})",
                      _table([[k, _num(v)] for k, v in model["coefficients"].items()]), ""]

    for split in ("train", "test"):
        m = metrics[split]
        parts += [f"Model's performance ({split}, n={m['n']})", _table([
            ["RMSE", _num(m["rmse"])],
            ["MAE", _num(m["mae"])],
            ["R^2 Score", _num(m["r_square"])],
            ["RAE", _num(m["rae"])],
            ["RRSE", _num(m["rrse"])],
            ["MAPE (%)", _num(m["mape"])],
            ["MAPE rows excluded", m["mape_excluded"]],
        ], ["Metric", "Value"]), ""]

    parts += ["Provenance", _table([
        ["seed", cfg["seed"]],
        ["config sha256", config_hash(run_dir)],
        ["algorithm_id", RandomSource.algorithm_id],
        ["rows (input/cleaned/train/test)",
         "/".join(str(metrics["rows"][k]) for k in ("input", "cleaned", "train", "test"))],
    ]), ""]
    path = run_dir / "report.txt"
    path.write_text("\n".join(parts), encoding="utf-8")
    return path
