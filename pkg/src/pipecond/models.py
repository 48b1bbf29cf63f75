"""Table-level model wrappers: a design-matrix recipe plus a fitted estimator.

Both wrappers expose ``features``, ``target(table)``, ``design(table)``,
``predict_design(X)`` and ``predict_table(table)``, which is what the
cross-validation, importance and sensitivity routines rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import ann, mlr
from .numeric import RandomSource
from .preprocess import (
    ANN_ONEHOT,
    MLR_NUMERIC,
    DesignMatrixSpec,
    EncoderMap,
    ScalerParams,
    assemble_design,
    fit_standardizer,
)


def _standardized_penalized_fit(X, y, fitter):
    # Penalised fits run on z-scored predictors; coefficients are mapped back
    # to raw units with the intercept absorbing the centring.
    scaler = fit_standardizer(X[:, 1:], [f"x{j}" for j in range(1, X.shape[1])])
    Z = np.column_stack([np.ones(X.shape[0]), scaler.transform(X[:, 1:])])
    res = fitter(Z, y)
    slopes = res.coefficients[1:] / scaler.std
    intercept = res.coefficients[0] - float(slopes @ scaler.mean)
    return res, np.concatenate([[intercept], slopes])


@dataclass(eq=False)
class FittedMlr:
    design_spec: DesignMatrixSpec
    coefficients: np.ndarray
    feature_names: tuple
    ols: mlr.OlsFit | None = None  # None for a model restored from a checkpoint
    estimator: str = "ols"
    lam: float = 0.0

    @property
    def features(self):
        return self.design_spec.features

    def target(self, table):
        return np.asarray(table.numeric(self.design_spec.target), dtype=float)

    def design(self, table):
        return assemble_design(table, self.design_spec)

    def predict_design(self, X):
        return mlr.predict_linear(self.coefficients, X)

    def predict_table(self, table):
        return self.predict_design(self.design(table).X)

    def to_dict(self):
        return {
            "kind": "mlr",
            "design": self.design_spec.to_dict(),
            "estimator": self.estimator,
            "lambda": self.lam,
            "coefficients": dict(zip(self.feature_names, map(float, self.coefficients))),
            "ols": self.ols.to_dict() if self.ols is not None else None,
        }

    @classmethod
    def from_checkpoint(cls, d):
        coef = d["coefficients"]
        return cls(DesignMatrixSpec.from_dict(d["design"]),
                   np.array(list(coef.values()), dtype=float), tuple(coef),
                   None, d["estimator"], d["lambda"])


def fit_mlr(table, confidence=0.95, ridge_lambda=None, lasso_lambda=None,
            design_spec=DesignMatrixSpec(MLR_NUMERIC)):
    d = assemble_design(table, design_spec)
    ols = mlr.fit_ols(d.X, d.y, confidence, d.feature_names)
    if ridge_lambda is not None and lasso_lambda is not None:
        raise ValueError("choose at most one of ridge_lambda and lasso_lambda")
    if ridge_lambda is not None:
        _, coef = _standardized_penalized_fit(d.X, d.y,
                                              lambda Z, y: mlr.fit_ridge(Z, y, ridge_lambda))
        return FittedMlr(design_spec, coef, ols.names, ols, "ridge", float(ridge_lambda))
    if lasso_lambda is not None:
        _, coef = _standardized_penalized_fit(d.X, d.y,
                                              lambda Z, y: mlr.fit_lasso(Z, y, lasso_lambda))
        return FittedMlr(design_spec, coef, ols.names, ols, "lasso", float(lasso_lambda))
    return FittedMlr(design_spec, ols.coefficients.copy(), ols.names, ols)


def mlr_recipe(confidence=0.95, ridge_lambda=None, lasso_lambda=None):
    def recipe(train, seed=None):
        return fit_mlr(train, confidence, ridge_lambda, lasso_lambda)
    return recipe


@dataclass(eq=False)
class FittedAnn:
    design_spec: DesignMatrixSpec
    scaler: ScalerParams | None
    encoder: EncoderMap | None
    model: ann.MlpModel
    config: ann.TrainConfig
    feature_names: tuple = ()

    @property
    def features(self):
        return self.design_spec.features

    @property
    def history(self):
        return self.model.history

    def target(self, table):
        return np.asarray(table.numeric(self.design_spec.target), dtype=float)

    def design(self, table):
        return assemble_design(table, self.design_spec, self.scaler, self.encoder)

    def predict_design(self, X):
        return self.model.predict(X)

    def predict_table(self, table):
        return self.predict_design(self.design(table).X)

    def to_dict(self):
        return {
            "kind": "ann",
            "design": self.design_spec.to_dict(),
            "preprocess": {
                "scaler": self.scaler.to_dict() if self.scaler else None,
                "encoder": self.encoder.to_dict() if self.encoder else None,
            },
            "feature_names": list(self.feature_names),
            "train_config": self.config.to_dict(),
            "seed": self.config.seed,
            "algorithm_id": RandomSource.algorithm_id,
            "network": self.model.to_dict(),
        }

    @classmethod
    def from_checkpoint(cls, d):
        pre = d["preprocess"]
        scaler = ScalerParams.from_dict(pre["scaler"]) if pre["scaler"] else None
        encoder = EncoderMap.from_dict(pre["encoder"]) if pre["encoder"] else None
        return cls(DesignMatrixSpec.from_dict(d["design"]), scaler, encoder,
                   ann.MlpModel.from_dict(d["network"]),
                   ann.TrainConfig.from_dict(d["train_config"]), tuple(d["feature_names"]))


def fit_ann(table, hidden=(64, 32), config=ann.TrainConfig(), output_activation=ann.LINEAR,
            design_spec=DesignMatrixSpec(ANN_ONEHOT)):
    d = assemble_design(table, design_spec)
    spec = ann.MlpSpec.build(d.X.shape[1], hidden, output_activation)
    model = ann.fit_mlp(spec, config, d.X, d.y)
    return FittedAnn(design_spec, d.scaler, d.encoder, model, config, d.feature_names)


def ann_recipe(hidden=(64, 32), config=ann.TrainConfig(), output_activation=ann.LINEAR):
    def recipe(train, seed=None):
        cfg = config if seed is None else replace(config, seed=seed)
        return fit_ann(train, hidden, cfg, output_activation)
    return recipe


def load_checkpoint(d):
    if d["kind"] == "mlr":
        return FittedMlr.from_checkpoint(d)
    if d["kind"] == "ann":
        return FittedAnn.from_checkpoint(d)
    raise ValueError(f"unknown model kind {d['kind']!r}")
