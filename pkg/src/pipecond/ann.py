"""Multilayer perceptron regressor written directly against numpy.

Forward pass per layer is ``a = f(W a_prev + b)`` with ReLU hidden units and a
linear (or sigmoid) single output. Training minimises batch-mean squared
error with Adam or momentum SGD; plain gradient descent is momentum SGD with
``momentum=0``.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch, NonFiniteLoss, PipecondError, StaleCache
from .numeric import RandomSource

log = logging.getLogger(__name__)

LINEAR = "linear"
SIGMOID = "sigmoid"


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple
    hidden_activation: str = "relu"
    output_activation: str = LINEAR

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ValueError("need an input layer, at least one hidden layer and an output")
        if sizes[-1] != 1:
            raise ValueError("output layer must have a single unit")
        if min(sizes) < 1:
            raise ValueError("layer sizes must be positive")
        if self.hidden_activation != "relu":
            raise ValueError("only relu hidden units are supported")
        if self.output_activation not in (LINEAR, SIGMOID):
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @classmethod
    def build(cls, input_dim, hidden=(64, 32), output_activation=LINEAR):
        return cls((input_dim, *hidden, 1), "relu", output_activation)

    @property
    def n_params(self):
        s = self.layer_sizes
        return sum(s[i + 1] * s[i] + s[i + 1] for i in range(len(s) - 1))

    def to_dict(self):
        return {"layer_sizes": list(self.layer_sizes), "hidden_activation": self.hidden_activation,
                "output_activation": self.output_activation}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["layer_sizes"]), d["hidden_activation"], d["output_activation"])


@dataclass(eq=False)
class MlpParams:
    weights: list  # (out, in) per layer
    biases: list  # (out,) per layer

    def copy(self):
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def digest(self):
        h = hashlib.blake2b(digest_size=16)
        for a in self.arrays():
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def arrays(self):
        return self.weights + self.biases

    def to_dict(self):
        return {"weights": [w.tolist() for w in self.weights],
                "biases": [b.tolist() for b in self.biases]}

    @classmethod
    def from_dict(cls, d):
        return cls([np.array(w, dtype=float) for w in d["weights"]],
                   [np.array(b, dtype=float) for b in d["biases"]])


def init_params(spec, r):
    """He-normal weights (std sqrt(2 / fan_in)), zero biases.

    Draws are taken layer by layer, each weight matrix in row-major order.
    """
    weights, biases = [], []
    sizes = spec.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(r.standard_normal((fan_out, fan_in)) * math.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


@dataclass(eq=False)
class ForwardCache:
    spec: MlpSpec
    params: MlpParams
    digest: str
    activations: list  # inputs to each layer; activations[0] is X
    pre: list  # pre-activations per layer
    masks: list  # dropout multipliers per hidden layer, None when unused
    yhat: np.ndarray


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(params, spec, X, mode="infer", dropout_rate=0.0, rng=None, masks=None):
    """Predictions and a cache for ``backward_gradients``.

    In ``train`` mode inverted dropout (keep with probability ``1 - rate``,
    scale by ``1 / (1 - rate)``) is applied to hidden activations. ``masks``
    replays previously drawn multipliers instead of sampling.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != spec.layer_sizes[0]:
        raise DimensionMismatch(f"input has shape {X.shape}, expected (*, {spec.layer_sizes[0]})")
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    use_dropout = mode == "train" and (masks is not None or dropout_rate > 0.0)
    if use_dropout and masks is None and rng is None:
        raise ValueError("train mode with dropout needs a RandomSource")
    keep = 1.0 - dropout_rate

    n_layers = len(params.weights)
    acts, pre, used = [X], [], []
    a = X
    for layer in range(n_layers):
        z = a @ params.weights[layer].T + params.biases[layer]
        pre.append(z)
        if layer == n_layers - 1:
            break
        a = np.maximum(z, 0.0)
        mask = None
        if use_dropout:
            if masks is not None:
                mask = masks[layer]
            else:
                mask = (rng.uniform(a.shape) < keep) / keep
            if mask is not None:
                a = a * mask
        used.append(mask)
        acts.append(a)
    out = pre[-1][:, 0]
    yhat = _sigmoid(out) if spec.output_activation == SIGMOID else out
    return yhat, ForwardCache(spec, params, params.digest(), acts, pre, used, yhat)


def backward_gradients(cache, y):
    """Exact gradients of ``mean((yhat - y)**2)`` for every weight and bias."""
    if cache.params.digest() != cache.digest:
        raise StaleCache("parameters changed since the forward pass")
    y = np.asarray(y, dtype=float).reshape(-1)
    n = cache.yhat.shape[0]
    if y.shape[0] != n:
        raise DimensionMismatch(f"y has {y.shape[0]} rows, forward batch had {n}")
    params = cache.params
    g = (2.0 / n) * (cache.yhat - y)
    if cache.spec.output_activation == SIGMOID:
        g = g * cache.yhat * (1.0 - cache.yhat)
    delta = g[:, None]
    n_layers = len(params.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    for layer in range(n_layers - 1, -1, -1):
        gw[layer] = delta.T @ cache.activations[layer]
        gb[layer] = delta.sum(axis=0)
        if layer == 0:
            break
        da = delta @ params.weights[layer]
        mask = cache.masks[layer - 1]
        if mask is not None:
            da = da * mask
        delta = da * (cache.pre[layer - 1] > 0.0)
    return MlpParams(gw, gb)


def mse(params, spec, X, y):
    yhat, _ = forward(params, spec, X)
    d = yhat - np.asarray(y, dtype=float)
    return float(np.mean(d * d))


def predict(params, spec, X):
    return forward(params, spec, X)[0]


# --------------------------------------------------------------------------
# optimisers


@dataclass(eq=False)
class AdamState:
    m: list
    v: list
    t: int = 0


def init_adam(params):
    return AdamState([np.zeros_like(a) for a in params.arrays()],
                     [np.zeros_like(a) for a in params.arrays()], 0)


def _rebuild(params, arrays):
    k = len(params.weights)
    return MlpParams(list(arrays[:k]), list(arrays[k:]))


def adam_step(state, params, grads, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    t = state.t + 1
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_p.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return AdamState(new_m, new_v, t), _rebuild(params, new_p)


@dataclass(eq=False)
class MomentumState:
    velocity: list


def init_momentum(params):
    return MomentumState([np.zeros_like(a) for a in params.arrays()])


def sgd_momentum_step(state, params, grads, lr=1e-2, momentum=0.9):
    vel = [momentum * v - lr * g for v, g in zip(state.velocity, grads.arrays())]
    new_p = [p + dv for p, dv in zip(params.arrays(), vel)]
    return MomentumState(vel), _rebuild(params, new_p)


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class EarlyStopping:
    patience: int = 10
    min_delta: float = 0.0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"  # or "sgd_momentum"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    dropout_rate: float = 0.0
    early_stopping: EarlyStopping | None = None
    validation_fraction: float = 0.2
    seed: int = 42

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")
        if self.optimizer not in ("adam", "sgd_momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if self.early_stopping is not None:
            d["early_stopping"] = {"patience": self.early_stopping.patience,
                                   "min_delta": self.early_stopping.min_delta}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        es = d.get("early_stopping")
        if es is not None:
            d["early_stopping"] = EarlyStopping(**es)
        return cls(**d)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,val_loss\n")
            for e, (tr, va) in enumerate(zip(self.train_loss, self.val_loss), start=1):
                fh.write(f"{e},{tr!r},{'' if math.isnan(va) else repr(va)}\n")


def _loss(params, spec, X, y):
    if len(y) == 0:
        return math.nan
    with np.errstate(over="ignore", invalid="ignore"):
        return mse(params, spec, X, y)


def train(spec, config, X_train, y_train):
    """Mini-batch training; returns ``(params, history)``.

    One RandomSource seeded with ``config.seed`` drives, in order: weight
    initialisation, the validation carve-out, then per epoch the batch
    shuffle and any dropout masks. Per-epoch losses are recomputed over the
    full fitting and validation subsets in inference mode.
    """
    X = np.asarray(X_train, dtype=float)
    y = np.asarray(y_train, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X {X.shape} and y {y.shape} disagree")
    r = RandomSource(config.seed)
    params = init_params(spec, r)

    n = X.shape[0]
    n_val = int(math.floor(config.validation_fraction * n + 0.5))
    perm = r.shuffle(n)
    val_idx, fit_idx = perm[:n_val], perm[n_val:]
    if len(fit_idx) == 0:
        raise DimensionMismatch("no rows left for fitting after the validation carve-out")
    Xf, yf = X[fit_idx], y[fit_idx]
    Xv, yv = X[val_idx], y[val_idx]

    if config.optimizer == "adam":
        opt_state = init_adam(params)
    else:
        opt_state = init_momentum(params)

    history = TrainHistory()
    es = config.early_stopping
    best_loss, best_params, wait = math.inf, params.copy(), 0
    for epoch in range(1, config.epochs + 1):
        order = r.shuffle(len(fit_idx))
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, len(order), config.batch_size):
                batch = order[start:start + config.batch_size]
                _, cache = forward(params, spec, Xf[batch], mode="train",
                                   dropout_rate=config.dropout_rate, rng=r)
                grads = backward_gradients(cache, yf[batch])
                if config.optimizer == "adam":
                    opt_state, params = adam_step(opt_state, params, grads, config.learning_rate,
                                                  config.beta1, config.beta2, config.eps)
                else:
                    opt_state, params = sgd_momentum_step(opt_state, params, grads,
                                                          config.learning_rate, config.momentum)
        tr = _loss(params, spec, Xf, yf)
        va = _loss(params, spec, Xv, yv)
        history.train_loss.append(tr)
        history.val_loss.append(va)
        history.stopped_epoch = epoch
        if not math.isfinite(tr) or not (math.isnan(va) or math.isfinite(va)):
            raise NonFiniteLoss(f"epoch {epoch}: train loss {tr}, val loss {va} "
                                f"(learning rate {config.learning_rate})")
        monitored = tr if math.isnan(va) else va
        if monitored < best_loss - (es.min_delta if es else 0.0) or epoch == 1:
            best_loss, best_params, wait = monitored, params.copy(), 0
            history.best_epoch = epoch
        elif es is not None:
            wait += 1
            if wait >= es.patience:
                break
    if es is not None:
        return best_params, history
    return params, history


# --------------------------------------------------------------------------
# regression model wrapper (target scaling for the sigmoid head)


@dataclass(eq=False)
class MlpModel:
    spec: MlpSpec
    params: MlpParams
    history: TrainHistory
    target_min: float = 0.0
    target_max: float = 1.0

    def predict(self, X):
        out = predict(self.params, self.spec, X)
        if self.spec.output_activation == SIGMOID:
            return self.target_min + out * (self.target_max - self.target_min)
        return out

    def to_dict(self):
        return {"spec": self.spec.to_dict(), "params": self.params.to_dict(),
                "target_min": self.target_min, "target_max": self.target_max}

    @classmethod
    def from_dict(cls, d):
        return cls(MlpSpec.from_dict(d["spec"]), MlpParams.from_dict(d["params"]),
                   TrainHistory(), d["target_min"], d["target_max"])


def fit_mlp(spec, config, X, y):
    """Train and wrap; the sigmoid head sees targets min-max scaled to [0, 1]."""
    y = np.asarray(y, dtype=float)
    lo, hi = 0.0, 1.0
    if spec.output_activation == SIGMOID:
        lo, hi = float(y.min()), float(y.max())
        if hi == lo:
            hi = lo + 1.0
        y = (y - lo) / (hi - lo)
    params, history = train(spec, config, X, y)
    return MlpModel(spec, params, history, lo, hi)


# --------------------------------------------------------------------------
# grid search


@dataclass
class GridResult:
    rank: int
    settings: dict
    score: float  # mean validation MSE
    n_params: int
    status: str = "ok"
    reason: str = ""
    order: int = 0


def _configure(spec_template, base, settings):
    spec = spec_template
    cfg_updates = {}
    for key, value in settings.items():
        if key == "hidden":
            spec = MlpSpec((spec_template.layer_sizes[0], *tuple(value), 1),
                           spec_template.hidden_activation, spec_template.output_activation)
        else:
            cfg_updates[key] = value
    return spec, replace(base, **cfg_updates)


def grid_search(spec_template, grids, X, y, evaluation=0.2, base=TrainConfig()):
    """Train every combination in ``grids`` and rank by validation MSE.

    ``grids`` maps ``"hidden"`` (tuples of hidden sizes) or any TrainConfig
    field to candidate values. ``evaluation`` is a holdout fraction (float)
    or a fold count (int >= 2). Ties go to fewer parameters, then to the
    order in which the combination was enumerated; failed cells rank last.
    """
    from .dataset import k_fold_plan

    if not grids or any(len(v) == 0 for v in grids.values()):
        raise ValueError("grids must be non-empty")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if isinstance(evaluation, (int, np.integer)) and not isinstance(evaluation, bool):
        plan = k_fold_plan(n, int(evaluation), base.seed)
        splits = [(plan.train_indices(f), np.sort(plan.folds[f])) for f in range(plan.k)]
    else:
        perm = RandomSource(base.seed).shuffle(n)
        n_val = int(math.floor(evaluation * n + 0.5))
        splits = [(np.sort(perm[n_val:]), np.sort(perm[:n_val]))]

    keys = list(grids)
    results = []
    for order, combo in enumerate(itertools.product(*(grids[k] for k in keys))):
        settings = dict(zip(keys, combo))
        spec = None
        try:
            spec, cfg = _configure(spec_template, base, settings)
            scores = []
            for tr_idx, va_idx in splits:
                model = fit_mlp(spec, cfg, X[tr_idx], y[tr_idx])
                with np.errstate(over="ignore", invalid="ignore"):
                    d = model.predict(X[va_idx]) - y[va_idx]
                    s = float(np.mean(d * d))
                if not math.isfinite(s):
                    raise NonFiniteLoss(f"validation MSE is {s}")
                scores.append(s)
            results.append(GridResult(0, settings, float(np.mean(scores)), spec.n_params,
                                      order=order))
        except (PipecondError, ValueError, FloatingPointError) as exc:
            log.info("grid cell %s failed: %s", settings, exc)
            n_params = spec.n_params if spec is not None else 0
            results.append(GridResult(0, settings, math.inf, n_params, "failed",
                                      f"{type(exc).__name__}: {exc}", order))
    results.sort(key=lambda g: (g.status != "ok", g.score, g.n_params, g.order))
    for rank, g in enumerate(results, start=1):
        g.rank = rank
    return results
