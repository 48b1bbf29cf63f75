"""Train the 64/32 network on synthetic data and summarise held-out metrics and loss curves."""

import argparse

import numpy as np

from pipecond.ann import TrainConfig
from pipecond.dataset import clean, train_test_split
from pipecond.evaluate import compute_metrics, smoothed
from pipecond.models import fit_ann
from pipecond.synth import GeneratorConfig, generate


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, nargs="+", default=[42])
    p.add_argument("--epochs", type=int, default=100)
    args = p.parse_args()

    cleaned = clean(generate(GeneratorConfig()))
    split = train_test_split(cleaned, 0.8, 42)
    train, test = cleaned.take(np.sort(split.train)), cleaned.take(np.sort(split.test))
    for seed in args.seeds:
        model = fit_ann(train, (64, 32), TrainConfig(epochs=args.epochs, seed=seed))
        m = compute_metrics(model.target(test), model.predict_table(test))
        rises = {k: int(np.sum(np.diff(smoothed(v, 5)) > 0))
                 for k, v in (("train", model.history.train_loss),
                              ("val", model.history.val_loss))}
        print(f"seed {seed}: RMSE {m.rmse:.4f}  MAE {m.mae:.4f}  R2 {m.r_square:.4f}  "
              f"smoothed-curve increases {rises}")


if __name__ == "__main__":
    main()
