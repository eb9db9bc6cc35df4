"""Monte Carlo estimate of the Bayes floor of each training-loss term.

Half of the biased training set carries no RGB signal, so the RGB auxiliary
cross-entropy cannot fall below about ln(2)/2 however long training runs.
Compares the floor with the first and last epoch means of a default run.
"""

from __future__ import annotations

import argparse

import numpy as np

from cmm import model as model_lib, synth
from cmm.trainer import TrainConfig, train


def bayes_ce(signal: float, n_modalities: int, n: int, rng: np.random.Generator) -> float:
    y = rng.integers(0, 2, n)
    logit = np.zeros(n)
    for _ in range(n_modalities):
        z = signal * y + rng.normal(size=n)
        logit += signal * z - signal**2 / 2
    return float(np.mean(np.where(y == 1, np.logaddexp(0, -logit), np.logaddexp(0, logit))))


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--signal", type=float, default=4.0)
    p.add_argument("--samples", type=int, default=2_000_000)
    args = p.parse_args()

    rng = np.random.default_rng(0)
    one = bayes_ce(args.signal, 1, args.samples, rng)
    two = bayes_ce(args.signal, 2, args.samples, rng)
    floors = {
        "l_rgb": 0.5 * np.log(2) + 0.5 * one,  # RXTO half is uninformative for RGB
        "l_thermal": one,
        "l_cmm": 0.5 * two + 0.5 * one,  # fused score sees both modalities on ROTO
    }
    floors["l_total"] = sum(floors.values())

    _, trace = train(model_lib.init(0), synth.standard_splits(0, signal=args.signal)["train"], TrainConfig())
    print(f"{'term':<10}{'floor':>9}{'epoch 1':>9}{'final':>9}")
    for key, floor in floors.items():
        print(f"{key:<10}{floor:>9.4f}{getattr(trace[0], key):>9.4f}{getattr(trace[-1], key):>9.4f}")
    print(f"half of the epoch-1 mean: {trace[0].l_total / 2:.4f}")


if __name__ == "__main__":
    main()
