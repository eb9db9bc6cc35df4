"""Deterministic mini-batch SGD with momentum."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import model as model_lib
from .autodiff import DomainError, Tape
from .model import CmmModel
from .objective import Strategy, ablation_loss
from .rng import Xorshift64Star, derive_seed
from .synth import Dataset

log = logging.getLogger(__name__)

TRACE_FIELDS = ("epoch", "l_cmm", "l_rgb", "l_thermal", "l_total")


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, param_norm: float, detail: str):
        self.step = step
        self.param_norm = param_norm
        super().__init__(f"step {step}: {detail} (parameter L2 norm {param_norm:.6g})")


@dataclass
class TrainConfig:
    strategy: Strategy = Strategy.STIE
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    tau: float | None = None  # None keeps the model's temperature
    shuffle: bool = True
    checkpoint_every: int = 0  # epochs; 0 disables intermediate checkpoints
    checkpoint_dir: str | None = None

    def __post_init__(self):
        self.strategy = Strategy.parse(self.strategy)
        if self.learning_rate < 0 or not math.isfinite(self.learning_rate):
            raise ValueError("learning_rate must be finite and >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategy"] = self.strategy.value
        return d


@dataclass
class EpochStats:
    epoch: int
    l_cmm: float
    l_rgb: float
    l_thermal: float
    l_total: float


def _param_norm(model: CmmModel) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        return math.sqrt(sum(float(np.sum(a * a)) for _, a in model.named_parameters()))


def loss_and_grads(model: CmmModel, x_r, x_t, labels, strategy: Strategy):
    tape = Tape()
    params = model.bind(tape)
    triple, effects = model_lib.forward(model, x_r, x_t, params=params)
    losses = ablation_loss(strategy, triple, effects, labels)
    names = [n for n, _ in model.named_parameters()]
    grads = tape.grad(losses.l_total, [params[n] for n in names])
    return losses, dict(zip(names, grads))


def train(model: CmmModel, dataset: Dataset, cfg: TrainConfig) -> tuple[CmmModel, list[EpochStats]]:
    """Train a copy of ``model``; the input model is left untouched."""
    n = len(dataset)
    if n == 0:
        raise ValueError("empty dataset")
    if dataset.d != model.d:
        raise ValueError(f"dataset dim {dataset.d} != model dim {model.d}")
    model = model.copy()
    if cfg.tau is not None:
        model.tau = cfg.tau
    params = model.named_parameters()
    velocity = [np.zeros_like(a) for _, a in params]
    shuffler = Xorshift64Star(derive_seed(cfg.seed, "shuffle"))
    trace: list[EpochStats] = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = shuffler.permutation(n) if cfg.shuffle else list(range(n))
        sums = np.zeros(4)
        for start in range(0, n, cfg.batch_size):
            idx = np.asarray(order[start:start + cfg.batch_size], dtype=np.intp)
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    losses, grads = loss_and_grads(model, dataset.x_r[idx], dataset.x_t[idx],
                                                   dataset.labels[idx], cfg.strategy)
            except DomainError as exc:
                # non-finite activations reach ln() before the loss is formed
                raise TrainingDiverged(step, _param_norm(model), str(exc)) from exc
            vals = losses.values()
            if not all(math.isfinite(v) for v in vals.values()):
                raise TrainingDiverged(step, _param_norm(model), f"non-finite loss {vals}")
            for (name, p), v in zip(params, velocity):
                g = grads[name]
                if not np.all(np.isfinite(g)):
                    raise TrainingDiverged(step, _param_norm(model), f"non-finite gradient in {name}")
                v *= cfg.momentum
                v += g
                p -= cfg.learning_rate * v
            sums += len(idx) * np.array([vals[k] for k in TRACE_FIELDS[1:]])
            step += 1
        stats = EpochStats(epoch, *(sums / n).tolist())
        trace.append(stats)
        log.debug("epoch %d %s", epoch, stats)
        if cfg.checkpoint_every and cfg.checkpoint_dir and epoch % cfg.checkpoint_every == 0:
            out = Path(cfg.checkpoint_dir)
            out.mkdir(parents=True, exist_ok=True)
            model_lib.save(model, out / f"epoch{epoch:04d}.json")
    for name, p in params:
        if not np.all(np.isfinite(p)):
            raise TrainingDiverged(step, _param_norm(model), f"non-finite parameter {name}")
    return model, trace


def write_trace_csv(trace: list[EpochStats], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_FIELDS)
        for s in trace:
            w.writerow([s.epoch, repr(s.l_cmm), repr(s.l_rgb), repr(s.l_thermal), repr(s.l_total)])
