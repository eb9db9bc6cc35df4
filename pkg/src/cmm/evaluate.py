"""Accuracy / average precision, the four-way ablation runner, and reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import softmax

from . import model as model_lib
from .causal import PEDESTRIAN
from .model import CmmModel
from .objective import Strategy
from .synth import standard_splits
from .trainer import TrainConfig, train

TEST_SPLITS = ("test_roto", "test_rxto", "test_rotx")
REPORT_VERSION = 1
CSV_FIELDS = ("seed", "strategy", "split", "accuracy", "ap")


def ranking(scores) -> np.ndarray:
    """Indices by descending score; ties keep original index order."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def average_precision(scores, labels) -> float:
    """All-point AP: mean over positives of the precision at each positive's rank."""
    labels = np.asarray(labels)
    if labels.shape != np.shape(scores):
        raise ValueError("scores and labels differ in length")
    n_pos = int(np.sum(labels == 1))
    if n_pos == 0:
        raise ValueError("average precision is undefined without positive labels")
    hits = labels[ranking(scores)] == 1
    tp = np.cumsum(hits)
    ranks = np.arange(1, len(hits) + 1)
    return math.fsum((tp[hits] / ranks[hits]).tolist()) / n_pos


def precision_recall_points(scores, labels) -> list[tuple[float, float, float]]:
    """(threshold, precision, recall) after each ranked item."""
    labels = np.asarray(labels)
    order = ranking(scores)
    hits = labels[order] == 1
    tp = np.cumsum(hits)
    n_pos = max(int(hits.sum()), 1)
    s = np.asarray(scores, dtype=np.float64)[order]
    return [(float(s[i]), tp[i] / (i + 1), tp[i] / n_pos) for i in range(len(order))]


def causal_scores(model: CmmModel, dataset, score: str, hard_gate: bool = False) -> np.ndarray:
    """Per-class causal score vectors [n, 2] for one of 'te', 'tie', 'stie'."""
    _, effects = model_lib.forward(model, dataset.x_r, dataset.x_t, hard_gate=hard_gate)
    return getattr(effects, score).value


def predict(model: CmmModel, dataset, strategy: "Strategy | str",
            hard_gate: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Pedestrian probability and argmax class per sample under the strategy's inference score."""
    strategy = Strategy.parse(strategy)
    s = causal_scores(model, dataset, strategy.infer_score, hard_gate)
    return softmax(s, axis=-1)[:, PEDESTRIAN], np.argmax(s, axis=-1)


def evaluate(model: CmmModel, dataset, strategy: "Strategy | str",
             hard_gate: bool = False) -> tuple[float, float]:
    prob, pred = predict(model, dataset, strategy, hard_gate)
    accuracy = float(np.mean(pred == dataset.labels))
    return accuracy, average_precision(prob, dataset.labels)


@dataclass
class RunReport:
    strategy: str
    seed: int
    metrics: dict[str, dict[str, float]]  # split -> {"accuracy", "ap"}
    config_digest: str

    def rows(self) -> list[tuple]:
        return [(self.seed, self.strategy, split, m["accuracy"], m["ap"])
                for split, m in self.metrics.items()]


@dataclass
class AblationConfig:
    root_seed: int = 0
    n_seeds: int = 5
    d: int = 8
    hidden: tuple[int, ...] = (16,)
    tau: float = 0.1
    signal: float = 4.0
    sigma: float = 1.0
    n_train: int = 4000
    n_test: int = 1000
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    strategies: tuple[str, ...] = tuple(s.value for s in Strategy)

    def seeds(self) -> list[int]:
        return [self.root_seed + i for i in range(self.n_seeds)]

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class AblationResult:
    config: AblationConfig
    reports: list[RunReport]
    traces: dict[str, list] = field(default_factory=dict)
    pr_rows: list[tuple] = field(default_factory=list)  # seed, strategy, split, threshold, precision, recall

    def rows(self) -> list[tuple]:
        out = []
        for r in sorted(self.reports, key=lambda r: (r.seed, list(Strategy).index(Strategy(r.strategy)))):
            out.extend(r.rows())
        return out

    def means(self) -> dict[str, dict[str, dict[str, float]]]:
        """strategy -> split -> metric -> across-seed mean."""
        table: dict = {}
        for strategy in self.config.strategies:
            reps = [r for r in self.reports if r.strategy == strategy]
            table[strategy] = {
                split: {m: float(np.mean([r.metrics[split][m] for r in reps])) for m in ("accuracy", "ap")}
                for split in TEST_SPLITS
            }
        return table

    def to_json(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "ap_definition": "all-point AP; rank by score descending, ties by original index ascending",
            "config": self.config.to_dict(),
            "config_digest": self.config.digest(),
            "reports": [r.__dict__ for r in self.reports],
            "means": self.means(),
            "metadata": {"created_unix": time.time()},
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for seed, strategy, split, acc, ap in self.rows():
            w.writerow([seed, strategy, split, repr(acc), repr(ap)])
        return buf.getvalue()


def report_from_json(doc: dict) -> AblationResult:
    cfg_raw = dict(doc["config"])
    cfg_raw["hidden"] = tuple(cfg_raw["hidden"])
    cfg_raw["strategies"] = tuple(cfg_raw["strategies"])
    reports = [RunReport(**r) for r in doc["reports"]]
    return AblationResult(AblationConfig(**cfg_raw), reports)


def _run_seed(cfg: AblationConfig, seed: int, pr_points: bool = False) -> tuple[list[RunReport], dict, list]:
    splits = standard_splits(seed, d=cfg.d, signal=cfg.signal, sigma=cfg.sigma,
                             n_train=cfg.n_train, n_test=cfg.n_test)
    init_model = model_lib.init(seed, cfg.d, cfg.hidden, cfg.tau)
    trained: dict[str, tuple[CmmModel, list]] = {}
    reports, traces, pr_rows = [], {}, []
    for name in cfg.strategies:
        strategy = Strategy.parse(name)
        # strategies sharing a training loss share the trained model
        key = strategy.train_score
        if key not in trained:
            tcfg = TrainConfig(strategy=strategy, epochs=cfg.epochs, batch_size=cfg.batch_size,
                               learning_rate=cfg.learning_rate, momentum=cfg.momentum, seed=seed)
            trained[key] = train(init_model, splits["train"], tcfg)
        model, trace = trained[key]
        metrics = {}
        for split in TEST_SPLITS:
            ds = splits[split]
            prob, pred = predict(model, ds, strategy)
            metrics[split] = {"accuracy": float(np.mean(pred == ds.labels)),
                              "ap": average_precision(prob, ds.labels)}
            if pr_points:
                pr_rows.extend((seed, strategy.value, split, *pt)
                               for pt in precision_recall_points(prob, ds.labels))
        reports.append(RunReport(strategy.value, seed, metrics, cfg.digest()))
        traces[f"{seed}/{strategy.value}"] = [s.__dict__ for s in trace]
    return reports, traces, pr_rows


def run_ablation(cfg: AblationConfig | None = None, *, workers: int = 1, pr_points: bool = False,
                 **overrides) -> AblationResult:
    """Train every strategy from a shared initialisation for each seed and score the test splits."""
    cfg = cfg or AblationConfig(**overrides)
    if cfg.n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_run_seed, [cfg] * cfg.n_seeds, cfg.seeds(),
                                 [pr_points] * cfg.n_seeds))
    else:
        outs = [_run_seed(cfg, seed, pr_points) for seed in cfg.seeds()]
    result = AblationResult(cfg, [])
    # merge in seed order regardless of completion order
    for r, t, pr in outs:
        result.reports.extend(r)
        result.traces.update(t)
        result.pr_rows.extend(pr)
    return result


def format_means(result: AblationResult, metric: str = "ap") -> str:
    means = result.means()
    lines = [f"{'strategy':<12}" + "".join(f"{s:>12}" for s in TEST_SPLITS)]
    for strategy, row in means.items():
        lines.append(f"{strategy:<12}" + "".join(f"{row[s][metric]:>12.4f}" for s in TEST_SPLITS))
    return "\n".join(lines)


def write_report(result: AblationResult, out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"json": out_dir / "ablation.json", "csv": out_dir / "ablation.csv"}
    paths["json"].write_text(json.dumps(result.to_json(), indent=1) + "\n")
    paths["csv"].write_text(result.to_csv())
    if result.pr_rows:
        paths["pr"] = out_dir / "pr_points.csv"
        with paths["pr"].open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("seed", "strategy", "split", "threshold", "precision", "recall"))
            for seed, strategy, split, thr, prec, rec in result.pr_rows:
                w.writerow([seed, strategy, split, repr(thr), repr(float(prec)), repr(float(rec))])
    return paths
