"""Invariant suites run by ``cmm verify``.

Each suite returns ``(ok, counterexample)``; the counterexample is a small
JSON-serialisable dict describing the first failure.
"""

from __future__ import annotations

import itertools
import json
import math
import tempfile
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import causal
from . import model as model_lib
from .autodiff import Tape
from .evaluate import average_precision
from .objective import Strategy, ablation_loss

SuiteResult = tuple[bool, "dict | None"]


def _random_triple_nt(rng: np.random.Generator, tape: Tape):
    y = rng.uniform(-3, 3, size=(3, 2))
    c = rng.uniform(-3, 3, size=3)
    triple = causal.PredictionTriple(*(tape.var(v) for v in y))
    nt = causal.NoTreatment(*(tape.var(v) for v in c))
    return triple, nt, y, c


def decomposition_identity(n: int = 1000, seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    for i in range(n):
        tape = Tape()
        triple, nt, y, c = _random_triple_nt(rng, tape)
        te = causal.total_effect(triple, nt)
        nde = causal.natural_direct_effect(triple.y_t, nt)
        tie = causal.total_indirect_effect(te, nde)
        err = float(np.max(np.abs(tie.value - (te.value - nde.value))))
        if not err < 1e-12:
            return False, {"trial": i, "y": y.tolist(), "c": c.tolist(), "error": err}
    return True, None


# (pi_r, pi_t, expected K, expected cause-effect) for the hard one-hot cases
TRUTH_TABLE = (
    ("ROTO", [0.0, 1.0], [0.0, 1.0], 1.0, "te"),
    ("RXTO", [1.0, 0.0], [0.0, 1.0], -1.0, "tie"),
    ("ROTX", [0.0, 1.0], [1.0, 0.0], -1.0, "tie"),
)


def k_mode_truth_table(seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    for regime, pi_r, pi_t, want_k, branch in TRUTH_TABLE:
        tape = Tape()
        k = causal.k_mode(tape.var(pi_r), tape.var(pi_t))
        if k.item() != want_k:
            return False, {"regime": regime, "k_mode": k.item(), "expected": want_k}
        te = tape.var(rng.uniform(-3, 3, 2))
        nde = tape.var(rng.uniform(-3, 3, 2))
        stie = causal.switchable_tie(te, nde, k)
        want = te.value if branch == "te" else (te - nde).value
        if not np.array_equal(stie.value, want):
            return False, {"regime": regime, "stie": stie.value.tolist(), "expected": want.tolist()}
    return True, None


def gate_boundary() -> SuiteResult:
    """At K = 0 the gate is closed and flat: stie == te and d stie / dK == 0."""
    tape = Tape()
    te = tape.var([0.3, -1.2])
    nde = tape.var([0.7, 0.4])
    k = tape.var(0.0)
    stie = causal.switchable_tie(te, nde, k)
    if not np.array_equal(stie.value, te.value):
        return False, {"stie": stie.value.tolist(), "te": te.value.tolist()}
    (gk,) = tape.grad(ad.sum(stie), [k])
    if float(gk) != 0.0:
        return False, {"d_stie_dk_at_zero": float(gk), "relu_grad_at_zero": ad.RELU_GRAD_AT_ZERO}
    return True, None


def temperature_identity(n: int = 100, seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    for i in range(n):
        y = rng.uniform(-3, 3, 2)
        tape = Tape()
        node = tape.var(y)
        pi = causal.mode_distribution(node, tau=1.0).value
        sm = ad.softmax(node).value
        err = float(np.max(np.abs(pi - sm)))
        if not err <= 1e-15:
            return False, {"y": y.tolist(), "error": err}
    return True, None


def relative_error(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def finite_difference_check(model: model_lib.CmmModel, x_r, x_t, labels,
                            strategy: Strategy, h: float = 1e-5) -> tuple[float, str]:
    """Worst relative error between tape gradients and central differences."""

    def loss_value() -> float:
        triple, effects = model_lib.forward(model, x_r, x_t)
        return ablation_loss(strategy, triple, effects, labels).l_total.item()

    tape = Tape()
    params = model.bind(tape)
    triple, effects = model_lib.forward(model, x_r, x_t, params=params)
    loss = ablation_loss(strategy, triple, effects, labels).l_total
    names = [n for n, _ in model.named_parameters()]
    grads = tape.grad(loss, [params[n] for n in names])
    worst, where = 0.0, ""
    for (name, arr), g in zip(model.named_parameters(), grads):
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = loss_value()
            arr[idx] = old - h
            down = loss_value()
            arr[idx] = old
            err = relative_error(float(g[idx]), (up - down) / (2 * h))
            if err > worst:
                worst, where = err, f"{name}{list(idx)}"
    return worst, where


def gradient_check(n_models: int = 3, seed: int = 0, tol: float = 1e-4) -> SuiteResult:
    rng = np.random.default_rng(seed)
    strategies = itertools.cycle(list(Strategy))
    for i in range(n_models):
        m = model_lib.init(int(rng.integers(2**31)), d=4, hidden=(5,))
        for _, arr in m.named_parameters():
            arr[...] += rng.normal(0, 0.3, arr.shape)
        x_r, x_t = rng.normal(size=(2, 3, 4))
        labels = rng.integers(0, 2, 3)
        strategy = next(strategies)
        err, where = finite_difference_check(m, x_r, x_t, labels, strategy)
        if not err < tol:
            return False, {"model": i, "strategy": strategy.value, "parameter": where, "rel_error": err}
    return True, None


def ap_brute_force(scores, labels) -> float:
    """Precision at every positive by explicit pairwise rank counting."""
    n = len(scores)
    precisions = []
    for i in range(n):
        if labels[i] != 1:
            continue
        ahead = [j for j in range(n)
                 if scores[j] > scores[i] or (scores[j] == scores[i] and j <= i)]
        tp = sum(1 for j in ahead if labels[j] == 1)
        precisions.append(tp / len(ahead))
    return math.fsum(precisions) / len(precisions)


def ap_oracle(n: int = 200, seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    for i in range(n):
        size = int(rng.integers(1, 21))
        labels = rng.integers(0, 2, size)
        labels[rng.integers(size)] = 1
        # coarse grid so ties are common
        scores = rng.integers(0, 5, size) / 4.0
        got = average_precision(scores, labels)
        want = ap_brute_force(scores.tolist(), labels.tolist())
        if got != want:
            return False, {"scores": scores.tolist(), "labels": labels.tolist(), "ap": got, "oracle": want}
    return True, None


def checkpoint_loader(path: str | Path | None = None) -> SuiteResult:
    """Round-trip a fresh checkpoint, reject a wrong version, and validate ``path`` if given."""
    m = model_lib.init(0)
    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "ckpt.json"
        model_lib.save(m, p)
        back = model_lib.load(p)
        for (n1, a1), (_, a2) in zip(m.named_parameters(), back.named_parameters()):
            if not np.array_equal(a1, a2):
                return False, {"parameter": n1, "error": "round trip changed values"}
        doc = json.loads(p.read_text())
        doc["version"] = model_lib.CHECKPOINT_VERSION + 1
        try:
            model_lib.from_dict(doc)
        except model_lib.CheckpointVersionError:
            pass
        else:
            return False, {"error": "wrong checkpoint version was accepted"}
    if path is not None:
        try:
            model_lib.load(path)
        except model_lib.CheckpointVersionError as exc:
            return False, {"checkpoint": str(path), "error": f"version mismatch: {exc}"}
        except (model_lib.CheckpointError, OSError, ValueError, KeyError) as exc:
            return False, {"checkpoint": str(path), "error": str(exc)}
    return True, None


def suites(checkpoint: str | Path | None = None) -> dict[str, Callable[[], SuiteResult]]:
    return {
        "decomposition-identity": decomposition_identity,
        "k-mode-truth-table": k_mode_truth_table,
        "gate-boundary": gate_boundary,
        "gradient-check": gradient_check,
        "temperature-identity": temperature_identity,
        "ap-oracle": ap_oracle,
        "checkpoint-loader": lambda: checkpoint_loader(checkpoint),
    }


def run_all(checkpoint=None, echo: Callable[[str], None] = print) -> tuple[bool, dict | None]:
    first_failure = None
    for name, suite in suites(checkpoint).items():
        ok, example = suite()
        echo(f"{'PASS' if ok else 'FAIL'}  {name}")
        if not ok and first_failure is None:
            first_failure = {"suite": name, "counterexample": example}
    return first_failure is None, first_failure
