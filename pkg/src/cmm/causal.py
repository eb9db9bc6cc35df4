"""Counterfactual algebra of the mode-multiplexed classification head.

Scores are per-class vectors (last axis, C = 2: background, pedestrian),
optionally with leading batch axes.  Every function is built from
:mod:`cmm.autodiff` primitives so it sits on the training tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node

BACKGROUND, PEDESTRIAN = 0, 1
NUM_CLASSES = 2
DEFAULT_TAU = 0.1


@dataclass
class PredictionTriple:
    y_m: Node  # fusion head
    y_r: Node  # RGB-only head
    y_t: Node  # thermal-only head

    def __post_init__(self):
        if not self.y_m.shape[-1:] == self.y_r.shape[-1:] == self.y_t.shape[-1:]:
            raise ValueError("prediction vectors must share the class dimension")


@dataclass
class NoTreatment:
    """Scalar no-treatment logits, one per branch, broadcast over classes."""

    c_m: Node
    c_r: Node
    c_t: Node


@dataclass
class CausalEffects:
    te: Node
    nde: Node
    tie: Node
    k_mode: Node
    stie: Node


def _check_lengths(*vs: Node) -> None:
    n = vs[0].shape[-1:]
    for v in vs[1:]:
        if v.shape[-1:] != n:
            raise ValueError(f"class dimension mismatch: {vs[0].shape} vs {v.shape}")


def log_harmonic(y_m, y_r, y_t) -> Node:
    """ln(sigma(y_m) * sigma(y_r) * sigma(y_t)), per class."""
    tape, (y_m, y_r, y_t) = ad._lift_all(y_m, y_r, y_t)
    if y_m.value.ndim and y_r.value.ndim and y_t.value.ndim:
        _check_lengths(y_m, y_r, y_t)
    return ad.log_sigmoid(y_m) + ad.log_sigmoid(y_r) + ad.log_sigmoid(y_t)


def no_treatment_score(nt: NoTreatment, n_classes: int = NUM_CLASSES) -> Node:
    score = log_harmonic(nt.c_m, nt.c_r, nt.c_t)
    return ad.broadcast_to(score, (n_classes,))


def total_effect(triple: PredictionTriple, nt: NoTreatment) -> Node:
    n = triple.y_m.shape[-1]
    return log_harmonic(triple.y_m, triple.y_r, triple.y_t) - no_treatment_score(nt, n)


def natural_direct_effect(y_t: Node, nt: NoTreatment) -> Node:
    """Thermal-only effect: fusion and RGB inputs held at no-treatment."""
    blocked = log_harmonic(nt.c_m, nt.c_r, y_t)
    return blocked - no_treatment_score(nt, y_t.shape[-1])


def total_indirect_effect(te: Node, nde: Node) -> Node:
    _check_lengths(te, nde)
    return te - nde


def mode_distribution(y: Node, tau: float = DEFAULT_TAU) -> Node:
    """Noise-free Gumbel-softmax over the class probabilities of ``y``.

    ``y`` are raw logits; they are mapped to probabilities first so the log
    is always defined.  Equivalent to p**(1/tau) renormalised.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    p = ad.softmax(y)
    return ad.softmax(ad.log(p) / tau)


def k_mode(pi_r: Node, pi_t: Node) -> Node:
    """(pi_r[ped] - pi_r[bg]) * (pi_t[ped] - pi_t[bg]); +1 common, -1 differential."""
    d_r = ad.take(pi_r, PEDESTRIAN) - ad.take(pi_r, BACKGROUND)
    d_t = ad.take(pi_t, PEDESTRIAN) - ad.take(pi_t, BACKGROUND)
    return d_r * d_t


def switchable_tie(te: Node, nde: Node, k) -> Node:
    """te - relu(-k) * nde.  ``k`` has the batch shape of te without the class axis."""
    k = te.tape.lift(k)
    gate = ad.relu(-k)
    return te - ad.unsqueeze(gate) * nde


def hard_mode(k: Node) -> Node:
    """Sign-thresholded K_mode (inference only; carries no gradient)."""
    return k.tape.const(np.where(k.value > 0.0, 1.0, np.where(k.value < 0.0, -1.0, 0.0)))


def causal_effects(triple: PredictionTriple, nt: NoTreatment, tau: float = DEFAULT_TAU,
                   hard_gate: bool = False) -> CausalEffects:
    te = total_effect(triple, nt)
    nde = natural_direct_effect(triple.y_t, nt)
    tie = total_indirect_effect(te, nde)
    k = k_mode(mode_distribution(triple.y_r, tau), mode_distribution(triple.y_t, tau))
    if hard_gate:
        k = hard_mode(k)
    return CausalEffects(te=te, nde=nde, tie=tie, k_mode=k, stie=switchable_tie(te, nde, k))
