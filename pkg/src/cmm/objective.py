"""Cross-entropy objectives for the four training strategies."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .causal import CausalEffects, PredictionTriple


class Strategy(str, enum.Enum):
    """Train-score / test-score pairings of the ablation.

    BASELINE_TE  train on TE,   infer with TE
    TE_TRAIN     train on TE,   infer with TIE
    TIE_TRAIN    train on TIE,  infer with TIE
    STIE         train on sTIE, infer with sTIE
    """

    BASELINE_TE = "baseline_te"
    TE_TRAIN = "te_train"
    TIE_TRAIN = "tie_train"
    STIE = "stie"

    @classmethod
    def parse(cls, value: "str | Strategy") -> "Strategy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            try:
                return cls[str(value).upper()]
            except KeyError:
                raise ValueError(f"unknown strategy {value!r}; choose from "
                                 f"{[s.value for s in cls]}") from None

    @property
    def train_score(self) -> str:
        return {"baseline_te": "te", "te_train": "te", "tie_train": "tie", "stie": "stie"}[self.value]

    @property
    def infer_score(self) -> str:
        return {"baseline_te": "te", "te_train": "tie", "tie_train": "tie", "stie": "stie"}[self.value]


@dataclass
class LossBreakdown:
    l_cmm: Node  # main causal term (sTIE for STIE, TE or TIE for the ablations)
    l_rgb: Node
    l_thermal: Node
    l_cls: Node

    @property
    def l_total(self) -> Node:
        # bounding-box and detector losses are absent in this classifier
        return self.l_cls

    def values(self) -> dict[str, float]:
        return {"l_cmm": self.l_cmm.item(), "l_rgb": self.l_rgb.item(),
                "l_thermal": self.l_thermal.item(), "l_total": self.l_total.item()}


def _check_labels(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError(f"labels must be 0 or 1, got {np.unique(labels)}")
    return labels.astype(np.intp)


def cross_entropy(scores: Node, label) -> Node:
    """-log softmax(scores)[label]; per sample when scores is [B, C]."""
    labels = _check_labels(label)
    return ad.logsumexp(scores) - ad.pick(scores, labels)


def _mean_ce(scores: Node, labels) -> Node:
    return ad.mean(cross_entropy(scores, labels))


def cmm_loss(effects: CausalEffects, label) -> Node:
    return _mean_ce(effects.stie, label)


def classification_loss(triple: PredictionTriple, effects: CausalEffects, label,
                        score: str = "stie") -> LossBreakdown:
    """Main causal cross-entropy plus the two uni-modal auxiliary terms (batch means)."""
    main = _mean_ce(getattr(effects, score), label)
    l_rgb = _mean_ce(triple.y_r, label)
    l_thermal = _mean_ce(triple.y_t, label)
    return LossBreakdown(main, l_rgb, l_thermal, main + l_rgb + l_thermal)


def ablation_loss(strategy: "Strategy | str", triple: PredictionTriple,
                  effects: CausalEffects, label) -> LossBreakdown:
    strategy = Strategy.parse(strategy)
    return classification_loss(triple, effects, label, score=strategy.train_score)
