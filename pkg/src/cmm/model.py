"""Three-branch classifier: fusion, RGB-only and thermal-only MLP heads."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Tape
from .causal import (DEFAULT_TAU, NUM_CLASSES, CausalEffects, NoTreatment,
                     PredictionTriple, causal_effects)
from .rng import ALGORITHM, Xorshift64Star

CHECKPOINT_FORMAT = "cmm-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class MlpParams:
    weights: list[np.ndarray]  # [out, in]
    biases: list[np.ndarray]  # [out]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i} input {w.shape[1]} does not chain")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]


@dataclass
class CmmModel:
    fusion_net: MlpParams
    rgb_net: MlpParams
    thermal_net: MlpParams
    no_treatment: NoTreatment  # fields are 0-d float64 arrays here
    tau: float = DEFAULT_TAU
    seed: int = 0
    hidden: tuple[int, ...] = field(default=(16,))

    @property
    def d(self) -> int:
        return self.rgb_net.in_dim

    def named_parameters(self) -> list[tuple[str, np.ndarray]]:
        """Mutable parameter arrays in a fixed canonical order."""
        out = []
        for net_name in ("fusion_net", "rgb_net", "thermal_net"):
            net = getattr(self, net_name)
            for i, (w, b) in enumerate(zip(net.weights, net.biases)):
                out.append((f"{net_name}.{i}.weight", w))
                out.append((f"{net_name}.{i}.bias", b))
        for c in ("c_m", "c_r", "c_t"):
            out.append((f"no_treatment.{c}", getattr(self.no_treatment, c)))
        return out

    def bind(self, tape: Tape) -> dict[str, Node]:
        return {name: tape.var(arr) for name, arr in self.named_parameters()}

    def copy(self) -> "CmmModel":
        return from_dict(to_dict(self))


def _mlp(rng: Xorshift64Star, dims: list[int]) -> MlpParams:
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        w = [rng.uniform_range(-bound, bound) for _ in range(fan_in * fan_out)]
        weights.append(np.array(w, dtype=np.float64).reshape(fan_out, fan_in))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def init(seed: int, d: int = 8, hidden: list[int] | tuple[int, ...] = (16,),
         tau: float = DEFAULT_TAU) -> CmmModel:
    if d < 1:
        raise ValueError("feature dimension must be >= 1")
    hidden = tuple(int(h) for h in hidden)
    root = Xorshift64Star(seed).split("init")
    return CmmModel(
        fusion_net=_mlp(root.split("fusion_net"), [2 * d, *hidden, NUM_CLASSES]),
        rgb_net=_mlp(root.split("rgb_net"), [d, *hidden, NUM_CLASSES]),
        thermal_net=_mlp(root.split("thermal_net"), [d, *hidden, NUM_CLASSES]),
        no_treatment=NoTreatment(np.zeros(()), np.zeros(()), np.zeros(())),
        tau=tau,
        seed=seed,
        hidden=hidden,
    )


def _apply_mlp(params: dict[str, Node], prefix: str, n_layers: int, x: Node) -> Node:
    h = x
    for i in range(n_layers):
        h = ad.matvec(params[f"{prefix}.{i}.weight"], h) + params[f"{prefix}.{i}.bias"]
        if i < n_layers - 1:
            h = ad.relu(h)
    return h


def forward(model: CmmModel, x_r, x_t, *, tape: Tape | None = None,
            params: dict[str, Node] | None = None,
            hard_gate: bool = False) -> tuple[PredictionTriple, CausalEffects]:
    """One pass over a sample ([d]) or a batch ([B, d]) of feature pairs."""
    if params is None:
        tape = tape or Tape()
        params = model.bind(tape)
    tape = next(iter(params.values())).tape
    x_r = np.asarray(x_r, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_r.shape != x_t.shape or x_r.shape[-1] != model.d:
        raise ValueError(f"expected feature pairs of dim {model.d}, got {x_r.shape} and {x_t.shape}")
    xr, xt = tape.const(x_r), tape.const(x_t)
    triple = PredictionTriple(
        y_m=_apply_mlp(params, "fusion_net", len(model.fusion_net.weights), ad.concat([xr, xt])),
        y_r=_apply_mlp(params, "rgb_net", len(model.rgb_net.weights), xr),
        y_t=_apply_mlp(params, "thermal_net", len(model.thermal_net.weights), xt),
    )
    nt = NoTreatment(params["no_treatment.c_m"], params["no_treatment.c_r"],
                     params["no_treatment.c_t"])
    return triple, causal_effects(triple, nt, model.tau, hard_gate=hard_gate)


# -- checkpoints -------------------------------------------------------------

def to_dict(model: CmmModel) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "prng": ALGORITHM,
        "seed": model.seed,
        "d": model.d,
        "hidden": list(model.hidden),
        "num_classes": NUM_CLASSES,
        "tau": model.tau,
        "params": {
            name: {"shape": list(arr.shape), "data": arr.ravel(order="C").tolist()}
            for name, arr in model.named_parameters()
        },
    }


def from_dict(doc: dict) -> CmmModel:
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"not a checkpoint document: format={doc.get('format')!r}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint version {doc.get('version')!r} != supported {CHECKPOINT_VERSION}")
    if doc.get("prng") != ALGORITHM:
        raise CheckpointError(f"checkpoint PRNG {doc.get('prng')!r} != {ALGORITHM!r}")
    model = init(doc["seed"], doc["d"], doc["hidden"], doc["tau"])
    stored = doc["params"]
    for name, arr in model.named_parameters():
        if name not in stored:
            raise CheckpointError(f"missing parameter {name}")
        entry = stored[name]
        values = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        if values.shape != arr.shape:
            raise CheckpointError(f"{name}: shape {values.shape} != {arr.shape}")
        if not np.all(np.isfinite(values)):
            raise CheckpointError(f"{name}: non-finite values")
        arr[...] = values
    return model


def save(model: CmmModel, path: str | Path, metadata: dict | None = None) -> None:
    doc = to_dict(model)
    if metadata:
        doc["metadata"] = metadata
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load(path: str | Path) -> CmmModel:
    return from_dict(json.loads(Path(path).read_text()))
