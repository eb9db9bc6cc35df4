"""Synthetic paired RGB/thermal ROI features with controllable visibility regimes.

    ROTO  both modalities carry the label signal (daytime)
    RXTO  RGB is pure noise, thermal carries the signal (night)
    ROTX  RGB carries the signal, thermal is pure noise (thermally occluded)

A biased training set mixes only ROTO and RXTO, so thermal evidence is
present in every training sample while RGB evidence is present in half.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .rng import ALGORITHM, Xorshift64Star, derive_seed

REGIMES = ("ROTO", "RXTO", "ROTX")
SPLITS = ("train", "test_roto", "test_rxto", "test_rotx")
MIX_TOL = 1e-9


@dataclass(frozen=True)
class Sample:
    x_r: np.ndarray
    x_t: np.ndarray
    label: int  # 0 background, 1 pedestrian
    regime: str


@dataclass
class GenConfig:
    d: int = 8
    n: int = 4000
    mix: tuple[float, float, float] = (0.5, 0.5, 0.0)  # ROTO, RXTO, ROTX
    # 4 sigma between class means along the signal direction; at 2 sigma the
    # thermal-only Bayes AP on RXTO is ~0.9.
    signal: float = 4.0
    sigma: float = 1.0
    seed: int = 0
    # Signal directions are shared by every split generated from one root seed.
    direction_seed: int | None = None

    def __post_init__(self):
        self.mix = tuple(float(p) for p in self.mix)
        if len(self.mix) != 3 or any(p < 0 for p in self.mix) or abs(sum(self.mix) - 1.0) > MIX_TOL:
            raise ValueError(f"mix must be three non-negative probabilities summing to 1, got {self.mix}")
        if self.d < 2:
            raise ValueError("d must be >= 2 (two orthonormal signal directions)")
        if self.n < 0:
            raise ValueError("n must be non-negative")
        if not self.signal > 0 or not self.sigma >= 0:
            raise ValueError("signal must be positive and sigma non-negative")

    @property
    def resolved_direction_seed(self) -> int:
        return self.seed if self.direction_seed is None else self.direction_seed


@dataclass(eq=False)
class Dataset(Sequence[Sample]):
    x_r: np.ndarray  # [n, d]
    x_t: np.ndarray  # [n, d]
    labels: np.ndarray  # [n] int
    regimes: list[str]
    config: GenConfig | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return self.subset(range(len(self))[i])
        return Sample(self.x_r[i], self.x_t[i], int(self.labels[i]), self.regimes[i])

    def __iter__(self) -> Iterator[Sample]:
        return (self[i] for i in range(len(self)))

    @property
    def d(self) -> int:
        return self.x_r.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(list(idx), dtype=np.intp)
        return Dataset(self.x_r[idx], self.x_t[idx], self.labels[idx],
                       [self.regimes[i] for i in idx], self.config)

    def regime_counts(self) -> dict[str, int]:
        c = Counter(self.regimes)
        return {r: c.get(r, 0) for r in REGIMES}


def signal_directions(seed: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Two orthonormal unit vectors (Gram-Schmidt on seeded Gaussian draws)."""
    rng = Xorshift64Star(seed).split("directions")
    a = np.array(rng.normals(d))
    b = np.array(rng.normals(d))
    u_r = a / np.linalg.norm(a)
    b = b - (b @ u_r) * u_r
    return u_r, b / np.linalg.norm(b)


def _pick_regime(u: float, mix: tuple[float, float, float]) -> str:
    acc = 0.0
    for regime, p in zip(REGIMES, mix):
        acc += p
        if u < acc:
            return regime
    # u above the rounded cumulative sum: last regime with nonzero mass
    return next(r for r, p in zip(reversed(REGIMES), reversed(mix)) if p > 0)


def generate(cfg: GenConfig) -> Dataset:
    u_r, u_t = signal_directions(cfg.resolved_direction_seed, cfg.d)
    rng = Xorshift64Star(cfg.seed).split("samples")
    x_r = np.empty((cfg.n, cfg.d))
    x_t = np.empty((cfg.n, cfg.d))
    labels = np.empty(cfg.n, dtype=np.int64)
    regimes = []
    for i in range(cfg.n):
        label = 1 if rng.uniform() < 0.5 else 0
        regime = _pick_regime(rng.uniform(), cfg.mix)
        eps_r = np.array(rng.normals(cfg.d)) * cfg.sigma
        eps_t = np.array(rng.normals(cfg.d)) * cfg.sigma
        amp = label * cfg.signal
        x_r[i] = eps_r + (amp * u_r if regime != "RXTO" else 0.0)
        x_t[i] = eps_t + (amp * u_t if regime != "ROTX" else 0.0)
        labels[i] = label
        regimes.append(regime)
    return Dataset(x_r, x_t, labels, regimes, cfg)


def split_configs(seed: int, *, d: int = 8, signal: float = 4.0, sigma: float = 1.0,
                  n_train: int = 4000, n_test: int = 1000,
                  train_mix: tuple[float, float, float] = (0.5, 0.5, 0.0)) -> dict[str, GenConfig]:
    common = dict(d=d, signal=signal, sigma=sigma, direction_seed=seed)
    return {
        "train": GenConfig(n=n_train, mix=train_mix, seed=derive_seed(seed, "train"), **common),
        "test_roto": GenConfig(n=n_test, mix=(1.0, 0.0, 0.0), seed=derive_seed(seed, "test_roto"), **common),
        "test_rxto": GenConfig(n=n_test, mix=(0.0, 1.0, 0.0), seed=derive_seed(seed, "test_rxto"), **common),
        "test_rotx": GenConfig(n=n_test, mix=(0.0, 0.0, 1.0), seed=derive_seed(seed, "test_rotx"), **common),
    }


def standard_splits(seed: int, **overrides) -> dict[str, Dataset]:
    """Biased ROTO/RXTO training set plus one pure test set per regime."""
    return {name: generate(cfg) for name, cfg in split_configs(seed, **overrides).items()}


# -- files -------------------------------------------------------------------

def metadata(cfg: GenConfig | None) -> dict:
    meta = {"prng": ALGORITHM}
    if cfg is not None:
        meta["config"] = asdict(cfg)
    return meta


def write_jsonl(ds: Dataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for s in ds:
            fh.write(json.dumps({"x_r": s.x_r.tolist(), "x_t": s.x_t.tolist(),
                                 "label": s.label, "regime": s.regime}) + "\n")
    meta_path(path).write_text(json.dumps(metadata(ds.config), indent=1, sort_keys=True) + "\n")


def meta_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def read_jsonl(path: str | Path) -> Dataset:
    path = Path(path)
    x_r, x_t, labels, regimes = [], [], [], []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec["label"] not in (0, 1) or rec["regime"] not in REGIMES:
                raise ValueError(f"{path}:{lineno}: bad label or regime")
            x_r.append(rec["x_r"])
            x_t.append(rec["x_t"])
            labels.append(rec["label"])
            regimes.append(rec["regime"])
    cfg = None
    mp = meta_path(path)
    if mp.exists():
        raw = json.loads(mp.read_text()).get("config")
        if raw is not None:
            cfg = GenConfig(**{**raw, "mix": tuple(raw["mix"])})
    xr = np.array(x_r, dtype=np.float64).reshape(len(labels), -1)
    xt = np.array(x_t, dtype=np.float64).reshape(len(labels), -1)
    if xr.shape != xt.shape or not (np.all(np.isfinite(xr)) and np.all(np.isfinite(xt))):
        raise ValueError(f"{path}: inconsistent or non-finite feature vectors")
    return Dataset(xr, xt, np.array(labels, dtype=np.int64), regimes, cfg)


def write_splits(splits: dict[str, Dataset], out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, ds in splits.items():
        paths[name] = out_dir / f"{name}.jsonl"
        write_jsonl(ds, paths[name])
    return paths


def nearest_centroid_accuracy(train_x: np.ndarray, train_y: np.ndarray,
                              test_x: np.ndarray, test_y: np.ndarray) -> float:
    centroids = np.stack([train_x[train_y == c].mean(axis=0) for c in (0, 1)])
    dist = ((test_x[:, None, :] - centroids[None]) ** 2).sum(-1)
    return float(np.mean(dist.argmin(1) == test_y))

