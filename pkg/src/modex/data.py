"""Synthetic classification data and CSV ingestion.

Desk-scale stand-ins for the usual benchmark regimes: balanced Gaussian
blobs, long-tailed subsampling, ambiguous (blended) inputs, noise
corruption at five severities, and displaced out-of-distribution clouds.
Every generator is a pure function of its seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import Rng


class DataFormatError(ValueError):
    """Malformed dataset file; the message carries the offending line."""


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features must be (N, D) with one label per row")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        self.meta = dict(self.meta)
        self.meta["class_counts"] = self.class_counts().tolist()

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def D(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, idx, **meta) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.labels[idx], self.n_classes,
                              {**self.meta, **meta})

    def centroids(self) -> np.ndarray:
        return np.stack([self.features[self.labels == k].mean(axis=0)
                         for k in range(self.n_classes) if np.any(self.labels == k)])


def blob_centres(K: int, D: int, scale: float = 4.0) -> np.ndarray:
    """Simplex vertices ``scale * e_k`` when ``K <= D``, else a circle in the first two axes."""
    c = np.zeros((K, D))
    if K <= D:
        c[np.arange(K), np.arange(K)] = scale
    else:
        ang = 2.0 * np.pi * np.arange(K) / K
        c[:, 0] = scale * np.cos(ang)
        c[:, 1] = scale * np.sin(ang)
    return c


def gen_blobs(K: int, per_class: int, D: int, spread: float, seed: int,
              scale: float = 4.0) -> LabeledDataset:
    if K < 2 or per_class < 1 or D < 2:
        raise ValueError("need K >= 2, per_class >= 1, D >= 2")
    if spread < 0:
        raise ValueError("spread must be non-negative")
    rng = Rng(seed).child("blobs")
    centres = blob_centres(K, D, scale)
    labels = np.repeat(np.arange(K), per_class)
    X = centres[labels] + spread * rng.standard_normal((labels.size, D))
    order = rng.permutation(labels.size)
    return LabeledDataset(X[order], labels[order], K,
                          {"name": "blobs", "seed": seed, "spread": spread, "scale": scale})


def split(ds: LabeledDataset, frac: float, seed: int):
    """Seeded random split into ``(first, rest)`` with ``round(frac * N)`` rows first."""
    if not 0.0 < frac < 1.0:
        raise ValueError("frac must lie in (0, 1)")
    order = Rng(seed).child("split").permutation(len(ds))
    n = int(round(frac * len(ds)))
    return ds.subset(np.sort(order[:n])), ds.subset(np.sort(order[n:]))


def standard_splits(ds: LabeledDataset, seed: int):
    """Held-out test (5%), then the remainder split 0.95:0.05 into train and validation."""
    pool, test = split(ds, 0.95, seed)
    train, val = split(pool, 0.95, seed + 1)
    return train, val, test


def apply_imbalance(ds: LabeledDataset, rho: float, seed: int) -> LabeledDataset:
    """Long-tailed subsample: class ``k`` keeps ``ceil(n_head * rho**(k/(K-1)))`` rows.

    ``rho`` is the tail-to-head count ratio, so class 0 is the head and
    class ``K-1`` the tail.
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")
    counts = ds.class_counts()
    if np.any(counts != counts[0]):
        raise ValueError("apply_imbalance expects a class-balanced dataset")
    K, n_head = ds.n_classes, int(counts[0])
    rng = Rng(seed).child("imbalance")
    keep = []
    for k in range(K):
        # the small slack keeps e.g. 1000 * 0.01 from rounding up to 11
        n_k = math.ceil(n_head * rho ** (k / (K - 1)) - 1e-9)
        if n_k < 1:
            raise ValueError(f"class {k} would be empty at rho={rho}")
        idx = np.flatnonzero(ds.labels == k)
        keep.append(rng.choice(idx, size=n_k, replace=False))
    return ds.subset(np.sort(np.concatenate(keep)), imbalance_rho=rho)


def add_label_ambiguity(ds: LabeledDataset, fraction: float, pairs, seed: int) -> LabeledDataset:
    """Blend a fraction of each paired class halfway toward random partners of the other class."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    pairs = [tuple(int(c) for c in p) for p in pairs]
    for a, b in pairs:
        if not (0 <= a < ds.n_classes and 0 <= b < ds.n_classes) or a == b:
            raise ValueError(f"bad class pair ({a}, {b}) for K={ds.n_classes}")
    rng = Rng(seed).child("ambiguity")
    X = ds.features.copy()
    for a, b in pairs:
        for src, dst in ((a, b), (b, a)):
            own = np.flatnonzero(ds.labels == src)
            other = np.flatnonzero(ds.labels == dst)
            n = int(round(fraction * own.size))
            if n == 0 or other.size == 0:
                continue
            chosen = rng.choice(own, size=n, replace=False)
            partner = rng.choice(other, size=n, replace=True)
            X[chosen] = 0.5 * ds.features[chosen] + 0.5 * ds.features[partner]
    return LabeledDataset(X, ds.labels.copy(), ds.n_classes,
                          {**ds.meta, "ambiguity_fraction": fraction,
                           "ambiguity_pairs": [list(p) for p in pairs]})


def corrupt(ds: LabeledDataset, severity: int, seed: int) -> LabeledDataset:
    """Additive Gaussian noise with std ``0.25 * severity`` times each feature's std."""
    if severity not in (1, 2, 3, 4, 5):
        raise ValueError("severity must be one of 1..5")
    rng = Rng(seed).child(f"corrupt-{severity}")
    std = ds.features.std(axis=0)
    noise = rng.standard_normal(ds.features.shape) * (0.25 * severity * std)
    return LabeledDataset(ds.features + noise, ds.labels.copy(), ds.n_classes,
                          {**ds.meta, "noise_level": 0.25 * severity, "severity": severity})


def max_centroid_distance(ds: LabeledDataset) -> float:
    c = ds.centroids()
    d = np.sqrt(((c[:, None, :] - c[None, :, :]) ** 2).sum(-1))
    return float(d.max())


def gen_ood(ds: LabeledDataset, offset_scale: float, seed: int) -> np.ndarray:
    """Copy of the ID cloud translated by ``offset_scale * max centroid distance``.

    The direction is a seeded random unit vector, so the displaced cloud
    keeps the ID shape and its centroid sits ``offset_scale * dmax`` from
    the ID centroid.  Offset 0 reproduces the ID features exactly; large
    offsets put every point far from all ID centroids.
    """
    if offset_scale < 0:
        raise ValueError("offset_scale must be non-negative")
    rng = Rng(seed).child("ood")
    u = rng.standard_normal(ds.D)
    u /= np.linalg.norm(u)
    return ds.features + offset_scale * max_centroid_distance(ds) * u


def save_csv(ds: LabeledDataset, path) -> None:
    """Write ``f0..f{D-1},label`` rows plus a ``<path>.meta.json`` sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"f{j}" for j in range(ds.D)] + ["label"])
        for x, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])
    meta = {**ds.meta, "n_classes": ds.n_classes}
    Path(f"{path}.meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def load_csv(path, n_classes: int | None = None) -> LabeledDataset:
    """Parse a dataset CSV.  ``K`` comes from the argument, the sidecar, or max label + 1."""
    path = Path(path)
    sidecar = Path(f"{path}.meta.json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    K = n_classes if n_classes is not None else meta.pop("n_classes", None)
    meta.pop("n_classes", None)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = rows[0]
    D = len(header) - 1
    if D < 1 or header != [f"f{j}" for j in range(D)] + ["label"]:
        raise DataFormatError(f"{path}:1: header must be f0,...,f{{D-1}},label")
    X, y = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != D + 1:
            raise DataFormatError(f"{path}:{lineno}: expected {D + 1} cells, got {len(row)}")
        try:
            X.append([float(c) for c in row[:D]])
            label = int(row[D])
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: non-numeric cell") from None
        if label < 0 or (K is not None and label >= K):
            raise DataFormatError(f"{path}:{lineno}: label {label} outside [0, {K})")
        y.append(label)
    if not y:
        raise DataFormatError(f"{path}: no data rows")
    if K is None:
        K = max(y) + 1
    meta.setdefault("name", path.stem)
    return LabeledDataset(np.array(X), np.array(y), int(K), meta)
