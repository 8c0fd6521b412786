"""Synthetic and CSV-backed classification datasets with seeded splits."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    seed: int
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.train_idx = np.asarray(self.train_idx, dtype=np.int64)
        self.val_idx = np.asarray(self.val_idx, dtype=np.int64)
        n = self.features.shape[0]
        combined = np.sort(np.concatenate([self.train_idx, self.val_idx]))
        if not np.array_equal(combined, np.arange(n)):
            raise ValueError("train/val split must be a disjoint, exhaustive partition")

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def size(self) -> int:
        return int(self.features.shape[0])


def _stratified_split(labels: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    train_parts = []
    val_parts = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        cut = int(round(0.8 * idx.size))
        train_parts.append(idx[:cut])
        val_parts.append(idx[cut:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(val_parts))


def make_blobs(
    classes: int, dims: int, samples: int, cluster_spread: float, seed: int
) -> Dataset:
    """Gaussian clusters at seeded random centers, min-max scaled per feature."""
    if classes < 2 or dims < 2:
        raise ValueError("need at least 2 classes and 2 dimensions")
    if samples < 10 * classes:
        raise ValueError("need at least 10 samples per class")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, 1.0, size=(classes, dims))
    counts = [samples // classes] * classes
    for i in range(samples - sum(counts)):
        counts[i] += 1
    feats = []
    labels = []
    for c in range(classes):
        feats.append(centers[c] + cluster_spread * rng.standard_normal((counts[c], dims)))
        labels.append(np.full(counts[c], c, dtype=np.int64))
    features = np.concatenate(feats, axis=0)
    labels = np.concatenate(labels)
    order = rng.permutation(samples)
    features = features[order]
    labels = labels[order]
    lo = features.min(axis=0)
    span = features.max(axis=0) - lo
    span[span < 1e-12] = 1.0
    features = (features - lo) / span
    train_idx, val_idx = _stratified_split(labels, rng)
    descriptor = {
        "kind": "blobs",
        "classes": classes,
        "dims": dims,
        "samples": samples,
        "cluster_spread": cluster_spread,
        "seed": seed,
    }
    return Dataset(features, labels, train_idx, val_idx, seed, descriptor)


def load_csv(path, seed: int = 0) -> Dataset:
    """Read "f0..f{d-1},label" rows; labels must be 0-based contiguous ints."""
    path = Path(path)
    lines = path.read_text().strip().splitlines()
    if not lines:
        raise ValueError("empty csv")
    header = [h.strip() for h in lines[0].split(",")]
    d = len(header) - 1
    if d < 1 or header[-1] != "label" or header[:d] != [f"f{i}" for i in range(d)]:
        raise ValueError(f"bad csv header, expected f0..f{{d-1}},label, got {header}")
    features = []
    labels = []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != d + 1:
            raise ValueError(f"ragged row at line {ln}: {len(parts)} fields, expected {d + 1}")
        features.append([float(x) for x in parts[:d]])
        labels.append(int(parts[d]))
    labels_arr = np.asarray(labels, dtype=np.int64)
    present = sorted(set(labels))
    if present != list(range(len(present))):
        raise ValueError(f"non-contiguous labels: {present}")
    rng = np.random.default_rng(seed)
    train_idx, val_idx = _stratified_split(labels_arr, rng)
    descriptor = {"kind": "csv", "path": str(path), "seed": seed}
    return Dataset(np.asarray(features), labels_arr, train_idx, val_idx, seed, descriptor)


def save_csv(dataset: Dataset, path) -> None:
    d = dataset.dim
    rows = [",".join([f"f{i}" for i in range(d)] + ["label"])]
    for x, y in zip(dataset.features, dataset.labels):
        rows.append(",".join(repr(float(v)) for v in x) + f",{int(y)}")
    Path(path).write_text("\n".join(rows) + "\n")


def dataset_from_descriptor(descriptor: dict) -> Dataset:
    kind = descriptor.get("kind")
    if kind == "blobs":
        return make_blobs(
            int(descriptor["classes"]),
            int(descriptor["dims"]),
            int(descriptor["samples"]),
            float(descriptor["cluster_spread"]),
            int(descriptor["seed"]),
        )
    if kind == "csv":
        return load_csv(descriptor["path"], int(descriptor.get("seed", 0)))
    raise ValueError(f"unknown dataset descriptor kind {kind!r}")


def dataset_descriptor_json(dataset: Dataset) -> str:
    return json.dumps(dataset.descriptor, sort_keys=True)


def centroid_accuracy(dataset: Dataset) -> float:
    """Validation accuracy of a nearest-train-centroid classifier."""
    X = dataset.features
    y = dataset.labels
    centroids = np.stack(
        [X[dataset.train_idx][y[dataset.train_idx] == c].mean(axis=0)
         for c in range(dataset.num_classes)]
    )
    val_X = X[dataset.val_idx]
    dists = ((val_X[:, None, :] - centroids[None]) ** 2).sum(axis=2)
    pred = dists.argmin(axis=1)
    return float((pred == y[dataset.val_idx]).mean())
