"""The universal data carrier and its serialization.

A LabeledDataset couples a feature matrix with one-hot fine labels and the
two-group hierarchy. Image-derived datasets have features in [0, 1]
(pixel / 255); the synthetic circles live in the plane and keep their
natural coordinates. Datasets serialize to JSON (small, cross-checkable)
or NPZ (large); the suffix of the path picks the format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError
from .losses import Hierarchy


def one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DataError(f"labels must lie in 0..{k - 1}")
    out = np.zeros((labels.shape[0], k))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


@dataclass
class LabeledDataset:
    features: np.ndarray      # (p, d) float64
    fine_labels: np.ndarray   # (p, k) one-hot float64
    hierarchy: Hierarchy
    name: str
    class_names: list[str]
    circle_index: np.ndarray | None = None  # per-point generator circle, synthetic data only
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=float)
        self.fine_labels = np.ascontiguousarray(self.fine_labels, dtype=float)
        if self.features.ndim != 2 or self.fine_labels.ndim != 2:
            raise DataError("features and labels must be 2-d")
        if self.features.shape[0] != self.fine_labels.shape[0]:
            raise DataError("feature and label counts differ")
        if self.fine_labels.shape[1] != self.hierarchy.k:
            raise DataError(
                f"labels have {self.fine_labels.shape[1]} classes, hierarchy has {self.hierarchy.k}"
            )
        if len(self.class_names) != self.hierarchy.k:
            raise DataError("need one class name per fine class")

    @property
    def p(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def k(self) -> int:
        return self.hierarchy.k

    def labels_index(self) -> np.ndarray:
        return self.fine_labels.argmax(axis=1)

    def coarse_labels(self) -> np.ndarray:
        """Binary labels: 1 when the fine class lies in c0."""
        return self.hierarchy.coarse_labels(self.fine_labels)

    def take(self, idx: np.ndarray, name: str | None = None) -> "LabeledDataset":
        return LabeledDataset(
            features=self.features[idx],
            fine_labels=self.fine_labels[idx],
            hierarchy=self.hierarchy,
            name=name or self.name,
            class_names=list(self.class_names),
            circle_index=None if self.circle_index is None else self.circle_index[idx],
            meta=dict(self.meta),
        )


def subsample(data: LabeledDataset, n: int, seed: int, stratified: bool = True) -> LabeledDataset:
    """Seeded draw of n samples without replacement.

    When stratified, per-class counts follow largest-remainder allocation,
    so each fine class keeps its proportion to within one sample.
    """
    if n < 1 or n > data.p:
        raise DataError(f"cannot draw {n} samples from a dataset of {data.p}")
    rng = np.random.default_rng(seed)
    if not stratified:
        idx = rng.choice(data.p, size=n, replace=False)
        return data.take(np.sort(idx))
    labels = data.labels_index()
    chosen = []
    counts = np.bincount(labels, minlength=data.k)
    exact = n * counts / data.p
    alloc = np.floor(exact).astype(int)
    fractional = exact - alloc
    shortfall = n - alloc.sum()
    # ties broken by class index: stable sort on descending fraction
    for cls in np.argsort(-fractional, kind="stable")[:shortfall]:
        alloc[cls] += 1
    for cls in range(data.k):
        if alloc[cls] == 0:
            continue
        pool = np.flatnonzero(labels == cls)
        chosen.append(rng.choice(pool, size=alloc[cls], replace=False))
    idx = np.sort(np.concatenate(chosen))
    return data.take(idx)


_JSON_SCHEMA = "granlab.dataset/1"
_NPZ_SCHEMA = "granlab.dataset.npz/1"


def save_dataset(data: LabeledDataset, path: str | Path) -> Path:
    path = Path(path)
    if path.suffix == ".json":
        doc = {
            "schema": _JSON_SCHEMA,
            "name": data.name,
            "class_names": list(data.class_names),
            "c0": list(data.hierarchy.c0),
            "c1": list(data.hierarchy.c1),
            "features": data.features.tolist(),
            "labels": data.labels_index().tolist(),
            "meta": data.meta,
        }
        if data.circle_index is not None:
            doc["circle_index"] = data.circle_index.tolist()
        path.write_text(json.dumps(doc, indent=1))
        return path
    if path.suffix != ".npz":
        raise DataError(f"unsupported dataset suffix {path.suffix!r} (use .json or .npz)")
    arrays = {
        "labels": data.labels_index().astype(np.int64),
        "c0": np.asarray(data.hierarchy.c0, dtype=np.int64),
        "c1": np.asarray(data.hierarchy.c1, dtype=np.int64),
        "header": np.str_(
            json.dumps(
                {
                    "schema": _NPZ_SCHEMA,
                    "name": data.name,
                    "class_names": list(data.class_names),
                    "meta": data.meta,
                }
            )
        ),
    }
    scaled = data.features * 255.0
    as_bytes = np.rint(scaled)
    if np.array_equal(scaled, as_bytes) and scaled.min() >= 0 and scaled.max() <= 255:
        arrays["features_u8"] = as_bytes.astype(np.uint8)  # exact: value = byte / 255
    else:
        arrays["features"] = data.features
    if data.circle_index is not None:
        arrays["circle_index"] = data.circle_index.astype(np.int64)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_dataset(path: str | Path) -> LabeledDataset:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        if doc.get("schema") != _JSON_SCHEMA:
            raise DataError(f"{path}: not a {_JSON_SCHEMA} document")
        k = len(doc["class_names"])
        circle = doc.get("circle_index")
        return LabeledDataset(
            features=np.asarray(doc["features"], dtype=float),
            fine_labels=one_hot(np.asarray(doc["labels"]), k),
            hierarchy=Hierarchy(k, tuple(doc["c0"]), tuple(doc["c1"])),
            name=doc["name"],
            class_names=list(doc["class_names"]),
            circle_index=None if circle is None else np.asarray(circle, dtype=np.int64),
            meta=doc.get("meta", {}),
        )
    if path.suffix != ".npz":
        raise DataError(f"unsupported dataset suffix {path.suffix!r} (use .json or .npz)")
    with np.load(path, allow_pickle=False) as archive:
        header = json.loads(str(archive["header"]))
        if header.get("schema") != _NPZ_SCHEMA:
            raise DataError(f"{path}: not a {_NPZ_SCHEMA} archive")
        if "features_u8" in archive:
            features = archive["features_u8"].astype(float) / 255.0
        else:
            features = archive["features"]
        labels = archive["labels"]
        k = len(header["class_names"])
        circle = archive["circle_index"] if "circle_index" in archive else None
        return LabeledDataset(
            features=features,
            fine_labels=one_hot(labels, k),
            hierarchy=Hierarchy(k, tuple(archive["c0"].tolist()), tuple(archive["c1"].tolist())),
            name=header["name"],
            class_names=list(header["class_names"]),
            circle_index=circle,
            meta=header.get("meta", {}),
        )
