"""Bit-exact ingestion of the image benchmarks and hierarchical grouping.

Supports the IDX pair format (MNIST, K-MNIST, F-MNIST) and the CIFAR-10
binary batch format. Files are looked up under a data directory (flag
--data-dir or the GRANLAB_DATA_DIR environment variable) using the
official distribution names; .gz copies are accepted. Nothing is ever
downloaded.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import LabeledDataset, one_hot
from .exceptions import ConfigError, ParseError
from .losses import Hierarchy

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 pixels

DATASET_CLASSES = {
    "mnist": [str(i) for i in range(10)],
    "kmnist": ["o", "ki", "su", "tsu", "na", "ha", "ma", "ya", "re", "wo"],
    "fmnist": [
        "T-shirt/top", "Trouser", "Pullover", "Dress", "Coat",
        "Sandal", "Shirt", "Sneaker", "Bag", "Ankle boot",
    ],
    "cifar10": [
        "airplane", "automobile", "bird", "cat", "deer",
        "dog", "frog", "horse", "ship", "truck",
    ],
}


def _as_bytes(stream) -> bytes:
    if isinstance(stream, (bytes, bytearray)):
        return bytes(stream)
    return stream.read()


def _read_be32(data: bytes, offset: int, what: str) -> int:
    if offset + 4 > len(data):
        raise ParseError(f"truncated {what} at byte {offset}: need 4 bytes, have {len(data) - offset}")
    return struct.unpack_from(">I", data, offset)[0]


def parse_idx(image_stream, label_stream) -> tuple[np.ndarray, np.ndarray]:
    """Parse an IDX image/label file pair.

    Returns (images, labels) with images of shape (count, rows, cols) uint8
    and labels of shape (count,) uint8. Rejects wrong magic numbers,
    truncated or oversized payloads, and count mismatches.
    """
    img = _as_bytes(image_stream)
    lab = _as_bytes(label_stream)

    magic = _read_be32(img, 0, "image magic")
    if magic != IDX_IMAGE_MAGIC:
        raise ParseError(f"bad image magic 0x{magic:08x} at byte 0, expected 0x{IDX_IMAGE_MAGIC:08x}")
    count = _read_be32(img, 4, "image count")
    rows = _read_be32(img, 8, "row count")
    cols = _read_be32(img, 12, "column count")
    payload = count * rows * cols
    if len(img) < 16 + payload:
        raise ParseError(
            f"truncated image payload at byte {len(img)}: expected {16 + payload} bytes total"
        )
    if len(img) > 16 + payload:
        raise ParseError(f"trailing data in image file at byte {16 + payload}")
    images = np.frombuffer(img, dtype=np.uint8, count=payload, offset=16).reshape(count, rows, cols)

    magic = _read_be32(lab, 0, "label magic")
    if magic != IDX_LABEL_MAGIC:
        raise ParseError(f"bad label magic 0x{magic:08x} at byte 0, expected 0x{IDX_LABEL_MAGIC:08x}")
    lab_count = _read_be32(lab, 4, "label count")
    if len(lab) < 8 + lab_count:
        raise ParseError(
            f"truncated label payload at byte {len(lab)}: expected {8 + lab_count} bytes total"
        )
    if len(lab) > 8 + lab_count:
        raise ParseError(f"trailing data in label file at byte {8 + lab_count}")
    labels = np.frombuffer(lab, dtype=np.uint8, count=lab_count, offset=8)

    if count != lab_count:
        raise ParseError(f"image file has {count} items but label file has {lab_count}")
    return images.copy(), labels.copy()


def write_idx(images: np.ndarray, labels: np.ndarray) -> tuple[bytes, bytes]:
    """Serialize to the IDX pair format; inverse of parse_idx."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    count, rows, cols = images.shape
    img = struct.pack(">IIII", IDX_IMAGE_MAGIC, count, rows, cols) + images.tobytes()
    lab = struct.pack(">II", IDX_LABEL_MAGIC, labels.shape[0]) + labels.tobytes()
    return img, lab


def parse_cifar10(batch_streams) -> tuple[np.ndarray, np.ndarray]:
    """Parse one or more CIFAR-10 binary batches into (images, labels).

    Each record is 1 label byte followed by 3072 channel-planar pixel
    bytes; images come back flattened to (count, 3072) uint8.
    """
    all_images, all_labels = [], []
    for i, stream in enumerate(batch_streams):
        data = _as_bytes(stream)
        if len(data) == 0:
            raise ParseError(f"batch {i}: empty stream")
        if len(data) % CIFAR_RECORD_BYTES:
            raise ParseError(
                f"batch {i}: length {len(data)} is not a multiple of {CIFAR_RECORD_BYTES}"
            )
        records = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        all_labels.append(records[:, 0].copy())
        all_images.append(records[:, 1:].copy())
    if not all_images:
        raise ParseError("no CIFAR batches supplied")
    return np.vstack(all_images), np.concatenate(all_labels)


def write_cifar10(images: np.ndarray, labels: np.ndarray) -> bytes:
    """Serialize to the CIFAR-10 binary batch format; inverse of parse_cifar10."""
    images = np.asarray(images, dtype=np.uint8).reshape(len(labels), -1)
    records = np.hstack((np.asarray(labels, dtype=np.uint8)[:, None], images))
    return records.tobytes()


def normalize(raw: np.ndarray) -> np.ndarray:
    """Map pixel bytes to [0, 1]: exactly byte / 255."""
    return np.asarray(raw, dtype=float) / 255.0


@dataclass
class RawDataset:
    """Parsed but ungrouped data: byte features and native integer labels."""

    features: np.ndarray  # (p, d) uint8, images flattened
    labels: np.ndarray    # (p,) int
    class_names: list[str]
    name: str


@dataclass
class GroupingSpec:
    """Two disjoint lists of class names; unlisted classes are dropped.

    The fine label order of the resulting dataset is fine_class_names,
    which defaults to c0_names followed by c1_names.
    """

    dataset: str
    c0_names: list[str]
    c1_names: list[str]
    fine_class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.fine_class_names:
            self.fine_class_names = list(self.c0_names) + list(self.c1_names)

    @classmethod
    def from_json(cls, text: str) -> "GroupingSpec":
        doc = json.loads(text)
        return cls(
            dataset=doc["dataset"],
            c0_names=list(doc["c0"]),
            c1_names=list(doc["c1"]),
            fine_class_names=list(doc.get("fine_class_names", [])),
        )

    def to_json(self) -> str:
        return json.dumps(
            {"dataset": self.dataset, "c0": self.c0_names, "c1": self.c1_names}, indent=1
        )


GROUPING_PRESETS = {
    "mnist_0to3_vs_4to8": GroupingSpec("mnist", ["0", "1", "2", "3"], ["4", "5", "6", "7", "8"]),
    "kmnist_default": GroupingSpec("kmnist", ["o", "ki", "su", "tsu"], ["na", "ha", "ma", "ya"]),
    "fmnist_default": GroupingSpec(
        "fmnist",
        ["T-shirt/top", "Sandal", "Dress", "Ankle boot"],
        ["Pullover", "Sneaker", "Shirt", "Bag"],
    ),
    "cifar_vehicles_vs_animals": GroupingSpec(
        "cifar10",
        ["airplane", "automobile", "ship", "truck"],
        ["dog", "deer", "bird", "cat"],
    ),
    # four-class CIFAR tasks ordered by how redundant the fine boundaries
    # are for the coarse split
    "cifar4_high_redundancy": GroupingSpec("cifar10", ["cat", "dog"], ["automobile", "truck"]),
    "cifar4_medium_redundancy": GroupingSpec("cifar10", ["cat", "automobile"], ["dog", "truck"]),
    "cifar4_low_redundancy": GroupingSpec("cifar10", ["cat", "truck"], ["dog", "automobile"]),
}


def resolve_grouping(name_or_path: str) -> GroupingSpec:
    if name_or_path in GROUPING_PRESETS:
        return GROUPING_PRESETS[name_or_path]
    path = Path(name_or_path)
    if path.exists():
        return GroupingSpec.from_json(path.read_text())
    raise ConfigError(
        f"unknown grouping {name_or_path!r}: not a preset "
        f"({', '.join(sorted(GROUPING_PRESETS))}) and not a file"
    )


def apply_grouping(raw: RawDataset, spec: GroupingSpec) -> LabeledDataset:
    """Keep only the listed classes, normalize, re-index, build the hierarchy."""
    for side, names in (("c0", spec.c0_names), ("c1", spec.c1_names)):
        if not names:
            raise ConfigError(f"{side} must name at least one class")
        unknown = [n for n in names if n not in raw.class_names]
        if unknown:
            raise ConfigError(
                f"unknown class names {unknown} for {raw.name}; valid: {raw.class_names}"
            )
    if set(spec.c0_names) & set(spec.c1_names):
        raise ConfigError("c0 and c1 must be disjoint")
    if sorted(spec.fine_class_names) != sorted(spec.c0_names + spec.c1_names):
        raise ConfigError("fine_class_names must be a permutation of c0 + c1")

    native_index = {name: i for i, name in enumerate(raw.class_names)}
    fine_of_native = {native_index[name]: j for j, name in enumerate(spec.fine_class_names)}
    keep = np.isin(raw.labels, list(fine_of_native))
    native = raw.labels[keep]
    fine = np.array([fine_of_native[v] for v in native], dtype=np.int64)
    k = len(spec.fine_class_names)
    c0 = tuple(spec.fine_class_names.index(n) for n in spec.c0_names)
    c1 = tuple(spec.fine_class_names.index(n) for n in spec.c1_names)
    return LabeledDataset(
        features=normalize(raw.features[keep]),
        fine_labels=one_hot(fine, k),
        hierarchy=Hierarchy(k, c0, c1),
        name=f"{raw.name}:{'+'.join(spec.c0_names)}_vs_{'+'.join(spec.c1_names)}",
        class_names=list(spec.fine_class_names),
    )


def _read_maybe_gz(path: Path) -> bytes:
    data = path.read_bytes()
    if data[:2] == b"\x1f\x8b":
        return gzip.decompress(data)
    return data


def _find_file(candidates: list[Path]) -> Path:
    for path in candidates:
        if path.exists():
            return path
        gz = path.with_name(path.name + ".gz")
        if gz.exists():
            return gz
    searched = ", ".join(str(p) for p in candidates)
    raise FileNotFoundError(f"none of the expected dataset files exist: {searched}")


def load_raw(dataset: str, data_dir: str | Path, split: str = "train") -> RawDataset:
    """Load one split of a named dataset from disk.

    MNIST-family files use the official IDX names (train-images-idx3-ubyte
    etc.), CIFAR-10 the binary batches directory. Both <data_dir>/<dataset>/
    and <data_dir>/ itself are searched.
    """
    if dataset not in DATASET_CLASSES:
        raise ConfigError(f"unknown dataset {dataset!r}; valid: {sorted(DATASET_CLASSES)}")
    if split not in ("train", "test"):
        raise ConfigError(f"split must be 'train' or 'test', got {split!r}")
    base = Path(data_dir)
    roots = [base / dataset, base]
    if dataset == "cifar10":
        batch_names = (
            [f"data_batch_{i}.bin" for i in range(1, 6)] if split == "train" else ["test_batch.bin"]
        )
        streams = []
        for name in batch_names:
            path = _find_file([root / sub / name for root in roots for sub in ("cifar-10-batches-bin", ".")])
            streams.append(_read_maybe_gz(path))
        images, labels = parse_cifar10(streams)
        features = images
    else:
        prefix = "train" if split == "train" else "t10k"
        img_path = _find_file([root / f"{prefix}-images-idx3-ubyte" for root in roots])
        lab_path = _find_file([root / f"{prefix}-labels-idx1-ubyte" for root in roots])
        images, labels = parse_idx(_read_maybe_gz(img_path), _read_maybe_gz(lab_path))
        features = images.reshape(images.shape[0], -1)
    return RawDataset(
        features=features,
        labels=labels.astype(np.int64),
        class_names=list(DATASET_CLASSES[dataset]),
        name=dataset,
    )


def load_grouped(dataset: str, grouping: str, data_dir: str | Path, split: str = "train") -> LabeledDataset:
    spec = resolve_grouping(grouping)
    if spec.dataset != dataset:
        raise ConfigError(f"grouping targets {spec.dataset!r} but dataset is {dataset!r}")
    return apply_grouping(load_raw(dataset, data_dir, split), spec)
