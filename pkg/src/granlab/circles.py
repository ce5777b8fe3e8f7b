"""Concentric-circles dataset with tunable boundary redundancy.

K circles at radii 2j/K (j = 1..K) alternate between the two coarse
classes; odd circles carry coarse label 1, so their fine classes form c0.
Each circle j is dominated by its own fine class. A fraction rho of its
angular measure is reassigned to the other K/2 - 1 fine classes of the
same coarse group as contiguous arcs, which makes fine decision
boundaries redundant for the coarse task without ever changing a point's
coarse label. The largest admissible rho is 1 - 2/K.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import LabeledDataset, one_hot
from .exceptions import ConfigError, DataError
from .losses import Hierarchy

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class CircleSpec:
    k: int = 8
    n_points: int = 5000
    rho: float = 0.0
    radial_jitter: float | None = None  # defaults to 0.02 * (2 / k)
    sector_offset_per_circle: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.k < 2 or self.k % 2:
            raise ConfigError(f"k must be an even integer >= 2, got {self.k}")
        if self.n_points < 1:
            raise ConfigError("n_points must be >= 1")
        bound = 1.0 - 2.0 / self.k
        if not 0.0 <= self.rho <= bound:
            raise ConfigError(
                f"rho must lie in [0, 1 - 2/K] = [0, {bound:g}] for K={self.k}, got {self.rho}"
            )
        if self.radial_jitter is not None and self.radial_jitter < 0:
            raise ConfigError("radial_jitter must be >= 0")

    @property
    def jitter(self) -> float:
        if self.radial_jitter is None:
            return 0.02 * (2.0 / self.k)
        return self.radial_jitter


def circle_hierarchy(k: int) -> Hierarchy:
    """Fine classes of odd circles (label j-1 for circle j) form c0."""
    c0 = tuple(j - 1 for j in range(1, k + 1) if j % 2 == 1)
    c1 = tuple(j - 1 for j in range(1, k + 1) if j % 2 == 0)
    return Hierarchy(k, c0, c1)


def generate_circles(spec: CircleSpec) -> LabeledDataset:
    """Sample the dataset described by spec; deterministic in spec.seed."""
    k = spec.k
    half = k // 2
    rng = np.random.default_rng(spec.seed)
    base, remainder = divmod(spec.n_points, k)

    features = []
    labels = []
    circle_index = []
    dominant_measure = TWO_PI * (1.0 - spec.rho)
    minority_measure = TWO_PI * spec.rho / (half - 1) if half > 1 else 0.0

    for j in range(1, k + 1):  # j is the 1-based circle index, innermost first
        count = base + (1 if j <= remainder else 0)
        if count == 0:
            continue
        theta = rng.uniform(0.0, TWO_PI, count)
        radius = 2.0 * j / k + rng.uniform(-spec.jitter, spec.jitter, count)
        features.append(np.column_stack((radius * np.cos(theta), radius * np.sin(theta))))
        circle_index.append(np.full(count, j - 1, dtype=np.int64))

        # circles of the same parity, innermost first; position of j among them
        parity_peers = [c for c in range(1, k + 1) if c % 2 == j % 2]
        position = parity_peers.index(j)
        relative = np.mod(theta - j * spec.sector_offset_per_circle, TWO_PI)
        point_labels = np.full(count, j - 1, dtype=np.int64)
        if spec.rho > 0.0 and half > 1:
            minority = relative >= dominant_measure
            slot = np.floor((relative[minority] - dominant_measure) / minority_measure).astype(int)
            np.clip(slot, 0, half - 2, out=slot)
            peers = np.asarray(parity_peers, dtype=np.int64)
            point_labels[minority] = peers[(position + 1 + slot) % half] - 1
        labels.append(point_labels)

    all_labels = np.concatenate(labels)
    return LabeledDataset(
        features=np.vstack(features),
        fine_labels=one_hot(all_labels, k),
        hierarchy=circle_hierarchy(k),
        name=f"circles-k{k}-rho{spec.rho:g}",
        class_names=[f"circle{j}" for j in range(1, k + 1)],
        circle_index=np.concatenate(circle_index),
        meta={"circle_spec": asdict(spec)},
    )


def redundancy_of(data: LabeledDataset) -> float:
    """Mean over circles of the fraction not occupied by the modal fine class.

    The inverse check for the generator: redundancy_of(generate_circles(s))
    estimates s.rho up to sampling noise.
    """
    if data.circle_index is None:
        raise DataError("dataset carries no circle metadata")
    labels = data.labels_index()
    fractions = []
    for circle in np.unique(data.circle_index):
        members = labels[data.circle_index == circle]
        modal = np.bincount(members, minlength=data.k).max()
        fractions.append(1.0 - modal / members.size)
    return float(np.mean(fractions))
