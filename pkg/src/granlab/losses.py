"""Training objectives for two-level label hierarchies.

A hierarchy partitions K fine classes into two coarse groups C0 and C1.
The coarse label of a sample is Y = 1 when its fine class lies in C0.
Four objectives are provided:

  coarse:  binary cross-entropy on the aggregated coarse probability
  fine:    cross-entropy over the K fine classes
  intra:   the within-coarse-class confusion term
  hybrid:  coarse + beta * intra, beta in [0, 1]

They satisfy the exact identity  fine = coarse + intra  when the coarse
probability is obtained by summing fine probabilities over C0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DataError

# Probabilities are floored at this value inside logarithms and ratio
# denominators so no objective can return inf.
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class Hierarchy:
    """Partition of fine classes {0, ..., k-1} into two coarse groups.

    Samples whose fine class is in c0 carry coarse label 1, those in c1
    carry coarse label 0.
    """

    k: int
    c0: tuple[int, ...]
    c1: tuple[int, ...]

    def __post_init__(self):
        c0 = tuple(sorted(int(i) for i in self.c0))
        c1 = tuple(sorted(int(i) for i in self.c1))
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "c1", c1)
        if self.k < 2:
            raise ConfigError(f"hierarchy needs k >= 2, got k={self.k}")
        if not c0 or not c1:
            raise ConfigError("both coarse groups must be non-empty")
        if set(c0) & set(c1):
            raise ConfigError(f"coarse groups overlap: {set(c0) & set(c1)}")
        if set(c0) | set(c1) != set(range(self.k)):
            raise ConfigError(
                f"coarse groups must cover 0..{self.k - 1} exactly, "
                f"got c0={c0} c1={c1}"
            )

    def c0_mask(self) -> np.ndarray:
        """Indicator vector over fine classes, 1.0 where the class is in c0."""
        mask = np.zeros(self.k)
        mask[list(self.c0)] = 1.0
        return mask

    def coarse_labels(self, onehot: np.ndarray) -> np.ndarray:
        """Map one-hot fine labels (batch, k) to binary coarse labels (batch,)."""
        return onehot @ self.c0_mask()


@dataclass(frozen=True)
class LossKind:
    """One of the four objectives. Use the module constants or hybrid()."""

    kind: str
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("coarse", "fine", "intra", "hybrid"):
            raise ConfigError(f"unknown loss kind {self.kind!r}")
        if self.kind == "hybrid" and not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"hybrid beta must be in [0, 1], got {self.beta}")


COARSE = LossKind("coarse")
FINE = LossKind("fine")
INTRA = LossKind("intra")


def hybrid(beta: float) -> LossKind:
    return LossKind("hybrid", float(beta))


def _check_rows_sum_to_one(probs, tol=1e-6):
    if probs.ndim != 2:
        raise DataError(f"expected a (batch, k) probability matrix, got shape {probs.shape}")
    if probs.shape[0] == 0:
        raise DataError("empty batch")
    err = np.abs(probs.sum(axis=1) - 1.0).max()
    if err > tol:
        raise DataError(f"probability rows must sum to 1 (max deviation {err:.3g})")


def _check_onehot(y, k):
    if y.ndim != 2 or y.shape[1] != k:
        raise DataError(f"expected one-hot labels of shape (batch, {k}), got {y.shape}")
    ok = np.all((y == 0.0) | (y == 1.0)) and np.all(y.sum(axis=1) == 1.0)
    if not ok:
        raise DataError("labels are not one-hot rows")


def aggregate_fine_to_coarse(fine_probs: np.ndarray, h: Hierarchy) -> np.ndarray:
    """Sum fine-class probabilities over c0, giving the coarse probability per row."""
    _check_rows_sum_to_one(fine_probs)
    if fine_probs.shape[1] != h.k:
        raise ConfigError(
            f"hierarchy has k={h.k} but probabilities have {fine_probs.shape[1]} columns"
        )
    return fine_probs[:, list(h.c0)].sum(axis=1)


def loss_coarse(coarse_probs: np.ndarray, coarse_labels: np.ndarray) -> float:
    """Binary cross-entropy of the aggregated coarse prediction.

    -(1/p) * sum(Y log Yhat + (1-Y) log(1-Yhat)), probabilities floored.
    """
    probs = np.asarray(coarse_probs, dtype=float).reshape(-1)
    y = np.asarray(coarse_labels, dtype=float).reshape(-1)
    if probs.size == 0:
        raise DataError("empty batch")
    if probs.shape != y.shape:
        raise DataError(f"got {probs.size} predictions but {y.size} labels")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("coarse labels must be 0 or 1")
    terms = y * np.log(np.maximum(probs, PROB_FLOOR))
    terms += (1.0 - y) * np.log(np.maximum(1.0 - probs, PROB_FLOOR))
    return float(-terms.mean())


def loss_fine(fine_probs: np.ndarray, onehot: np.ndarray) -> float:
    """Cross-entropy over the K fine classes: -(1/p) * sum_mu log(p_true)."""
    _check_rows_sum_to_one(fine_probs)
    _check_onehot(onehot, fine_probs.shape[1])
    p_true = (fine_probs * onehot).sum(axis=1)
    return float(-np.log(np.maximum(p_true, PROB_FLOOR)).mean())


def loss_intra(fine_probs: np.ndarray, onehot: np.ndarray, h: Hierarchy) -> float:
    """Within-coarse-class confusion term.

    Per sample with true class i in coarse group C:
       log(1 + sum_{j in C, j != i} p_j / p_i)
    which equals loss_fine - loss_coarse on the same predictions. Zero when
    every coarse group contains a single fine class.
    """
    _check_rows_sum_to_one(fine_probs)
    _check_onehot(onehot, fine_probs.shape[1])
    if fine_probs.shape[1] != h.k:
        raise ConfigError(
            f"hierarchy has k={h.k} but probabilities have {fine_probs.shape[1]} columns"
        )
    mask = h.c0_mask()
    in_c0 = onehot @ mask  # 1 when the true class is in c0
    side = np.where(in_c0[:, None] > 0.5, mask[None, :], 1.0 - mask[None, :])
    p_true = (fine_probs * onehot).sum(axis=1)
    same_side_others = (fine_probs * side).sum(axis=1) - p_true
    ratio = same_side_others / np.maximum(p_true, PROB_FLOOR)
    return float(np.log1p(np.maximum(ratio, 0.0)).mean())


def loss_hybrid(fine_probs: np.ndarray, onehot: np.ndarray, h: Hierarchy, beta: float) -> float:
    """coarse + beta * intra, computed from fine probabilities via aggregation."""
    if not 0.0 <= beta <= 1.0:
        raise ConfigError(f"beta must be in [0, 1], got {beta}")
    coarse = loss_coarse(aggregate_fine_to_coarse(fine_probs, h), h.coarse_labels(onehot))
    return coarse + beta * loss_intra(fine_probs, onehot, h)


@dataclass(frozen=True)
class DecompositionReport:
    loss_fine: float
    loss_coarse: float
    loss_intra: float
    residual: float


def verify_decomposition(fine_probs: np.ndarray, onehot: np.ndarray, h: Hierarchy) -> DecompositionReport:
    """Evaluate all three losses and the residual |fine - coarse - intra|."""
    lf = loss_fine(fine_probs, onehot)
    lc = loss_coarse(aggregate_fine_to_coarse(fine_probs, h), h.coarse_labels(onehot))
    li = loss_intra(fine_probs, onehot, h)
    return DecompositionReport(lf, lc, li, abs(lf - lc - li))


def evaluate_loss(
    probs: np.ndarray,
    onehot: np.ndarray,
    h: Hierarchy | None,
    loss: LossKind,
) -> float:
    """Dispatch on loss kind for softmax-head probabilities."""
    if loss.kind == "fine":
        return loss_fine(probs, onehot)
    if h is None:
        raise ConfigError(f"loss kind {loss.kind!r} needs a hierarchy")
    if loss.kind == "coarse":
        return loss_coarse(aggregate_fine_to_coarse(probs, h), h.coarse_labels(onehot))
    if loss.kind == "intra":
        return loss_intra(probs, onehot, h)
    return loss_hybrid(probs, onehot, h, loss.beta)
