"""Dataset containers, design matrices, and seeded labeled/unlabeled splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError, ParameterError

# 64-bit seed fed to numpy's PCG64 generator.
Seed = int


def make_rng(seed: Seed) -> np.random.Generator:
    """Return the generator used everywhere randomness is needed."""
    return np.random.default_rng(seed)


def derive_seed(seed: Seed, salt: int) -> int:
    """Deterministically derive an independent child seed.

    Keeps consumers that share one user-facing seed (data generation,
    ratio-model fitting, ...) on distinct PCG64 streams.
    """
    return int(np.random.SeedSequence((seed, salt)).generate_state(1, np.uint64)[0])


def _as_matrix(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"{name} must be a 2-d array, got ndim={x.ndim}")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{name} contains non-finite values")
    return np.ascontiguousarray(x)


def _as_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise DataError(f"labels have shape {y.shape}, expected ({n},)")
    vals = np.unique(y)
    if not np.all(np.isin(vals, (0, 1))):
        raise DataError("labels must take values in {0, 1}")
    return y.astype(np.uint8)


@dataclass(frozen=True)
class SplitDataset:
    """Labeled block, unlabeled block, and optional held-out test block.

    Labeled and unlabeled feature matrices must share the same number of
    columns; the unlabeled block may be empty (supervised-only fitting).
    """

    labeled_x: np.ndarray
    labeled_y: np.ndarray
    unlabeled_x: np.ndarray
    test_x: Optional[np.ndarray] = None
    test_y: Optional[np.ndarray] = None

    def __post_init__(self):
        lx = _as_matrix(self.labeled_x, "labeled_x")
        if lx.shape[0] == 0:
            raise DataError("empty design")
        ly = _as_labels(self.labeled_y, lx.shape[0])
        ux = _as_matrix(self.unlabeled_x, "unlabeled_x")
        if ux.shape[0] > 0 and ux.shape[1] != lx.shape[1]:
            raise DataError(
                f"unlabeled_x has {ux.shape[1]} columns, labeled_x has {lx.shape[1]}"
            )
        if ux.shape[0] == 0:
            ux = ux.reshape(0, lx.shape[1])
        object.__setattr__(self, "labeled_x", lx)
        object.__setattr__(self, "labeled_y", ly)
        object.__setattr__(self, "unlabeled_x", ux)
        if (self.test_x is None) != (self.test_y is None):
            raise DataError("test_x and test_y must be provided together")
        if self.test_x is not None:
            tx = _as_matrix(self.test_x, "test_x")
            if tx.shape[1] != lx.shape[1]:
                raise DataError(
                    f"test_x has {tx.shape[1]} columns, labeled_x has {lx.shape[1]}"
                )
            ty = _as_labels(self.test_y, tx.shape[0])
            object.__setattr__(self, "test_x", tx)
            object.__setattr__(self, "test_y", ty)

    @property
    def n_labeled(self) -> int:
        return self.labeled_x.shape[0]

    @property
    def n_unlabeled(self) -> int:
        return self.unlabeled_x.shape[0]

    @property
    def n_features(self) -> int:
        return self.labeled_x.shape[1]


def build_design(x: np.ndarray) -> np.ndarray:
    """Prepend an all-ones intercept column: (n, p) -> (n, p + 1)."""
    x = _as_matrix(x, "x")
    if x.shape[0] == 0:
        raise DataError("empty design")
    return np.hstack([np.ones((x.shape[0], 1)), x])


def split_labeled_unlabeled(
    x: np.ndarray,
    y: np.ndarray,
    labeled_fraction: float,
    seed: Seed,
) -> SplitDataset:
    """Randomly split a fully labeled pool, discarding labels on the rest.

    The labeled count is round(labeled_fraction * n) with exact halves
    rounded up, floored at one point so a model can always be fit.
    """
    x = _as_matrix(x, "x")
    if x.shape[0] == 0:
        raise DataError("empty design")
    y = _as_labels(y, x.shape[0])
    if not 0.0 < labeled_fraction <= 1.0:
        raise ParameterError(
            f"labeled_fraction must lie in (0, 1], got {labeled_fraction}"
        )
    n = x.shape[0]
    n_labeled = min(n, max(1, int(np.floor(labeled_fraction * n + 0.5))))
    perm = make_rng(seed).permutation(n)
    lab, unlab = perm[:n_labeled], perm[n_labeled:]
    return SplitDataset(
        labeled_x=x[lab],
        labeled_y=y[lab],
        unlabeled_x=x[unlab],
    )
