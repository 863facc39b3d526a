"""Landmark-based affine registration (rough pre-to-post alignment)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_types import MIN_AFFINE_LANDMARKS, as_point
from .errors import DegenerateGeometryError, InsufficientDataError, SingularTransformError

# Relative singular-value cutoff for the rank test of the design matrix.
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class AffineTransform:
    """x -> linear @ x + translation, both in mm."""

    linear: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.linear, dtype=float)
        if L.shape != (3, 3) or not np.all(np.isfinite(L)):
            raise ValueError("linear part must be a finite 3x3 matrix")
        object.__setattr__(self, "linear", L)
        object.__setattr__(self, "translation", as_point(self.translation))

    @staticmethod
    def identity() -> "AffineTransform":
        return AffineTransform(np.eye(3), np.zeros(3))

    @property
    def is_near_singular(self) -> bool:
        return abs(np.linalg.det(self.linear)) < 1e-12

    def as_row_major_12(self):
        """Row-major [A | t] as 12 numbers, the serialization format."""
        m = np.hstack([self.linear, self.translation[:, None]])
        return [float(v) for v in m.ravel()]

    @staticmethod
    def from_row_major_12(values) -> "AffineTransform":
        m = np.asarray(values, dtype=float).reshape(3, 4)
        return AffineTransform(m[:, :3], m[:, 3])


def fit_affine(landmarks) -> AffineTransform:
    """Least-squares affine minimizing sum ||A pre_i + t - post_i||^2.

    All pairs are used (no robust weighting or outlier rejection).
    """
    n = len(landmarks)
    if n < MIN_AFFINE_LANDMARKS:
        raise InsufficientDataError(
            f"affine fit needs >= {MIN_AFFINE_LANDMARKS} pairs, have {n}"
        )
    pre = landmarks.pre_array()
    post = landmarks.post_array()
    design = np.hstack([pre, np.ones((n, 1))])  # (n, 4)

    sv = np.linalg.svd(design, compute_uv=False)
    rank = int(np.sum(sv > RANK_RTOL * sv[0]))
    if rank < 4:
        raise DegenerateGeometryError(
            f"pre-landmarks are degenerate (design rank {rank} < 4; coplanar or worse)",
            rank=rank,
        )

    sol, *_ = np.linalg.lstsq(design, post, rcond=None)  # (4, 3)
    return AffineTransform(sol[:3].T, sol[3])


def apply_affine(affine: AffineTransform, p):
    """Apply to a single point or an (N,3) array of points."""
    p = np.asarray(p, dtype=float)
    return p @ affine.linear.T + affine.translation


def invert_affine(affine: AffineTransform) -> AffineTransform:
    if abs(np.linalg.det(affine.linear)) < 1e-12:
        raise SingularTransformError("affine is numerically singular; cannot invert")
    inv = np.linalg.inv(affine.linear)
    return AffineTransform(inv, -inv @ affine.translation)
