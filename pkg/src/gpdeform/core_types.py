"""Core domain types: landmarks, displacement observations and voxel grids.

Points are plain numpy arrays of shape (3,), world coordinates in mm.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularTransformError

# Pre-locations closer than this are considered duplicates: they carry no
# physical information at ultrasound resolution and make the Gram matrix
# singular.
DUPLICATE_PRE_TOL = 1e-9

# An affine fit needs at least 4 non-coplanar pairs (12 unknowns, rank-4
# design rows).
MIN_AFFINE_LANDMARKS = 4


def as_point(p) -> np.ndarray:
    """Coerce to a finite float64 (3,) array."""
    a = np.asarray(p, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"expected 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite coordinate: {a}")
    return a


@dataclass(frozen=True)
class LandmarkPair:
    """One corresponding point pair: pre-volume and post-volume coordinates (mm)."""

    id: int
    pre: np.ndarray
    post: np.ndarray
    source: str = "file"  # "file" or "manual"

    def __post_init__(self):
        object.__setattr__(self, "pre", as_point(self.pre))
        object.__setattr__(self, "post", as_point(self.post))
        if self.source not in ("file", "manual"):
            raise ValueError(f"unknown landmark source {self.source!r}")


@dataclass(frozen=True)
class LandmarkSet:
    """Ordered collection of landmark pairs with unique ids and pre-locations."""

    pairs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        report = validate_landmark_set(self)
        if report.violations:
            raise ValueError("invalid landmark set: " + "; ".join(report.violations))

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def pre_array(self) -> np.ndarray:
        if not self.pairs:
            return np.zeros((0, 3))
        return np.array([p.pre for p in self.pairs])

    def post_array(self) -> np.ndarray:
        if not self.pairs:
            return np.zeros((0, 3))
        return np.array([p.post for p in self.pairs])

    def ids(self):
        return [p.id for p in self.pairs]

    def with_pair(self, pair: LandmarkPair) -> "LandmarkSet":
        return LandmarkSet(self.pairs + (pair,))

    def without_id(self, pair_id: int) -> "LandmarkSet":
        kept = tuple(p for p in self.pairs if p.id != pair_id)
        if len(kept) == len(self.pairs):
            raise KeyError(f"no landmark with id {pair_id}")
        return LandmarkSet(kept)

    def next_id(self) -> int:
        return max((p.id for p in self.pairs), default=-1) + 1


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_landmark_set: hard violations plus advisory warnings."""

    violations: tuple = ()
    warnings: tuple = ()

    @property
    def valid(self) -> bool:
        return not self.violations


def validate_landmark_set(landmarks) -> ValidationReport:
    """Report duplicate ids, duplicate pre-locations and non-finite values.

    Report-only: never raises. The set is valid iff `violations` is empty.
    """
    pairs = tuple(landmarks.pairs) if hasattr(landmarks, "pairs") else tuple(landmarks)
    violations = []
    warnings = []

    seen_ids = {}
    for p in pairs:
        if p.id in seen_ids:
            violations.append(f"duplicate landmark id {p.id}")
        seen_ids[p.id] = p
        for name, v in (("pre", p.pre), ("post", p.post)):
            if not np.all(np.isfinite(np.asarray(v, dtype=float))):
                violations.append(f"non-finite {name} coordinate on id {p.id}")

    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            d = np.linalg.norm(np.asarray(pairs[i].pre, float) - np.asarray(pairs[j].pre, float))
            if d < DUPLICATE_PRE_TOL:
                violations.append(
                    f"duplicate pre-location: ids {pairs[i].id} and {pairs[j].id} "
                    f"are {d:.3g} mm apart (< {DUPLICATE_PRE_TOL:g})"
                )

    if len(pairs) < MIN_AFFINE_LANDMARKS:
        warnings.append(
            f"insufficient for affine: need >= {MIN_AFFINE_LANDMARKS} non-coplanar pairs, have {len(pairs)}"
        )

    return ValidationReport(tuple(violations), tuple(warnings))


@dataclass(frozen=True)
class DisplacementObservation:
    """Displacement vector d (mm) observed at a pre-space location."""

    location: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "location", as_point(self.location))
        object.__setattr__(self, "d", as_point(self.d))


def observation_arrays(observations):
    """Stack observations into (N,3) location and displacement arrays."""
    obs = list(observations)
    if not obs:
        return np.zeros((0, 3)), np.zeros((0, 3))
    X = np.array([o.location for o in obs])
    D = np.array([o.d for o in obs])
    return X, D


def compute_displacements(landmarks, affine):
    """Residual displacements after affine pre-alignment.

    The affine maps pre space to post space; each post point is pulled back
    through the inverse so that the residual d lives in pre space at the pre
    location.  The total transform is then T(x) = affine(x + d(x)).
    """
    from . import affine as affine_mod  # local import avoids a module cycle

    if abs(np.linalg.det(affine.linear)) < 1e-12:
        raise SingularTransformError("affine linear part is singular; degenerate fit")
    inv = affine_mod.invert_affine(affine)
    out = []
    for p in landmarks.pairs:
        pulled = affine_mod.apply_affine(inv, p.post)
        out.append(DisplacementObservation(p.pre, pulled - p.pre))
    return out


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Axis-aligned voxel grid: origin (mm), spacing (mm/voxel), dims (voxels)."""

    origin: np.ndarray
    spacing: np.ndarray
    dims: tuple

    def __eq__(self, other):
        if not isinstance(other, GridSpec):
            return NotImplemented
        return (
            self.dims == other.dims
            and np.array_equal(self.origin, other.origin)
            and np.array_equal(self.spacing, other.spacing)
        )

    def __hash__(self):
        return hash((tuple(self.origin), tuple(self.spacing), self.dims))

    def __post_init__(self):
        object.__setattr__(self, "origin", as_point(self.origin))
        sp = np.asarray(self.spacing, dtype=float)
        if sp.shape != (3,) or not np.all(sp > 0):
            raise ValueError(f"spacing must be 3 positive values, got {self.spacing}")
        object.__setattr__(self, "spacing", sp)
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValueError(f"dims must be 3 positive integers, got {self.dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def n_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def world_coords(self) -> np.ndarray:
        """Voxel-center world coordinates, (n_voxels, 3), x-fastest order."""
        nx, ny, nz = self.dims
        ix, iy, iz = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
        idx = np.stack(
            [ix.ravel(order="F"), iy.ravel(order="F"), iz.ravel(order="F")], axis=1
        ).astype(float)
        return self.origin + idx * self.spacing

    def world_to_index(self, points: np.ndarray) -> np.ndarray:
        """Continuous voxel indices for world points (broadcasts over rows)."""
        return (np.asarray(points, dtype=float) - self.origin) / self.spacing
