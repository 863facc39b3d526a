"""Dense deformation fields, uncertainty maps and volume warping.

Grids are evaluated in chunks against the fitted axis GPs; the variance path
only ever touches diagonals.  Warping is backward: each output voxel pulls
from the input volume at T(x) = affine(x + d(x)) with trilinear sampling and
zero fill outside the input bounds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affine import AffineTransform, apply_affine
from .core_types import GridSpec
from .gp import predict_mean, predict_variance

GRID_CHUNK = 4096


@dataclass(frozen=True)
class Volume:
    """Scalar voxel grid; intensities stored as float32."""

    grid: GridSpec
    values: np.ndarray  # (nx, ny, nz)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.shape != self.grid.dims:
            raise ValueError(f"values shape {v.shape} != grid dims {self.grid.dims}")
        if not np.all(np.isfinite(v)):
            raise ValueError("volume contains non-finite intensities")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class DenseField:
    """Per-voxel displacement vectors (mm)."""

    grid: GridSpec
    vectors: np.ndarray  # (nx, ny, nz, 3)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.shape != self.grid.dims + (3,):
            raise ValueError(f"vectors shape {v.shape} != grid dims {self.grid.dims} + (3,)")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite vectors")
        object.__setattr__(self, "vectors", v)

    def magnitude(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=3)


@dataclass(frozen=True)
class UncertaintyMap:
    """Per-voxel per-axis posterior variances (mm^2)."""

    grid: GridSpec
    variance: np.ndarray  # (nx, ny, nz, 3)

    def __post_init__(self):
        v = np.asarray(self.variance, dtype=float)
        if v.shape != self.grid.dims + (3,):
            raise ValueError(f"variance shape {v.shape} != grid dims {self.grid.dims} + (3,)")
        if np.any(v < 0):
            raise ValueError("negative variance in uncertainty map")
        object.__setattr__(self, "variance", v)

    def trace(self) -> np.ndarray:
        """Scalar summary per voxel: variance trace over the three axes."""
        return np.sum(self.variance, axis=3)


def _evaluate_on_grid(grid: GridSpec, fn, n_channels: int) -> np.ndarray:
    coords = grid.world_coords()
    out = np.empty((coords.shape[0], n_channels))
    for start in range(0, coords.shape[0], GRID_CHUNK):
        chunk = coords[start : start + GRID_CHUNK]
        out[start : start + GRID_CHUNK] = fn(chunk)
    nx, ny, nz = grid.dims
    # x-fastest flat order back to (nx, ny, nz, C)
    return out.reshape((nx, ny, nz, n_channels), order="F")


def generate_dense_field(models, grid: GridSpec) -> DenseField:
    """Posterior mean of the three axis GPs at every voxel center."""

    def fn(chunk):
        return np.stack([predict_mean(m, chunk) for m in models], axis=1)

    return DenseField(grid, _evaluate_on_grid(grid, fn, 3))


def generate_uncertainty_map(models, grid: GridSpec) -> UncertaintyMap:
    """Marginal posterior variances of the three axis GPs at every voxel."""

    def fn(chunk):
        return np.stack([predict_variance(m, chunk) for m in models], axis=1)

    return UncertaintyMap(grid, _evaluate_on_grid(grid, fn, 3))


def trilinear_sample(values: np.ndarray, idx: np.ndarray, fill: float = 0.0):
    """Sample a (nx,ny,nz) array at continuous indices (N,3).

    Returns (samples, inside_mask); anything outside [0, dim-1] per axis gets
    the fill value.
    """
    idx = np.atleast_2d(np.asarray(idx, dtype=float))
    nx, ny, nz = values.shape
    dims = np.array([nx, ny, nz], dtype=float)
    inside = np.all((idx >= 0) & (idx <= dims - 1), axis=1)

    p = np.clip(idx, 0, dims - 1 - 1e-12)
    i0 = np.floor(p).astype(int)
    i0 = np.minimum(i0, np.array([nx, ny, nz]) - 2 if min(nx, ny, nz) > 1 else i0)
    i0 = np.maximum(i0, 0)
    upper = np.minimum(i0 + 1, np.array([nx, ny, nz]) - 1)
    f = p - i0

    x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
    x1, y1, z1 = upper[:, 0], upper[:, 1], upper[:, 2]
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]

    c000 = values[x0, y0, z0]
    c100 = values[x1, y0, z0]
    c010 = values[x0, y1, z0]
    c110 = values[x1, y1, z0]
    c001 = values[x0, y0, z1]
    c101 = values[x1, y0, z1]
    c011 = values[x0, y1, z1]
    c111 = values[x1, y1, z1]

    c00 = c000 * (1 - fx) + c100 * fx
    c10 = c010 * (1 - fx) + c110 * fx
    c01 = c001 * (1 - fx) + c101 * fx
    c11 = c011 * (1 - fx) + c111 * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    out = c0 * (1 - fz) + c1 * fz
    out = np.where(inside, out, fill)
    return out, inside


def warp_volume(vol: Volume, dense_field: DenseField, affine: AffineTransform):
    """Backward-warp: output[v] = vol sampled at affine(x_v + d(x_v)).

    Returns (warped Volume, fill-mask Volume with 1 where the sample landed
    inside the input and 0 where the zero fill applies).
    """
    if dense_field.grid != vol.grid:
        raise ValueError("field grid does not match volume grid; resample the field first")
    grid = vol.grid
    coords = grid.world_coords()
    disp = dense_field.vectors.reshape((-1, 3), order="F")
    target = apply_affine(affine, coords + disp)
    idx = grid.world_to_index(target)
    samples, inside = trilinear_sample(vol.values.astype(float), idx, fill=0.0)
    nx, ny, nz = grid.dims
    warped = samples.reshape((nx, ny, nz), order="F").astype(np.float32)
    mask = inside.astype(np.float32).reshape((nx, ny, nz), order="F")
    return Volume(grid, warped), Volume(grid, mask)


def transform_points(points, dense_field: DenseField, affine: AffineTransform):
    """Forward map affine(p + d(p)) with d trilinearly interpolated.

    Points outside the field grid get zero field contribution; the returned
    mask flags which points were inside.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    idx = dense_field.grid.world_to_index(points)
    disp = np.zeros_like(points)
    inside = None
    for ax in range(3):
        disp[:, ax], inside = trilinear_sample(dense_field.vectors[..., ax], idx, fill=0.0)
    return apply_affine(affine, points + disp), inside


def transform_point(p, dense_field: DenseField, affine: AffineTransform):
    out, _ = transform_points(np.asarray(p, dtype=float)[None, :], dense_field, affine)
    return out[0]
