"""File formats: landmark JSON, raw volume/field payloads, model bundles, config.

Volumes and fields are a raw little-endian float32 payload plus a JSON
sidecar header; landmarks, bundles and configs are versioned JSON.  All
parsers return structured FormatError diagnostics instead of crashing.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .affine import AffineTransform
from .core_types import GridSpec, LandmarkPair, LandmarkSet
from .errors import FormatError
from .field import DenseField, UncertaintyMap, Volume
from .gp import KernelSpec

LANDMARK_SCHEMA_VERSION = 1
BUNDLE_SCHEMA_VERSION = 1

_PAIR_KEYS = {"id", "pre", "post", "source"}


def _load_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not valid UTF-8 ({exc.reason} at byte {exc.start})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top-level value must be an object")
    return doc


def _dump_json(doc, path):
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _point(value, where):
    if (not isinstance(value, list)) or len(value) != 3:
        raise FormatError(f"{where}: expected [x, y, z]")
    try:
        arr = np.array([float(v) for v in value])
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: non-numeric coordinate") from exc
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{where}: non-finite coordinate")
    return arr


# ---------------------------------------------------------------------------
# Landmarks
# ---------------------------------------------------------------------------


def write_landmarks(landmarks: LandmarkSet, path):
    doc = {
        "version": LANDMARK_SCHEMA_VERSION,
        "pairs": [
            {
                "id": p.id,
                "pre": [float(v) for v in p.pre],
                "post": [float(v) for v in p.post],
                "source": p.source,
            }
            for p in landmarks.pairs
        ],
    }
    _dump_json(doc, path)


def landmarks_from_dict(doc, where="landmarks") -> LandmarkSet:
    unknown = set(doc) - {"version", "pairs"}
    if unknown:
        raise FormatError(f"{where}: unknown field {sorted(unknown)[0]!r}")
    if doc.get("version") != LANDMARK_SCHEMA_VERSION:
        raise FormatError(
            f"{where}: unsupported version {doc.get('version')!r} "
            f"(expected {LANDMARK_SCHEMA_VERSION})"
        )
    raw_pairs = doc.get("pairs")
    if not isinstance(raw_pairs, list):
        raise FormatError(f"{where}: 'pairs' must be a list")
    pairs = []
    seen = set()
    for i, rp in enumerate(raw_pairs):
        loc = f"{where}: pairs[{i}]"
        if not isinstance(rp, dict):
            raise FormatError(f"{loc}: expected an object")
        unknown = set(rp) - _PAIR_KEYS
        if unknown:
            raise FormatError(f"{loc}: unknown field {sorted(unknown)[0]!r}")
        for key in ("id", "pre", "post"):
            if key not in rp:
                raise FormatError(f"{loc}: missing field {key!r}")
        if not isinstance(rp["id"], int):
            raise FormatError(f"{loc}: id must be an integer")
        if rp["id"] in seen:
            raise FormatError(f"{loc}: duplicate id {rp['id']}")
        seen.add(rp["id"])
        source = rp.get("source", "file")
        if source not in ("file", "manual"):
            raise FormatError(f"{loc}: source must be 'file' or 'manual', got {source!r}")
        pairs.append(
            LandmarkPair(rp["id"], _point(rp["pre"], f"{loc}.pre"),
                         _point(rp["post"], f"{loc}.post"), source)
        )
    try:
        return LandmarkSet(tuple(pairs))
    except ValueError as exc:
        raise FormatError(f"{where}: {exc}") from exc


def read_landmarks(path) -> LandmarkSet:
    return landmarks_from_dict(_load_json(path), where=str(path))


# ---------------------------------------------------------------------------
# Raw volumes / fields
# ---------------------------------------------------------------------------


def _grid_to_header(grid: GridSpec, components: int) -> dict:
    return {
        "dims": list(grid.dims),
        "spacing_mm": [float(v) for v in grid.spacing],
        "origin_mm": [float(v) for v in grid.origin],
        "components": components,
        "order": "x-fastest",
    }


def _header_to_grid(doc, where) -> tuple:
    for key in ("dims", "spacing_mm", "origin_mm", "components", "order"):
        if key not in doc:
            raise FormatError(f"{where}: missing header field {key!r}")
    if doc["order"] != "x-fastest":
        raise FormatError(f"{where}: unsupported order {doc['order']!r}")
    dims = doc["dims"]
    if not (isinstance(dims, list) and len(dims) == 3 and all(isinstance(d, int) and d >= 1 for d in dims)):
        raise FormatError(f"{where}: dims must be 3 positive integers")
    components = doc["components"]
    if components not in (1, 3, 4):
        raise FormatError(f"{where}: components must be 1, 3 or 4, got {components!r}")
    try:
        grid = GridSpec(_point(doc["origin_mm"], f"{where}.origin_mm"),
                        np.array([float(v) for v in doc["spacing_mm"]]), tuple(dims))
    except ValueError as exc:
        raise FormatError(f"{where}: {exc}") from exc
    return grid, components


def _payload_paths(base):
    base = Path(base)
    if base.suffix == ".raw":
        base = base.with_suffix("")
    return base.with_suffix(".raw"), base.with_suffix(".json")


def _write_raw(grid: GridSpec, data: np.ndarray, base):
    """data: (nx, ny, nz) or (nx, ny, nz, C); payload is x-fastest,
    components contiguous per voxel."""
    raw_path, hdr_path = _payload_paths(base)
    if data.ndim == 3:
        components = 1
        flat = np.transpose(data, (2, 1, 0)).ravel()
    else:
        components = data.shape[3]
        flat = np.transpose(data, (2, 1, 0, 3)).ravel()
    flat.astype("<f4").tofile(raw_path)
    _dump_json(_grid_to_header(grid, components), hdr_path)
    return raw_path, hdr_path


def _read_raw(base):
    raw_path, hdr_path = _payload_paths(base)
    if not hdr_path.exists():
        raise FormatError(f"missing sidecar header {hdr_path}")
    grid, components = _header_to_grid(_load_json(hdr_path), str(hdr_path))
    expected = grid.n_voxels * components * 4
    try:
        payload = raw_path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {raw_path}: {exc}") from exc
    if len(payload) != expected:
        raise FormatError(
            f"{raw_path}: size mismatch, expected {expected} bytes, got {len(payload)}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    nx, ny, nz = grid.dims
    if components == 1:
        data = np.transpose(flat.reshape((nz, ny, nx)), (2, 1, 0))
    else:
        data = np.transpose(flat.reshape((nz, ny, nx, components)), (2, 1, 0, 3))
    return grid, components, np.ascontiguousarray(data)


def write_volume(vol: Volume, base):
    return _write_raw(vol.grid, vol.values, base)


def read_volume(base) -> Volume:
    grid, components, data = _read_raw(base)
    if components != 1:
        raise FormatError(f"{base}: expected a 1-component volume, got {components}")
    return Volume(grid, data)


def write_field(dense_field: DenseField, base):
    return _write_raw(dense_field.grid, dense_field.vectors.astype(np.float32), base)


def read_field(base) -> DenseField:
    grid, components, data = _read_raw(base)
    if components != 3:
        raise FormatError(f"{base}: expected a 3-component field, got {components}")
    return DenseField(grid, data.astype(float))


def write_uncertainty(unc: UncertaintyMap, base):
    return _write_raw(unc.grid, unc.variance.astype(np.float32), base)


def read_uncertainty(base) -> UncertaintyMap:
    grid, components, data = _read_raw(base)
    if components != 3:
        raise FormatError(f"{base}: expected a 3-component map, got {components}")
    return UncertaintyMap(grid, np.maximum(data.astype(float), 0.0))


# ---------------------------------------------------------------------------
# Kernels, grids, model bundle
# ---------------------------------------------------------------------------


def kernel_to_dict(kernel: KernelSpec) -> dict:
    return {
        "family": kernel.family,
        "sill": float(kernel.sill),
        "param": float(kernel.param),
        "nugget": float(kernel.nugget),
    }


def kernel_from_dict(doc, where="kernel") -> KernelSpec:
    if not isinstance(doc, dict):
        raise FormatError(f"{where}: expected an object")
    for key in ("family", "sill", "param"):
        if key not in doc:
            raise FormatError(f"{where}: missing field {key!r}")
    try:
        return KernelSpec(doc["family"], float(doc["sill"]), float(doc["param"]),
                          float(doc.get("nugget", 0.0)))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: {exc}") from exc


def gridspec_to_dict(grid: GridSpec) -> dict:
    return {
        "origin_mm": [float(v) for v in grid.origin],
        "spacing_mm": [float(v) for v in grid.spacing],
        "dims": list(grid.dims),
    }


def gridspec_from_dict(doc, where="grid") -> GridSpec:
    for key in ("origin_mm", "spacing_mm", "dims"):
        if key not in doc:
            raise FormatError(f"{where}: missing field {key!r}")
    try:
        return GridSpec(
            _point(doc["origin_mm"], f"{where}.origin_mm"),
            np.array([float(v) for v in doc["spacing_mm"]]),
            tuple(int(d) for d in doc["dims"]),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class ModelBundle:
    """Everything needed to reproduce a fitted deformation: affine, per-axis
    kernels, the landmark snapshot, and optional diagnostics."""

    affine: AffineTransform
    kernels: tuple  # 3 KernelSpec (x, y, z)
    landmarks: LandmarkSet
    grid: GridSpec | None = None
    kernel_source: str = "manual"  # "variogram" | "grid" | "manual"
    variograms: tuple | None = None  # optional per-axis dicts for plotting
    cv: dict | None = None


def write_model_bundle(bundle: ModelBundle, path):
    doc = {
        "version": BUNDLE_SCHEMA_VERSION,
        "affine_row_major": bundle.affine.as_row_major_12(),
        "kernels": {
            ax: kernel_to_dict(k) for ax, k in zip(("x", "y", "z"), bundle.kernels)
        },
        "kernel_source": bundle.kernel_source,
        "landmarks": {
            "version": LANDMARK_SCHEMA_VERSION,
            "pairs": [
                {
                    "id": p.id,
                    "pre": [float(v) for v in p.pre],
                    "post": [float(v) for v in p.post],
                    "source": p.source,
                }
                for p in bundle.landmarks.pairs
            ],
        },
    }
    if bundle.grid is not None:
        doc["grid"] = gridspec_to_dict(bundle.grid)
    if bundle.variograms is not None:
        doc["variograms"] = list(bundle.variograms)
    if bundle.cv is not None:
        doc["cv"] = bundle.cv
    _dump_json(doc, path)


def read_model_bundle(path) -> ModelBundle:
    doc = _load_json(path)
    where = str(path)
    if doc.get("version") != BUNDLE_SCHEMA_VERSION:
        raise FormatError(
            f"{where}: unsupported bundle version {doc.get('version')!r} "
            f"(expected {BUNDLE_SCHEMA_VERSION})"
        )
    for key in ("affine_row_major", "kernels", "landmarks"):
        if key not in doc:
            raise FormatError(f"{where}: missing field {key!r}")
    vals = doc["affine_row_major"]
    if not (isinstance(vals, list) and len(vals) == 12):
        raise FormatError(f"{where}: affine_row_major must hold 12 numbers")
    affine = AffineTransform.from_row_major_12(vals)
    kernels = tuple(
        kernel_from_dict(doc["kernels"].get(ax), f"{where}.kernels.{ax}")
        for ax in ("x", "y", "z")
    )
    landmarks = landmarks_from_dict(doc["landmarks"], f"{where}.landmarks")
    grid = gridspec_from_dict(doc["grid"], f"{where}.grid") if "grid" in doc else None
    return ModelBundle(
        affine=affine,
        kernels=kernels,
        landmarks=landmarks,
        grid=grid,
        kernel_source=doc.get("kernel_source", "manual"),
        variograms=tuple(doc["variograms"]) if "variograms" in doc else None,
        cv=doc.get("cv"),
    )


# ---------------------------------------------------------------------------
# Project config
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProjectConfig:
    grid: GridSpec | None = None
    kernel_grid: tuple | None = None  # explicit KernelSpecs for grid search
    variogram_delta: float | None = None
    variogram_min_landmarks: int = 50
    cv_seed: int = 0
    methods: tuple = ("affine", "thin_plate", "variogram_gp", "grid_search_gp")
    freeze_affine: bool = False
    mean_const: float = 0.0


def read_config(path) -> ProjectConfig:
    doc = _load_json(path)
    where = str(path)
    known = {"grid", "kernel_grid", "variogram", "cv_seed", "methods", "freeze_affine",
             "mean_const"}
    unknown = set(doc) - known
    if unknown:
        raise FormatError(f"{where}: unknown field {sorted(unknown)[0]!r}")
    grid = gridspec_from_dict(doc["grid"], f"{where}.grid") if "grid" in doc else None
    kernel_grid = None
    if "kernel_grid" in doc:
        if not isinstance(doc["kernel_grid"], list) or not doc["kernel_grid"]:
            raise FormatError(f"{where}: kernel_grid must be a nonempty list")
        kernel_grid = tuple(
            kernel_from_dict(k, f"{where}.kernel_grid[{i}]")
            for i, k in enumerate(doc["kernel_grid"])
        )
    vg = doc.get("variogram", {})
    if not isinstance(vg, dict):
        raise FormatError(f"{where}: variogram settings must be an object")
    return ProjectConfig(
        grid=grid,
        kernel_grid=kernel_grid,
        variogram_delta=vg.get("delta"),
        variogram_min_landmarks=int(vg.get("min_landmarks", 50)),
        cv_seed=int(doc.get("cv_seed", 0)),
        methods=tuple(doc.get("methods", ProjectConfig.methods)),
        freeze_affine=bool(doc.get("freeze_affine", False)),
        mean_const=float(doc.get("mean_const", 0.0)),
    )


def write_config(config: ProjectConfig, path):
    doc = {
        "cv_seed": config.cv_seed,
        "methods": list(config.methods),
        "freeze_affine": config.freeze_affine,
        "mean_const": config.mean_const,
        "variogram": {
            "min_landmarks": config.variogram_min_landmarks,
            **({"delta": config.variogram_delta} if config.variogram_delta else {}),
        },
    }
    if config.grid is not None:
        doc["grid"] = gridspec_to_dict(config.grid)
    if config.kernel_grid is not None:
        doc["kernel_grid"] = [kernel_to_dict(k) for k in config.kernel_grid]
    _dump_json(doc, path)
