"""HTTP session service for the active-registration loop.

A session owns a landmark set, the fitted affine and per-axis GPs, and
lazily-computed dense field / uncertainty caches tagged by revision.  The
human-in-the-loop workflow adds or removes landmark pairs and watches the
uncertainty map respond.
"""
from __future__ import annotations

import base64
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from . import io_formats, variogram as vario
from .affine import AffineTransform, fit_affine
from .core_types import GridSpec, LandmarkPair, LandmarkSet, compute_displacements, DUPLICATE_PRE_TOL
from .errors import GpdeformError, InsufficientDataError
from .field import DenseField, UncertaintyMap, Volume, generate_dense_field, generate_uncertainty_map, warp_volume
from .gp import KernelSpec, fit_axis_models, predict_variance
from .kernel_search import choose_protocol, default_grid, grid_search, SearchGrid

SLICE_KINDS = ("pre_volume", "warped_volume", "post_volume", "uncertainty", "field_magnitude")
AXIS_NAMES = {"x": 0, "y": 1, "z": 2, "0": 0, "1": 1, "2": 2}


class SessionError(GpdeformError):
    def __init__(self, code, message, status=400, detail=None):
        super().__init__(message)
        self.code = code
        self.status = status
        self.detail = detail or {}


def default_grid_for_landmarks(landmarks: LandmarkSet, max_dim: int = 32, pad_mm: float = 5.0) -> GridSpec:
    """Bounding-box grid around the pre landmarks, capped at max_dim per axis."""
    pre = landmarks.pre_array()
    if pre.shape[0] == 0:
        return GridSpec(np.zeros(3), np.ones(3), (max_dim,) * 3)
    lo = pre.min(axis=0) - pad_mm
    hi = pre.max(axis=0) + pad_mm
    extent = np.maximum(hi - lo, 1e-6)
    dims = np.minimum(np.ceil(extent).astype(int) + 1, max_dim)
    dims = np.maximum(dims, 2)
    spacing = extent / (dims - 1)
    return GridSpec(lo, spacing, tuple(int(d) for d in dims))


class Session:
    """Mutable registration state guarded by a per-session lock."""

    def __init__(self, session_id, landmarks: LandmarkSet, config: io_formats.ProjectConfig,
                 pre_volume: Volume | None = None, post_volume: Volume | None = None):
        self.id = session_id
        self.lock = threading.Lock()
        self.landmarks = landmarks
        self.config = config
        self.pre_volume = pre_volume
        self.post_volume = post_volume
        self.revision = 0
        self.affine: AffineTransform | None = None
        self.models = None  # 3 GPAxisModel or None
        self.kernels = None
        self.kernel_source = None
        self.kernel_diagnostics = {}
        self.observations = []
        self._cache_revision = None
        self._cache = {}
        self._refit()

    # -- fitting ----------------------------------------------------------

    def _grid(self) -> GridSpec:
        return self.config.grid or default_grid_for_landmarks(self.landmarks)

    def _estimate_kernels(self, mode=None, manual_kernel=None):
        n = len(self.landmarks)
        diagnostics = {}
        if mode == "manual":
            kernels = (manual_kernel,) * 3
            source = "manual"
        elif mode == "variogram" or (mode is None and n >= self.config.variogram_min_landmarks):
            kernels, emps, models = vario.estimate_axis_kernels(
                self.observations,
                delta=self.config.variogram_delta,
                min_landmarks=self.config.variogram_min_landmarks,
            )
            diagnostics["variograms"] = [
                {**emp.to_dict(), "model": model.to_dict()}
                for emp, model in zip(emps, models)
            ]
            source = "variogram"
        else:
            grid = (
                SearchGrid(self.config.kernel_grid)
                if self.config.kernel_grid
                else default_grid(self.observations)
            )
            cv = grid_search(grid, self.observations, seed=self.config.cv_seed)
            kernels = (cv.selected,) * 3
            diagnostics["cv"] = cv.to_dict()
            source = "grid"
        return kernels, source, diagnostics

    def _refit(self, kernel_mode=None, manual_kernel=None):
        n = len(self.landmarks)
        if n >= 4:
            if self.config.freeze_affine and self.affine is not None:
                pass  # keep the existing affine during active edits
            else:
                self.affine = fit_affine(self.landmarks)
        else:
            self.affine = None
        effective_affine = self.affine or AffineTransform.identity()
        self.observations = compute_displacements(self.landmarks, effective_affine)

        if kernel_mode == "keep" and self.kernels is not None:
            pass  # landmark edits keep the current kernels; only affine+GPs refit
        elif n >= 2:
            try:
                self.kernels, self.kernel_source, self.kernel_diagnostics = (
                    self._estimate_kernels(kernel_mode, manual_kernel)
                )
            except InsufficientDataError as exc:
                if kernel_mode is not None:
                    raise
                self.kernels = (KernelSpec("gaussian", 1.0, 100.0, 0.0),) * 3
                self.kernel_source = "fallback"
                self.kernel_diagnostics = {"warning": str(exc)}
        elif self.kernels is None:
            self.kernels = (KernelSpec("gaussian", 1.0, 100.0, 0.0),) * 3
            self.kernel_source = "fallback"
            self.kernel_diagnostics = {}
        self.models = fit_axis_models(self.kernels, self.observations,
                                      mean_const=self.config.mean_const)
        self._cache = {}
        self._cache_revision = None

    def _bump(self):
        self.revision += 1

    # -- cached dense artifacts -------------------------------------------

    def _artifacts(self):
        """Dense field/uncertainty at the current revision (lazy, latest only)."""
        if self._cache_revision != self.revision:
            grid = self._grid()
            fieldv = generate_dense_field(self.models, grid)
            unc = generate_uncertainty_map(self.models, grid)
            cache = {"field": fieldv, "uncertainty": unc}
            if self.pre_volume is not None and self.pre_volume.grid == grid:
                warped, mask = warp_volume(self.pre_volume, fieldv,
                                           self.affine or AffineTransform.identity())
                cache["warped"] = warped
                cache["warp_mask"] = mask
            self._cache = cache
            self._cache_revision = self.revision
        return self._cache

    # -- queries -----------------------------------------------------------

    def uncertainty_at(self, p) -> float:
        """Trace of the per-axis posterior variances at a world point."""
        p = np.asarray(p, dtype=float)[None, :]
        return float(sum(predict_variance(m, p)[0] for m in self.models))

    def summary(self) -> dict:
        n = len(self.landmarks)
        protocol = None
        if n >= 2:
            protocol = choose_protocol(n)
        return {
            "id": self.id,
            "revision": self.revision,
            "n_landmarks": n,
            "n_manual": sum(1 for p in self.landmarks.pairs if p.source == "manual"),
            "landmarks": [
                {
                    "id": p.id,
                    "pre": [float(v) for v in p.pre],
                    "post": [float(v) for v in p.post],
                    "source": p.source,
                    "residual_mm": float(np.linalg.norm(o.d)),
                }
                for p, o in zip(self.landmarks.pairs, self.observations)
            ],
            "affine_available": self.affine is not None,
            "affine_row_major": self.affine.as_row_major_12() if self.affine else None,
            "kernel_source": self.kernel_source,
            "kernels": [io_formats.kernel_to_dict(k) for k in self.kernels],
            "protocol": protocol,
            "variogram_eligible": n >= self.config.variogram_min_landmarks,
            "grid": io_formats.gridspec_to_dict(self._grid()),
            "volumes": {
                "pre": self.pre_volume is not None,
                "post": self.post_volume is not None,
            },
            "diagnostics": self.kernel_diagnostics,
        }

    # -- mutations ---------------------------------------------------------

    def add_pair(self, pre, post) -> dict:
        pre = np.asarray(pre, dtype=float)
        post = np.asarray(post, dtype=float)
        if not (np.all(np.isfinite(pre)) and np.all(np.isfinite(post))):
            raise SessionError("non_finite", "landmark coordinates must be finite")
        existing = self.landmarks.pre_array()
        if existing.shape[0] and np.min(np.linalg.norm(existing - pre, axis=1)) < DUPLICATE_PRE_TOL:
            raise SessionError("duplicate_location",
                               f"pre-location {pre.tolist()} duplicates an existing landmark")
        before = self.uncertainty_at(pre)
        pair = LandmarkPair(self.landmarks.next_id(), pre, post, source="manual")
        self.landmarks = self.landmarks.with_pair(pair)
        self._refit(kernel_mode="keep")
        self._bump()
        after = self.uncertainty_at(pre)
        return {
            "revision": self.revision,
            "landmark_id": pair.id,
            "uncertainty_before": before,
            "uncertainty_after": after,
            "summary": self.summary(),
        }

    def remove_pair(self, pair_id: int) -> dict:
        try:
            self.landmarks = self.landmarks.without_id(pair_id)
        except KeyError:
            raise SessionError("unknown_id", f"no landmark with id {pair_id}", status=404)
        self._refit(kernel_mode="keep")
        self._bump()
        return {"revision": self.revision, "summary": self.summary()}

    def refit_kernel(self, mode, manual_kernel=None) -> dict:
        if mode not in ("variogram", "grid", "manual"):
            raise SessionError("bad_mode", f"unknown kernel mode {mode!r}")
        if mode == "variogram" and len(self.landmarks) < self.config.variogram_min_landmarks:
            raise SessionError(
                "below_landmark_threshold",
                f"variogram mode needs >= {self.config.variogram_min_landmarks} landmarks, "
                f"have {len(self.landmarks)}",
                detail={"threshold": self.config.variogram_min_landmarks},
            )
        if mode == "manual" and manual_kernel is None:
            raise SessionError("missing_kernel", "manual mode requires a kernel spec")
        self._refit(kernel_mode={"grid": None, "variogram": "variogram", "manual": "manual"}[mode]
                    if mode != "grid" else "grid_forced", manual_kernel=manual_kernel)
        self._bump()
        return {"revision": self.revision, "summary": self.summary(),
                "diagnostics": self.kernel_diagnostics}

    # -- slices ------------------------------------------------------------

    def get_slice(self, kind, axis, index):
        if kind not in SLICE_KINDS:
            raise SessionError("bad_kind", f"kind must be one of {SLICE_KINDS}, got {kind!r}")
        if str(axis) not in AXIS_NAMES:
            raise SessionError("bad_axis", f"axis must be x/y/z, got {axis!r}")
        ax = AXIS_NAMES[str(axis)]
        arts = self._artifacts()
        grid = self._grid()
        if kind == "pre_volume":
            if self.pre_volume is None:
                raise SessionError("unavailable", "no pre volume loaded", status=404)
            data = self.pre_volume.values
            grid = self.pre_volume.grid
        elif kind == "post_volume":
            if self.post_volume is None:
                raise SessionError("unavailable", "no post volume loaded", status=404)
            data = self.post_volume.values
            grid = self.post_volume.grid
        elif kind == "warped_volume":
            if "warped" not in arts:
                raise SessionError("unavailable",
                                   "warped volume requires a pre volume on the field grid",
                                   status=404)
            data = arts["warped"].values
        elif kind == "uncertainty":
            data = arts["uncertainty"].trace()
        else:
            data = arts["field"].magnitude()
        if not (0 <= index < grid.dims[ax]):
            raise SessionError("index_out_of_range",
                               f"index {index} outside [0, {grid.dims[ax] - 1}]")
        frame = np.take(data, index, axis=ax).astype(np.float32)
        meta = {
            "kind": kind,
            "axis": "xyz"[ax],
            "index": index,
            "dims": list(frame.shape),
            "spacing_mm": [float(s) for i, s in enumerate(grid.spacing) if i != ax],
            "origin_mm": [float(o) for i, o in enumerate(grid.origin) if i != ax],
            "slice_origin_mm": [float(v) for v in grid.origin],
            "grid": io_formats.gridspec_to_dict(grid),
            "min": float(frame.min()),
            "max": float(frame.max()),
            "revision": self.revision,
        }
        return frame, meta

    # -- export ------------------------------------------------------------

    def export(self, out_dir) -> dict:
        if self.affine is None:
            raise SessionError("not_fitted", "session has no fitted affine to export",
                               status=409)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        arts = self._artifacts()
        bundle = io_formats.ModelBundle(
            affine=self.affine,
            kernels=self.kernels,
            landmarks=self.landmarks,
            grid=self._grid(),
            kernel_source=self.kernel_source,
            variograms=tuple(self.kernel_diagnostics.get("variograms", []))
            or None,
            cv=self.kernel_diagnostics.get("cv"),
        )
        bundle_path = out / "model_bundle.json"
        io_formats.write_model_bundle(bundle, bundle_path)
        io_formats.write_field(arts["field"], out / "dense_field")
        io_formats.write_uncertainty(arts["uncertainty"], out / "uncertainty")
        return {
            "revision": self.revision,
            "files": {
                "bundle": str(bundle_path),
                "field": str(out / "dense_field.raw"),
                "uncertainty": str(out / "uncertainty.raw"),
            },
        }


class SessionStore:
    def __init__(self, data_dir=None):
        self.data_dir = Path(data_dir) if data_dir else None
        self._sessions = {}
        self._lock = threading.Lock()

    def create(self, landmarks, config, pre_volume=None, post_volume=None) -> Session:
        sid = uuid.uuid4().hex[:12]
        session = Session(sid, landmarks, config, pre_volume, post_volume)
        with self._lock:
            self._sessions[sid] = session
        return session

    def get(self, sid) -> Session:
        with self._lock:
            session = self._sessions.get(sid)
        if session is None:
            raise SessionError("unknown_session", f"no session {sid!r}", status=404)
        return session


def create_app(data_dir=None, static_dir=None):
    """FastAPI application exposing the session endpoints."""
    store = SessionStore(data_dir)
    app = FastAPI(title="gpdeform session service")
    app.state.store = store

    @app.exception_handler(SessionError)
    async def _session_error(request: Request, exc: SessionError):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": str(exc), "detail": exc.detail},
        )

    @app.exception_handler(GpdeformError)
    async def _domain_error(request: Request, exc: GpdeformError):
        status = 422 if isinstance(exc, (InsufficientDataError,)) else 500
        return JSONResponse(
            status_code=status,
            content={"code": type(exc).__name__, "message": str(exc), "detail": {}},
        )

    @app.get("/health")
    async def health():
        from . import __version__

        return {"status": "ok", "version": __version__}

    @app.post("/sessions")
    async def create_session(body: dict):
        if "landmarks" not in body:
            raise SessionError("missing_landmarks", "request must include 'landmarks'")
        try:
            landmarks = io_formats.landmarks_from_dict(body["landmarks"], "landmarks")
        except io_formats.FormatError as exc:
            raise SessionError("invalid_landmarks", str(exc), status=422)
        if len(landmarks) == 0:
            raise SessionError("insufficient_data", "landmark set is empty", status=422)
        config = io_formats.ProjectConfig()
        if "config" in body:
            cfg = body["config"]
            config = io_formats.ProjectConfig(
                grid=io_formats.gridspec_from_dict(cfg["grid"], "config.grid")
                if "grid" in cfg
                else None,
                kernel_grid=tuple(
                    io_formats.kernel_from_dict(k, f"config.kernel_grid[{i}]")
                    for i, k in enumerate(cfg["kernel_grid"])
                )
                if cfg.get("kernel_grid")
                else None,
                variogram_delta=cfg.get("variogram", {}).get("delta"),
                variogram_min_landmarks=int(
                    cfg.get("variogram", {}).get("min_landmarks", 50)
                ),
                cv_seed=int(cfg.get("cv_seed", 0)),
                freeze_affine=bool(cfg.get("freeze_affine", False)),
                mean_const=float(cfg.get("mean_const", 0.0)),
            )
        pre_volume = post_volume = None
        volumes = body.get("volumes") or {}
        if volumes.get("pre"):
            pre_volume = io_formats.read_volume(volumes["pre"])
        if volumes.get("post"):
            post_volume = io_formats.read_volume(volumes["post"])
        session = store.create(landmarks, config, pre_volume, post_volume)
        return {"id": session.id, "revision": session.revision,
                "summary": session.summary()}

    @app.get("/sessions/{sid}/state")
    async def get_state(sid: str):
        session = store.get(sid)
        with session.lock:
            return session.summary()

    @app.post("/sessions/{sid}/landmarks")
    async def add_landmark(sid: str, body: dict):
        session = store.get(sid)
        for key in ("pre", "post"):
            if key not in body:
                raise SessionError("missing_field", f"body must include {key!r}")
        with session.lock:
            return session.add_pair(body["pre"], body["post"])

    @app.delete("/sessions/{sid}/landmarks/{lid}")
    async def remove_landmark(sid: str, lid: int):
        session = store.get(sid)
        with session.lock:
            return session.remove_pair(lid)

    @app.post("/sessions/{sid}/kernel")
    async def refit_kernel(sid: str, body: dict):
        session = store.get(sid)
        mode = body.get("mode")
        manual = None
        if mode == "manual":
            manual = io_formats.kernel_from_dict(body.get("kernel"), "kernel")
        with session.lock:
            return session.refit_kernel(mode, manual)

    @app.get("/sessions/{sid}/slices")
    async def get_slice(sid: str, kind: str, axis: str, index: int, request: Request):
        session = store.get(sid)
        with session.lock:
            frame, meta = session.get_slice(kind, axis, index)
        payload = frame.astype("<f4").tobytes()
        if "application/octet-stream" in request.headers.get("accept", ""):
            return Response(
                content=payload,
                media_type="application/octet-stream",
                headers={"X-Slice-Meta": __import__("json").dumps(meta)},
            )
        return {"meta": meta, "frame_base64": base64.b64encode(payload).decode("ascii")}

    @app.post("/sessions/{sid}/export")
    async def export(sid: str, body: dict | None = None):
        session = store.get(sid)
        body = body or {}
        out_dir = body.get("out_dir")
        if out_dir is None:
            base = store.data_dir or Path(".")
            out_dir = base / "exports" / f"{sid}-rev{session.revision}"
        with session.lock:
            return session.export(out_dir)

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
