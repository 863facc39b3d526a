"""Command-line entry points: register, variogram, gridsearch, evaluate, serve.

Exit codes: 0 success, 2 usage error (argparse), 1 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, io_formats, variogram as vario
from .affine import fit_affine
from .core_types import compute_displacements
from .errors import GpdeformError
from .evaluate import CaseReport, run_protocol, render_report
from .field import generate_dense_field, generate_uncertainty_map
from .gp import fit_axis_models
from .kernel_search import SearchGrid, choose_protocol, default_grid, grid_search
from .session import default_grid_for_landmarks


def _add_seed(parser):
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for fold shuffling and synthetic generation")


def cmd_register(args) -> int:
    t0 = time.perf_counter()
    landmarks = io_formats.read_landmarks(args.landmarks)
    config = io_formats.read_config(args.config) if args.config else io_formats.ProjectConfig()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    affine = fit_affine(landmarks)
    observations = compute_displacements(landmarks, affine)
    n = len(landmarks)
    protocol = choose_protocol(n)

    variogram_export = None
    cv_export = None
    if n >= config.variogram_min_landmarks:
        kernels, emps, models = vario.estimate_axis_kernels(
            observations, delta=config.variogram_delta,
            min_landmarks=config.variogram_min_landmarks)
        kernel_source = "variogram"
        variogram_export = tuple(
            {**e.to_dict(), "model": m.to_dict()} for e, m in zip(emps, models)
        )
    else:
        grid = SearchGrid(config.kernel_grid) if config.kernel_grid else default_grid(observations)
        cv = grid_search(grid, observations, seed=args.seed or config.cv_seed)
        kernels = (cv.selected,) * 3
        kernel_source = "grid"
        cv_export = cv.to_dict()

    models3 = fit_axis_models(kernels, observations, mean_const=config.mean_const)
    voxel_grid = config.grid or default_grid_for_landmarks(landmarks)
    dense = generate_dense_field(models3, voxel_grid)
    unc = generate_uncertainty_map(models3, voxel_grid)

    io_formats.write_field(dense, out_dir / "dense_field")
    io_formats.write_uncertainty(unc, out_dir / "uncertainty")
    bundle = io_formats.ModelBundle(
        affine=affine, kernels=kernels, landmarks=landmarks, grid=voxel_grid,
        kernel_source=kernel_source, variograms=variogram_export, cv=cv_export,
    )
    io_formats.write_model_bundle(bundle, out_dir / "model_bundle.json")

    runtime = time.perf_counter() - t0
    print(f"landmarks: {n}")
    print(f"protocol: {'5-fold' if protocol == 'kfold5' else 'LOO'}")
    print(f"kernel source: {kernel_source}")
    for ax, k in zip("xyz", kernels):
        print(f"kernel {ax}: {k.family} sill={k.sill:.4g} param={k.param:.4g} "
              f"nugget={k.nugget:.4g}")
    print(f"grid: {voxel_grid.dims}")
    print(f"runtime: {runtime:.2f} s")
    print(f"outputs: {out_dir}")
    return 0


def cmd_variogram(args) -> int:
    landmarks = io_formats.read_landmarks(args.landmarks)
    if len(landmarks) < 4:
        raise GpdeformError(f"variogram needs >= 4 landmarks, have {len(landmarks)}")
    affine = fit_affine(landmarks)
    observations = compute_displacements(landmarks, affine)
    delta = args.delta or vario.default_delta(observations)
    axes = ("x", "y", "z") if args.axis == "all" else (args.axis,)
    out = []
    for ax in axes:
        cloud = vario.variogram_cloud(observations, ax)
        emp = vario.bin_variogram(cloud, delta, max_lag=0.5 * float(cloud.h.max()))
        model = vario.fit_variogram_model(emp)
        out.append({**emp.to_dict(), "model": model.to_dict(),
                    "cloud_points": len(cloud),
                    "effective_range_mm": vario.effective_range(model)})
        print(f"axis {ax}: {len(cloud)} cloud points, {emp.n_bins} bins, "
              f"{model.family} c0={model.nugget:.4g} c={model.partial_sill:.4g} "
              f"a={model.param:.4g}")
    Path(args.out).write_text(json.dumps({"delta": delta, "variograms": out}, indent=2))
    print(f"wrote {args.out}")
    return 0


def cmd_gridsearch(args) -> int:
    landmarks = io_formats.read_landmarks(args.landmarks)
    affine = fit_affine(landmarks)
    observations = compute_displacements(landmarks, affine)
    if args.grid:
        doc = json.loads(Path(args.grid).read_text())
        cands = tuple(
            io_formats.kernel_from_dict(k, f"{args.grid}[{i}]")
            for i, k in enumerate(doc["candidates"])
        )
        grid = SearchGrid(cands)
    else:
        grid = default_grid(observations)
    cv = grid_search(grid, observations, seed=args.seed)
    result = cv.to_dict()
    Path(args.out).write_text(json.dumps(result, indent=2))
    sel = cv.selected
    print(f"landmarks: {len(landmarks)}")
    print(f"protocol: {'5-fold' if cv.protocol == 'kfold5' else 'LOO'}")
    print(f"selected: {sel.family} sill={sel.sill:.4g} param={sel.param:.4g} "
          f"nugget={sel.nugget:.4g} (error "
          f"{cv.errors[cv.selected_index]:.4g} mm)")
    print(f"wrote {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    cases_dir = Path(args.cases)
    reports = []
    for case_path in sorted(cases_dir.glob("*.json")):
        landmarks = io_formats.read_landmarks(case_path)
        n = len(landmarks)
        n_eval = max(1, int(round(n * 0.3)))
        train_pairs = landmarks.pairs[: n - n_eval]
        eval_pairs = landmarks.pairs[n - n_eval :]
        from .core_types import LandmarkSet

        t0 = time.perf_counter()
        results = run_protocol(LandmarkSet(train_pairs), LandmarkSet(eval_pairs),
                               cv_seed=args.seed)
        elapsed = time.perf_counter() - t0
        if elapsed > 600:
            raise GpdeformError(
                f"case {case_path.name} exceeded the 10-minute ceiling ({elapsed:.0f} s)")
        reports.append(CaseReport(case_path.stem, n, tuple(results)))
    text, doc = render_report(reports)
    print(text)
    Path(args.out).write_text(json.dumps(doc, indent=2))
    print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .session import create_app

    app = create_app(data_dir=args.data_dir, static_dir=args.static_dir)
    host, _, port = args.bind.rpartition(":")
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    except SystemExit as exc:  # uvicorn signals bind failures this way
        raise GpdeformError(f"failed to serve on {args.bind}") from exc
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpdeform",
        description="Dense deformation fields with uncertainty from sparse landmarks",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--threads", type=int, default=0,
                        help="cap worker threads (0 = library default)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="full pipeline: affine, kernels, GPs, dense field")
    p.add_argument("--landmarks", required=True, help="landmark JSON file")
    p.add_argument("--config", help="project config JSON")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--volume-pre", help="pre volume base path (.raw/.json)")
    p.add_argument("--volume-post", help="post volume base path (.raw/.json)")
    _add_seed(p)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("variogram", help="empirical variogram and fitted model per axis")
    p.add_argument("--landmarks", required=True)
    p.add_argument("--axis", choices=["x", "y", "z", "all"], default="all")
    p.add_argument("--delta", type=float, help="bin half-width in mm")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=cmd_variogram)

    p = sub.add_parser("gridsearch", help="cross-validated kernel grid search")
    p.add_argument("--landmarks", required=True)
    p.add_argument("--grid", help="JSON file with {'candidates': [...]}")
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("evaluate", help="run the evaluation protocol over case files")
    p.add_argument("--cases", required=True, help="directory of landmark JSON cases")
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="serve the session API")
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.add_argument("--data-dir", help="directory for exports and volume lookup")
    p.add_argument("--static-dir", help="directory of built UI assets to serve")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        import os

        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(args.threads))
    try:
        return args.func(args)
    except (GpdeformError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
