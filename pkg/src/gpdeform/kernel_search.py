"""Discrete kernel grid search with cross-validated selection.

Candidates are scored by the mean Euclidean distance between predicted and
held-out displacement vectors; fewer than 50 landmarks selects leave-one-out
folds, otherwise seeded 5-fold.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_types import observation_arrays
from .errors import GpdeformError, InsufficientDataError
from .gp import KernelSpec, fit_gp_axis, predict_mean

# Landmark-count boundary between leave-one-out and 5-fold CV.
LOO_THRESHOLD = 50
KFOLD_K = 5
DEFAULT_CV_SEED = 20240

DEFAULT_EFFECTIVE_RANGES = (5.0, 10.0, 20.0, 40.0, 80.0)
DEFAULT_NUGGETS = (0.0, 0.05, 0.25)


@dataclass(frozen=True)
class SearchGrid:
    """Explicit ordered list of candidate kernels; order breaks ties."""

    candidates: tuple

    def __post_init__(self):
        cands = tuple(self.candidates)
        if not cands:
            raise ValueError("search grid must be nonempty")
        object.__setattr__(self, "candidates", cands)

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)


@dataclass(frozen=True)
class CVResult:
    grid: SearchGrid
    errors: tuple  # mean CV error per candidate, nan where the fit failed
    fold_errors: tuple  # per-candidate tuple of per-fold mean errors
    failures: tuple  # per-candidate error message or None
    selected: KernelSpec
    selected_index: int
    protocol: str  # "loo" or "kfold5"
    seed: int

    def to_dict(self):
        return {
            "protocol": self.protocol,
            "seed": self.seed,
            "selected_index": self.selected_index,
            "selected": _kernel_dict(self.selected),
            "candidates": [
                {
                    "kernel": _kernel_dict(k),
                    "mean_error_mm": None if np.isnan(e) else float(e),
                    "fold_errors_mm": [float(f) for f in folds],
                    "failure": fail,
                }
                for k, e, folds, fail in zip(
                    self.grid.candidates, self.errors, self.fold_errors, self.failures
                )
            ],
        }


def _kernel_dict(k: KernelSpec):
    return {"family": k.family, "sill": k.sill, "param": k.param, "nugget": k.nugget}


def choose_protocol(n_landmarks: int) -> str:
    if n_landmarks < 2:
        raise InsufficientDataError(
            f"cross validation needs >= 2 landmarks, have {n_landmarks}"
        )
    return "loo" if n_landmarks < LOO_THRESHOLD else "kfold5"


def make_folds(n: int, protocol: str, seed: int = DEFAULT_CV_SEED):
    """Held-out index arrays per fold.  5-fold shuffling is seeded."""
    if protocol == "loo":
        return [np.array([i]) for i in range(n)]
    if protocol == "kfold5":
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n)
        return [np.sort(chunk) for chunk in np.array_split(perm, KFOLD_K)]
    raise ValueError(f"unknown protocol {protocol!r}")


def cv_error(kernel: KernelSpec, observations, protocol: str, seed: int = DEFAULT_CV_SEED):
    """Mean Euclidean displacement error over held-out landmarks.

    Returns (mean_error, per_fold_means).
    """
    X, D = observation_arrays(observations)
    n = X.shape[0]
    folds = make_folds(n, protocol, seed)
    per_landmark = np.zeros(n)
    fold_means = []
    for held in folds:
        keep = np.setdiff1d(np.arange(n), held)
        if keep.size < 1:
            raise InsufficientDataError("CV fold leaves no training landmarks")
        preds = np.stack(
            [
                predict_mean(fit_gp_axis(kernel, X[keep], D[keep, ax]), X[held])
                for ax in range(3)
            ],
            axis=1,
        )
        errs = np.linalg.norm(preds - D[held], axis=1)
        per_landmark[held] = errs
        fold_means.append(float(errs.mean()))
    return float(per_landmark.mean()), fold_means


def default_grid(observations) -> SearchGrid:
    """Both families x 5 effective ranges x 3 nuggets; sill from the data.

    The sill is the per-axis empirical displacement variance averaged over
    the three axes (one shared kernel drives all three axis GPs).
    """
    _, D = observation_arrays(observations)
    sill = float(np.mean(np.var(D, axis=0)))
    sill = max(sill, 1e-6)
    cands = []
    for family in ("gaussian", "exponential"):
        for r_eff in DEFAULT_EFFECTIVE_RANGES:
            for nugget in DEFAULT_NUGGETS:
                cands.append(KernelSpec.from_effective_range(family, sill, r_eff, nugget))
    return SearchGrid(tuple(cands))


def grid_search(grid: SearchGrid, observations, seed: int = DEFAULT_CV_SEED) -> CVResult:
    """Score every candidate; argmin wins, first occurrence breaking ties."""
    obs = list(observations)
    protocol = choose_protocol(len(obs))
    errors, fold_errors, failures = [], [], []
    for cand in grid:
        try:
            mean_err, folds = cv_error(cand, obs, protocol, seed)
            errors.append(mean_err)
            fold_errors.append(tuple(folds))
            failures.append(None)
        except GpdeformError as exc:
            errors.append(float("nan"))
            fold_errors.append(())
            failures.append(str(exc))
    finite = [(e, i) for i, e in enumerate(errors) if not np.isnan(e)]
    if not finite:
        raise GpdeformError("every grid candidate failed cross validation")
    best_err = min(e for e, _ in finite)
    best_idx = min(i for e, i in finite if e == best_err)
    return CVResult(
        grid=grid,
        errors=tuple(errors),
        fold_errors=tuple(fold_errors),
        failures=tuple(failures),
        selected=grid.candidates[best_idx],
        selected_index=best_idx,
        protocol=protocol,
        seed=seed,
    )
