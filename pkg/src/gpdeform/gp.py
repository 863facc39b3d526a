"""Scalar Gaussian-process regression per displacement axis.

Each displacement component is modeled as an independent zero-mean GP over
3D pre-space locations.  The posterior mean interpolates the observed
displacements (exactly when the nugget is zero) and the posterior variance
supplies the voxelwise uncertainty map.  A thin-plate-spline interpolant is
included as the deterministic comparison baseline; it reports no variance.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist

from .errors import DegenerateGeometryError, IllConditionedError, SizeGuardError

KERNEL_FAMILIES = ("gaussian", "exponential")

# Jitter escalation bounds, as fractions of the sill.
JITTER_START = 1e-10
JITTER_MAX = 1e-4

# predict_covariance materializes an N* x N* matrix; keep it bounded.
COVARIANCE_POINT_GUARD = 4096


@dataclass(frozen=True)
class KernelSpec:
    """Stationary covariance: sill * profile(h), plus iid nugget noise.

    gaussian:     k(h) = sill * exp(-h^2 / param)   (param in mm^2)
    exponential:  k(h) = sill * exp(-h / param)     (param in mm)

    The nugget (mm^2) is not part of k; it is added to the Gram diagonal as
    observation noise, so nugget=0 recovers exact interpolation.
    """

    family: str
    sill: float
    param: float
    nugget: float = 0.0

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not (self.sill > 0):
            raise ValueError(f"sill must be > 0, got {self.sill}")
        if not (self.param > 0):
            raise ValueError(f"kernel parameter must be > 0, got {self.param}")
        if self.nugget < 0:
            raise ValueError(f"nugget must be >= 0, got {self.nugget}")

    def __call__(self, h):
        """Covariance at separation distance h (array-friendly)."""
        h = np.asarray(h, dtype=float)
        if self.family == "gaussian":
            return self.sill * np.exp(-(h * h) / self.param)
        return self.sill * np.exp(-h / self.param)

    @property
    def effective_range(self) -> float:
        """Distance where correlation has decayed to ~5%."""
        if self.family == "gaussian":
            return float(np.sqrt(3.0 * self.param))
        return 3.0 * self.param

    @staticmethod
    def from_effective_range(family, sill, effective_range, nugget=0.0) -> "KernelSpec":
        if family == "gaussian":
            param = effective_range**2 / 3.0
        else:
            param = effective_range / 3.0
        return KernelSpec(family, sill, param, nugget)


def build_gram(kernel: KernelSpec, X) -> np.ndarray:
    """K_ij = k(||x_i - x_j||).  Nugget is NOT included here."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    H = cdist(X, X)
    return kernel(H)


@dataclass(frozen=True)
class GPAxisModel:
    """Fitted scalar GP for one displacement axis.

    Holds the Cholesky factor of K + (nugget + jitter) I and the precomputed
    weights alpha = K_reg^{-1} (y - mean_const).  An empty training set is
    allowed and represents the prior.
    """

    kernel: KernelSpec
    X: np.ndarray  # (N, 3) training locations
    y: np.ndarray  # (N,) training values for this axis
    chol: np.ndarray  # (N, N) lower factor of the regularized Gram
    alpha: np.ndarray  # (N,)
    mean_const: float = 0.0
    jitter: float = 0.0

    @property
    def n_training(self) -> int:
        return self.X.shape[0]


def prior_model(kernel: KernelSpec, mean_const: float = 0.0) -> GPAxisModel:
    """GP with no observations: mean = mean_const, variance = sill everywhere."""
    return GPAxisModel(
        kernel,
        np.zeros((0, 3)),
        np.zeros(0),
        np.zeros((0, 0)),
        np.zeros(0),
        mean_const=mean_const,
    )


def fit_gp_axis(kernel: KernelSpec, X, y, mean_const: float = 0.0) -> GPAxisModel:
    """Factorize the regularized Gram matrix and precompute the weights.

    On Cholesky failure the jitter escalates by factors of 10 from
    JITTER_START*sill up to JITTER_MAX*sill; the final jitter is recorded.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] == 0:
        return prior_model(kernel, mean_const)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} locations but {y.shape[0]} values")

    K = build_gram(kernel, X)
    n = K.shape[0]
    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(K + (kernel.nugget + jitter) * np.eye(n))
            break
        except np.linalg.LinAlgError:
            if jitter == 0.0:
                jitter = JITTER_START * kernel.sill
            else:
                jitter *= 10.0
            if jitter > JITTER_MAX * kernel.sill * (1 + 1e-12):
                raise IllConditionedError(
                    f"Gram factorization failed at max jitter {jitter:.3g}",
                    final_jitter=jitter,
                )
    alpha = cho_solve((L, True), y - mean_const)
    return GPAxisModel(kernel, X, y, L, alpha, mean_const=mean_const, jitter=jitter)


def _cross_covariance(model: GPAxisModel, X_star) -> np.ndarray:
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    return model.kernel(cdist(model.X, X_star))  # (N, N*)


def predict_mean(model: GPAxisModel, X_star) -> np.ndarray:
    """Posterior mean mu* = mean_const + K_*^T alpha at each query point."""
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    if model.n_training == 0:
        return np.full(X_star.shape[0], model.mean_const)
    Ks = _cross_covariance(model, X_star)
    return model.mean_const + Ks.T @ model.alpha


def predict_variance(model: GPAxisModel, X_star) -> np.ndarray:
    """Marginal posterior variance k(0) - k_*^T K_reg^{-1} k_* per query point."""
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    prior = model.kernel.sill
    if model.n_training == 0:
        return np.full(X_star.shape[0], prior)
    Ks = _cross_covariance(model, X_star)
    v = np.linalg.solve(model.chol, Ks)  # L v = K_*
    var = prior - np.sum(v * v, axis=0)
    if np.any(var < -1e-10):
        raise AssertionError(f"posterior variance below -1e-10: min {var.min():.3g}")
    return np.maximum(var, 0.0)


def predict_covariance(model: GPAxisModel, X_star) -> np.ndarray:
    """Full posterior covariance K_** - K_*^T K_reg^{-1} K_* (small N* only)."""
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    m = X_star.shape[0]
    if m > COVARIANCE_POINT_GUARD:
        raise SizeGuardError(
            f"{m} query points exceeds the {COVARIANCE_POINT_GUARD}-point guard; "
            "use predict_variance for dense grids"
        )
    Kss = model.kernel(cdist(X_star, X_star))
    if model.n_training == 0:
        return Kss
    Ks = _cross_covariance(model, X_star)
    v = np.linalg.solve(model.chol, Ks)
    cov = Kss - v.T @ v
    return 0.5 * (cov + cov.T)


def fit_axis_models(kernels, observations, mean_const: float = 0.0):
    """Fit the three per-axis GPs on a shared landmark set.

    `kernels` is a single KernelSpec (shared) or a sequence of three.
    """
    from .core_types import observation_arrays

    X, D = observation_arrays(observations)
    if isinstance(kernels, KernelSpec):
        kernels = (kernels, kernels, kernels)
    return tuple(
        fit_gp_axis(kernels[ax], X, D[:, ax], mean_const=mean_const) for ax in range(3)
    )


def predict_displacements(models, X_star) -> np.ndarray:
    """Stack the three axis posterior means into (N*, 3) displacement vectors."""
    return np.stack([predict_mean(m, X_star) for m in models], axis=1)


# ---------------------------------------------------------------------------
# Thin-plate spline baseline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TPSModel:
    """3D thin-plate interpolant: U(r) = r kernel plus a degree-1 polynomial."""

    centers: np.ndarray  # (N, 3)
    weights: np.ndarray  # (N, n_axes) bending coefficients
    poly: np.ndarray  # (4, n_axes) rows: 1, x, y, z


def fit_tps(X, values) -> TPSModel:
    """Exact thin-plate interpolation of scattered values (scalar or vector)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    V = np.asarray(values, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    n = X.shape[0]
    if n < 4:
        raise DegenerateGeometryError(f"thin-plate fit needs >= 4 centers, have {n}")
    P = np.hstack([np.ones((n, 1)), X])  # (n, 4)
    sv = np.linalg.svd(P, compute_uv=False)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    if rank < 4:
        raise DegenerateGeometryError(
            f"thin-plate centers are coplanar (polynomial rank {rank} < 4)", rank=rank
        )
    K = cdist(X, X)  # U(r) = r in 3D
    A = np.zeros((n + 4, n + 4))
    A[:n, :n] = K
    A[:n, n:] = P
    A[n:, :n] = P.T
    rhs = np.zeros((n + 4, V.shape[1]))
    rhs[:n] = V
    sol = np.linalg.solve(A, rhs)
    return TPSModel(X, sol[:n], sol[n:])


def tps_predict(model: TPSModel, X_star) -> np.ndarray:
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    K = cdist(X_star, model.centers)
    P = np.hstack([np.ones((X_star.shape[0], 1)), X_star])
    out = K @ model.weights + P @ model.poly
    return out[:, 0] if out.shape[1] == 1 else out
