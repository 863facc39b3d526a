"""gpdeform: dense 3D deformation fields with uncertainty from sparse landmarks.

Pipeline: landmark-based affine pre-alignment, per-axis Gaussian-process
interpolation of the residual displacements (kernels from variograms or a
cross-validated grid search), dense field + voxelwise uncertainty map, and
an HTTP session service for interactively adding landmarks where the
uncertainty is high.
"""

__version__ = "0.1.0"

from .affine import AffineTransform, apply_affine, fit_affine, invert_affine
from .core_types import (
    DisplacementObservation,
    GridSpec,
    LandmarkPair,
    LandmarkSet,
    compute_displacements,
    validate_landmark_set,
)
from .field import (
    DenseField,
    UncertaintyMap,
    Volume,
    generate_dense_field,
    generate_uncertainty_map,
    transform_point,
    warp_volume,
)
from .gp import (
    GPAxisModel,
    KernelSpec,
    TPSModel,
    build_gram,
    fit_axis_models,
    fit_gp_axis,
    fit_tps,
    predict_covariance,
    predict_displacements,
    predict_mean,
    predict_variance,
    tps_predict,
)
from .evaluate import (
    SyntheticCase,
    SyntheticSpec,
    generate_synthetic_case,
    mean_euclidean_error,
    render_report,
    run_protocol,
)
from .kernel_search import CVResult, SearchGrid, choose_protocol, cv_error, default_grid, grid_search
from .variogram import (
    EmpiricalVariogram,
    VariogramModel,
    bin_variogram,
    effective_range,
    fit_variogram_model,
    model_to_kernel,
    variogram_cloud,
)

__all__ = [name for name in dir() if not name.startswith("_")]
