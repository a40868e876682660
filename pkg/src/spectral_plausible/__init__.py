"""Physically plausible spectral reconstruction from RGB."""

from .augmentation import ExposureSampler, augment_pair, sample_xi
from .dataio import SynthConfig, generate_synthetic, load_cie1964
from .estimators import NullSpaceProjector, SpectralReconstructor
from .exceptions import (
    ConfigurationError,
    DimensionError,
    FitError,
    FormatError,
    RankError,
    TrainingError,
)
from .metrics import (
    MetricsReport,
    WhitePoint,
    auto_white_point,
    delta_e,
    evaluate_cubes,
    joint_eta,
    mrae,
    worst_case,
    xyz_to_lab,
)
from .plausible import (
    NullSpaceModel,
    PlausibleDecomposition,
    Recentering,
    alpha_range_report,
    build_null_model,
    extract_alpha,
    fundamental_spectrum,
    reconstruct,
    recenter,
    unrecenter,
)
from .regression import (
    RegressorSpec,
    TrainConfig,
    TrainedModel,
    fit_linear,
    mlp_forward,
    predict_spectrum,
    train,
)
from .spectral import (
    HyperCube,
    RgbImage,
    SensitivitySet,
    SpectralGrid,
    form_rgb,
    form_rgb_image,
    scale_cube,
    scale_image,
    scale_rgb,
    scale_spectrum,
)

__version__ = "0.1.0"
