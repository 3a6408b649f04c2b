"""Body-orientation estimation from radar-measured respiratory harmonics.

The signal chain runs from simulated range-profile cubes through
beamforming, clutter suppression and phase-based displacement recovery to
harmonic features, a two-step (front/back classifier plus per-class ridge)
orientation model and its cross-validated evaluation.
"""

from .beamform import ArrayConfig, Beamformer, RadarImage, form_image, polar_to_cartesian, taylor_taper
from .displacement import (
    ClutterConfig,
    DisplacementExtractor,
    DisplacementWaveform,
    extract_displacement,
    locate_target,
    remove_clutter,
    unwrap,
    wrap,
)
from .evaluation import (
    BenchmarkConfig,
    EvalReport,
    ParticipantKFold,
    cc,
    confusion_matrix,
    feature_pvalues,
    kfold_split,
    rmse,
    roc_auc,
    run_benchmark,
)
from .exceptions import RespireError
from .features import (
    FeatureTable,
    FeatureVector,
    HarmonicFeatures,
    asd,
    dtft_at,
    estimate_f0,
    extract_features,
)
from .model import (
    FrontBackClassifier,
    HierarchicalModel,
    HierarchicalOrientationRegressor,
    RidgeAngleRegressor,
    classify,
    fit_hier,
    fit_logistic,
    fit_ridge,
    predict_hier,
)
from .pipeline import load_config, run_pipeline
from .scene import (
    DatasetConfig,
    ProfileAnchors,
    RangeProfileCube,
    RespirationParams,
    SceneConfig,
    gen_cube,
    gen_dataset,
    gen_waveform,
    orientation_profile,
)

__version__ = "0.1.0"
