"""Depth ranking, outlier detection and boxplots for trajectory functional data."""

from .core import (
    DuplicateId,
    GridMismatch,
    NonFiniteValue,
    NumericalError,
    RandomSeed,
    TimeGrid,
    TooFewCurves,
    Trajectory,
    TrajectoryDataError,
    TrajectoryEnsemble,
    UnknownId,
    ValidationError,
    restrict,
    validate_ensemble,
)
from .depthrank import (
    AllCurvesFlagged,
    BandAssignment,
    DepthRanking,
    MsbdConfig,
    assign_bands,
    build_boxplot,
    msbd,
    rank,
    sbd,
)
from .detect import (
    AllZeroWo,
    DetectionReport,
    MsbdRuleConfig,
    RmdRuleConfig,
    SingularSubsetCov,
    WoRuleConfig,
    detect_all,
    mcd,
    msbd_outliers,
    rmd_outliers,
    wo_outliers,
)
from .outlyingness import (
    NonUniformGrid,
    OutlyingnessProfile,
    TooShort,
    WoConfig,
    directional_outlyingness,
    mo_vo,
    profile_ensemble,
    wo,
)
from .pointwise import (
    CrossSection,
    DegenerateSection,
    Mahalanobis,
    Projection,
    pointwise_median,
    pointwise_outlyingness,
    simplex_contains,
)
from .preprocess import (
    NoCommonInterval,
    RawTrack,
    SmoothingConfig,
    align_common_start,
    smooth_resample,
)
from .simgen import (
    BenchmarkResult,
    ClosedCurveConfig,
    DetectorConfigs,
    InvalidCrossParams,
    MaternSpec,
    Model,
    ModelSpec,
    NotPositiveDefinite,
    benchmark,
    gen_model1,
    gen_model2,
    gen_model3,
    gen_model4,
    gp_sample,
    matern_corr,
)
from .figures import (
    BoxplotFigure,
    MsbdWoFigure,
    boxplot_figure,
    emit_boxplot_svg,
    emit_msbdwo,
    msbdwo_figure,
)
from .io import (
    EmptyInput,
    MalformedRow,
    NonMonotoneTime,
    ensemble_from_tracks,
    ingest_csv,
    write_ensemble_csv,
)

__version__ = "0.1.0"
