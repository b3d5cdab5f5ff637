"""Corner-based probabilistic 3D bounding boxes.

Library and CLI for the box-corner transform and its inverse, Laplace
corner-loss modeling with analytic gradients, KLD-based uncertainty
diagnostics against point-cloud density and cuboid geometry, and recovery
of box-parameter uncertainties from corner uncertainties via error
transfer and Bayesian fusion.
"""

from .diagnostics import (
    DEFAULT_BIN_WIDTH,
    KLD_FLAG_THRESHOLD,
    BoxDiagnostics,
    DistanceBin,
    PointCloud,
    PseudoDistribution,
    corner_ensemble_variance,
    corner_point_distances,
    diagnose_box,
    distance_binned_stats,
    iou3d,
    kl_divergence,
    kld_r,
    kld_ud,
    points_in_box,
)
from .errors import (
    BoxBeliefError,
    DegenerateGeometryError,
    DegenerateLabelError,
    DegenerateUncertaintyError,
    EmptyCloudError,
    FormatError,
    InsufficientDataError,
    InvalidInputError,
    JoinError,
    LabelParseError,
    NotACuboidError,
    SchemaError,
)
from .geometry import (
    CORNER_SIGNS,
    DEFAULT_CORNER_TOL,
    DIAGONAL_PAIRS,
    H_EDGE_PAIRS,
    L_EDGE_PAIRS,
    W_EDGE_PAIRS,
    BoxParams,
    CornerSet,
    box_from_corners,
    corner_jacobian,
    corners_from_box,
    kitti_ry_from_psi,
    psi_from_kitti_ry,
    wrap_angle,
    yaw_rotation,
)
from .kitti_io import (
    CalibMatrices,
    DetectionRecord,
    KittiLabel,
    box_to_label,
    label_to_box,
    parse_calib,
    parse_labels,
    read_detections,
    read_velodyne,
    velo_to_rect_cam,
    write_detections,
)
from .loss import (
    B_MIN,
    CornerBelief,
    LaplaceParam,
    LossValue,
    box_loss_grad,
    component_nll,
    ensemble_loss,
    ensemble_loss_grad,
    fit_laplace_mle,
    laplace_density,
)
from .recovery import (
    CornerPairing,
    RecoveredBox,
    VarianceMeasurement,
    bayes_fuse,
    heading_measurement,
    mc_variance_oracle,
    recover_box,
    recover_dimension,
    recover_location,
    recover_yaw,
)
from .synth import (
    RankCorrelationResult,
    SceneSpec,
    SyntheticSample,
    density_uncertainty_correlation,
    fit_observation_belief,
    sample_scene,
)

__version__ = "0.1.0"
