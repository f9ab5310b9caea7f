"""panometrics: evaluation toolkit for equirectangular (360) depth maps.

The package measures predicted spherical depth against ground truth along
three complementary traits (direct depth accuracy, boundary preservation,
surface smoothness), adds true 3D geometric distances (point-to-plane
cloud-to-cloud, sampled mesh-to-mesh Hausdorff), ships reference supervision
losses with hand-derived analytic gradients, and provides a periodic
displacement-field warp for spherical refinement experiments.
"""

from .sphere import (  # noqa: F401
    circular_pad,
    direction,
    direction_grid,
    pixel_centers,
    pixel_to_spherical,
    sample_bilinear_wrapped,
    spherical_to_pixel,
    spherical_weights,
    wrap_longitude,
)
from .icosphere import IcoSphere, build_icosphere, project_to_pixels, sample_at_vertices  # noqa: F401
from .depthio import (  # noqa: F401
    DEFAULT_D_MAX,
    BadAspectRatio,
    DepthIOError,
    DepthPanorama,
    FilterResult,
    MalformedDepthFile,
    SampleManifest,
    SampleRecord,
    filter_split,
    load_depth,
    load_manifest,
    read_pfm,
    read_png16,
    read_rawf32,
    save_manifest,
    write_pfm,
    write_png16,
    write_rawf32,
)
from .metrics import (  # noqa: F401
    ALPHA_THRESHOLDS_DEG,
    DELTA_THRESHOLDS,
    EDGE_THRESHOLDS,
    EdgeMap,
    OrientedPointCloud,
    PrecisionRecall,
    SmoothnessResult,
    TriangleMesh,
    c2c,
    canny_edges,
    dbe,
    delta_accuracy,
    direct_errors,
    distance_transform,
    edge_precision_recall,
    gradient_magnitude,
    gradient_threshold_edges,
    grid_mesh,
    ico_delta_accuracy,
    lift,
    m2m_hausdorff,
    normals_from_depth,
    smoothness_metrics,
)
from .losses import (  # noqa: F401
    LossResult,
    VnlConfig,
    berhu,
    combine,
    combined,
    combined_with_virtual_normal,
    depth_l1,
    depth_log_l1,
    finite_difference_gradient,
    multiscale_gradient,
    normal_cosine,
    sample_triplets,
    virtual_normal,
)
from .warp import apply_displacement, column_shift_field, identity_field, read_field, write_field  # noqa: F401
from .report import (  # noqa: F401
    EvalOptions,
    Indicators,
    MetricsReport,
    RankingTable,
    evaluate,
    evaluate_pair,
    indicators,
    metric_value,
    rank_models,
)

__version__ = "0.1.0"
