"""Metric families: direct depth error, depth boundaries, surface smoothness,
and 3D geometric consistency."""

from .direct import (  # noqa: F401
    DELTA_THRESHOLDS,
    DirectErrors,
    delta_accuracy,
    direct_errors,
    ico_delta_accuracy,
)
from .boundary import (  # noqa: F401
    EDGE_THRESHOLDS,
    EdgeMap,
    PrecisionRecall,
    canny_edges,
    dbe,
    distance_transform,
    edge_precision_recall,
    gradient_magnitude,
    gradient_threshold_edges,
)
from .geom import (  # noqa: F401
    ALPHA_THRESHOLDS_DEG,
    OrientedPointCloud,
    SmoothnessResult,
    TriangleMesh,
    c2c,
    grid_mesh,
    lift,
    m2m_hausdorff,
    normals_from_depth,
    smoothness_metrics,
)
