"""Crossing-preserving geodesic vessel tracking on planar and spherical
position-orientation spaces.

The package lifts 2D images to a 3D space of positions and orientations
(planar ``m2`` for flat images, spherical ``w2`` for fundus images of
the retinal sphere), builds orientation-dependent costs from
multi-orientation vesselness, solves a data-driven eikonal equation for
asymmetric Finsler metrics (sub-Riemannian and forward-gear), and
backtracks geodesic vessel tracks that preserve crossings and can avoid
in-place reversals (cusps).
"""

from .errors import (
    BadConfig,
    DegenerateChart,
    NoConvergence,
    OutOfChart,
    OutOfRange,
    SeedOutsideGrid,
    VesselTrackError,
    ZeroCovector,
)
from .grids import CostVolume, GridSpec, sample_volume, uniform_cost
from .manifold import (
    FrameField,
    PlanarPoint,
    Rotation3,
    SphericalPoint,
    coords_from_rotation,
    frame_field,
    frame_m2,
    frame_w2,
    rotation_from_coords,
    wrap_angle,
)
from .metric import MetricParams, dual_finsler, finsler, grad_dual_finsler
from .projection import (
    CameraGeometry,
    lift_pi,
    lift_pi_inverse,
    pi,
    pi_inverse,
    pi_jacobian,
    pullback_cost,
)
from .eikonal import (
    DistanceMap,
    SolverReport,
    default_step,
    initialize,
    local_step,
    residual_map,
    solve,
    stability_step,
    upwind_frame_derivatives,
)
from .tracking import (
    GeodesicTrack,
    backtrack,
    detect_cusps,
    finsler_length,
    map_track,
)
from .lifting import (
    FrangiParams,
    Image,
    OrientationScore,
    WaveletStack,
    build_cake_wavelets,
    cost_from_vesselness,
    cost_w2_from_r2,
    frangi_vesselness,
    load_image,
    orientation_score,
    vesselness_m2,
)
from .oracle import (
    LiftedGraph,
    build_lifted_graph,
    dijkstra_distance,
    horizontality_probe,
)
from .arrayio import load_track_csv, load_volume, save_track_csv, save_volume
from .cli import PipelineConfig, run_pipeline

__version__ = "0.1.0"
