"""6DoF pose registration and tracking from tactile surface-normal maps."""

from .errors import (
    ConfigError,
    DataError,
    DegenerateHessianError,
    DegenerateSystemError,
    EmptyCloudError,
    GimbalLockError,
    InsufficientOverlapError,
    InvalidLoopError,
    NoContactError,
    NormalflowError,
    OutOfBoundsError,
    RowMismatchError,
    ShapeMismatchError,
    SolverError,
)
from .maps import (
    GridGeometry,
    TactileFrame,
    contact_mask_from_height,
    default_geometry,
    downsample_frame,
    gradients_to_normals,
    make_frame,
    poisson_integrate,
    sample_bilinear,
    sample_bilinear_many,
    sample_normals_with_derivatives,
)
from .se3 import (
    PoseParams,
    RigidTransform,
    compose,
    identity,
    invert,
    params_to_transform,
    rotation_exp,
    rotation_generators,
    rotation_log,
    se3_exp,
    se3_log,
    transform_distance,
    transform_to_params,
)
from .solver import (
    RegistrationResult,
    SolverConfig,
    build_jacobian,
    estimate_z_translation,
    register,
    register_forward_additive,
    shared_contact,
    warp,
)
from .icp import TactilePointCloud, frame_to_cloud, icp_point_to_plane, subsample_cloud
from .synth import (
    NoiseSpec,
    SceneSpec,
    TrajectorySpec,
    bumpy_plane,
    composite,
    contact_point,
    flat_plane,
    render_frame,
    render_sequence,
    ridge,
    rigid_about,
    roll,
    scene_center,
    slide,
    textured_sphere,
    twist,
)
from .tracker import (
    KeyframePolicy,
    TrackerState,
    close_loop,
    detect_loop_candidate,
    init_tracker,
    loop_corrections,
    naive_chain,
    track_step,
    track_stream,
)

__version__ = "0.1.0"
