"""worldwalk: an interactive world-geometry engine.

Keyboard actions drive camera trajectories; each step warps the current view
through a depth-based point cloud into the new viewpoints, retrieves the most
similar latents from a pinned-FIFO history cache, and hands both to a
pluggable frame generator.
"""

from .geometry import (
    Action, ActionParams, CameraIntrinsics, CameraPose, Rotation, Trajectory,
    action_to_trajectory, camera_to_world, forward_vector, rotation_y, slerp,
    world_to_camera,
)
from .pointcloud import (
    BehindCameraError, DepthMap, Frame, InvalidDepthError, PointCloud,
    RenderOutput, build_point_cloud, project, render_point_cloud,
    render_trajectory, unproject,
)
from .scenes import (
    GroundTruthSample, SceneDescription, analytic_render, depth_from_render,
    in_free_space, trace_ray,
)
from .cache import (
    HistoryCache, LatentFrame, RetrievalResult, RetrievedLatent,
    assemble_history_tokens, cache_update, cosine_similarity, encode_latents,
    pool, retrieve,
)
from .session import (
    ExternalGenerator, GeneratorInput, SessionConfig, SessionState, StepResult,
    generator_holefill, generator_passthrough, init_session, make_generator, step,
)
from .wire import GeneratorError, GeneratorTimeoutError, PROTOCOL
from .fileio import load_depth, read_frame, save_depth, write_frame

__version__ = "0.1.0"
