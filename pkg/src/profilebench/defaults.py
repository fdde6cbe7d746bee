"""Protocol constants shared by every module and by the CLI defaults.

Each value below is part of the extreme-profile generation and evaluation
protocol. Keep them in one place so the CLI, the manifests and the snapshot
test all read the same numbers.
"""

# Fixed generation/evaluation camera: distance 0.8 model units from the
# origin, 20 degree field of view (treated as vertical).
CAMERA_DISTANCE = 0.8
CAMERA_FOV_DEG = 20.0
FOV_AXIS = "vertical"

# Geometry cues (depth, normals, silhouettes, landmarks) are rendered at
# 1024x1024; per-vertex visibility for the jawline loss uses a 256x256 raster.
RENDER_RESOLUTION = 1024
VISIBILITY_RESOLUTION = 256
# Regressor input resolution, also the default output size of the
# diffusion conditioning bundle.
INPUT_RESOLUTION = 512

# Training objective weights (parameter, 3D landmark, visible jawline).
LOSS_WEIGHTS = (1.0, 100.0, 10.0)
# 68-point landmark convention; the first 17 are the contour points that
# the landmark loss leaves out (51 static landmarks remain).
N_LANDMARKS = 68
N_CONTOUR_LANDMARKS = 17
# Jawline band size (chin to ear) in the FLAME configuration.
N_JAWLINE = 65

# Parameter sampling: yaw uniform in [85, 95] degrees; shape and the other
# pose scalars from N(0, 0.7^2) truncated to [-2, 2].
YAW_RANGE_DEG = (85.0, 95.0)
SAMPLE_SIGMA = 0.7
SAMPLE_CLIP = 2.0
SHAPE_DIM = 300
# Global rotation (3) + neck rotation (3); yaw is one of the six scalars.
POSE_DIM = 6
NON_YAW_POSE_DIM = POSE_DIM - 1

# 100k samples split 80k / 10k / 10k.
DATASET_SIZE = 100_000
SPLIT_SIZES = (80_000, 10_000, 10_000)
SPLIT_PROPORTIONS = (0.8, 0.1, 0.1)
TRAINING_SEED = 42

# Geometry-appearance consistency check: shifted-silhouette control and
# boundary coverage radius, both in pixels of the evaluation resolution.
CONTROL_SHIFT = (16, 0)
COVERAGE_RADIUS_PX = 2.0
# Not fixed by the protocol; documented choices recorded in every report.
SOBEL_THRESHOLD = 0.25
BAND_WIDTH_PX = 8.0

# Diffusion conditioning bundle (SD 1.5 + depth/normal ControlNets).
DIFFUSION_STEPS = 25
GUIDANCE_SCALE = 7.5
CONDITIONING_SCALES = (0.7, 0.4)
DIFFUSION_BACKBONE = "stable-diffusion-v1-5"
CONTROLNET_MODELS = (
    "lllyasviel/control_v11f1p_sd15_depth",
    "lllyasviel/control_v11p_sd15_normalbae",
)

# Clinical contour proxy: jawline ROI starts at 55% of the bounding-box height.
CLINICAL_ROI_START = 0.55

# Evaluation statistics.
BOOTSTRAP_SAMPLES = 10_000
CONFIDENCE_LEVEL = 0.95


def snapshot():
    """Flat dict of every protocol constant, used for config echo."""
    return {
        "camera_distance": CAMERA_DISTANCE,
        "camera_fov_deg": CAMERA_FOV_DEG,
        "fov_axis": FOV_AXIS,
        "render_resolution": RENDER_RESOLUTION,
        "visibility_resolution": VISIBILITY_RESOLUTION,
        "input_resolution": INPUT_RESOLUTION,
        "loss_weights": list(LOSS_WEIGHTS),
        "n_landmarks": N_LANDMARKS,
        "n_contour_landmarks": N_CONTOUR_LANDMARKS,
        "n_jawline": N_JAWLINE,
        "yaw_range_deg": list(YAW_RANGE_DEG),
        "sample_sigma": SAMPLE_SIGMA,
        "sample_clip": SAMPLE_CLIP,
        "shape_dim": SHAPE_DIM,
        "pose_dim": POSE_DIM,
        "split_sizes": list(SPLIT_SIZES),
        "split_proportions": list(SPLIT_PROPORTIONS),
        "control_shift": list(CONTROL_SHIFT),
        "coverage_radius_px": COVERAGE_RADIUS_PX,
        "sobel_threshold": SOBEL_THRESHOLD,
        "band_width_px": BAND_WIDTH_PX,
        "diffusion_steps": DIFFUSION_STEPS,
        "guidance_scale": GUIDANCE_SCALE,
        "conditioning_scales": list(CONDITIONING_SCALES),
    }
