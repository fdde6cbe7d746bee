"""Extreme-profile 3D face benchmark toolkit: model decoding, sampling, rasterization,
evaluation metrics, supervision losses and consistency checks."""

__version__ = "0.1.0"

from .model import (LandmarkSet3D, Mesh, ModelAsset, ModelAssetError, PoseParams,  # noqa: E402
                    canonicalize_profile, decode)
from .asset_io import asset_hash, load_model_asset, save_model_asset  # noqa: E402
from .toy import make_toy_model  # noqa: E402
from .raster import Camera, project, rasterize, render_normals, unproject, vertex_visibility  # noqa: E402
from .sampling import SampleRecord, SampleSpec, assign_split, sample_record  # noqa: E402
from .metrics import (MetricsReport, RigidTransform, boundary_chamfer,  # noqa: E402
                      clinical_contour_proxy, scan_to_mesh, silhouette_iou, umeyama_align,
                      vertex_errors)
from .stats import bootstrap_ci, paired_stats, wilcoxon_signed_rank  # noqa: E402
from .supervision import LossWeights, compute_loss, fit_landmarks, loss_gradient  # noqa: E402
from .consistency import (ConsistencyConfig, boundary_band, consistency_check,  # noqa: E402
                          sobel_edges)
