"""Missing-part point cloud completion: predict the hole, merge, refine.

The package is organized as:
  mesh / sampling / cloudio   geometry: meshes, splits, subsampling, file IO
  metrics                     chamfer + earth mover's distance (exact & auction)
  nn                          layers with explicit backward passes, ADAM, checks
  models                      encoder, decoders, refiner, end-to-end pipeline
  training / evaluation       datasets, the training loop, frozen-model metrics
  cli                         the `partfill` command
"""

__version__ = "0.1.0"

from .mesh import MeshParseError, TriangleMesh, load_mesh, normalize_mesh, sample_surface
from .sampling import (
    LabeledCloud,
    ShapeSample,
    farthest_point_sample,
    make_sample,
    merge_and_sample,
    minimum_density_sample,
    sphere_split,
)
from .metrics import (
    METRIC_SCALE,
    DirectionalErrors,
    Matching,
    directional_errors,
    emd_approx,
    emd_exact,
    emd_gradient,
    matched_cost,
)
from .models import CompletionModel, JointLoss, build_model, joint_loss, load_model, save_model
from .training import Dataset, TrainConfig, generate_toy_dataset, run_epoch, train

__all__ = [
    "METRIC_SCALE",
    "CompletionModel",
    "Dataset",
    "DirectionalErrors",
    "JointLoss",
    "LabeledCloud",
    "Matching",
    "MeshParseError",
    "ShapeSample",
    "TrainConfig",
    "TriangleMesh",
    "build_model",
    "directional_errors",
    "emd_approx",
    "emd_exact",
    "emd_gradient",
    "farthest_point_sample",
    "generate_toy_dataset",
    "joint_loss",
    "load_mesh",
    "load_model",
    "make_sample",
    "matched_cost",
    "merge_and_sample",
    "minimum_density_sample",
    "normalize_mesh",
    "run_epoch",
    "sample_surface",
    "save_model",
    "sphere_split",
    "train",
]
