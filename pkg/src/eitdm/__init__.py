"""Dual-modal tomographic imaging toolkit for circular cell-culture wells.

A 16-electrode impedance forward model on a symmetric triangular mesh,
linearized one-step reconstruction with optional optical structure
coupling, an intrinsic-image segmentation pipeline for microscope frames,
and dataset plumbing for learning-based work downstream.
"""

from .geometry import SensorGeometry
from .grids import GRID_SIZE, PixelGrid, element_pixel_map
from .mesh import Mesh, MeshError, build_mesh, electrode_arc_lengths
from .fem import (MeasurementFrame, SensitivityMatrix, SolverError,
                  canonical_pairs, forward_frame, full_forward, jacobian,
                  normalized_difference, solve_injection)
from .phantoms import (CircleInclusion, PhantomError, PhantomScene,
                       mask_image, perturb_mask, rasterize_field,
                       sample_phantom, scaffold_scene, truth_image)
from .guidance import (GuidanceReport, process_guidance,
                       process_guidance_report, select_theta, synth_guidance)
from .recon import (ReconError, cg_recon, cross_gradient, default_lambda,
                    treg_gl, treg_gl_batch)
from .metrics import MetricError, batch_metrics, mssim, rie, ssim_map
from .dataset import (Dataset, DatasetConfig, DatasetError, add_noise,
                      generate_dataset, load_dataset, stratified_split)

__version__ = "1.0.0"

__all__ = [
    "SensorGeometry", "GRID_SIZE", "PixelGrid", "element_pixel_map",
    "Mesh", "MeshError", "build_mesh", "electrode_arc_lengths",
    "MeasurementFrame", "SensitivityMatrix", "SolverError",
    "canonical_pairs", "forward_frame", "full_forward", "jacobian",
    "normalized_difference", "solve_injection",
    "CircleInclusion", "PhantomError", "PhantomScene", "mask_image",
    "perturb_mask", "rasterize_field", "sample_phantom", "scaffold_scene",
    "truth_image",
    "GuidanceReport", "process_guidance", "process_guidance_report",
    "select_theta", "synth_guidance",
    "ReconError", "cg_recon", "cross_gradient", "default_lambda",
    "treg_gl", "treg_gl_batch",
    "MetricError", "batch_metrics", "mssim", "rie", "ssim_map",
    "Dataset", "DatasetConfig", "DatasetError", "add_noise",
    "generate_dataset", "load_dataset", "stratified_split",
    "__version__",
]
