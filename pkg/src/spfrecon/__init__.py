"""Single-particle reconstruction for convolutional (fluorescence) microscopy.

Jointly estimates a 3-D volume and the pose of every view by stochastic
gradient descent in the Fourier domain, with an importance-sampled
orientation search and correlation-based translation estimates.
"""

from .estimator import JointReconstructor
from .evaluation import conical_fsc, fsc, register_to_ground_truth, ssim3d
from .forward import PsfSpec, SimConfig, ViewSet, generate_dataset, make_phantom
from .recon import ReconConfig, reconstruct
from .so3 import Orientation, Pose, So3Grid

__version__ = "0.1.0"

__all__ = [
    "JointReconstructor",
    "Orientation",
    "Pose",
    "PsfSpec",
    "ReconConfig",
    "SimConfig",
    "So3Grid",
    "ViewSet",
    "conical_fsc",
    "fsc",
    "generate_dataset",
    "make_phantom",
    "reconstruct",
    "register_to_ground_truth",
    "ssim3d",
]
