"""iOCT-volume-guided needle navigation, desk scale.

Synthetic phantom volumes stand in for the microscope, a simulated robot
stands in for the hardware; the processing pipeline (axial projection,
tool-aligned virtual B-scans, 5-DoF pose estimation, online registration,
two-phase trajectory planning with refraction correction) runs closed-loop
against a human- or script-selected target.
"""

from octnav.volume import IoctVolume, load_volume, save_volume
from octnav.pose import NeedlePose, compose_pose
from octnav.pipeline import PipelineConfig, TrialRecord, run_trial

__all__ = [
    "IoctVolume",
    "load_volume",
    "save_volume",
    "NeedlePose",
    "compose_pose",
    "PipelineConfig",
    "TrialRecord",
    "run_trial",
]

__version__ = "0.1.0"
