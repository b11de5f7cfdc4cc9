"""State estimation for microbial growth from sampled fluorescence data."""

from .model import ModelParams, equilibria, monod, vector_field
from .sim import MeasurementSeries, SimConfig, Trajectory, integrate, sample_measurements

__all__ = [
    "ModelParams", "equilibria", "monod", "vector_field",
    "MeasurementSeries", "SimConfig", "Trajectory", "integrate", "sample_measurements",
]
__version__ = "0.1.0"
