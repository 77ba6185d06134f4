"""Learned boundary generators coupled to a finite-element zoom submodel for 2-D waves."""

from .config import ConfigError, RunConfig
from .dataset import Dataset, generate_dataset, lhs_sample
from .fem import SubmodelSolver, WaveSolver, solve_full, solve_submodel
from .grid import GridSpec, TimeGrid, restrict_to_subgrid, sample_on_subboundary
from .models import DcnrRegressor, WassersteinGAN, ZoomSubmodel, zoom
from .pod import PodRfRegressor, PodTransformer, RegressionForest

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Dataset",
    "DcnrRegressor",
    "GridSpec",
    "PodRfRegressor",
    "PodTransformer",
    "RegressionForest",
    "RunConfig",
    "SubmodelSolver",
    "TimeGrid",
    "WassersteinGAN",
    "WaveSolver",
    "ZoomSubmodel",
    "generate_dataset",
    "lhs_sample",
    "restrict_to_subgrid",
    "sample_on_subboundary",
    "solve_full",
    "solve_submodel",
    "zoom",
]
