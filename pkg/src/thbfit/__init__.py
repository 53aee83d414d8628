"""Adaptive THB-spline fitting of parametrized scattered data."""

from .adaptive import FitConfig, FitReport, HierarchicalSurface, fit
from .bspline import CellBox, DomainError, KnotVector, TensorSpace
from .hierarchy import HierarchicalMesh
from .local_fit import LocalFitParams, PointCloud

__all__ = ["CellBox", "DomainError", "FitConfig", "FitReport", "HierarchicalMesh",
           "HierarchicalSurface", "KnotVector", "LocalFitParams", "PointCloud",
           "TensorSpace", "fit"]
__version__ = "0.1.0"
