"""Hierarchical graph embedding in metric cones."""

from .geometry import ConePoint, EuclideanSpace, MetricCone, PoincareBall
from .graphs import Graph, SplitGraph
from .kernels import BACKEND

__version__ = "0.1.0"
