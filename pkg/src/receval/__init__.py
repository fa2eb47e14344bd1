"""Evaluation toolkit for 3D surface reconstructions against a reference mesh."""

__version__ = "0.1.0"

from .errors import (ContractError, DegenerateGeometryError, MeshParseError, NumericalError,
                     ParseError, RecevalError, TooFewCorrespondencesError, UnderConstrainedError)
from .mesh import PointCloud, TriangleMesh
from .meshio import load_mesh, read_mesh, save_mesh, write_mesh
from .metrics import RoiSphere, evaluate_surface, normal_deviation, surface_distance
from .registration import icp_point_to_plane, register
from .trajectory import Trajectory, parse_trajectory, rms_ate
from .transform import RigidTransform

__all__ = [
    "__version__", "ContractError", "DegenerateGeometryError", "MeshParseError", "NumericalError",
    "ParseError", "RecevalError", "TooFewCorrespondencesError", "UnderConstrainedError",
    "PointCloud", "TriangleMesh", "load_mesh", "read_mesh", "save_mesh", "write_mesh",
    "RoiSphere", "evaluate_surface", "normal_deviation", "surface_distance",
    "icp_point_to_plane", "register", "Trajectory", "parse_trajectory", "rms_ate", "RigidTransform",
]
