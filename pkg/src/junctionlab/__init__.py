"""Signorini problem in a thick plane junction and its homogenized limit."""

from .config import ConfigError, RunConfig, load_config, parse_config_text
from .expressions import Expression, ExpressionError, parse_expression
from .geometry import JunctionConfig, Mesh, MeshError, build_junction_mesh, build_limit_mesh
from .problem_data import ProblemData, validate

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Expression",
    "ExpressionError",
    "JunctionConfig",
    "Mesh",
    "MeshError",
    "ProblemData",
    "RunConfig",
    "build_junction_mesh",
    "build_limit_mesh",
    "load_config",
    "parse_config_text",
    "parse_expression",
    "validate",
]
