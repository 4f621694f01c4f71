"""Grid norms, spread matrices, slice-function covers and evasive sets."""
from .core import (
    AuditReport,
    CylinderIntersection,
    DensityFunction,
    Grid2,
    Grid3Indicator,
    GridlabError,
    SliceFunction,
    SubCube,
    __version__,
    parse_grid,
)

__all__ = [
    "AuditReport",
    "CylinderIntersection",
    "DensityFunction",
    "Grid2",
    "Grid3Indicator",
    "GridlabError",
    "SliceFunction",
    "SubCube",
    "__version__",
    "parse_grid",
]
