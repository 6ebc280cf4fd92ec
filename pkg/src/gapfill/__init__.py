"""gapfill: spectral gaps, Chern pairs and edge filling for magnetic lattice models."""

__version__ = "0.1.0"

from . import errors
from .model import (
    MagneticLattice,
    GaugeField,
    RegionMask,
    HermitianOperator,
    build_gauge,
    assemble_bulk,
    assemble_restricted,
    gauge_transform,
)

__all__ = [
    "errors",
    "MagneticLattice",
    "GaugeField",
    "RegionMask",
    "HermitianOperator",
    "build_gauge",
    "assemble_bulk",
    "assemble_restricted",
    "gauge_transform",
    "__version__",
]
