"""Generalized (d1, d2)-surface codes, the renormalization-group decoder and threshold sweeps."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .code import CssCode, build_code, code_params, crosses_logical, is_logical_z_failure
from .complex import Cell, Chain, CodeLattice, boundary, build_lattice, coboundary
from .gf2opt import BinarySystem, InfeasibleSystem, min_weight_coset
from .rgdecoder import RGDecoder, decode_rg

__all__ = [
    "BinarySystem", "Cell", "Chain", "CodeLattice", "CssCode", "InfeasibleSystem", "RGDecoder",
    "boundary", "build_code", "build_lattice", "coboundary", "code_params", "crosses_logical",
    "decode_rg", "is_logical_z_failure", "min_weight_coset", "__version__",
]
