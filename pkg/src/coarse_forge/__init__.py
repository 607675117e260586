"""Finite-window certificates for coarse geometry of extended metric spaces."""

from .extdist import INF, encode_rational, to_ext, to_fraction
from .errors import CoarseForgeError

__version__ = "0.1.0"

__all__ = ["INF", "CoarseForgeError", "encode_rational", "to_ext", "to_fraction", "__version__"]
