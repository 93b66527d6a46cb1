"""Weighted polynomial approximation with exponential weights ``w = exp(-Q)``."""

__version__ = "0.1.0"

from .weights import WeightSpec, check_class, parse_weight  # noqa: E402,F401
from .mrs import MrsTable, compute_a  # noqa: E402,F401
from .orthopoly import RecurrenceTable, stieltjes  # noqa: E402,F401
from .operators import BasisPoly, NodalPoly  # noqa: E402,F401
from .approx import best_poly, weighted_norm  # noqa: E402,F401
