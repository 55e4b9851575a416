"""Spectral band trees, pre-dimensions and Gibbs-like measures for Sturm Hamiltonians."""

__version__ = "0.1.0"

from .errors import SturmError  # noqa: F401
from .frequency import FrequencySpec, parse_cf  # noqa: F401
