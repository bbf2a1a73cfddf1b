"""Compressive correlation with phase-only filters.

A scene is measured with a few rows of a fast orthonormal basis, the
correlation plane with a reference is recovered by l1-constrained least
squares, and targets are located from the peaks of that plane.
"""

from .errors import (
    CongestionError,
    CpofError,
    DegenerateInputError,
    FormatError,
    ParameterError,
    SizeError,
    UnsupportedModeError,
)
from .filtering import CirculantOperator, apply_circulant, make_pof, pof_correlate, whiten
from .sensing import Measurement, RowSelection, SensingOperator, add_noise, measure, select_rows
from .solver import Auto, LassoProblem, SolverOptions, SolverResult, reconstruct_scene, solve_lasso
from .xforms import BasisKind, transform_1d, transform_2d

__version__ = "0.1.0"
