"""Greedy matching-pursuit solvers over conic hulls of atom sets."""

from .atoms import Atom, FiniteDictionary, RankOneNonNeg, atomic_norm, diameter, lmo_approx, lmo_exact, radius
from .geometry import cone_width_2d, dir_width, mdw, pdir_width, theoretical_beta
from .objectives import Objective, least_squares, logistic_garrote, matrix_ls
from .solvers import (
    ActiveSet,
    SolverConfig,
    StepRecord,
    StepType,
    Trace,
    good_step_count,
    run_amp,
    run_fcmp,
    run_fw_rescaled,
    run_gmp,
    run_nnmp,
    run_pwmp,
)

__version__ = "0.1.0"
