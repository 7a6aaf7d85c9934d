"""Joint stratification and multivariate sample allocation.

Basic strata are grouped into strata by a hybrid estimation-of-distribution
search; each candidate grouping is scored by its Bethel-Chromy optimal
sample size under CV constraints on the target totals.
"""

__version__ = "0.1.0"

from .aggregate import StratumStats, aggregate, normalize_labels
from .bethel import Allocation, BethelOptions, CvReport, Evaluator, allocate, compute_cv, evaluate
from .errors import InfeasibleError, StrathedaError
from .frame import (
    Frame,
    PrecisionConstraints,
    ProblemInstance,
    build_atomic_strata,
    build_continuous_strata,
    kmeans_bin,
    load_basic_strata,
    load_constraints,
    load_frame,
)
from .heda import HedaConfig, RunReport, run_heda
from .oracle import bell, enumerate_partitions, grid_search
