"""Treated risk ratio estimation for threshold-assigned treatments.

Estimates the causal risk ratio for the treated from fuzzy
regression-discontinuity data with binary outcomes: Bayesian model
variants (optionally constrained to positive ratios), a
method-of-moments comparator with bootstrap intervals, instrument
diagnostics, and a simulation laboratory.
"""

from .data import (
    CellCounts,
    Observation,
    Window,
    WindowedSample,
    cell_counts,
    load_dataset,
    plug_in_rrt,
    window,
)
from .errors import (
    DataError,
    DgpOverflowError,
    EmptyArmError,
    RdriskError,
    SamplerError,
    UnidentifiedError,
)
from .explore import BinnedSummary, explore
from .freq import BoundsResult, FTestResult, GmmFit, balke_pearl_bounds, first_stage_f, gmm_msmm
from .mcmc import ChainSet, SamplerConfig, TargetDensity, diagnostics, sample
from .models import (
    ModelSpec,
    PriorSpec,
    RrtEstimate,
    build_target,
    build_target_pois_flex,
    build_target_pois_pois,
    build_target_pois_prod_flex,
    fit_bayes,
    summarize,
)
from .simlab import (
    EstimatorSpec,
    ScenarioSpec,
    SimReport,
    generate,
    run_grid,
    scenario_grid,
)
from .smoothing import SmoothingSpline, fit_smoothing_spline

__version__ = "0.1.0"
