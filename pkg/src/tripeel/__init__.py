"""Random infinite planar triangulations, one peeled triangle at a time."""

from .boltzmann import BoltzmannFiller
from .counting import count_decomposition, count_triangulations
from .errors import (
    BudgetExceededError,
    DomainError,
    InsufficientExplorationError,
    InvariantViolationError,
    MisuseError,
    NumericalInstabilityError,
    TableOverflowError,
    TripeelError,
)
from .experiments import (
    EXPERIMENTS,
    constants_report,
    growth_targets,
    report_from_csv,
    report_from_json,
    report_to_csv,
    report_to_json,
    run_experiment,
)
from .params import (
    KAPPA_MAX,
    PeelParams,
    alpha_from_kappa,
    build_params,
    drift,
    kappa_from_alpha,
    mean_hole_volume,
    peel_transition,
    q_step,
    z_partition,
)
from .peeling import (
    HullRecord,
    LayerChain,
    LayerEngine,
    PeelEngine,
    PeelTrace,
    StepRecord,
    StepSampler,
    complete_ball,
    estimate_pi_kappa,
    replay_trace,
    run_algorithm,
    run_chain,
    run_layers,
    simulate_unconditioned,
)
from .planarmap import TriMap
from .rng import RngStream, trial_stream
from .walk import (
    WalkTrace,
    estimate_inv_degree,
    intersection_experiment,
    range_growth,
    run_walk_peeling,
    speed_estimate,
    stationarity_test,
)

__version__ = "0.1.0"

__all__ = [
    "EXPERIMENTS",
    "KAPPA_MAX",
    "BoltzmannFiller",
    "HullRecord",
    "LayerChain",
    "LayerEngine",
    "PeelEngine",
    "PeelParams",
    "PeelTrace",
    "RngStream",
    "StepRecord",
    "StepSampler",
    "TriMap",
    "WalkTrace",
    "alpha_from_kappa",
    "build_params",
    "complete_ball",
    "constants_report",
    "count_decomposition",
    "count_triangulations",
    "drift",
    "estimate_inv_degree",
    "estimate_pi_kappa",
    "growth_targets",
    "intersection_experiment",
    "kappa_from_alpha",
    "mean_hole_volume",
    "peel_transition",
    "q_step",
    "range_growth",
    "replay_trace",
    "report_from_csv",
    "report_from_json",
    "report_to_csv",
    "report_to_json",
    "run_algorithm",
    "run_chain",
    "run_experiment",
    "run_layers",
    "run_walk_peeling",
    "simulate_unconditioned",
    "speed_estimate",
    "stationarity_test",
    "trial_stream",
    "z_partition",
    "TripeelError",
    "DomainError",
    "MisuseError",
    "BudgetExceededError",
    "InsufficientExplorationError",
    "NumericalInstabilityError",
    "TableOverflowError",
    "InvariantViolationError",
]
