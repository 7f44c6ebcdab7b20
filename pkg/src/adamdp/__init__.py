"""Adherence-aware Markov decision processes.

Solvers and analysis tools for recommending policies to a decision maker who
follows a recommendation only part of the time and otherwise falls back on a
baseline policy.
"""

from .adherence import (
    AdherenceKind,
    AdherenceSpec,
    build_surrogate,
    build_surrogate_state_action,
    effective_policy,
    export_lp,
    solve_adamdp,
)
from .adversarial import (
    AdherenceDistribution,
    AdversaryKind,
    AdversaryModel,
    McReport,
    SaddleReport,
    adversary_best_response,
    check_saddle,
    simulate_random_adherence,
)
from .analysis import (
    ThetaSweep,
    deterioration_curve,
    suboptimality_bound,
    theta_sweep,
    value_similar_check,
    worst_case_family,
)
from .constrained import CardinalityBudget, evaluate_constrained, export_mip
from .core import (
    MdpInstance,
    SolveResult,
    StationaryPolicy,
    Violation,
    evaluate_policy,
    solve_nominal,
    validate_instance,
)
from .errors import (
    AdaMDPError,
    BundleFormatError,
    DegenerateReturnError,
    DimensionError,
    GuardExceededError,
    InvalidInstanceError,
    InvalidSpecError,
)
from .instances import (
    InstanceBundle,
    healthcare_template,
    load_bundle,
    machine_replacement_template,
    random_instance,
    random_policy,
    save_bundle,
    toy_counterexample,
)
from .robust import BaselineAmbiguity, ThetaInterval, robust_baseline_solve, robust_theta_solve

__version__ = "0.1.0"
