"""Generalized potential games from mass-action reaction networks."""

from .network import (
    DetailedBalanceReport,
    NetworkSyntaxError,
    Reaction,
    ReactionNetwork,
    check_detailed_balance,
    conservation_basis,
    first_order_detailed_balance,
    format_network,
    load_network,
    mass_action_rate,
    network_from_json,
    network_to_json,
    parse_network,
    wegscheider_matrix,
)
from .symmetry import (
    DifferentiableGame,
    GameClass,
    GameClassification,
    SymmetrizerResult,
    Verdict,
    classify_game,
    game_hessian,
    is_symmetrizable,
    line_integral,
    potential_from_weights,
    simultaneous_gradient,
)
from .game import (
    CrnGame,
    NotDetailedBalancedError,
    entropy,
    entropy_gradient,
    generalized_potential_difference,
    log_mean,
    loss,
    losses,
    onsager_matrix,
    psi_star,
    psi_star_cosh,
    verify_generalized_potential,
)
from .dynamics import (
    EquilibriumError,
    IntegrationError,
    RateCertificate,
    Trajectory,
    equilibrium_in_class,
    integrate,
    lambda_functional,
    rate_certificate,
    relative_entropy,
    verify_exponential_decay,
)
from .optimizer import (
    Backtracking,
    DescentTrace,
    Fixed,
    ProjectedProblem,
    Termination,
    projected_descent,
    projected_simultaneous_descent,
    projection_matrix,
)

__version__ = "0.1.0"
