"""The game defined by a detailed-balanced mass-action network.

Player ``i`` controls the concentration ``w_i`` and its loss is the
antiderivative in ``w_i`` of the i-th component of the reaction flux
``xi(w) = sum_r (kf w^alpha - kb w^beta)(alpha - beta)``.  With a
detailed-balanced reference state ``w_inf`` and ``kappa_r = kf w_inf^alpha``
the game carries the entropy

    E(w) = sum_i w_i (log(w_i / w_inf_i) - 1)

and the Onsager matrix

    H(w) = sum_r kappa_r lmean(w^alpha / w_inf^alpha, w^beta / w_inf^beta)
           (alpha - beta)(alpha - beta)^T

such that ``xi(w) = H(w) grad E(w)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ReactionNetwork, as_state, check_detailed_balance, reaction_fluxes, wegscheider_matrix
from .symmetry import DifferentiableGame, GameHessianSample, line_integral

__all__ = [
    "NotDetailedBalancedError",
    "CrnGame",
    "LossBundle",
    "DissipationEvaluation",
    "loss",
    "losses",
    "simultaneous_gradient",
    "game_hessian",
    "loss_bundle",
    "entropy",
    "entropy_gradient",
    "log_mean",
    "onsager_matrix",
    "psi_star",
    "psi_star_gradient",
    "psi_star_cosh",
    "psi_star_cosh_gradient",
    "dissipation_evaluation",
    "verify_generalized_potential",
    "generalized_potential_difference",
]


class NotDetailedBalancedError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CrnGame:
    """A network together with a positive detailed-balanced state.

    Use :meth:`unchecked` to build a game on a state that is *not* detailed
    balanced, e.g. for negative controls.
    """

    network: ReactionNetwork
    equilibrium: np.ndarray
    kappas: np.ndarray

    def __init__(self, network: ReactionNetwork, equilibrium, tol: float = 1e-10, _check: bool = True):
        w_inf = as_state(equilibrium, network.n_species)
        if _check:
            report = check_detailed_balance(network, w_inf, tol)
            if not report.balanced:
                worst = int(np.argmax(report.relative_residuals))
                raise NotDetailedBalancedError(
                    f"state is not detailed balanced (reaction {worst}: relative residual "
                    f"{report.relative_residuals[worst]:.3g})")
        kappas = network.kf * np.exp(network.alpha @ np.log(w_inf))
        object.__setattr__(self, "network", network)
        object.__setattr__(self, "equilibrium", w_inf)
        object.__setattr__(self, "kappas", kappas)

    @classmethod
    def unchecked(cls, network: ReactionNetwork, equilibrium) -> "CrnGame":
        return cls(network, equilibrium, _check=False)

    @property
    def n_players(self) -> int:
        return self.network.n_species

    def as_differentiable_game(self) -> DifferentiableGame:
        """View for the generic tools in :mod:`crngames.symmetry`."""
        return DifferentiableGame(
            dims=(1,) * self.n_players,
            losses=lambda w: losses(self, w),
            gradient=lambda w: simultaneous_gradient(self, w),
            hessian=lambda w: game_hessian(self, w).matrix,
            domain=lambda w: bool(np.all(w > 0)),
        )


def _state(game, w, positive=True):
    return as_state(w, game.network.n_species, positive)


# ---------------------------------------------------------------------------
# losses and their derivatives

def loss(game: CrnGame, i: int, w) -> float:
    """Loss of player ``i`` (0-based).

    Each monomial of the flux has its ``w_i`` exponent raised by one and is
    divided by the new exponent; the backward monomial keeps the product
    exponents ``beta`` throughout.
    """
    net = game.network
    if not 0 <= i < net.n_species:
        raise IndexError(f"player index {i} out of range for {net.n_species} players")
    w = _state(game, w)
    fwd, bwd = reaction_fluxes(net, w)
    a_i, b_i = net.alpha[:, i], net.beta[:, i]
    terms = fwd * w[i] / (a_i + 1) - bwd * w[i] / (b_i + 1)
    return float(terms @ (a_i - b_i))


def losses(game: CrnGame, w) -> np.ndarray:
    return np.array([loss(game, i, w) for i in range(game.n_players)])


def simultaneous_gradient(game: CrnGame, w) -> np.ndarray:
    """``xi(w)``; the negative of the mass-action rate.  ``w >= 0`` allowed."""
    net = game.network
    w = _state(game, w, positive=False)
    if np.any(w < 0):
        raise ValueError("concentrations must be non-negative")
    fwd, bwd = reaction_fluxes(net, w)
    return (fwd - bwd) @ (net.alpha - net.beta)


def game_hessian(game: CrnGame, w) -> GameHessianSample:
    """Analytic game Hessian ``d xi_i / d w_j``."""
    net = game.network
    w = _state(game, w)
    fwd, bwd = reaction_fluxes(net, w)
    # d(w^alpha)/dw_j = alpha_j w^alpha / w_j
    dflux = (fwd[:, None] * net.alpha - bwd[:, None] * net.beta) / w
    H = (net.alpha - net.beta).T @ dflux
    return GameHessianSample(w, H, (1,) * net.n_species, True)


@dataclass(frozen=True)
class LossBundle:
    losses: np.ndarray
    simultaneous_gradient: np.ndarray
    game_hessian: GameHessianSample


def loss_bundle(game: CrnGame, w) -> LossBundle:
    return LossBundle(losses(game, w), simultaneous_gradient(game, w), game_hessian(game, w))


# ---------------------------------------------------------------------------
# gradient structure

def entropy(game: CrnGame, w) -> float:
    w = _state(game, w)
    return float(np.sum(w * (np.log(w / game.equilibrium) - 1.0)))


def entropy_gradient(game: CrnGame, w) -> np.ndarray:
    w = _state(game, w)
    return np.log(w / game.equilibrium)


_SERIES_CUTOFF = 1e-3


def log_mean(a, b):
    """Logarithmic mean ``(a - b) / (log a - log b)``, equal to ``a`` when a == b.

    Evaluated through ``u = (a - b) / (a + b)`` as
    ``(a + b) / 2 * u / atanh(u)`` when the arguments are close, with a
    series for ``|u| < 1e-3``; this keeps the result symmetric and free of
    cancellation.  Works elementwise on arrays.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("log_mean needs positive arguments")
    s = a + b
    u = (a - b) / s
    u2 = u * u
    small = np.abs(u) < _SERIES_CUTOFF
    mid = ~small & (np.abs(u) < 0.5)
    far = ~small & ~mid
    out = np.empty(np.broadcast(a, b).shape)
    # u / atanh(u) = 1 / (1 + u^2/3 + u^4/5 + u^6/7 + ...)
    out[small] = (0.5 * s / (1 + u2 * (1 / 3 + u2 * (1 / 5 + u2 / 7))))[small]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[mid] = (0.5 * s * u / np.arctanh(u))[mid]
        out[far] = ((a - b) / (np.log(a) - np.log(b)))[far]
    return out[()] if out.ndim == 0 else out


def _normalized_monomials(game, w):
    net = game.network
    logr = np.log(w / game.equilibrium)
    return np.exp(net.alpha @ logr), np.exp(net.beta @ logr)


def onsager_matrix(game: CrnGame, w) -> np.ndarray:
    """Symmetric positive semidefinite matrix ``H(w)``."""
    w = _state(game, w)
    net = game.network
    xa, xb = _normalized_monomials(game, w)
    coef = game.kappas * log_mean(xa, xb)
    nu = net.alpha - net.beta
    H = nu.T @ (coef[:, None] * nu)
    return 0.5 * (H + H.T)


def psi_star(game: CrnGame, w, mu) -> float:
    """Quadratic dissipation dual ``1/2 mu^T H(w) mu``."""
    mu = np.asarray(mu, dtype=float)
    return float(0.5 * mu @ onsager_matrix(game, w) @ mu)


def psi_star_gradient(game: CrnGame, w, mu) -> np.ndarray:
    """Derivative of :func:`psi_star` in ``mu``, i.e. ``H(w) mu``."""
    return onsager_matrix(game, w) @ np.asarray(mu, dtype=float)


def psi_star_cosh(game: CrnGame, w, mu) -> float:
    """Cosh-type dissipation dual, paired with half the entropy.

    ``sum_r 2 kappa_r sqrt(x_alpha x_beta) (cosh((alpha - beta) . mu) - 1)``
    with ``x_alpha = w^alpha / w_inf^alpha``; at ``w_inf = 1`` the prefactor
    is ``w^((alpha + beta) / 2)``.
    """
    w = _state(game, w)
    mu = np.asarray(mu, dtype=float)
    xa, xb = _normalized_monomials(game, w)
    z = (game.network.alpha - game.network.beta) @ mu
    return float(np.sum(2 * game.kappas * np.sqrt(xa * xb) * (np.cosh(z) - 1.0)))


def psi_star_cosh_gradient(game: CrnGame, w, mu) -> np.ndarray:
    w = _state(game, w)
    mu = np.asarray(mu, dtype=float)
    nu = game.network.alpha - game.network.beta
    xa, xb = _normalized_monomials(game, w)
    return (2 * game.kappas * np.sqrt(xa * xb) * np.sinh(nu @ mu)) @ nu


@dataclass(frozen=True)
class DissipationEvaluation:
    onsager: np.ndarray
    psi_star: float
    psi_star_cosh: float


def dissipation_evaluation(game: CrnGame, w, mu) -> DissipationEvaluation:
    H = onsager_matrix(game, w)
    mu = np.asarray(mu, dtype=float)
    return DissipationEvaluation(H, float(0.5 * mu @ H @ mu), psi_star_cosh(game, w, mu))


def verify_generalized_potential(game: CrnGame, w) -> float:
    """Relative residual ``|xi - H grad E|_inf / (1 + |xi|_inf)``.

    Vanishes (to rounding) whenever the game's reference state is detailed
    balanced.
    """
    w = _state(game, w)
    xi = simultaneous_gradient(game, w)
    rhs = onsager_matrix(game, w) @ entropy_gradient(game, w)
    return float(np.abs(xi - rhs).max() / (1.0 + np.abs(xi).max()))


def generalized_potential_difference(game: CrnGame, z0, z1, quadrature_steps: int = 1000,
                                     via: str = "entropy") -> float:
    """``E(z1) - E(z0)`` recovered as a line integral.

    ``via="entropy"`` integrates ``z' . grad E(z)``.  ``via="dissipation"``
    integrates ``z' . H(z)^+ xi(z)``, reconstructing the entropy gradient
    from the game alone; it only sees the part of ``grad E`` in the range of
    ``H``, so every segment must stay inside one compatibility class.
    A list of vertices may be given as ``z1`` for a polyline path.
    """
    z0 = _state(game, z0)
    z1 = np.asarray(z1, dtype=float)
    vertices = [z0] + (list(z1) if z1.ndim == 2 else [z1])
    for v in vertices[1:]:
        _state(game, v)

    if via == "entropy":
        field = lambda z: entropy_gradient(game, z)  # noqa: E731
    elif via == "dissipation":
        W = wegscheider_matrix(game.network)
        for a, b in zip(vertices[:-1], vertices[1:]):
            step = b - a
            coef = np.linalg.lstsq(W, step, rcond=None)[0]
            if np.abs(W @ coef - step).max() > 1e-10 * max(1.0, np.abs(step).max()):
                raise ValueError("path leaves the compatibility class; use via='entropy'")

        def field(z):
            return np.linalg.lstsq(onsager_matrix(game, z), simultaneous_gradient(game, z),
                                   rcond=1e-12)[0]
    else:
        raise ValueError(f"unknown route {via!r}")
    return line_integral(field, vertices, quadrature_steps, domain=lambda z: bool(np.all(z > 0)))
