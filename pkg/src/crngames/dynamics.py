"""Mass-action dynamics: integration, equilibria and explicit decay rates."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .network import (
    ReactionNetwork,
    as_state,
    check_detailed_balance,
    conservation_basis,
    wegscheider_matrix,
)

__all__ = [
    "IntegrationError",
    "EquilibriumError",
    "Trajectory",
    "integrate",
    "detailed_balance_reference",
    "wegscheider_cycle",
    "equilibrium_in_class",
    "relative_entropy",
    "dissipation",
    "RateCertificate",
    "rate_certificate",
    "lambda_functional",
    "sample_class",
    "DecayCheck",
    "verify_exponential_decay",
]

log = logging.getLogger(__name__)


class IntegrationError(RuntimeError):
    pass


class EquilibriumError(ValueError):
    pass


# ---------------------------------------------------------------------------
# entropy and dissipation

def _phi(delta):
    """``z log z - z + 1`` at ``z = 1 + delta``, accurate for small delta."""
    delta = np.asarray(delta, dtype=float)
    out = np.empty_like(delta)
    small = np.abs(delta) < 0.1
    d = delta[small]
    # sum_{k>=2} (-1)^k d^k / (k (k - 1)), Horner form
    acc = np.zeros_like(d)
    for k in range(18, 1, -1):
        acc = acc * d + (-1) ** k / (k * (k - 1))
    out[small] = acc * d * d
    z = 1.0 + delta[~small]
    out[~small] = z * np.log(z) - z + 1.0
    return out


def relative_entropy(w, w_inf) -> float:
    """``sum_i w_i log(w_i / w_inf_i) - w_i + w_inf_i``; zero only at ``w_inf``."""
    w = as_state(w)
    w_inf = as_state(w_inf, w.shape[0])
    return float(_entropy_rows(w, w_inf))


def dissipation(net: ReactionNetwork, w) -> float:
    """Entropy dissipation ``sum_r (f_r - b_r) log(f_r / b_r)`` with fluxes
    ``f_r = kf w^alpha`` and ``b_r = kb w^beta``.  Never negative."""
    w = as_state(w, net.n_species)
    return float(_dissipation_rows(net, w))


# ---------------------------------------------------------------------------
# integration

@dataclass(frozen=True, eq=False)
class Trajectory:
    species: tuple[str, ...]
    times: np.ndarray
    states: np.ndarray          # (n_times, n_species)
    entropy: np.ndarray         # relative entropy, NaN without an equilibrium
    dissipation: np.ndarray
    equilibrium: np.ndarray | None = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def conservation_drift(self, basis) -> float:
        basis = np.asarray(basis, dtype=float)
        if basis.size == 0:
            return 0.0
        return float(np.abs((self.states - self.states[0]) @ basis.T).max())


def _rate_function(net):
    """Unchecked mass-action rate for the inner loop; same values as
    :func:`mass_action_rate`."""
    alpha, beta, kf, kb = net.alpha, net.beta, net.kf, net.kb
    nu = beta - alpha

    def rate(w):
        fwd = kf * np.prod(w ** alpha, axis=1)
        bwd = kb * np.prod(w ** beta, axis=1)
        return (fwd - bwd) @ nu

    return rate


def _rk4_step(rate, w, h):
    k1 = rate(w)
    k2 = rate(np.maximum(w + 0.5 * h * k1, 0.0))
    k3 = rate(np.maximum(w + 0.5 * h * k2, 0.0))
    k4 = rate(np.maximum(w + h * k3, 0.0))
    return w + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _entropy_rows(states, w_inf):
    return np.sum(w_inf * _phi((states - w_inf) / w_inf), axis=-1)


def _dissipation_rows(net, states):
    logw = np.log(states)
    s = np.log(net.kf) + logw @ net.alpha.T - np.log(net.kb) - logw @ net.beta.T
    bwd = net.kb * np.exp(logw @ net.beta.T)
    return np.sum(bwd * np.expm1(s) * s, axis=-1)


def integrate(net: ReactionNetwork, w0, t_end: float, step: float, equilibrium="auto",
              max_halvings: int = 40) -> Trajectory:
    """Fixed-step classical Runge-Kutta integration of the rate equations.

    A step whose result has a nonpositive component is retried with half
    the step size, up to ``max_halvings`` times.  Relative entropy and
    dissipation are recorded against ``equilibrium``; by default the
    detailed-balanced equilibrium of the class of ``w0`` is computed, and
    they are NaN if none exists.
    """
    w = as_state(w0, net.n_species).copy()
    if not (step > 0 and t_end >= 0):
        raise ValueError("need step > 0 and t_end >= 0")
    if isinstance(equilibrium, str):
        try:
            equilibrium = equilibrium_in_class(net, w, fallback=False)
        except EquilibriumError:
            equilibrium = None
    w_inf = None if equilibrium is None else as_state(equilibrium, net.n_species)

    n_nominal = int(np.ceil(t_end / step - 1e-9))
    times = [0.0]
    states = [w.copy()]
    rate = _rate_function(net)
    t = 0.0
    k = 0
    while k < n_nominal:
        target = min((k + 1) * step, t_end)
        h = target - t
        for _ in range(max_halvings + 1):
            trial = _rk4_step(rate, w, h)
            if np.all(trial > 0) and np.all(np.isfinite(trial)):
                break
            h *= 0.5
        else:
            raise IntegrationError(f"positivity lost at t={t:.6g}, state {np.array2string(w)}")
        if h == target - t:
            t = target
            k += 1
        else:
            t += h
        w = trial
        times.append(t)
        states.append(w)

    states = np.array(states)
    ent = np.full(len(states), np.nan) if w_inf is None else _entropy_rows(states, w_inf)
    dis = _dissipation_rows(net, states)
    return Trajectory(net.species, np.array(times), states, ent, dis, w_inf)


# ---------------------------------------------------------------------------
# equilibria

def _log_equilibrium_constants(net):
    return np.log(net.kf) - np.log(net.kb)


def wegscheider_cycle(net: ReactionNetwork, tol: float = 1e-9):
    """A reaction combination ``c`` with ``W c = 0`` and ``c . log(kf/kb) != 0``.

    Such a cycle rules out detailed balance.  Returns None if there is none.
    """
    from scipy.linalg import null_space

    W = wegscheider_matrix(net)
    logK = _log_equilibrium_constants(net)
    Z = null_space(W)
    if Z.size == 0:
        return None
    gaps = Z.T @ logK
    k = int(np.argmax(np.abs(gaps)))
    if abs(gaps[k]) <= tol * max(1.0, np.abs(logK).max()):
        return None
    c = Z[:, k]
    c = c / np.abs(c).max()
    return c


def detailed_balance_reference(net: ReactionNetwork, tol: float = 1e-9) -> np.ndarray:
    """Some positive state satisfying every detailed-balance relation.

    Solves ``(beta - alpha) . log w = log(kf / kb)`` for each reaction;
    raises :class:`EquilibriumError` when the system is inconsistent.
    """
    W = wegscheider_matrix(net)
    logK = _log_equilibrium_constants(net)
    y, *_ = np.linalg.lstsq(W.T, logK, rcond=None)
    resid = np.abs(W.T @ y - logK).max() if net.n_reactions else 0.0
    if resid > tol * max(1.0, np.abs(logK).max()):
        raise EquilibriumError(f"network is not detailed balanced (log-linear residual {resid:.3g})")
    return np.exp(y)


def _dual_newton(w_hat, A, target, tol, max_iter=200, lam0=None):
    """Minimise ``sum w (log(w / w_hat) - 1)`` subject to ``A w = target``.

    Works on the convex dual ``sum w_hat exp(A^T lam) - target . lam``
    whose minimiser gives ``w = w_hat exp(A^T lam)``.  Returns None if the
    iteration does not converge.
    """
    lam = np.zeros(A.shape[0]) if lam0 is None else lam0
    scale = np.maximum(np.abs(target), 1.0)

    def dual(lam):
        w = w_hat * np.exp(A.T @ lam)
        return w.sum() - target @ lam, w

    g_val, w = dual(lam)
    for _ in range(max_iter):
        grad = A @ w - target
        if np.all(np.abs(grad) <= tol * scale):
            return w
        hess = (A * w) @ A.T
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
        t = 1.0
        while t > 1e-12:
            with np.errstate(over="ignore"):
                new_val, new_w = dual(lam + t * step)
            if np.isfinite(new_val) and new_val <= g_val + 1e-4 * t * (grad @ step):
                break
            t *= 0.5
        else:
            break
        lam = lam + t * step
        g_val, w = new_val, new_w
    g = A @ w - target
    if np.all(np.abs(g) <= tol * scale):
        return w
    return None


def equilibrium_in_class(net: ReactionNetwork, w0, tol: float = 1e-12,
                         fallback: bool = True) -> np.ndarray:
    """The positive detailed-balanced equilibrium in the class of ``w0``.

    Minimises the entropy relative to a detailed-balanced reference over the
    affine set ``A w = A w0`` by damped Newton on the dual problem.  If
    Newton stalls and ``fallback`` is set, the rate equations are integrated
    to ``t = 1000`` and the result polished.
    """
    w0 = as_state(w0, net.n_species)
    w_hat = detailed_balance_reference(net)
    A = conservation_basis(net)
    if A.shape[0] == 0:
        return w_hat
    target = A @ w0
    w = _dual_newton(w_hat, A, target, tol)
    if w is None and fallback:
        log.warning("Newton stalled; integrating to t=1000")
        w_long = integrate(net, w0, 1e3, 1e-2, equilibrium=None).final
        lam0 = np.linalg.lstsq(A.T, np.log(w_long / w_hat), rcond=None)[0]
        w = _dual_newton(w_hat, A, target, tol, max_iter=500, lam0=lam0)
        if w is None and check_detailed_balance(net, w_long, 1e-8).balanced:
            w = w_long
    if w is None:
        raise EquilibriumError("Newton iteration for the equilibrium did not converge")
    return w


# ---------------------------------------------------------------------------
# explicit rate for a single reversible reaction

@dataclass(frozen=True, eq=False)
class RateCertificate:
    """Constants certifying exponential decay for one reversible reaction.

    ``masses[i, j] = a_i0 / alpha_i + b_j0 / beta_j`` for reactant ``i`` and
    product ``j``.  ``lam`` bounds the decay rate of the relative entropy and
    ``C1`` bounds it below by the squared distance to equilibrium.
    ``lam_exact`` is the same rate as a fraction.
    """

    reactants: tuple[int, ...]
    products: tuple[int, ...]
    alpha: np.ndarray
    beta: np.ndarray
    masses: np.ndarray
    K: np.ndarray               # K[i0, j], one row per reactant i0
    L: np.ndarray
    lam: float
    lam_exact: Fraction
    bigM: float
    C1: float
    equilibrium: np.ndarray
    initial: np.ndarray

    def to_dict(self) -> dict:
        return {
            "reactants": list(self.reactants),
            "products": list(self.products),
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "M": self.masses.tolist(),
            "K": self.K.tolist(),
            "L": self.L.tolist(),
            "lambda": self.lam,
            "lambda_exact": str(self.lam_exact),
            "bigM": self.bigM,
            "C1": self.C1,
            "equilibrium": self.equilibrium.tolist(),
            "initial": self.initial.tolist(),
        }


def _as_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    # decimal reading of the shortest repr: 1.8 -> 9/5
    return Fraction(repr(float(x)))


def _single_reaction_split(net):
    if net.n_reactions != 1:
        raise ValueError("certificate requires a single reversible reaction "
                         f"(network has {net.n_reactions})")
    r = net.reactions[0]
    if r.kf != 1.0 or r.kb != 1.0:
        raise ValueError("certificate requires unit rate constants kf = kb = 1; "
                         "rescale time and concentrations first")
    alpha = np.asarray(r.alpha)
    beta = np.asarray(r.beta)
    if np.any((alpha > 0) & (beta > 0)):
        raise ValueError("a species appears on both sides of the reaction")
    if np.any((alpha == 0) & (beta == 0)):
        raise ValueError("every species must take part in the reaction")
    reactants = tuple(int(i) for i in np.flatnonzero(alpha))
    products = tuple(int(j) for j in np.flatnonzero(beta))
    if not reactants or not products:
        raise ValueError("reaction needs at least one reactant and one product")
    return reactants, products, alpha, beta


def lambda_functional(net: ReactionNetwork, w) -> float:
    """``a^alpha sum_i alpha_i^2 / a_i + b^beta sum_j beta_j^2 / b_j``."""
    reactants, products, alpha, beta = _single_reaction_split(net)
    w = as_state(w, net.n_species)
    a, b = w[list(reactants)], w[list(products)]
    al, be = alpha[list(reactants)], beta[list(products)]
    return float(np.prod(a ** al) * np.sum(al ** 2 / a) + np.prod(b ** be) * np.sum(be ** 2 / b))


def rate_certificate(net: ReactionNetwork, w0) -> RateCertificate:
    """Explicit decay constants for ``sum alpha_i A_i <-> sum beta_j B_j``.

    Requires unit rate constants and coefficients of at least 1.  The rate
    is the smallest of the lower bounds on ``lambda_functional`` over the
    two kinds of region of the compatibility class (some reactant small
    for a given ``i0``, or every reactant large).
    """
    reactants, products, alpha, beta = _single_reaction_split(net)
    w0 = as_state(w0, net.n_species)
    al = [int(alpha[i]) for i in reactants]
    be = [int(beta[j]) for j in products]
    if min(al + be) < 1:
        raise ValueError("stoichiometric coefficients must be at least 1")

    # exact rational arithmetic; 1.8 is read as 9/5
    a0 = [_as_fraction(w0[i]) for i in reactants]
    b0 = [_as_fraction(w0[j]) for j in products]
    m, n = len(reactants), len(products)
    M = [[a0[i] / al[i] + b0[j] / be[j] for j in range(n)] for i in range(m)]
    col_min = [min(M[i][j] for i in range(m)) for j in range(n)]
    K = [[Fraction(be[j], 2) * min(M[i0]) for j in range(n)] for i0 in range(m)]
    L = [Fraction(al[i], 2) * min(M[i]) for i in range(m)]

    def prod_pow(xs, ps):
        out = Fraction(1)
        for x, p in zip(xs, ps):
            out *= x ** p
        return out

    # case (i) for each choice of the small reactant i0, then case (ii)
    candidates = [prod_pow(K[i0], be) * sum(Fraction(be[j]) / col_min[j] for j in range(n))
                  for i0 in range(m)]
    candidates.append(prod_pow(L, al) * sum(Fraction(al[i] ** 2) / L[i] for i in range(m)))
    lam = min(candidates)

    w_inf = equilibrium_in_class(net, w0)
    a_inf, b_inf = w_inf[list(reactants)], w_inf[list(products)]
    Mf = np.array([[float(x) for x in row] for row in M])
    # a_inf phi(a / a_inf) >= (a - a_inf)^2 / (sqrt(a) + sqrt(a_inf))^2 and a <= alpha M
    bounds = [(np.sqrt(al[i] * Mf[i, 0]) + np.sqrt(a_inf[i])) ** 2 for i in range(m)]
    bounds += [(np.sqrt(be[j] * Mf[0, j]) + np.sqrt(b_inf[j])) ** 2 for j in range(n)]
    bigM = float(max(bounds))

    return RateCertificate(
        reactants=reactants,
        products=products,
        alpha=np.array(al, dtype=float),
        beta=np.array(be, dtype=float),
        masses=Mf,
        K=np.array([[float(x) for x in row] for row in K]),
        L=np.array([float(x) for x in L]),
        lam=float(lam),
        lam_exact=lam,
        bigM=bigM,
        C1=1.0 / bigM,
        equilibrium=w_inf,
        initial=w0.copy(),
    )


def sample_class(net: ReactionNetwork, w0, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples of the positive compatibility class of a single reaction."""
    if net.n_reactions != 1:
        raise ValueError("class sampling is implemented for a single reaction")
    w0 = as_state(w0, net.n_species)
    nu = wegscheider_matrix(net)[:, 0]
    # w0 + s nu > 0
    with np.errstate(divide="ignore"):
        lims = -w0 / nu
    lo = lims[nu > 0].max() if np.any(nu > 0) else -np.inf
    hi = lims[nu < 0].min() if np.any(nu < 0) else np.inf
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("compatibility class is unbounded")
    s = rng.uniform(lo, hi, size=n)
    pts = w0 + s[:, None] * nu
    return pts[np.all(pts > 0, axis=1)]


@dataclass(frozen=True)
class DecayCheck:
    ok: bool
    max_violation: float          # largest relative excess over a bound
    first_violation_time: float | None


def verify_exponential_decay(trajectory: Trajectory, cert: RateCertificate, slack: float = 1e-6,
                             lam: float | None = None) -> DecayCheck:
    """Check entropy, dissipation and distance bounds with rate ``cert.lam``.

    At every recorded time: ``E(t) <= E(0) e^{-lam t}``,
    ``D(t) <= D(0) e^{-lam t}`` and
    ``|w(t) - w_inf|^2 <= E(0) / C1 e^{-lam t}``, each with relative slack.
    ``lam`` overrides the certified rate (for negative controls).
    """
    if trajectory.states.shape[1] != cert.initial.shape[0] or not np.allclose(
            trajectory.states[0], cert.initial, rtol=1e-12, atol=0):
        raise ValueError("trajectory does not start at the certificate's initial state")
    rate = cert.lam if lam is None else lam
    t = trajectory.times
    w_inf = cert.equilibrium
    E = _entropy_rows(trajectory.states, w_inf)
    D = trajectory.dissipation
    dist2 = np.sum((trajectory.states - w_inf) ** 2, axis=1)
    decay = np.exp(-rate * t)
    bounds = [(E, E[0] * decay), (D, D[0] * decay), (dist2, E[0] / cert.C1 * decay)]
    worst = 0.0
    first = None
    for value, bound in bounds:
        limit = bound * (1 + slack)
        bad = value > limit
        with np.errstate(divide="ignore", invalid="ignore"):
            excess = np.where(bound > 0, value / bound - 1.0, np.where(value > 0, np.inf, 0.0))
        worst = max(worst, float(np.max(excess)))
        if bad.any():
            tb = float(t[np.argmax(bad)])
            first = tb if first is None else min(first, tb)
    return DecayCheck(first is None, worst, first)
