"""Projected steepest descent under linear equality constraints.

The step direction is ``d = -P g / sqrt(g^T P g)`` with
``P = I - A^T (A A^T)^{-1} A`` the orthogonal projector onto ``ker A``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import qr

from .game import CrnGame, entropy, entropy_gradient, simultaneous_gradient

__all__ = [
    "Projection",
    "projection_matrix",
    "project",
    "Fixed",
    "Backtracking",
    "ProjectedProblem",
    "Termination",
    "DescentTrace",
    "projected_descent",
    "projected_simultaneous_descent",
]


@dataclass(frozen=True, eq=False)
class Projection:
    """Orthogonal projector onto the null space of a constraint matrix.

    ``Q`` is an orthonormal basis of the row space after dropping
    redundant rows; ``kept`` lists the rows of the original matrix used.
    """

    n: int
    Q: np.ndarray
    kept: tuple[int, ...]
    dropped: tuple[int, ...]

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return v - self.Q @ (self.Q.T @ v)

    @property
    def matrix(self) -> np.ndarray:
        return np.eye(self.n) - self.Q @ self.Q.T


def project(A, n: int | None = None, rtol: float | None = None) -> Projection:
    """Build the projector for ``A`` (rows are constraints).

    Rank is read off a column-pivoted QR of ``A^T``; rows whose pivots fall
    below ``rtol * |R_00|`` are treated as linear combinations of the others.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        if n is None:
            n = A.shape[1]
        return Projection(n, np.zeros((n, 0)), (), ())
    m, n = A.shape
    Q, R, piv = qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if rtol is None:
        rtol = max(m, n) * np.finfo(float).eps * 10
    rank = int(np.sum(diag > rtol * diag[0])) if diag[0] > 0 else 0
    kept = tuple(sorted(int(p) for p in piv[:rank]))
    dropped = tuple(sorted(int(p) for p in piv[rank:]))
    return Projection(n, Q[:, :rank], kept, dropped)


def projection_matrix(A, n: int | None = None) -> np.ndarray:
    """Dense ``P = I - A^T (A A^T)^{-1} A``; redundant rows are dropped.

    >>> projection_matrix([[1.0, 1.0]]).round(12)
    array([[ 0.5, -0.5],
           [-0.5,  0.5]])
    """
    return project(A, n).matrix


# ---------------------------------------------------------------------------
# step rules

@dataclass(frozen=True)
class Fixed:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("step size must be positive")


@dataclass(frozen=True)
class Backtracking:
    """Armijo backtracking: shrink ``alpha`` by ``shrink`` until
    ``f(x + alpha d) <= f(x) + c alpha g.d``."""

    shrink: float = 0.5
    c: float = 1e-4
    initial: float = 1.0
    min_alpha: float = 1e-20

    def __post_init__(self):
        if not (0 < self.shrink < 1 and 0 < self.c < 1 and self.initial > 0):
            raise ValueError("need 0 < shrink < 1, 0 < c < 1 and initial > 0")


class Termination(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    STALLED_ON_BOUNDARY = "stalled_on_boundary"


@dataclass(frozen=True, eq=False)
class ProjectedProblem:
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    A: np.ndarray
    b: np.ndarray
    positive: bool = False

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim == 1:
            A = A[None, :] if A.size else A.reshape(0, 0)
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    def check_feasible(self, x, tol: float = 1e-10) -> None:
        x = np.asarray(x, dtype=float)
        if self.A.size:
            if self.A.shape[1] != x.shape[0]:
                raise ValueError(f"x has {x.shape[0]} entries, A has {self.A.shape[1]} columns")
            gap = np.abs(self.A @ x - self.b).max()
            if gap > tol * max(1.0, np.abs(self.b).max()):
                raise ValueError(f"initial point violates A x = b by {gap:.3g}")
        if self.positive and np.any(x <= 0):
            raise ValueError("initial point must be strictly positive")


@dataclass(eq=False)
class DescentTrace:
    iterates: list = field(default_factory=list)
    objective_values: list = field(default_factory=list)
    gradient_norms: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    termination: Termination = Termination.MAX_ITERATIONS
    dropped_constraints: tuple[int, ...] = ()

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def n_iterations(self) -> int:
        return len(self.iterates) - 1

    def feasibility_gap(self, A, b) -> float:
        A = np.asarray(A, dtype=float)
        if A.size == 0:
            return 0.0
        X = np.array(self.iterates)
        return float(np.abs(X @ A.T - np.asarray(b, dtype=float)).max())


def _positive_step(x, d, alpha, min_alpha, shrink):
    while alpha >= min_alpha and np.any(x + alpha * d <= 0):
        alpha *= shrink
    return alpha


def _descend(f, grad, proj, x0, step_rule, tol, max_iter, positive, normalize, stop,
             merit_grad=None):
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.array(x0, dtype=float)
    trace = DescentTrace(dropped_constraints=proj.dropped)
    shrink = step_rule.shrink if isinstance(step_rule, Backtracking) else 0.5
    min_alpha = step_rule.min_alpha if isinstance(step_rule, Backtracking) else 1e-20
    fx = f(x)
    for it in range(max_iter + 1):
        g = grad(x)
        pg = proj.apply(g)
        raw = float(g @ pg)
        if raw < -1e-12 * max(1.0, g @ g):
            raise ArithmeticError(f"g^T P g = {raw:.3g} is negative; projection is broken")
        # g^T P g == |P g|^2; the latter does not cancel when g is large
        # normal to the feasible set.  Projecting twice removes the normal
        # rounding left by the first pass.
        pg = proj.apply(pg)
        beta = float(pg @ pg)
        trace.iterates.append(x.copy())
        trace.objective_values.append(float(fx))
        trace.gradient_norms.append(float(np.linalg.norm(pg)))
        if beta == 0.0:
            trace.termination = Termination.CONVERGED
            return trace
        d = -pg / np.sqrt(beta) if normalize else -pg
        slope = float(pg @ d)
        if stop(slope, pg):
            trace.termination = Termination.CONVERGED
            return trace
        if it == max_iter:
            break

        alpha = step_rule.initial if isinstance(step_rule, Backtracking) else step_rule.alpha
        if positive:
            alpha = _positive_step(x, d, alpha, min_alpha, shrink)
            if alpha < min_alpha:
                trace.termination = Termination.STALLED_ON_BOUNDARY
                return trace
        if isinstance(step_rule, Backtracking):
            # the Armijo slope is taken along the merit function
            mgrad = grad if merit_grad is None else merit_grad
            if merit_grad is not None:
                slope = float(proj.apply(merit_grad(x)) @ d)
            noise = 8 * np.finfo(float).eps * max(1.0, abs(fx))
            while True:
                x_new = x + alpha * d
                f_new = f(x_new)
                if np.isfinite(f_new):
                    if step_rule.c * alpha * abs(slope) > noise:
                        if f_new <= fx + step_rule.c * alpha * slope:
                            break
                    # the required decrease is below rounding in f: accept
                    # while the merit still decreases along d at the new point
                    elif f_new <= fx + noise and float(proj.apply(mgrad(x_new)) @ d) <= 0:
                        break
                alpha *= shrink
                if alpha < min_alpha:
                    # no decrease representable in floating point
                    trace.termination = Termination.CONVERGED
                    return trace
        else:
            f_new = f(x + alpha * d)
        # re-project the update so rounding does not accumulate off the class
        x = x + proj.apply(alpha * d)
        fx = f_new
        trace.steps.append(alpha)
    trace.termination = Termination.MAX_ITERATIONS
    return trace


def projected_descent(problem: ProjectedProblem, x0, step_rule=None, tol: float = 1e-10,
                      max_iter: int = 10_000, normalize: bool = True) -> DescentTrace:
    """Minimise ``problem.objective`` on ``{A x = b}`` by projected steepest descent.

    Stops when ``|g^T d| <= tol``.  With ``normalize`` the direction has unit
    length; otherwise ``d = -P g``.  With ``problem.positive`` the step is
    also shrunk to keep every component strictly positive.
    """
    step_rule = Backtracking() if step_rule is None else step_rule
    problem.check_feasible(x0)
    x0 = np.asarray(x0, dtype=float)
    proj = project(problem.A, x0.shape[0])
    return _descend(problem.objective, problem.gradient, proj, x0, step_rule, tol, max_iter,
                    problem.positive, normalize, stop=lambda slope, pg: abs(slope) <= tol)


def projected_simultaneous_descent(game: CrnGame, basis, x0, step_rule=None, tol: float = 1e-10,
                                   max_iter: int = 100_000) -> DescentTrace:
    """Every player steps along minus its own gradient, projected onto the class.

    The direction is ``-P xi(x)`` (not normalised), so a fixed step is an
    explicit Euler step of the rate equations.  With backtracking the
    entropy serves as merit function.  Stops when ``|P xi| <= tol``.
    """
    step_rule = Backtracking() if step_rule is None else step_rule
    x0 = np.asarray(x0, dtype=float)
    basis = np.asarray(basis, dtype=float).reshape(-1, x0.shape[0])
    problem = ProjectedProblem(lambda w: entropy(game, w), lambda w: simultaneous_gradient(game, w),
                               basis, basis @ x0, positive=True)
    problem.check_feasible(x0)
    proj = project(basis, x0.shape[0])
    return _descend(problem.objective, problem.gradient, proj, x0, step_rule, tol, max_iter,
                    True, False, stop=lambda slope, pg: np.linalg.norm(pg) <= tol,
                    merit_grad=lambda w: entropy_gradient(game, w))
