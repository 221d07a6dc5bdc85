"""Symmetrizable matrices and potential-game classification.

A square matrix ``A`` is symmetrizable when ``diag(d) @ A`` is symmetric
for some invertible diagonal ``d``.  This holds exactly when the zero
pattern of ``A`` is symmetric and, around every cycle of its support graph,
the product of entries read forwards equals the product read backwards.
The checks here walk a spanning forest of the support graph, so only one
cycle per non-tree edge has to be examined.

A differentiable game is a (weighted) potential game when its game Hessian
``H[i, j] = d^2 loss_i / dw_i dw_j`` is symmetrized by one fixed vector of
positive player weights at every point.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "Verdict",
    "Witness",
    "SymmetrizerResult",
    "is_symmetrizable",
    "parse_matrix",
    "format_matrix",
    "DifferentiableGame",
    "GameHessianSample",
    "GameClass",
    "GameClassification",
    "game_hessian",
    "simultaneous_gradient",
    "classify_game",
    "PathDomainError",
    "line_integral",
    "potential_from_weights",
]

_EPS = np.finfo(float).eps


class Verdict(enum.Enum):
    EXACT_SYMMETRIC = "exact_symmetric"
    SYMMETRIZABLE = "symmetrizable"
    NOT_SYMMETRIZABLE = "not_symmetrizable"


@dataclass(frozen=True)
class Witness:
    """Evidence that no positive symmetrizer exists.

    ``kind`` is one of

    * ``"zero_pattern"``: ``indices == (i, j)`` with ``A[i, j] != 0`` but
      ``A[j, i] == 0``;
    * ``"sign"``: ``indices == (i, j)`` with ``A[i, j]`` and ``A[j, i]`` of
      opposite sign, so any symmetrizer has mixed signs;
    * ``"cycle"``: ``indices == (i1, ..., ik)`` with
      ``A[i1,i2] A[i2,i3] ... A[ik,i1] != A[i2,i1] ... A[i1,ik]``.

    Game classification adds two player-level kinds: ``"block_ratio"``
    (blocks ``H[i, j]`` and ``H[j, i].T`` are not proportional) and
    ``"sample_ratio"`` (the weight ratio of players i and j changes between
    samples).
    """

    kind: str
    indices: tuple[int, ...]

    def cycle_products(self, A) -> tuple[float, float]:
        A = np.asarray(A, dtype=float)
        idx = self.indices
        fwd = bwd = 1.0
        for a, b in zip(idx, idx[1:] + idx[:1]):
            fwd *= A[a, b]
            bwd *= A[b, a]
        return fwd, bwd

    def holds(self, A, tol: float = 1e-10) -> bool:
        """Re-evaluate the witness on ``A``."""
        A = np.asarray(A, dtype=float)
        zero = tol * max(np.linalg.norm(A, np.inf), np.finfo(float).tiny)
        if self.kind == "zero_pattern":
            i, j = self.indices
            return abs(A[i, j]) > zero and abs(A[j, i]) <= zero
        if self.kind == "sign":
            i, j = self.indices
            return A[i, j] * A[j, i] < 0
        fwd, bwd = self.cycle_products(A)
        return abs(fwd - bwd) > tol * max(abs(fwd), abs(bwd))


@dataclass(frozen=True)
class SymmetrizerResult:
    verdict: Verdict
    weights: np.ndarray | None = None
    witness: Witness | None = None

    @property
    def symmetrizable(self) -> bool:
        return self.verdict is not Verdict.NOT_SYMMETRIZABLE


def _spanning_forest(support):
    """BFS forest over an undirected boolean adjacency matrix."""
    n = support.shape[0]
    parent = np.full(n, -1)
    depth = np.zeros(n, dtype=int)
    seen = np.zeros(n, dtype=bool)
    order = []
    for root in range(n):
        if seen[root]:
            continue
        seen[root] = True
        queue = deque([root])
        while queue:
            i = queue.popleft()
            order.append(i)
            for j in np.flatnonzero(support[i]):
                if not seen[j]:
                    seen[j] = True
                    parent[j] = i
                    depth[j] = depth[i] + 1
                    queue.append(j)
    return parent, depth, order


def _tree_cycle(i, j, parent, depth):
    """Cycle made of edge i -> j followed by the tree path from j back to i."""
    up_i, up_j = [i], [j]
    a, b = i, j
    while depth[a] > depth[b]:
        a = parent[a]
        up_i.append(a)
    while depth[b] > depth[a]:
        b = parent[b]
        up_j.append(b)
    while a != b:
        a, b = parent[a], parent[b]
        up_i.append(a)
        up_j.append(b)
    # up_j runs j .. lca, up_i runs i .. lca; walk j -> lca -> i
    path = up_j + up_i[-2::-1]
    return tuple(int(k) for k in path[-1:] + path[:-1])


def is_symmetrizable(A, tol: float = 1e-10) -> SymmetrizerResult:
    """Decide whether ``A`` has a positive diagonal symmetrizer.

    Entries with ``|a_ij| <= tol * ||A||_inf`` count as structural zeros.
    On success the weights ``d`` satisfy ``d[root] == 1`` on every connected
    component of the support graph and ``diag(d) @ A`` is symmetric.

    Examples
    --------
    >>> res = is_symmetrizable([[2.0, 1.0], [0.5, -2.0]])
    >>> res.verdict.name, res.weights.tolist()
    ('SYMMETRIZABLE', [1.0, 2.0])
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    scale = np.linalg.norm(A, np.inf)
    if scale == 0 or n == 1:
        return SymmetrizerResult(Verdict.EXACT_SYMMETRIC, np.ones(n))
    nz = np.abs(A) > tol * scale
    np.fill_diagonal(nz, False)

    mismatch = nz & ~nz.T
    if mismatch.any():
        i, j = np.argwhere(mismatch)[0]
        return SymmetrizerResult(Verdict.NOT_SYMMETRIZABLE,
                                 witness=Witness("zero_pattern", (int(i), int(j))))
    if np.abs(A - A.T).max() <= tol * scale:
        return SymmetrizerResult(Verdict.EXACT_SYMMETRIC, np.ones(n))
    opposite = nz & (np.sign(A) != np.sign(A.T))
    if opposite.any():
        i, j = np.argwhere(opposite)[0]
        return SymmetrizerResult(Verdict.NOT_SYMMETRIZABLE, witness=Witness("sign", (int(i), int(j))))

    parent, depth, order = _spanning_forest(nz)
    d = np.ones(n)
    for j in order:
        i = parent[j]
        if i >= 0:
            d[j] = d[i] * A[i, j] / A[j, i]

    rtol = max(tol, 64 * n * _EPS)
    for i, j in np.argwhere(np.triu(nz, 1)):
        if parent[j] == i or parent[i] == j:
            continue
        lhs, rhs = d[i] * A[i, j], d[j] * A[j, i]
        if abs(lhs - rhs) > rtol * max(abs(lhs), abs(rhs)):
            cycle = _tree_cycle(int(i), int(j), parent, depth)
            return SymmetrizerResult(Verdict.NOT_SYMMETRIZABLE, witness=Witness("cycle", cycle))
    return SymmetrizerResult(Verdict.SYMMETRIZABLE, d)


def parse_matrix(text: str) -> np.ndarray:
    """Read a dense matrix from a JSON array of rows or from whitespace text.

    >>> parse_matrix("[[1, 2], [3, 4]]").tolist()
    [[1.0, 2.0], [3.0, 4.0]]
    >>> parse_matrix("1 2\\n3 4\\n").tolist()
    [[1.0, 2.0], [3.0, 4.0]]
    """
    stripped = text.strip()
    if not stripped:
        raise ValueError("empty matrix")
    if stripped.startswith("["):
        try:
            rows = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ValueError(f"invalid JSON matrix: {exc}") from None
    else:
        rows = [line.split() for line in stripped.splitlines()
                if line.strip() and not line.lstrip().startswith("#")]
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise ValueError("matrix must be a list of rows")
    if len({len(r) for r in rows}) != 1:
        raise ValueError("matrix rows have different lengths")
    try:
        A = np.array(rows, dtype=float)
    except (TypeError, ValueError):
        raise ValueError("matrix entries must be numbers") from None
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    return A


def format_matrix(A, fmt: str = "json") -> str:
    """Inverse of :func:`parse_matrix`; floats are written with ``repr``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if fmt == "json":
        return json.dumps(A.tolist())
    if fmt == "text":
        return "".join(" ".join(repr(float(x)) for x in row) + "\n" for row in A)
    raise ValueError(f"unknown matrix format {fmt!r}")


# ---------------------------------------------------------------------------
# games

@dataclass(frozen=True)
class DifferentiableGame:
    """An n-player game on a flat strategy vector.

    Player ``i`` controls ``dims[i]`` consecutive coordinates.  ``losses``
    maps a strategy vector to the n losses.  ``gradient`` (the simultaneous
    gradient) and ``hessian`` (the game Hessian) are optional; missing ones
    are estimated by central differences.  ``domain`` returns False outside
    the set where the losses are defined.
    """

    dims: tuple[int, ...]
    losses: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    hessian: Callable[[np.ndarray], np.ndarray] | None = None
    domain: Callable[[np.ndarray], bool] | None = None

    @property
    def n_players(self) -> int:
        return len(self.dims)

    @property
    def dim(self) -> int:
        return int(sum(self.dims))

    def blocks(self) -> list[slice]:
        edges = np.concatenate([[0], np.cumsum(self.dims)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


@dataclass(frozen=True)
class GameHessianSample:
    point: np.ndarray
    matrix: np.ndarray
    dims: tuple[int, ...]
    analytic: bool

    def block(self, i: int, j: int) -> np.ndarray:
        """``d^2 loss_i / dw_i dw_j`` with shape ``(dims[i], dims[j])``."""
        edges = np.concatenate([[0], np.cumsum(self.dims)])
        return self.matrix[edges[i]:edges[i + 1], edges[j]:edges[j + 1]]


def _steps(w, power):
    return _EPS ** power * np.maximum(1.0, np.abs(w))


def _check_point(game, w):
    w = np.asarray(w, dtype=float)
    if w.shape != (game.dim,):
        raise ValueError(f"strategy vector has shape {w.shape}, game expects ({game.dim},)")
    return w


def simultaneous_gradient(game: DifferentiableGame, w) -> np.ndarray:
    """Stack of each player's gradient of its own loss."""
    w = _check_point(game, w)
    if game.gradient is not None:
        return np.asarray(game.gradient(w), dtype=float)
    h = _steps(w, 1 / 3)
    out = np.empty(game.dim)
    for i, sl in enumerate(game.blocks()):
        for k in range(sl.start, sl.stop):
            e = np.zeros_like(w)
            e[k] = h[k]
            out[k] = (game.losses(w + e)[i] - game.losses(w - e)[i]) / (2 * h[k])
    return out


def game_hessian(game: DifferentiableGame, w) -> GameHessianSample:
    """Game Hessian at ``w``; row block i holds derivatives of ``loss_i``."""
    w = _check_point(game, w)
    if game.hessian is not None:
        H = np.asarray(game.hessian(w), dtype=float)
        return GameHessianSample(w, H, tuple(game.dims), True)
    d = game.dim
    H = np.empty((d, d))
    if game.gradient is not None:
        # rows of the game Hessian are the Jacobian of the simultaneous gradient
        h = _steps(w, 1 / 3)
        for k in range(d):
            e = np.zeros(d)
            e[k] = h[k]
            H[:, k] = (game.gradient(w + e) - game.gradient(w - e)) / (2 * h[k])
        return GameHessianSample(w, H, tuple(game.dims), False)
    h = _steps(w, 1 / 4)
    owner = np.concatenate([[i] * n for i, n in enumerate(game.dims)]).astype(int)
    for a in range(d):
        for b in range(d):
            ea = np.zeros(d)
            eb = np.zeros(d)
            ea[a] = h[a]
            eb[b] = h[b]
            i = owner[a]
            f = game.losses
            H[a, b] = (f(w + ea + eb)[i] - f(w + ea - eb)[i]
                       - f(w - ea + eb)[i] + f(w - ea - eb)[i]) / (4 * h[a] * h[b])
    return GameHessianSample(w, H, tuple(game.dims), False)


class GameClass(enum.Enum):
    EXACT_POTENTIAL = "exact_potential"
    WEIGHTED_POTENTIAL = "weighted_potential"
    NOT_POTENTIAL = "not_potential"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class GameClassification:
    kind: GameClass
    weights: np.ndarray | None = None
    counterexample: int | None = None   # index into the sample list
    witness: Witness | None = None      # player indices

    @property
    def is_potential(self) -> bool:
        return self.kind in (GameClass.EXACT_POTENTIAL, GameClass.WEIGHTED_POTENTIAL)


def _pair_ratio(sample, i, j, zero):
    """Ratio ``alpha_j / alpha_i`` forced by the (i, j) blocks, with its misfit.

    Returns ``(None, 0)`` when both blocks vanish, ``("zero_pattern", v)``
    when only one does.
    """
    B = sample.block(i, j)
    C = sample.block(j, i).T
    nzB = np.abs(B) > zero
    nzC = np.abs(C) > zero
    if not nzB.any() and not nzC.any():
        return None, 0.0
    if (nzB != nzC).any():
        return "zero_pattern", float(np.abs(B - C)[nzB != nzC].max())
    p = np.unravel_index(np.argmax(np.abs(C)), C.shape)
    r = B[p] / C[p]
    return r, float(np.abs(B - r * C).max()), float(abs(C[p]))


def _player_weights(edges, n):
    """Weights from the ratios ``edges[(i, j)] = (r, u)`` (``d_j = r d_i``,
    relative uncertainty ``u``), read off a spanning forest that prefers
    the most reliable ratios.  Returns ``(d, None)`` or ``(None, cycle)``.
    """
    adj = {k: [] for k in range(n)}
    for (i, j), (r, u) in edges.items():
        adj[i].append((u, j, r))
        adj[j].append((u, i, 1.0 / r))
    logd = np.zeros(n)
    parent = np.full(n, -1)
    depth = np.zeros(n, dtype=int)
    seen = np.zeros(n, dtype=bool)
    tree_u = 0.0
    for root in range(n):
        if seen[root]:
            continue
        seen[root] = True
        frontier = [(u, root, j, r) for u, j, r in adj[root]]
        while frontier:
            frontier.sort(key=lambda e: e[0])
            u, i, j, r = frontier.pop(0)
            if seen[j]:
                continue
            seen[j] = True
            parent[j], depth[j] = i, depth[i] + 1
            logd[j] = logd[i] + np.log(r)
            tree_u += u
            frontier.extend((uu, j, k, rr) for uu, k, rr in adj[j] if not seen[k])
    for (i, j), (r, u) in edges.items():
        if parent[j] == i or parent[i] == j:
            continue
        if abs(logd[j] - logd[i] - np.log(r)) > u + tree_u:
            return None, _tree_cycle(i, j, parent, depth)
    return np.exp(logd), None


def classify_game(game: DifferentiableGame, sample_points: Sequence, tol: float = 1e-10,
                  fd_tol: float = 1e-6) -> GameClassification:
    """Classify a game as exact, weighted or not a potential game.

    Weights are fixed by the first samples that constrain them and checked
    at every later sample; the first offending sample in input order is the
    counterexample.  This is a sampling test, so a positive verdict is only
    as strong as the samples.  With finite-difference Hessians, mismatches
    smaller than ``100 * fd_tol`` (relative) give ``INCONCLUSIVE`` instead
    of ``NOT_POTENTIAL``.
    """
    points = [np.asarray(p, dtype=float) for p in sample_points]
    if not points:
        raise ValueError("need at least one sample point")
    n = game.n_players
    if n == 1:
        for p in points:
            _check_point(game, p)
        return GameClassification(GameClass.EXACT_POTENTIAL, np.ones(1))

    # pair -> (ratio, relative uncertainty)
    ratios: dict[tuple[int, int], tuple[float, float]] = {}
    exact = True
    weights = np.ones(n)
    for s, p in enumerate(points):
        sample = game_hessian(game, p)
        t = tol if sample.analytic else max(tol, fd_tol)
        scale = max(np.abs(sample.matrix).max(), np.finfo(float).tiny)
        zero = t * scale

        def fail(kind, pair, misfit):
            if not sample.analytic and misfit <= 100 * t * scale:
                return GameClassification(GameClass.INCONCLUSIVE, counterexample=s,
                                          witness=Witness(kind, pair))
            return GameClassification(GameClass.NOT_POTENTIAL, counterexample=s,
                                      witness=Witness(kind, pair))

        if np.abs(sample.matrix - sample.matrix.T).max() > zero:
            exact = False
        for i in range(n):
            for j in range(i + 1, n):
                r, *rest = _pair_ratio(sample, i, j, zero)
                if r is None:
                    continue
                if r == "zero_pattern":
                    return fail("zero_pattern", (i, j), rest[0])
                misfit, mag = rest
                if misfit > zero * max(1.0, abs(r)):
                    return fail("block_ratio", (i, j), misfit)
                if r <= 0:
                    return GameClassification(GameClass.NOT_POTENTIAL, counterexample=s,
                                              witness=Witness("sign", (i, j)))
                # first-order error of B[p] / C[p] when both carry an error of `zero`
                u = zero * (1.0 + abs(r)) / (mag * abs(r))
                old = ratios.get((i, j))
                if old is not None:
                    if abs(np.log(r / old[0])) > 4 * (u + old[1]):
                        return fail("sample_ratio", (i, j), abs(old[0] - r) * scale)
                    if u >= old[1]:
                        continue
                ratios[(i, j)] = (r, u)

        d, cycle = _player_weights(ratios, n)
        if d is None:
            return fail("cycle", cycle, np.inf)
        weights = d

    if exact:
        return GameClassification(GameClass.EXACT_POTENTIAL, np.ones(n))
    return GameClassification(GameClass.WEIGHTED_POTENTIAL, weights)


# ---------------------------------------------------------------------------
# path integrals

class PathDomainError(ValueError):
    """A quadrature node fell outside the domain of the integrand."""

    def __init__(self, t, point):
        super().__init__(f"path leaves the domain at t={t:.6g} (point {np.array2string(point)})")
        self.t = t
        self.point = point


def line_integral(field: Callable[[np.ndarray], np.ndarray], vertices, steps: int = 1000,
                  domain: Callable[[np.ndarray], bool] | None = None) -> float:
    """Integrate ``field . dz`` along the polyline through ``vertices``.

    Each segment is parametrised on [0, 1] and integrated with composite
    Simpson's rule using ``steps`` subintervals.
    """
    if steps < 2:
        raise ValueError("quadrature_steps must be at least 2")
    vertices = [np.asarray(v, dtype=float) for v in vertices]
    ts = np.linspace(0.0, 1.0, steps + 1)
    total = 0.0
    for k, (z0, z1) in enumerate(zip(vertices[:-1], vertices[1:])):
        dz = z1 - z0
        if not dz.any():
            continue
        vals = np.empty(ts.size)
        for m, t in enumerate(ts):
            z = (1 - t) * z0 + t * z1
            if domain is not None and not domain(z):
                raise PathDomainError(k + t, z)
            vals[m] = dz @ field(z)
        total += integrate.simpson(vals, x=ts)
    return float(total)


def potential_from_weights(game: DifferentiableGame, weights, z0, z1,
                           quadrature_steps: int = 1000) -> float:
    """Potential difference ``phi(z1) - phi(z0)`` of a weighted potential game.

    Integrates ``sum_i weights_i * dz_i . grad_i loss_i`` along the segment
    from ``z0`` to ``z1``; pass a list of vertices as ``z1`` (with ``z0`` as
    the first point) to integrate along a polyline instead.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (game.n_players,) or np.any(weights <= 0):
        raise ValueError("weights must be one positive number per player")
    scale = np.repeat(weights, game.dims)
    z0 = _check_point(game, z0)
    z1 = np.asarray(z1, dtype=float)
    vertices = [z0] + ([_check_point(game, v) for v in z1] if z1.ndim == 2 else [_check_point(game, z1)])
    return line_integral(lambda z: scale * simultaneous_gradient(game, z), vertices,
                         quadrature_steps, game.domain)
