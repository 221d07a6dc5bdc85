"""Reaction networks: text format, stoichiometry, conservation laws and
mass-action rates.

A network file holds one reversible reaction per line::

    # sodium carbonate
    2 NaCl + CaCO3 <-> Na2CO3 + CaCl2 | kf=1 kb=1

Blank lines and ``#`` comments are ignored.  A term is an optional
non-negative integer coefficient followed by a species name; a missing
coefficient means 1 and repeated species on one side are summed.  Species
are numbered in order of first appearance.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import sympy
from scipy import linalg

__all__ = [
    "Reaction",
    "ReactionNetwork",
    "NetworkSyntaxError",
    "DetailedBalanceReport",
    "parse_network",
    "load_network",
    "format_network",
    "network_to_json",
    "network_from_json",
    "wegscheider_matrix",
    "conservation_basis",
    "monomials",
    "reaction_fluxes",
    "mass_action_rate",
    "check_detailed_balance",
    "first_order_detailed_balance",
]


class NetworkSyntaxError(ValueError):
    """Malformed reaction text.  ``line`` and ``column`` are 1-based."""

    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Reaction:
    """One reversible reaction ``alpha <-> beta`` with rate constants."""

    alpha: tuple[int, ...]
    beta: tuple[int, ...]
    kf: float
    kb: float

    def __post_init__(self):
        if len(self.alpha) != len(self.beta):
            raise ValueError("alpha and beta must have the same length")
        if any(c < 0 for c in self.alpha + self.beta):
            raise ValueError("stoichiometric coefficients must be non-negative")
        if tuple(self.alpha) == tuple(self.beta):
            raise ValueError("reaction does not change anything: alpha equals beta")
        if not (self.kf > 0 and self.kb > 0):
            raise ValueError(f"rate constants must be positive, got kf={self.kf}, kb={self.kb}")


@dataclass(frozen=True)
class ReactionNetwork:
    species: tuple[str, ...]
    reactions: tuple[Reaction, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        if not self.species:
            raise ValueError("network needs at least one species")
        if len(set(self.species)) != len(self.species):
            raise ValueError("species names must be unique")
        for r in self.reactions:
            if len(r.alpha) != len(self.species):
                raise ValueError("reaction vectors must have one entry per species")

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    @cached_property
    def alpha(self) -> np.ndarray:
        """Reactant coefficients, shape (R, K)."""
        return np.array([r.alpha for r in self.reactions], dtype=float).reshape(-1, self.n_species)

    @cached_property
    def beta(self) -> np.ndarray:
        """Product coefficients, shape (R, K)."""
        return np.array([r.beta for r in self.reactions], dtype=float).reshape(-1, self.n_species)

    @cached_property
    def kf(self) -> np.ndarray:
        return np.array([r.kf for r in self.reactions], dtype=float)

    @cached_property
    def kb(self) -> np.ndarray:
        return np.array([r.kb for r in self.reactions], dtype=float)

    def index(self, name: str) -> int:
        return self.species.index(name)


# ---------------------------------------------------------------------------
# text format

_TERM = re.compile(r"\s*(?:(\d+)\s*)?([A-Za-z_][A-Za-z0-9_()\[\]']*)\s*")
_RATE = re.compile(r"\s*(kf|kb)\s*=\s*([^\s]+)\s*")
_ARROW = "<->"


def _parse_side(text, offset, lineno, order, counts):
    """Parse ``term + term + ...``; ``offset`` is the 0-based index of
    ``text[0]`` in its line."""
    coeffs: dict[str, int] = {}
    pos = 0
    while True:
        m = _TERM.match(text, pos)
        if m is None or m.end() == pos:
            raise NetworkSyntaxError("expected a species term", lineno, offset + pos + 1)
        coeff = int(m.group(1)) if m.group(1) is not None else 1
        name = m.group(2)
        if name not in counts:
            counts[name] = len(order)
            order.append(name)
        coeffs[name] = coeffs.get(name, 0) + coeff
        pos = m.end()
        if pos == len(text):
            return coeffs
        if text[pos] != "+":
            raise NetworkSyntaxError(f"unexpected character {text[pos]!r}", lineno, offset + pos + 1)
        pos += 1


def _parse_rates(text, offset, lineno):
    rates: dict[str, float] = {}
    pos = 0
    while pos < len(text):
        m = _RATE.match(text, pos)
        if m is None:
            raise NetworkSyntaxError("expected 'kf=<value>' or 'kb=<value>'", lineno, offset + pos + 1)
        key, raw = m.group(1), m.group(2)
        try:
            value = float(raw)
        except ValueError:
            raise NetworkSyntaxError(f"invalid number {raw!r}", lineno, offset + m.start(2) + 1) from None
        if key in rates:
            raise NetworkSyntaxError(f"duplicate {key}", lineno, offset + m.start(1) + 1)
        if not value > 0 or not np.isfinite(value):
            raise NetworkSyntaxError(f"rate constant {key} must be positive, got {raw}", lineno,
                                     offset + m.start(2) + 1)
        rates[key] = value
        pos = m.end()
    for key in ("kf", "kb"):
        if key not in rates:
            raise NetworkSyntaxError(f"missing rate constant {key}", lineno, offset + len(text) + 1)
    return rates["kf"], rates["kb"]


def parse_network(text: str) -> ReactionNetwork:
    """Parse reaction text into a :class:`ReactionNetwork`.

    Raises :class:`NetworkSyntaxError` on malformed lines, nonpositive rate
    constants or reactions whose two sides are identical.
    """
    order: list[str] = []
    counts: dict[str, int] = {}
    raw = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        if "|" not in body:
            raise NetworkSyntaxError("missing '|' before rate constants", lineno, len(body.rstrip()) + 1)
        lhs_rhs, rates = body.split("|", 1)
        arrow = lhs_rhs.find(_ARROW)
        if arrow < 0:
            raise NetworkSyntaxError("missing '<->'", lineno, 1 + len(lhs_rhs) - len(lhs_rhs.lstrip()))
        if lhs_rhs.find(_ARROW, arrow + 1) >= 0:
            raise NetworkSyntaxError("more than one '<->'", lineno, lhs_rhs.find(_ARROW, arrow + 1) + 1)
        left = _parse_side(lhs_rhs[:arrow], 0, lineno, order, counts)
        right = _parse_side(lhs_rhs[arrow + 3:], arrow + 3, lineno, order, counts)
        kf, kb = _parse_rates(rates, len(lhs_rhs) + 1, lineno)
        if left == right:
            raise NetworkSyntaxError("reaction does not change anything: alpha equals beta", lineno, 1)
        raw.append((left, right, kf, kb))
    if not order:
        raise NetworkSyntaxError("no reactions found", 1, 1)
    reactions = tuple(
        Reaction(
            alpha=tuple(left.get(s, 0) for s in order),
            beta=tuple(right.get(s, 0) for s in order),
            kf=kf,
            kb=kb,
        )
        for left, right, kf, kb in raw
    )
    return ReactionNetwork(tuple(order), reactions)


def load_network(path) -> ReactionNetwork:
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


def _format_side(species, coeffs):
    terms = []
    for name, c in zip(species, coeffs):
        if c == 0:
            continue
        terms.append(name if c == 1 else f"{c} {name}")
    return " + ".join(terms)


def format_network(net: ReactionNetwork) -> str:
    """Inverse of :func:`parse_network`.

    Terms are written in species order, so re-parsing reproduces ``net``
    exactly whenever its species are listed in first-appearance order (true
    for anything built by :func:`parse_network`).
    """
    lines = []
    for r in net.reactions:
        lhs = _format_side(net.species, r.alpha)
        rhs = _format_side(net.species, r.beta)
        lines.append(f"{lhs} {_ARROW} {rhs} | kf={r.kf!r} kb={r.kb!r}")
    return "\n".join(lines) + "\n"


def network_to_json(net: ReactionNetwork) -> str:
    doc = {
        "species": list(net.species),
        "reactions": [
            {"alpha": list(r.alpha), "beta": list(r.beta), "kf": r.kf, "kb": r.kb}
            for r in net.reactions
        ],
    }
    return json.dumps(doc, indent=2)


def network_from_json(text: str) -> ReactionNetwork:
    doc = json.loads(text)
    reactions = tuple(
        Reaction(tuple(int(a) for a in r["alpha"]), tuple(int(b) for b in r["beta"]),
                 float(r["kf"]), float(r["kb"]))
        for r in doc["reactions"]
    )
    return ReactionNetwork(tuple(doc["species"]), reactions)


# ---------------------------------------------------------------------------
# stoichiometry

def wegscheider_matrix(net: ReactionNetwork) -> np.ndarray:
    """Species x reactions matrix whose column r is ``beta^r - alpha^r``."""
    return (net.beta - net.alpha).T


def _integer_row(vec):
    """Scale a rational sympy vector to coprime integers with a positive lead."""
    denoms = [sympy.fraction(sympy.nsimplify(v))[1] for v in vec]
    lcm = sympy.ilcm(*denoms) if denoms else 1
    ints = [int(v * lcm) for v in vec]
    g = 0
    for v in ints:
        g = np.gcd(g, abs(v))
    if g > 1:
        ints = [v // g for v in ints]
    lead = next((v for v in ints if v != 0), 1)
    if lead < 0:
        ints = [-v for v in ints]
    return ints


def conservation_basis(net: ReactionNetwork) -> np.ndarray:
    """Basis of conservation laws, one row per law.

    Rows span the left null space of the Wegscheider matrix, so every row
    ``q`` satisfies ``q @ (beta^r - alpha^r) == 0``.  Integer rows from
    exact elimination are returned for integer stoichiometry; a
    floating-point orthonormal basis is the fallback.
    """
    W = wegscheider_matrix(net)
    K = net.n_species
    if net.n_reactions == 0:
        return np.eye(K)
    if np.all(W == np.round(W)):
        Wt = sympy.Matrix(W.T.astype(int).tolist())
        # reduced row echelon of the null-space basis keeps rows readable
        null = Wt.nullspace()
        if not null:
            return np.zeros((0, K))
        B = sympy.Matrix.hstack(*null).T.rref()[0]
        rows = [_integer_row(list(B.row(i))) for i in range(B.rows)]
        return np.array(rows, dtype=float).reshape(-1, K)
    return linalg.null_space(W.T).T.reshape(-1, K)


# ---------------------------------------------------------------------------
# rates

def monomials(exponents: np.ndarray, w) -> np.ndarray:
    """``prod_k w_k**e_k`` for every row of ``exponents`` (0**0 == 1)."""
    w = np.asarray(w, dtype=float)
    return np.prod(np.power(w, exponents), axis=-1)


def reaction_fluxes(net: ReactionNetwork, w) -> tuple[np.ndarray, np.ndarray]:
    """Forward and backward fluxes ``kf w^alpha`` and ``kb w^beta`` per reaction."""
    return net.kf * monomials(net.alpha, w), net.kb * monomials(net.beta, w)


def mass_action_rate(net: ReactionNetwork, w) -> np.ndarray:
    """Time derivative of the concentrations under mass action.

    ``sum_r (kf^r w^alpha^r - kb^r w^beta^r) (beta^r - alpha^r)``.
    """
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("concentrations must be non-negative")
    fwd, bwd = reaction_fluxes(net, w)
    return (fwd - bwd) @ (net.beta - net.alpha)


@dataclass(frozen=True)
class DetailedBalanceReport:
    balanced: bool
    residuals: np.ndarray           # |kf w^alpha - kb w^beta| per reaction
    relative_residuals: np.ndarray  # residuals / max(forward, backward)

    def __bool__(self):
        return self.balanced


def check_detailed_balance(net: ReactionNetwork, w, tol: float = 1e-10) -> DetailedBalanceReport:
    """Check that forward and backward fluxes agree reaction by reaction."""
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise ValueError("detailed balance is checked at strictly positive states")
    fwd, bwd = reaction_fluxes(net, w)
    res = np.abs(fwd - bwd)
    rel = res / np.maximum(fwd, bwd)
    return DetailedBalanceReport(bool(np.all(rel <= tol)), res, rel)


def first_order_detailed_balance(rate_matrix, tol: float = 1e-10) -> bool:
    """Detailed balance of a first-order network ``S_i <-> S_j``.

    ``rate_matrix[i, j]`` is the rate constant of ``S_i -> S_j``.  The
    network is detailed balanced exactly when that matrix is symmetrizable
    (matching zero pattern and equal products around every cycle).
    """
    from .symmetry import is_symmetrizable

    a = np.asarray(rate_matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("rate matrix must be square")
    if np.any(a < 0):
        raise ValueError("rate constants must be non-negative")
    return is_symmetrizable(a, tol).symmetrizable


def as_state(w, n: int | None = None, positive: bool = True) -> np.ndarray:
    """Validate a state vector; shared by the numerical modules."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise ValueError("state must be a 1-d vector")
    if n is not None and w.shape[0] != n:
        raise ValueError(f"state has {w.shape[0]} entries, network has {n} species")
    if positive and np.any(w <= 0):
        raise ValueError("state must be strictly positive")
    return w


def first_order_rate_matrix(net: ReactionNetwork) -> np.ndarray | None:
    """Rate matrix of a network of unimolecular isomerisations, else None."""
    K = net.n_species
    a = np.zeros((K, K))
    for r in net.reactions:
        al, be = np.asarray(r.alpha), np.asarray(r.beta)
        if al.sum() != 1 or be.sum() != 1:
            return None
        i, j = int(np.argmax(al)), int(np.argmax(be))
        a[i, j] += r.kf
        a[j, i] += r.kb
    return a

