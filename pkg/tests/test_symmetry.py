import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crngames.symmetry import (
    DifferentiableGame,
    GameClass,
    PathDomainError,
    Verdict,
    Witness,
    classify_game,
    game_hessian,
    is_symmetrizable,
    line_integral,
    potential_from_weights,
    simultaneous_gradient,
)


def oracle(A, tol=1e-10):
    """Independent decision: sign and zero pattern, then the log-space system
    ``log d_i - log d_j = log(a_ji / a_ij)`` over all support pairs, solved
    by least squares and verified."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    zero = tol * np.linalg.norm(A, np.inf)
    rows, rhs = [], []
    for i, j in itertools.combinations(range(n), 2):
        nz_ij, nz_ji = abs(A[i, j]) > zero, abs(A[j, i]) > zero
        if nz_ij != nz_ji:
            return False
        if not nz_ij:
            continue
        if A[i, j] * A[j, i] < 0:
            return False
        r = np.zeros(n)
        r[i], r[j] = 1.0, -1.0
        rows.append(r)
        rhs.append(np.log(A[j, i] / A[i, j]))
    if not rows:
        return True
    M, b = np.array(rows), np.array(rhs)
    x = np.linalg.lstsq(M, b, rcond=None)[0]
    return bool(np.abs(M @ x - b).max() <= 1e-8 * max(1.0, np.abs(b).max()))


def random_matrix(rng):
    n = int(rng.choice([3, 4]))
    kind = rng.integers(4)
    mask = np.triu(rng.random((n, n)) < 0.7, 1)
    mask = mask | mask.T
    if kind == 0:                       # symmetrizable by construction
        S = rng.normal(size=(n, n))
        S = (S + S.T) * mask + np.diag(rng.normal(size=n))
        d = np.exp(rng.normal(size=n))
        return S / d[:, None]
    if kind == 1:                       # same support, independent entries
        return rng.normal(size=(n, n)) * mask + np.diag(rng.normal(size=n))
    if kind == 2:                       # positive entries, independent
        return rng.exponential(size=(n, n)) * mask
    A = rng.exponential(size=(n, n)) * mask   # broken zero pattern
    i, j = rng.choice(n, 2, replace=False)
    A[i, j], A[j, i] = 1.0, 0.0
    return A


# --- oracle examples -------------------------------------------------------

def test_worked_example():
    A = np.array([[2.0, 1.0], [0.5, -2.0]])
    res = is_symmetrizable(A)
    assert res.verdict is Verdict.SYMMETRIZABLE
    d = res.weights / res.weights[0]
    np.testing.assert_allclose(d, [1.0, 2.0], rtol=1e-15)
    np.testing.assert_allclose(np.diag(d) @ A, [[2, 1], [1, -4]], rtol=1e-15)


def test_identity_is_exact():
    assert is_symmetrizable(np.eye(4)).verdict is Verdict.EXACT_SYMMETRIC


def test_three_cycle_witness():
    A = np.arange(1.0, 10.0).reshape(3, 3)
    res = is_symmetrizable(A)
    assert res.verdict is Verdict.NOT_SYMMETRIZABLE
    assert res.witness.kind == "cycle" and sorted(res.witness.indices) == [0, 1, 2]
    assert sorted(res.witness.cycle_products(A)) == [84.0, 96.0]
    assert res.witness.holds(A)


def test_zero_pattern_witness():
    A = np.array([[1.0, 2.0, 0.0], [1.0, 1.0, 3.0], [0.0, 0.0, 1.0]])
    res = is_symmetrizable(A)
    assert res.witness == Witness("zero_pattern", (1, 2))
    assert res.witness.holds(A)


def test_mixed_sign_symmetrizer_is_rejected():
    # diag(1, -1) symmetrises this matrix, but no positive diagonal does
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    res = is_symmetrizable(A)
    assert res.verdict is Verdict.NOT_SYMMETRIZABLE and res.witness.kind == "sign"
    assert res.witness.holds(A)


def test_forest_roots_and_isolated_nodes():
    A = np.array([[1.0, 2.0, 0.0, 0.0], [4.0, 1.0, 0.0, 0.0],
                  [0.0, 0.0, 3.0, 1.0], [0.0, 0.0, 3.0, 3.0]])
    res = is_symmetrizable(A)
    assert res.verdict is Verdict.SYMMETRIZABLE
    np.testing.assert_allclose(res.weights, [1.0, 0.5, 1.0, 1 / 3])


def test_non_square():
    with pytest.raises(ValueError):
        is_symmetrizable(np.ones((2, 3)))


def test_agreement_with_oracle_500():
    rng = np.random.default_rng(7)
    verdicts = []
    for _ in range(500):
        A = random_matrix(rng)
        res = is_symmetrizable(A)
        assert res.symmetrizable == oracle(A)
        verdicts.append(res.symmetrizable)
        if res.symmetrizable:
            DA = res.weights[:, None] * A
            assert np.abs(DA - DA.T).max() <= 1e-12 * max(1.0, np.abs(DA).max())
            assert np.all(res.weights > 0)
        else:
            assert res.witness.holds(A)
    # the sample exercises both outcomes
    assert 100 < sum(verdicts) < 400


_mat = st.integers(2, 5).flatmap(
    lambda n: arrays(float, (n, n), elements=st.floats(-10, 10, allow_nan=False).filter(
        lambda x: x == 0 or abs(x) > 1e-3)))


@settings(max_examples=200, deadline=None)
@given(_mat, st.floats(1e-3, 1e3), st.booleans(), st.randoms(use_true_random=False))
def test_scaling_and_permutation_invariance(A, c, negate, rnd):
    base = is_symmetrizable(A).symmetrizable
    c = -c if negate else c
    assert is_symmetrizable(c * A).symmetrizable == base
    perm = list(range(A.shape[0]))
    rnd.shuffle(perm)
    assert is_symmetrizable(A[np.ix_(perm, perm)]).symmetrizable == base


@settings(max_examples=200, deadline=None)
@given(_mat)
def test_verdicts_are_certified(A):
    res = is_symmetrizable(A)
    assert res.symmetrizable == oracle(A)
    if res.symmetrizable:
        DA = res.weights[:, None] * A
        assert np.abs(DA - DA.T).max() <= 1e-10 * np.abs(A).max() * res.weights.max()
    else:
        assert res.witness.holds(A)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_constructed_symmetrizable(n, seed):
    rng = np.random.default_rng(seed)
    S = rng.normal(size=(n, n))
    S = S + S.T
    d = np.exp(rng.uniform(-3, 3, size=n))
    res = is_symmetrizable(S / d[:, None])
    assert res.symmetrizable
    np.testing.assert_allclose(res.weights / res.weights[0], d / d[0], rtol=1e-9)


# --- games -----------------------------------------------------------------

def bilinear_game(C, analytic=True):
    C = np.asarray(C, dtype=float)
    n = C.shape[0]

    def losses(w):
        out = np.empty(n)
        for i in range(n):
            out[i] = 0.5 * C[i, i] * w[i] ** 2 + np.cosh(w[i]) + sum(
                C[i, j] * w[i] * w[j] for j in range(n) if j != i)
        return out

    if not analytic:
        return DifferentiableGame((1,) * n, losses)

    def grad(w):
        return np.diag(C) * w + np.sinh(w) + (C - np.diag(np.diag(C))) @ w

    def hess(w):
        return C + np.diag(np.cosh(w))

    return DifferentiableGame((1,) * n, losses, grad, hess)


def test_single_player():
    g = DifferentiableGame((1,), lambda w: np.array([w[0] ** 4]))
    assert classify_game(g, [np.array([0.3])]).kind is GameClass.EXACT_POTENTIAL


def test_zero_sum_bilinear_not_potential():
    g = DifferentiableGame((1, 1), lambda w: np.array([w[0] * w[1], -w[0] * w[1]]))
    res = classify_game(g, [np.array([0.2, -0.4]), np.array([1.0, 2.0])])
    assert res.kind is GameClass.NOT_POTENTIAL and res.counterexample == 0


@pytest.mark.parametrize("analytic", [True, False])
def test_weighted_bilinear(analytic):
    g = bilinear_game([[2.0, 1.0], [0.5, -2.0]], analytic)
    pts = np.random.default_rng(1).normal(size=(5, 2))
    res = classify_game(g, pts)
    assert res.kind is GameClass.WEIGHTED_POTENTIAL
    np.testing.assert_allclose(res.weights / res.weights[0], [1, 2], rtol=1e-6)


def test_exact_quadratic():
    Q = np.array([[2.0, 0.3, -1.0], [0.3, 1.0, 0.5], [-1.0, 0.5, 3.0]])
    phi = lambda w: 0.5 * w @ Q @ w  # noqa: E731
    g = DifferentiableGame((1, 1, 1), lambda w: np.full(3, phi(w)))
    res = classify_game(g, np.random.default_rng(2).normal(size=(4, 3)))
    assert res.kind is GameClass.EXACT_POTENTIAL


def test_weight_changing_between_samples():
    # H12 = 1, H21 = w1^2: ratio differs per sample
    def grad(w):
        return np.array([w[1], w[0] ** 3 / 3 + 0 * w[1]])

    def hess(w):
        return np.array([[0.0, 1.0], [w[0] ** 2, 0.0]])

    g = DifferentiableGame((1, 1), lambda w: np.zeros(2), grad, hess)
    res = classify_game(g, [np.array([1.0, 0.0]), np.array([2.0, 0.0])])
    assert res.kind is GameClass.NOT_POTENTIAL
    assert res.counterexample == 1 and res.witness.kind == "sample_ratio"


def test_inconsistent_cycle_of_ratios():
    C = np.array([[1.0, 1.0, 2.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0]])
    res = classify_game(bilinear_game(C), [np.zeros(3)])
    assert res.kind is GameClass.NOT_POTENTIAL and res.witness.kind == "cycle"


def test_block_players():
    # two players with 2-d strategies; l_i = phi / alpha_i
    alpha = np.array([1.5, 0.25])
    phi = lambda w: np.sum(np.sin(w)) + w[0] * w[2] + w[1] * w[3] ** 2  # noqa: E731
    g = DifferentiableGame((2, 2), lambda w: phi(w) / alpha)
    res = classify_game(g, np.random.default_rng(3).normal(size=(3, 4)))
    assert res.kind is GameClass.WEIGHTED_POTENTIAL
    np.testing.assert_allclose(res.weights / res.weights[0], alpha / alpha[0], rtol=1e-6)
    sample = game_hessian(g, np.zeros(4))
    assert sample.block(0, 1).shape == (2, 2) and not sample.analytic


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_recovers_weights_of_scaled_potential(n, seed):
    rng = np.random.default_rng(seed)
    alpha = np.exp(rng.uniform(-1, 1, size=n))
    Q = rng.normal(size=(n, n))
    Q = Q + Q.T
    c = rng.normal(size=n)

    def phi(w):
        return 0.5 * w @ Q @ w + np.sum(np.exp(0.3 * w)) + np.sin(c @ w)

    g = DifferentiableGame((1,) * n, lambda w: phi(w) / alpha)
    res = classify_game(g, rng.normal(size=(3, n)))
    assert res.kind in (GameClass.WEIGHTED_POTENTIAL, GameClass.EXACT_POTENTIAL)
    np.testing.assert_allclose(res.weights / res.weights[0], alpha / alpha[0], rtol=1e-6)


def test_dimension_mismatch():
    g = bilinear_game(np.eye(2))
    with pytest.raises(ValueError):
        classify_game(g, [np.zeros(3)])


def test_fd_gradient_matches_analytic():
    ga = bilinear_game([[2.0, 1.0], [0.5, -2.0]])
    gf = bilinear_game([[2.0, 1.0], [0.5, -2.0]], analytic=False)
    w = np.array([0.3, -0.8])
    np.testing.assert_allclose(simultaneous_gradient(gf, w), simultaneous_gradient(ga, w), rtol=1e-8)
    np.testing.assert_allclose(game_hessian(gf, w).matrix, game_hessian(ga, w).matrix, rtol=1e-5)


# --- potentials ------------------------------------------------------------

def test_potential_of_half_square():
    phi = lambda w: 0.5 * w @ w  # noqa: E731
    g = DifferentiableGame((1, 1), lambda w: np.full(2, phi(w)))
    assert potential_from_weights(g, [1, 1], np.zeros(2), np.ones(2)) == pytest.approx(1.0, abs=1e-9)
    assert potential_from_weights(g, [1, 1], np.ones(2), np.ones(2)) == 0.0


def test_weighted_potential_path_independent():
    g = bilinear_game([[2.0, 1.0], [0.5, -2.0]])
    w = np.array([1.0, 2.0])
    z0, z1, mid = np.array([0.1, -0.3]), np.array([1.2, 0.7]), np.array([-0.5, 1.5])

    def phi(z):
        # potential with weights (1, 2)
        return (z[0] ** 2 + np.cosh(z[0])) + 2 * (-z[1] ** 2 + np.cosh(z[1])) + z[0] * z[1]

    straight = potential_from_weights(g, w, z0, z1, 10_000)
    bent = potential_from_weights(g, w, z0, np.array([mid, z1]), 10_000)
    assert straight == pytest.approx(phi(z1) - phi(z0), abs=1e-10)
    assert bent == pytest.approx(straight, abs=1e-8)


def test_path_domain_error():
    with pytest.raises(PathDomainError) as err:
        line_integral(lambda z: 1 / z, [np.array([-1.0]), np.array([1.0])], 10,
                      domain=lambda z: bool(np.all(z > 0)))
    assert err.value.t == 0.0
    with pytest.raises(ValueError):
        potential_from_weights(bilinear_game(np.eye(2)), [1, -1], np.zeros(2), np.ones(2))


# --- matrix I/O ------------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31), st.sampled_from(["json", "text"]))
def test_matrix_round_trip(m, n, seed, fmt):
    from crngames.symmetry import format_matrix, parse_matrix

    A = np.random.default_rng(seed).normal(size=(m, n)) * 10.0 ** np.random.default_rng(seed).integers(-20, 20)
    np.testing.assert_array_equal(parse_matrix(format_matrix(A, fmt)), A)


@pytest.mark.parametrize("text", ["", "[[1, 2], [3]]", "1 2\n3\n", "[1, 2]", "a b\n", "[[1, nan]]", "[[1,"])
def test_matrix_parse_errors(text):
    from crngames.symmetry import parse_matrix

    with pytest.raises(ValueError):
        parse_matrix(text)
