import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crngames.cli import load_inputs
from crngames.dynamics import equilibrium_in_class
from crngames.game import (
    CrnGame,
    NotDetailedBalancedError,
    dissipation_evaluation,
    entropy,
    entropy_gradient,
    game_hessian,
    generalized_potential_difference,
    log_mean,
    loss,
    loss_bundle,
    losses,
    onsager_matrix,
    psi_star,
    psi_star_cosh,
    psi_star_cosh_gradient,
    psi_star_gradient,
    simultaneous_gradient,
    verify_generalized_potential,
)
from crngames.network import mass_action_rate, parse_network, wegscheider_matrix
from crngames.symmetry import GameClass, classify_game

EXAMPLES = ["example1", "example2", "example3"]


def make_game(name):
    net, w0 = load_inputs(name, None)
    return CrnGame(net, equilibrium_in_class(net, w0))


@pytest.fixture(scope="module", params=EXAMPLES)
def game(request):
    return make_game(request.param)


def random_states(game, n, seed):
    rng = np.random.default_rng(seed)
    return game.equilibrium * np.exp(rng.normal(0, 0.7, size=(n, game.n_players)))


def unit_game(text, w_inf):
    return CrnGame(parse_network(text), w_inf)


# --- losses ----------------------------------------------------------------

def test_example1_printed_losses():
    g = unit_game("2 NaCl + CaCO3 <-> Na2CO3 + CaCl2 | kf=1.5 kb=0.5", [1.0, 1.0, 1.0, 3.0])
    assert loss(CrnGame(g.network, [1.0, 1.0, 1.0, 3.0]), 0, np.ones(4)) == pytest.approx(
        2 * (1.5 / 3 - 0.5))
    kp, km = 1.5, 0.5
    w = np.array([0.7, 1.3, 0.4, 2.1])
    w1, w2, w3, w4 = w
    printed = [2 * (kp / 3 * w1**3 * w2 - km * w1 * w3 * w4),
               kp / 2 * w1**2 * w2**2 - km * w2 * w3 * w4,
               -(kp * w1**2 * w2 * w3 - km / 2 * w3**2 * w4),
               -(kp * w1**2 * w2 * w4 - km / 2 * w3 * w4**2)]
    np.testing.assert_allclose(losses(g, w), printed, rtol=1e-14)


def test_example1_loss_at_ones():
    g = make_game("example1")
    assert loss(g, 0, np.ones(4)) == pytest.approx(-4 / 3, rel=1e-15)


def test_example3_printed_losses_are_negated():
    # the displayed Example 3 losses equal minus the general formula
    g = make_game("example3")
    w = np.array([1.3, 0.7, 1.9])
    w1, w2, w3 = w
    printed = [0.5 * w1**2 * w2 - 0.75 * w1**4 - w1**3 * w3 / 3 + 3 * w1 * w2**2,
               w2 * w1**3 + 2 * w1**2 * w2 * w3 - w2**3,
               w1**3 * w3 - w1**2 * w3**2 + w2**2 * w3]
    np.testing.assert_allclose(losses(g, w), -np.array(printed), rtol=1e-14)
    assert loss(g, 1, np.ones(3)) == pytest.approx(-2.0)


def test_loss_index_checked():
    g = make_game("example3")
    with pytest.raises(IndexError):
        loss(g, 3, np.ones(3))


def test_xi_example3_and_sign(game):
    if game.n_players == 3:
        np.testing.assert_allclose(simultaneous_gradient(game, [1, 1, 2]), [1, -2, 2])
    for w in random_states(game, 20, 1):
        xi = simultaneous_gradient(game, w)
        rate = mass_action_rate(game.network, w)
        assert np.abs(xi + rate).max() <= 1e-14 * max(1.0, np.abs(rate).max())
    assert np.abs(simultaneous_gradient(game, game.equilibrium)).max() <= 1e-12


def test_xi_matches_loss_derivatives(game):
    for w in random_states(game, 100, 2):
        xi = simultaneous_gradient(game, w)
        for i in range(game.n_players):
            h = 1e-5 * w[i]
            e = np.zeros_like(w)
            e[i] = h
            fd = (loss(game, i, w + e) - loss(game, i, w - e)) / (2 * h)
            assert abs(fd - xi[i]) <= 1e-6 * max(1.0, abs(xi[i]))


def test_game_hessian_matches_fd(game):
    for w in random_states(game, 5, 3):
        H = game_hessian(game, w).matrix
        fd = np.empty_like(H)
        for j in range(game.n_players):
            h = 1e-6 * w[j]
            e = np.zeros_like(w)
            e[j] = h
            fd[:, j] = (simultaneous_gradient(game, w + e) - simultaneous_gradient(game, w - e)) / (2 * h)
        np.testing.assert_allclose(H, fd, rtol=1e-6, atol=1e-6 * np.abs(H).max())


def test_loss_bundle(game):
    w = random_states(game, 1, 4)[0]
    b = loss_bundle(game, w)
    np.testing.assert_array_equal(b.simultaneous_gradient, simultaneous_gradient(game, w))
    assert b.game_hessian.analytic and b.game_hessian.block(0, 0).shape == (1, 1)


# --- construction ----------------------------------------------------------

def test_kappas(game):
    net, w_inf = game.network, game.equilibrium
    fwd = net.kf * np.prod(w_inf ** net.alpha, axis=1)
    bwd = net.kb * np.prod(w_inf ** net.beta, axis=1)
    np.testing.assert_allclose(game.kappas, fwd, rtol=1e-12)
    np.testing.assert_allclose(game.kappas, bwd, rtol=1e-10)


def test_unbalanced_state_rejected():
    net, _ = load_inputs("example3", None)
    with pytest.raises(NotDetailedBalancedError):
        CrnGame(net, [1.0, 1.0, 2.0])


# --- entropy ---------------------------------------------------------------

def test_entropy_values():
    g = unit_game("A <-> B | kf=1 kb=1", [1.0, 1.0])
    assert entropy(g, [1, 1]) == -2.0
    assert entropy(g, [2, 0.5]) == pytest.approx(2 * np.log(2) - 2 + 0.5 * np.log(0.5) - 0.5)
    assert entropy(g, [2, 0.5]) == pytest.approx(-1.4603, abs=1e-4)
    np.testing.assert_allclose(entropy_gradient(g, [np.e, np.e]), [1, 1])
    with pytest.raises(ValueError):
        entropy(g, [1.0, 0.0])


def test_entropy_gradient_fd(game):
    for w in random_states(game, 100, 5):
        g = entropy_gradient(game, w)
        for i in range(game.n_players):
            h = 1e-6 * w[i]
            e = np.zeros_like(w)
            e[i] = h
            fd = (entropy(game, w + e) - entropy(game, w - e)) / (2 * h)
            assert abs(fd - g[i]) <= 1e-8 * max(1.0, abs(g[i]))


# --- logarithmic mean ------------------------------------------------------

def test_log_mean_values():
    for a in (0.1, 1.0, 7.0):
        assert log_mean(a, a) == a
    assert log_mean(4, 1) == pytest.approx(3 / np.log(4), rel=1e-15)
    v = log_mean(1 + 1e-13, 1)
    assert 1 <= v <= 1 + 1e-13
    with pytest.raises(ValueError):
        log_mean(0.0, 1.0)


def test_log_mean_branches_agree():
    # the three evaluation branches meet continuously
    for u in (1e-3, 0.5):
        a = np.array([1 + u * (1 - 1e-12), 1 + u * (1 + 1e-12)])
        b = np.array([1 - u * (1 - 1e-12), 1 - u * (1 + 1e-12)])
        v = log_mean(a, b)
        assert abs(v[0] - v[1]) <= 1e-11


_pos = st.floats(1e-8, 1e8, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(_pos, _pos, st.floats(1e-4, 1e4))
def test_log_mean_properties(a, b, c):
    v = log_mean(a, b)
    lo, hi = min(a, b), max(a, b)
    assert lo * (1 - 1e-14) <= v <= hi * (1 + 1e-14)
    assert log_mean(b, a) == v
    assert log_mean(c * a, c * b) == pytest.approx(c * v, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(-30, 30))
def test_log_mean_against_direct_formula(x):
    a, b = np.exp(x), 1.0
    ref = 1.0 if x == 0 else np.expm1(x) / x
    assert log_mean(a, b) == pytest.approx(ref, rel=1e-13)


# --- Onsager matrix and duals ----------------------------------------------

def test_onsager_single_reaction():
    g = unit_game("A <-> B | kf=1 kb=1", [1.0, 1.0])
    np.testing.assert_allclose(onsager_matrix(g, [1, 1]), [[1, -1], [-1, 1]])
    assert psi_star(g, [1, 1], [1, 0]) == pytest.approx(0.5)
    assert psi_star_cosh(g, [1, 1], [1, 0]) == pytest.approx(2 * (np.cosh(1) - 1))
    assert psi_star_cosh(g, [1, 1], [1, 0]) == pytest.approx(1.08616, abs=1e-5)
    assert psi_star(g, [3, 1], [0, 0]) == 0.0
    assert psi_star(g, [3, 1], [1, 1]) == pytest.approx(0.0, abs=1e-15)


def test_onsager_at_equilibrium(game):
    nu = game.network.alpha - game.network.beta
    H = onsager_matrix(game, game.equilibrium)
    np.testing.assert_allclose(H, nu.T @ (game.kappas[:, None] * nu), rtol=1e-12, atol=1e-14)


def test_onsager_psd_and_rank(game):
    rank_W = np.linalg.matrix_rank(wegscheider_matrix(game.network))
    for w in random_states(game, 1000, 6):
        H = onsager_matrix(game, w)
        assert np.array_equal(H, H.T)
        ev = np.linalg.eigvalsh(H)
        assert ev.min() >= -1e-10 * np.abs(ev).max()
    assert np.linalg.matrix_rank(H) == rank_W


def test_dissipation_evaluation(game):
    w = random_states(game, 1, 7)[0]
    mu = np.linspace(-1, 1, game.n_players)
    ev = dissipation_evaluation(game, w, mu)
    assert ev.psi_star == pytest.approx(0.5 * mu @ ev.onsager @ mu, rel=1e-14)
    assert ev.psi_star >= 0 and ev.psi_star_cosh >= 0
    np.testing.assert_allclose(psi_star_gradient(game, w, mu), ev.onsager @ mu)


def test_cosh_dual_gradient_fd(game):
    w = random_states(game, 1, 8)[0]
    mu = np.linspace(-0.5, 0.3, game.n_players)
    g = psi_star_cosh_gradient(game, w, mu)
    for i in range(game.n_players):
        e = np.zeros_like(mu)
        e[i] = 1e-6
        fd = (psi_star_cosh(game, w, mu + e) - psi_star_cosh(game, w, mu - e)) / 2e-6
        assert fd == pytest.approx(g[i], rel=1e-6, abs=1e-8)


def test_cosh_dual_reproduces_rate(game):
    # xi = D_mu Psi_cosh*(w, grad(E / 2))
    for w in random_states(game, 20, 9):
        xi = simultaneous_gradient(game, w)
        rhs = psi_star_cosh_gradient(game, w, 0.5 * entropy_gradient(game, w))
        assert np.abs(xi - rhs).max() <= 1e-10 * (1 + np.abs(xi).max())


# --- generalized potential structure ---------------------------------------

def test_generalized_relation(game):
    res = [verify_generalized_potential(game, w) for w in random_states(game, 100, 10)]
    assert max(res) <= 1e-10
    assert verify_generalized_potential(game, game.equilibrium) <= 1e-15


def test_wrong_reference_breaks_relation():
    net, _ = load_inputs("example3", None)
    bad = CrnGame.unchecked(net, [1.0, 1.0, 2.0])
    rng = np.random.default_rng(11)
    res = [verify_generalized_potential(bad, w) for w in np.exp(rng.normal(size=(20, 3)))]
    assert min(res) > 1e-3


def test_fixed_points():
    g = make_game("example3")
    w = g.equilibrium
    assert np.abs(simultaneous_gradient(g, w)).max() == 0.0
    assert np.abs(entropy_gradient(g, w)).max() == 0.0
    assert np.linalg.matrix_rank(onsager_matrix(g, [1.3, 0.7, 1.9])) == 3


def test_inverse_onsager_times_game_hessian():
    # At the equilibrium H^{-1} J_xi is symmetric (it is diag(1/w_inf)); at
    # generic states the total derivative of H^{-1} xi is diag(1/w).
    g = make_game("example3")
    w_inf = g.equilibrium
    M = np.linalg.solve(onsager_matrix(g, w_inf), game_hessian(g, w_inf).matrix)
    np.testing.assert_allclose(M, M.T, atol=1e-8)
    np.testing.assert_allclose(M, np.diag(1 / w_inf), atol=1e-8)
    w = np.array([1.3, 0.7, 1.9])
    f = lambda z: np.linalg.solve(onsager_matrix(g, z), simultaneous_gradient(g, z))  # noqa: E731
    J = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1e-6
        J[:, j] = (f(w + e) - f(w - e)) / 2e-6
    np.testing.assert_allclose(J, np.diag(1 / w), atol=1e-7)


def test_game_hessian_not_symmetrizable():
    # the CRN game is generalized potential but not a weighted potential game
    g = make_game("example3")
    res = classify_game(g.as_differentiable_game(), [np.array([1.3, 0.7, 1.9])])
    assert res.kind is GameClass.NOT_POTENTIAL


# --- potential differences -------------------------------------------------

def test_potential_difference_example1():
    g = make_game("example1")
    rng = np.random.default_rng(12)
    for _ in range(20):
        z0, z1 = np.exp(rng.normal(size=(2, 4)))
        mid = np.exp(rng.normal(size=4))
        direct = entropy(g, z1) - entropy(g, z0)
        straight = generalized_potential_difference(g, z0, z1, 10_000)
        bent = generalized_potential_difference(g, z0, np.array([mid, z1]), 10_000)
        assert abs(straight - direct) <= 1e-8
        assert abs(bent - straight) <= 1e-7
    assert generalized_potential_difference(g, z0, z0) == 0.0


def test_potential_difference_via_dissipation():
    g = make_game("example1")
    W = wegscheider_matrix(g.network)
    z0 = np.array([2.0, 1.0, 0.5, 0.5])
    z1 = z0 + 0.3 * W[:, 0]
    z2 = z0 - 0.2 * W[:, 0]
    for path in (z1, np.array([z2, z1])):
        val = generalized_potential_difference(g, z0, path, 2000, via="dissipation")
        assert val == pytest.approx(entropy(g, z1) - entropy(g, z0), abs=1e-9)
    with pytest.raises(ValueError, match="compatibility class"):
        generalized_potential_difference(g, z0, z0 * 1.1, via="dissipation")
    with pytest.raises(ValueError):
        generalized_potential_difference(g, z0, z1, via="other")


def test_potential_path_leaving_orthant():
    g = make_game("example1")
    with pytest.raises(ValueError):
        generalized_potential_difference(g, np.ones(4), -np.ones(4))
    with pytest.raises(ValueError):
        generalized_potential_difference(g, np.ones(4), np.array([[1.0, -1.0, 1.0, 1.0], np.ones(4)]))
