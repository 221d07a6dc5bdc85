"""Three-species network whose game is a generalized but not a weighted
potential game.

The game Hessian is not symmetrizable, yet the simultaneous gradient is
the Onsager matrix applied to the entropy gradient.
"""

import numpy as np

from crngames import CrnGame, equilibrium_in_class, format_network, integrate
from crngames.cli import load_inputs
from crngames.game import game_hessian, onsager_matrix, verify_generalized_potential
from crngames.symmetry import classify_game, is_symmetrizable

net, w0 = load_inputs("example3", None)
print(format_network(net))

w_inf = equilibrium_in_class(net, w0)
game = CrnGame(net, w_inf)
print("equilibrium:", w_inf, " kappas:", game.kappas)

w = np.array([0.7, 1.9, 1.2])
J = game_hessian(game, w).matrix
print("game Hessian at", w, "\n", J)
print("symmetrizable:", is_symmetrizable(J).verdict.value)

pts = np.exp(np.random.default_rng(0).normal(size=(5, 3)))
print("classification:", classify_game(game.as_differentiable_game(), pts).kind.value)

print("Onsager matrix eigenvalues:", np.linalg.eigvalsh(onsager_matrix(game, w)))
print("residual |xi - H grad E|:", verify_generalized_potential(game, w))

# the slowest linear mode decays at rate ~0.11, so the approach is slow
for t_end in (50, 100, 150):
    err = np.abs(integrate(net, w0, t_end, 1e-2).final - 1).max()
    print(f"t = {t_end:3d}: max |w - 1| = {err:.1e}")
