"""Diagonal symmetrizers and the game classes they induce."""

import numpy as np

from crngames.symmetry import DifferentiableGame, classify_game, is_symmetrizable

A = np.array([[2.0, 1.0], [0.5, -2.0]])
res = is_symmetrizable(A)
print("A =", A.tolist(), "->", res.verdict.value, "weights", res.weights)
print("diag(d) A =", (np.diag(res.weights) @ A).tolist())

C = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]])
res = is_symmetrizable(C)
w = res.witness
print("3-cycle:", res.verdict.value, "witness", w.kind, w.indices, "products", w.cycle_products(C))

# bilinear two-player game: l_1 = x C1 y, l_2 = x C2 y
def bilinear(C1, C2):
    return DifferentiableGame((1, 1), lambda z: np.array([C1 * z[0] * z[1], C2 * z[0] * z[1]]))

pts = np.random.default_rng(0).normal(size=(3, 2))
for c1, c2 in [(1.0, 1.0), (1.0, 3.0), (1.0, -1.0)]:
    print(f"l_1 = {c1} xy, l_2 = {c2} xy:", classify_game(bilinear(c1, c2), pts).kind.value)
