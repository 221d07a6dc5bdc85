"""Explicit exponential decay rate for a single reversible reaction."""

import numpy as np

from crngames import format_network, integrate
from crngames.cli import load_inputs
from crngames.dynamics import lambda_functional, rate_certificate, sample_class, verify_exponential_decay

for name in ("ab", "2ab"):
    net, w0 = load_inputs(name, None)
    cert = rate_certificate(net, w0)
    print(f"{format_network(net).strip()}  from {w0}")
    print(f"  masses {cert.masses.tolist()}  K {cert.K.tolist()}  L {cert.L.tolist()}")
    print(f"  lambda = {cert.lam_exact}   C1 = {cert.C1:.6f}   equilibrium {cert.equilibrium}")

    pts = sample_class(net, w0, 10_000, np.random.default_rng(1))
    print(f"  min Lambda over class samples: {min(lambda_functional(net, p) for p in pts):.4f}")

    traj = integrate(net, w0, 20.0, 1e-3, equilibrium=cert.equilibrium)
    print(f"  decay with certified rate holds: {verify_exponential_decay(traj, cert).ok}")
    bad = verify_exponential_decay(traj, cert, lam=10 * cert.lam)
    print(f"  ten times the rate fails at t = {bad.first_violation_time}")
