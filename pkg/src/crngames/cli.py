"""Command-line interface: ``crngames {check,simulate,equilibrate,rate,compare,symmetrize}``.

Every command prints a JSON report on stdout.  Exit status is 0 on
success, 1 on bad input or a numerical failure and 2 when the
mathematical verdict is negative.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .dynamics import (
    EquilibriumError,
    IntegrationError,
    detailed_balance_reference,
    equilibrium_in_class,
    integrate,
    rate_certificate,
    verify_exponential_decay,
    wegscheider_cycle,
)
from .game import (
    CrnGame,
    entropy,
    generalized_potential_difference,
    simultaneous_gradient,
    verify_generalized_potential,
)
from .network import (
    NetworkSyntaxError,
    ReactionNetwork,
    check_detailed_balance,
    conservation_basis,
    first_order_rate_matrix,
    parse_network,
)
from .optimizer import Backtracking, ProjectedProblem, projected_descent, projected_simultaneous_descent
from .symmetry import classify_game, is_symmetrizable, parse_matrix

EXIT_OK, EXIT_INPUT, EXIT_NEGATIVE = 0, 1, 2
RESIDUAL_TOL = 1e-10


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# inputs

def preset_names() -> list[str]:
    root = resources.files("crngames.presets")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".crn"))


def _read_source(source: str) -> str:
    path = Path(source)
    if path.is_file():
        return path.read_text()
    if source in preset_names():
        return resources.files("crngames.presets").joinpath(source + ".crn").read_text()
    raise InputError(f"no such network file or preset: {source!r} (presets: {', '.join(preset_names())})")


def _declared_init(text: str):
    for line in text.splitlines():
        s = line.strip()
        if s.startswith("#") and s[1:].strip().startswith("init:"):
            return s[1:].strip()[len("init:"):].strip()
    return None


def _parse_vector(text: str, n: int) -> np.ndarray:
    try:
        w = np.array([float(x) for x in text.replace(",", " ").split()])
    except ValueError:
        raise InputError(f"cannot read initial state {text!r}") from None
    if w.shape != (n,):
        raise InputError(f"initial state has {w.size} entries, network has {n} species")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise InputError("initial state must be finite and strictly positive")
    return w


def load_inputs(network: str, init: str | None) -> tuple[ReactionNetwork, np.ndarray | None]:
    """Resolve ``--network`` and ``--init``.

    Either may name a bundled preset; without ``--init`` the ``# init:``
    line of the network file is used.
    """
    text = _read_source(network)
    net = parse_network(text)
    if init is None:
        init = _declared_init(text)
    elif init in preset_names() and not Path(init).exists():
        init = _declared_init(_read_source(init))
        if init is None:
            raise InputError("preset declares no initial state")
    w0 = None if init is None else _parse_vector(init, net.n_species)
    return net, w0


def _require_init(w0):
    if w0 is None:
        raise InputError("an initial state is required (--init)")
    return w0


# ---------------------------------------------------------------------------
# outputs

def _num(x):
    return float(repr(float(x))) if np.isfinite(x) else None


def _vec(v):
    return [_num(x) for x in np.asarray(v, dtype=float).ravel()]


def _fmt(x) -> str:
    return repr(float(x))


def trajectory_csv(traj, stride: int = 1) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["t", *traj.species, "entropy", "dissipation"])
    idx = list(range(0, len(traj.times), stride))
    if idx[-1] != len(traj.times) - 1:
        idx.append(len(traj.times) - 1)
    for k in idx:
        wr.writerow([_fmt(traj.times[k]), *map(_fmt, traj.states[k]),
                     _fmt(traj.entropy[k]), _fmt(traj.dissipation[k])])
    return buf.getvalue()


def trace_csv(trace, species, stride: int = 1) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["iter", "f", "grad_norm", *species])
    n = len(trace.iterates)
    idx = list(range(0, n, stride))
    if idx[-1] != n - 1:
        idx.append(n - 1)
    for k in idx:
        wr.writerow([k, _fmt(trace.objective_values[k]), _fmt(trace.gradient_norms[k]),
                     *map(_fmt, trace.iterates[k])])
    footer = {"termination": trace.termination.value, "iterations": trace.n_iterations,
              "dropped_constraints": list(trace.dropped_constraints)}
    buf.write("# " + json.dumps(footer, sort_keys=True) + "\n")
    return buf.getvalue()


def game_csv(game, samples, residuals, stride: int = 1) -> str:
    """Evaluation rows ``sample, w_<species>, xi_<species>, E, residual``."""
    species = game.network.species
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["sample", *(f"w_{s}" for s in species), *(f"xi_{s}" for s in species),
                 "E", "residual"])
    for k in range(0, len(samples), stride):
        w = samples[k]
        wr.writerow([k, *map(_fmt, w), *map(_fmt, simultaneous_gradient(game, w)),
                     _fmt(entropy(game, w)), _fmt(residuals[k])])
    return buf.getvalue()


def _dump(report, path=None):
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path:
        Path(path).write_text(text)
    sys.stdout.write(text)


def _write(path, text):
    Path(path).write_text(text)


# ---------------------------------------------------------------------------
# commands

def _sample_states(w_inf, n, seed):
    rng = np.random.default_rng(seed)
    return w_inf * np.exp(rng.normal(0.0, 1.0, size=(n, w_inf.shape[0])))


def _non_balance_witness(net):
    report = {"wegscheider_cycle": None, "rate_matrix_witness": None}
    c = wegscheider_cycle(net)
    if c is not None:
        report["wegscheider_cycle"] = _vec(c)
    K = first_order_rate_matrix(net)
    if K is not None:
        res = is_symmetrizable(K)
        if res.witness is not None:
            report["rate_matrix_witness"] = {"kind": res.witness.kind,
                                             "indices": [int(i) for i in res.witness.indices]}
    return report


def run_check(args) -> int:
    net, w0 = load_inputs(args.network, args.init)
    report = {"species": list(net.species), "conservation_basis": conservation_basis(net).tolist()}
    try:
        w_hat = detailed_balance_reference(net)
    except EquilibriumError as exc:
        witness = _non_balance_witness(net)
        report.update(detailed_balanced=False, verdict="not generalized potential",
                      reason=str(exc), witness=witness)
        _dump(report, args.out_json)
        print(f"witness: {json.dumps(witness, sort_keys=True)}", file=sys.stderr)
        return EXIT_NEGATIVE
    w_inf = equilibrium_in_class(net, w_hat if w0 is None else w0)
    game = CrnGame(net, w_inf)
    samples = _sample_states(w_inf, args.samples, args.seed)
    residuals = np.array([verify_generalized_potential(game, w) for w in samples])
    cls = classify_game(game.as_differentiable_game(), samples[: min(10, len(samples))])
    # entropy differences recovered by quadrature along straight paths from w_inf
    quad = [abs(generalized_potential_difference(game, w_inf, w, args.quadrature_steps)
                - entropy(game, w) + entropy(game, w_inf)) for w in samples[:5]]
    holds = bool(residuals.max() <= RESIDUAL_TOL)
    if args.out_csv:
        _write(args.out_csv, game_csv(game, samples, residuals, args.stride))
    report.update(
        detailed_balanced=True,
        equilibrium=_vec(w_inf),
        kappas=_vec(game.kappas),
        detailed_balance_residuals=_vec(check_detailed_balance(net, w_inf).relative_residuals),
        residual={"max": _num(residuals.max()), "mean": _num(residuals.mean()),
                  "samples": int(len(samples)), "seed": args.seed},
        potential_difference_error={"max": _num(max(quad)), "paths": len(quad),
                                    "quadrature_steps": args.quadrature_steps},
        hessian_classification={"kind": cls.kind.value,
                                "weights": None if cls.weights is None else _vec(cls.weights)},
        verdict="generalized potential" if holds else "not generalized potential",
    )
    _dump(report, args.out_json)
    return EXIT_OK if holds else EXIT_NEGATIVE


def run_simulate(args) -> int:
    net, w0 = load_inputs(args.network, args.init)
    traj = integrate(net, _require_init(w0), args.t_end, args.step)
    basis = conservation_basis(net)
    if args.out_csv:
        _write(args.out_csv, trajectory_csv(traj, args.stride))
    report = {
        "species": list(net.species),
        "t_end": traj.times[-1],
        "steps": int(len(traj.times) - 1),
        "final": _vec(traj.final),
        "equilibrium": None if traj.equilibrium is None else _vec(traj.equilibrium),
        "distance_to_equilibrium": None if traj.equilibrium is None
        else _num(np.abs(traj.final - traj.equilibrium).max()),
        "conservation_drift": _num(traj.conservation_drift(basis)),
        "final_entropy": _num(traj.entropy[-1]) if traj.equilibrium is not None else None,
        "final_dissipation": _num(traj.dissipation[-1]),
    }
    _dump(report, args.out_json)
    return EXIT_OK


def _descend(net, w0, kind, tol, max_iter):
    """Run one descent variant; entropy is taken relative to the detailed
    balance reference so the target equilibrium is not used as input."""
    w_hat = detailed_balance_reference(net)
    A = conservation_basis(net)
    b = A @ w0
    if kind == "potential":
        problem = ProjectedProblem(
            objective=lambda w: float(np.sum(w * (np.log(w / w_hat) - 1.0))),
            gradient=lambda w: np.log(w / w_hat),
            A=A, b=b, positive=True)
        return projected_descent(problem, w0, Backtracking(), tol=tol, max_iter=max_iter)
    game = CrnGame(net, w_hat)
    return projected_simultaneous_descent(game, A, w0, Backtracking(), tol=tol, max_iter=max_iter)


def _kinds(descent):
    return ["potential", "simultaneous"] if descent == "both" else [descent]


def _balance_gap(net, w):
    return _num(check_detailed_balance(net, w).relative_residuals.max()) if net.n_reactions else 0.0


def run_equilibrate(args) -> int:
    net, w0 = load_inputs(args.network, args.init)
    w0 = _require_init(w0)
    w_ref = equilibrium_in_class(net, w0)
    report = {"species": list(net.species), "equilibrium": _vec(w_ref), "descent": {}}
    for kind in _kinds(args.descent):
        trace = _descend(net, w0, kind, args.tol, args.max_iter)
        if args.out_csv:
            path = args.out_csv if len(_kinds(args.descent)) == 1 else _suffixed(args.out_csv, kind)
            _write(path, trace_csv(trace, net.species, args.stride))
        report["descent"][kind] = {
            "limit": _vec(trace.final),
            "iterations": trace.n_iterations,
            "termination": trace.termination.value,
            "distance_to_equilibrium": _num(np.abs(trace.final - w_ref).max()),
            "detailed_balance_gap": _balance_gap(net, trace.final),
        }
    _dump(report, args.out_json)
    return EXIT_OK


def _suffixed(path, tag):
    p = Path(path)
    return str(p.with_name(f"{p.stem}_{tag}{p.suffix or '.csv'}"))


def run_rate(args) -> int:
    net, w0 = load_inputs(args.network, args.init)
    cert = rate_certificate(net, _require_init(w0))
    traj = integrate(net, w0, args.t_end, args.step, equilibrium=cert.equilibrium)
    check = verify_exponential_decay(traj, cert)
    if args.out_csv:
        _write(args.out_csv, trajectory_csv(traj, args.stride))
    report = {"certificate": cert.to_dict(),
              "verification": {"ok": check.ok, "max_violation": _num(check.max_violation),
                               "first_violation_time": check.first_violation_time,
                               "t_end": args.t_end, "step": args.step}}
    _dump(report, args.out_json)
    return EXIT_OK if check.ok else EXIT_NEGATIVE


def run_compare(args) -> int:
    net, w0 = load_inputs(args.network, args.init)
    w0 = _require_init(w0)
    w_ref = equilibrium_in_class(net, w0)
    traj = integrate(net, w0, args.t_end, args.step, equilibrium=w_ref)
    prefix = args.out_csv
    if prefix:
        _write(prefix + "_ode.csv", trajectory_csv(traj, args.stride))
    ode_limit = traj.final
    summary = {
        "species": list(net.species),
        "equilibrium": _vec(w_ref),
        "ode": {"limit": _vec(ode_limit), "t_end": args.t_end, "step": args.step,
                "distance_to_equilibrium": _num(np.abs(ode_limit - w_ref).max()),
                "detailed_balance_gap": _balance_gap(net, ode_limit)},
        "descent": {},
    }
    ok = summary["ode"]["distance_to_equilibrium"] <= 1e-5
    for kind in _kinds(args.descent):
        trace = _descend(net, w0, kind, args.tol, args.max_iter)
        if prefix:
            _write(f"{prefix}_descent_{kind}.csv", trace_csv(trace, net.species, args.stride))
        dist_eq = float(np.abs(trace.final - w_ref).max())
        summary["descent"][kind] = {
            "limit": _vec(trace.final),
            "iterations": trace.n_iterations,
            "termination": trace.termination.value,
            "distance_to_equilibrium": _num(dist_eq),
            "distance_to_ode_limit": _num(np.abs(trace.final - ode_limit).max()),
            "detailed_balance_gap": _balance_gap(net, trace.final),
        }
        ok = ok and dist_eq <= 1e-5
    summary["both_at_equilibrium"] = bool(ok)
    _dump(summary, args.out_json)
    return EXIT_OK


def run_symmetrize(args) -> int:
    try:
        text = Path(args.matrix).read_text()
    except OSError as exc:
        raise InputError(f"cannot read matrix {args.matrix!r}: {exc.strerror}") from None
    A = parse_matrix(text)
    res = is_symmetrizable(A, args.tol)
    report = {"shape": list(A.shape), "verdict": res.verdict.value,
              "weights": None if res.weights is None else _vec(res.weights),
              "witness": None if res.witness is None else
              {"kind": res.witness.kind, "indices": [int(i) for i in res.witness.indices]}}
    _dump(report, args.out_json)
    return EXIT_OK if res.symmetrizable else EXIT_NEGATIVE


# ---------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(message)


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crngames", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, t_end=50.0, step=1e-3):
        p.add_argument("--network", required=True, help="network file or preset name")
        p.add_argument("--init", help="comma separated initial state, or a preset name")
        p.add_argument("--t-end", type=float, default=t_end)
        p.add_argument("--step", type=float, default=step)
        p.add_argument("--tol", type=float, default=1e-10)
        p.add_argument("--max-iter", type=_positive_int, default=10_000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--samples", type=_positive_int, default=100)
        p.add_argument("--quadrature-steps", type=_positive_int, default=1000)
        p.add_argument("--stride", type=_positive_int, default=1, help="write every n-th CSV row")
        p.add_argument("--out-csv")
        p.add_argument("--out-json")
        p.add_argument("--descent", choices=["potential", "simultaneous", "both"], default=None)
        return p

    common(sub.add_parser("check", help="detailed balance and generalized-potential checks"))
    common(sub.add_parser("simulate", help="integrate the rate equations"))
    common(sub.add_parser("equilibrate", help="projected descent to the equilibrium"))
    common(sub.add_parser("rate", help="explicit decay certificate"), t_end=20.0)
    common(sub.add_parser("compare", help="ODE limit against descent limits"))
    sym = sub.add_parser("symmetrize", help="positive diagonal symmetrizer of a matrix")
    sym.add_argument("--matrix", required=True, help="JSON array of rows or whitespace text")
    sym.add_argument("--tol", type=float, default=1e-10)
    sym.add_argument("--out-json")
    return parser


COMMANDS = {
    "check": run_check,
    "simulate": run_simulate,
    "equilibrate": run_equilibrate,
    "rate": run_rate,
    "compare": run_compare,
    "symmetrize": run_symmetrize,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "symmetrize":
            if not args.tol > 0:
                raise InputError("need --tol > 0")
            return run_symmetrize(args)
        if args.descent is None:
            args.descent = "both" if args.command == "compare" else "potential"
        if not (args.step > 0 and args.t_end >= 0 and args.tol > 0):
            raise InputError("need --step > 0, --t-end >= 0 and --tol > 0")
        return COMMANDS[args.command](args)
    except (InputError, NetworkSyntaxError, EquilibriumError, IntegrationError, ArithmeticError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
