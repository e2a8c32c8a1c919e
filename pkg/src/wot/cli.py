"""Command-line front end: instance I/O, generation, solver dispatch,
certificate and report emission.

Exit codes: 0 converged and certified, 2 non-convergence, 3 certified
infeasibility (Strassen), 4 schema/usage error.
"""

from __future__ import annotations

import argparse
import importlib.util
import math
import os
import sys

import numpy as np

from . import io as wio
from .barycentric import bt_solve, kr_dual, strassen_lp
from .classical import cost_matrix, ot_solve, wasserstein
from .convexkit import Polytope
from .measures import Coupling, DiscreteMeasure, DomainError, StructuralError
from .oracles import WeakCostOracle, barycentric_oracle, entropy_oracle, linear_oracle
from .regularized import (entropy_regularizer, eot_certify, h_regularized_solve,
                          quadratic_regularizer, sinkhorn, support_spread_check)
from .thetas import ThetaOracle, scaled, theta_abs, theta_pplus, theta_sq, theta_support
from .weak import (Certificate, DualPair, c_monotonicity_probe, certify,
                   dual_ascent, dual_pair_from_g, lifted_solve,
                   primal_solve_convex, warm_dual_g)

EXIT_OK = 0
EXIT_NOCONV = 2
EXIT_INFEASIBLE = 3
EXIT_SCHEMA = 4


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_SCHEMA
    try:
        return args.func(args)
    except wio.SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (StructuralError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wot", description="discrete weak optimal transport")
    p.set_defaults(command=None)
    sub = p.add_subparsers(dest="command")

    def common(sp, measures=True):
        if measures:
            sp.add_argument("--mu", help="measure JSON file")
            sp.add_argument("--nu", help="measure JSON file")
            sp.add_argument("--instance", help="instance JSON file (mu, nu, cost, params)")
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--max-iters", type=int, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--trace", action="store_true")
        sp.add_argument("--out", help="write the report JSON here (atomic)")
        sp.add_argument("--csv", help="write the coupling as CSV here")
        sp.add_argument("--plots", help="render report figures into this directory")

    sp = sub.add_parser("gen", help="generate a deterministic instance file")
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--d", type=int, default=1)
    sp.add_argument("--family", default="ot",
                    choices=["ot", "entropy", "barycentric", "martingale-feasible"])
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("ot", help="classical transport LP with dual potentials")
    common(sp)
    sp.add_argument("--cost", default="euclidean")
    sp.add_argument("--p", type=float, default=None, help="also report W_p")
    sp.set_defaults(func=cmd_ot)

    sp = sub.add_parser("solve", help="weak transport solve with certificate")
    common(sp)
    sp.add_argument("--cost", default=None,
                    help="linear:SPEC | entropy[:EPS[:BASE]] | barycentric:THETA | plugin:PATH")
    sp.add_argument("--lifted", action="store_true")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("certify", help="recompute a certificate for primal/dual files")
    common(sp, measures=False)
    sp.add_argument("--coupling", required=True)
    sp.add_argument("--dual", required=True, help='JSON {"f": [...], "g": [...]}')
    sp.add_argument("--cost", required=True)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("project", help="convex-order projection (barycentric transport)")
    common(sp)
    sp.add_argument("--theta", default="sq")
    sp.add_argument("--dual", action="store_true", help="also solve the KR dual LP")
    sp.set_defaults(func=cmd_project)

    sp = sub.add_parser("strassen", help="martingale-coupling feasibility (exit 3 if not)")
    common(sp, measures=False)
    sp.add_argument("--eta", required=True)
    sp.add_argument("--nu", required=True)
    sp.set_defaults(func=cmd_strassen)

    sp = sub.add_parser("sinkhorn", help="entropic OT in the log domain")
    common(sp)
    sp.add_argument("--cost", default="sqeuclidean")
    sp.add_argument("--eps", type=float, required=True)
    sp.set_defaults(func=cmd_sinkhorn)

    sp = sub.add_parser("regularize", help="convex-regularized OT: (h*)' normalization")
    common(sp)
    sp.add_argument("--cost", default="sqeuclidean")
    sp.add_argument("--h", default="entropy", help="entropy[:EPS] | quadratic[:EPS] | plugin:PATH")
    sp.set_defaults(func=cmd_regularize)

    sp = sub.add_parser("mwot", help="relaxed weak martingale transport")
    common(sp)
    sp.add_argument("--theta", default="sq")
    sp.add_argument("--chat", default="entropy", help="zero | entropy[:EPS] | mcov:GAMMA.json")
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--dual", action="store_true")
    sp.set_defaults(func=cmd_mwot)

    sp = sub.add_parser("remot", help="relaxed entropic martingale transport")
    common(sp)
    sp.add_argument("--cost", default="euclidean")
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--outer-iters", type=int, default=30)
    sp.set_defaults(func=cmd_remot)

    sp = sub.add_parser("probe", help="C-monotonicity / continuity probes")
    common(sp, measures=False)
    sp.add_argument("--kind", choices=["cmono", "continuity"], required=True)
    sp.add_argument("--coupling", required=True)
    sp.add_argument("--cost", required=True)
    sp.add_argument("--trials", type=int, default=64)
    sp.set_defaults(func=cmd_probe)
    return p


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _root_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get("WOT_SEED")
    if env is not None:
        return int(env)
    from .config import DEFAULT_SEED

    return DEFAULT_SEED


def _load_pair(args):
    if getattr(args, "instance", None):
        inst = wio.load_json(args.instance)
        mu = wio.measure_from_dict(inst["mu"])
        nu = wio.measure_from_dict(inst["nu"])
        return mu, nu, inst
    if not (args.mu and args.nu):
        raise wio.SchemaError("need --mu and --nu (or --instance)")
    mu = wio.measure_from_dict(wio.load_json(args.mu))
    nu = wio.measure_from_dict(wio.load_json(args.nu))
    return mu, nu, None


def _emit(args, report: dict, pi: Coupling | None = None, trace=None,
          f=None, g=None, exit_code: int = EXIT_OK) -> int:
    text = wio.canonical_json(report)
    if getattr(args, "out", None):
        wio.write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    if getattr(args, "csv", None) and pi is not None:
        wio.write_atomic(args.csv, wio.coupling_csv(pi))
    if getattr(args, "plots", None):
        from .plots import render_report_figures

        render_report_figures(args.plots, pi=pi, trace=trace, f=f, g=g,
                              title=report.get("command", "wot"))
    return exit_code


def _config_echo(args, **extra) -> dict:
    cfg = {"seed": _root_seed(args)}
    for key in ("tol", "max_iters", "cost", "theta", "chat", "eps", "alpha",
                "beta", "family", "lifted", "h", "p", "kind"):
        if hasattr(args, key) and getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    cfg.update(extra)
    return cfg


def parse_cost_fn(spec, inst: dict | None = None):
    """Pairwise cost c(x, y) from a CLI string or instance cost object."""
    if inst is not None and spec is None:
        spec = inst.get("cost")
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "linear":
            return _base_cost(spec.get("base", "euclidean"))
        raise wio.SchemaError(f"cost object of kind {kind!r} is not a pairwise cost")
    if spec is None:
        spec = "euclidean"
    return _base_cost(spec)


def _base_cost(base):
    if isinstance(base, dict) and "matrix" in base:
        mat = np.asarray(base["matrix"], dtype=float)
        return ("matrix", mat)
    if isinstance(base, str):
        if base in ("euclidean", "sqeuclidean"):
            return ("builtin", base)
        if base.startswith("file:"):
            data = wio.load_json(base[5:])
            return ("matrix", np.asarray(data["matrix"], dtype=float))
    raise wio.SchemaError(f"unknown cost spec {base!r}")


def _cost_arg(parsed, mu, nu):
    kind, payload = parsed
    if kind == "builtin":
        return payload
    return payload


def _cost_callable(parsed):
    kind, payload = parsed
    if kind == "builtin":
        if payload == "euclidean":
            return lambda x, y: float(np.linalg.norm(np.atleast_1d(x) - np.atleast_1d(y)))
        return lambda x, y: float(np.sum((np.atleast_1d(x) - np.atleast_1d(y)) ** 2))
    raise wio.SchemaError("this command needs a builtin pairwise cost")


def parse_theta(spec: str, dim: int) -> ThetaOracle:
    if spec == "abs":
        return theta_abs(dim)
    if spec == "sq":
        return theta_sq(1.0)
    if spec == "halfsq":
        return theta_sq(0.5)
    if spec == "pplus":
        if dim != 1:
            raise wio.SchemaError("pplus penalty is one-dimensional")
        return theta_pplus()
    if spec.startswith("support:"):
        data = wio.load_json(spec[len("support:"):])
        return theta_support(Polytope(np.asarray(data["vertices"], dtype=float)))
    raise wio.SchemaError(f"unknown theta {spec!r}")


def build_weak_oracle(costspec, mu: DiscreteMeasure, nu: DiscreteMeasure,
                      inst: dict | None = None) -> WeakCostOracle:
    if costspec is None and inst is not None:
        obj = inst.get("cost", {})
        costspec = _cost_obj_to_spec(obj)
    if costspec is None:
        raise wio.SchemaError("need --cost")
    if costspec.startswith("linear:"):
        parsed = _base_cost(costspec[len("linear:"):])
        return linear_oracle(nu, _pairwise(parsed, mu, nu))
    if costspec == "entropy" or costspec.startswith("entropy"):
        parts = costspec.split(":")
        eps = float(parts[1]) if len(parts) > 1 and parts[1] else 1.0
        base = parts[2] if len(parts) > 2 else None
        cfn = _pairwise(_base_cost(base), mu, nu) if base else None
        return entropy_oracle(nu, eps, cost_fn=cfn)
    if costspec.startswith("barycentric:"):
        theta = parse_theta(costspec[len("barycentric:"):], nu.dim)
        return barycentric_oracle(nu, theta)
    if costspec.startswith("plugin:"):
        return _load_plugin(costspec[len("plugin:"):], mu, nu, inst)
    raise wio.SchemaError(f"unknown weak cost {costspec!r}")


def _cost_obj_to_spec(obj: dict) -> str:
    kind = obj.get("kind")
    if kind == "linear":
        base = obj.get("base", "euclidean")
        return f"linear:{base}" if isinstance(base, str) else "linear:euclidean"
    if kind == "entropy":
        base = obj.get("base")
        s = f"entropy:{obj.get('eps', 1.0)}"
        return s + (f":{base}" if isinstance(base, str) else "")
    if kind == "barycentric":
        return f"barycentric:{obj.get('theta', 'sq')}"
    if kind == "plugin":
        return f"plugin:{obj.get('path')}"
    raise wio.SchemaError(f"unknown instance cost kind {kind!r}")


def _pairwise(parsed, mu, nu):
    kind, payload = parsed
    if kind == "builtin":
        if payload == "euclidean":
            return lambda x, y: float(np.linalg.norm(np.atleast_1d(x) - np.atleast_1d(y)))
        return lambda x, y: float(np.sum((np.atleast_1d(x) - np.atleast_1d(y)) ** 2))
    mat = payload
    index_x = {tuple(np.round(p, 12)): i for i, p in enumerate(mu.points)}
    index_y = {tuple(np.round(p, 12)): j for j, p in enumerate(nu.points)}

    def fn(x, y):
        i = index_x[tuple(np.round(np.atleast_1d(x), 12))]
        j = index_y[tuple(np.round(np.atleast_1d(y), 12))]
        return float(mat[i, j])

    return fn


def _load_plugin(path: str, mu, nu, inst):
    spec = importlib.util.spec_from_file_location("wot_cost_plugin", path)
    if spec is None or spec.loader is None:
        raise wio.SchemaError(f"cannot import plugin {path}")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    if not hasattr(module, "build_oracle"):
        raise wio.SchemaError("plugin must define build_oracle(mu, nu, params)")
    params = (inst or {}).get("params", {})
    oracle = module.build_oracle(mu, nu, params)
    if not isinstance(oracle, WeakCostOracle):
        raise wio.SchemaError("plugin build_oracle must return a WeakCostOracle")
    return oracle


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    rng = np.random.default_rng(np.random.SeedSequence(int(args.seed)))
    n, m, d = args.n, args.m, args.d
    if n < 1 or m < 1 or d < 1:
        raise wio.SchemaError("n, m, d must be positive")
    mu = DiscreteMeasure(rng.uniform(-1, 1, (n, d)), rng.dirichlet(np.ones(n)))
    if args.family == "martingale-feasible":
        pts = []
        w = []
        for p, wt in zip(mu.points, mu.weights):
            delta = rng.uniform(0.1, 0.5, d)
            pts.append(p + delta)
            w.append(wt / 2)
            pts.append(p - delta)
            w.append(wt / 2)
        nu = DiscreteMeasure(np.array(pts), np.array(w))
    else:
        nu = DiscreteMeasure(rng.uniform(-1, 1, (m, d)), rng.dirichlet(np.ones(m)))
    cost = {
        "ot": {"kind": "linear", "base": "euclidean"},
        "entropy": {"kind": "entropy", "eps": 0.5, "base": "sqeuclidean"},
        "barycentric": {"kind": "barycentric", "theta": "sq"},
        "martingale-feasible": {"kind": "entropy", "eps": 0.5},
    }[args.family]
    inst = {
        "mu": wio.measure_to_dict(mu),
        "nu": wio.measure_to_dict(nu),
        "cost": cost,
        "params": {"seed": int(args.seed), "tol": 1e-8, "max_iters": 2000,
                   "moment_order": 2},
    }
    wio.write_atomic(args.out, wio.canonical_json(inst))
    return EXIT_OK


def cmd_ot(args) -> int:
    mu, nu, inst = _load_pair(args)
    parsed = parse_cost_fn(args.cost, inst)
    cost = parsed[1] if parsed[0] == "matrix" else parsed[1]
    res = ot_solve(mu, nu, cost)
    c = cost_matrix(mu, nu, cost)
    slack = res.f[:, None] + res.g[None, :] - c
    on = res.coupling.matrix > 1e-12
    cert = {
        "primal_value": res.value,
        "dual_value": float(mu.weights @ res.f + nu.weights @ res.g),
        "gap": float(res.value - (mu.weights @ res.f + nu.weights @ res.g)),
        "slackness_residual": float(np.abs(slack[on]).max()) if on.any() else 0.0,
        "admissibility_residual": float(max(slack.max(), 0.0)),
    }
    report = {
        "command": "ot",
        "config": _config_echo(args),
        "value": res.value,
        "f": res.f.tolist(),
        "g": res.g.tolist(),
        "coupling": wio.coupling_to_dict(res.coupling),
        "certificate": cert,
        "timings": {"lp_size": [mu.n, nu.n]},
    }
    if args.p is not None:
        report["wasserstein_p"] = wasserstein(mu, nu, args.p)
    tol = args.tol if args.tol is not None else 1e-8
    code = EXIT_OK if abs(cert["gap"]) <= tol * (1 + abs(res.value)) else EXIT_NOCONV
    return _emit(args, report, pi=res.coupling, f=res.f, g=res.g, exit_code=code)


def cmd_solve(args) -> int:
    mu, nu, inst = _load_pair(args)
    oracle = build_weak_oracle(args.cost, mu, nu, inst)
    tol = args.tol if args.tol is not None else 1e-7
    iters = args.max_iters if args.max_iters is not None else 2000
    if args.lifted or not oracle.convex_in_rho:
        plan, pair, cert = lifted_solve(mu, nu, oracle, tol=max(tol, 1e-9))
        pi = plan.to_coupling()
        trace = None
        report_counters = {"columns": cert.extra.get("columns")}
        converged = True
    else:
        pi, rep = primal_solve_convex(mu, nu, oracle, tol=tol, max_iters=iters,
                                      polish=True, trace=args.trace)
        g = warm_dual_g(mu, nu, oracle, pi)
        pair, _ = dual_ascent(mu, nu, oracle, init_g=g, iters=40)
        cert = certify(pi, pair, oracle)
        trace = rep.trace
        report_counters = {"iterations": rep.iterations, "fw_gap": rep.gap}
        converged = rep.converged
    report = {
        "command": "solve",
        "config": _config_echo(args),
        "value": cert.primal_value,
        "certificate": cert.to_dict(),
        "dual": {"f": pair.f.tolist(), "g": pair.g.tolist()},
        "coupling": wio.coupling_to_dict(pi),
        "timings": report_counters,
    }
    if args.trace and trace:
        report["trace"] = list(trace)
    ok = converged and cert.gap <= max(tol, 1e-6) * (1 + abs(cert.primal_value))
    return _emit(args, report, pi=pi, trace=trace, f=pair.f, g=pair.g,
                 exit_code=EXIT_OK if ok else EXIT_NOCONV)


def cmd_certify(args) -> int:
    pi = wio.coupling_from_dict(wio.load_json(args.coupling))
    dual = wio.load_json(args.dual)
    try:
        f = np.asarray(dual["f"], dtype=float)
        g = np.asarray(dual["g"], dtype=float)
    except KeyError as exc:
        raise wio.SchemaError(f"dual file missing {exc}") from exc
    oracle = build_weak_oracle(args.cost, pi.mu, pi.nu, None)
    if f.shape != (pi.mu.n,) or g.shape != (pi.nu.n,):
        raise wio.SchemaError("dual potential shapes do not match the supports")
    pair = DualPair(f=f, g=g, transform_values=f.copy(), argmins=[None] * pi.mu.n)
    cert = certify(pi, pair, oracle)
    report = {
        "command": "certify",
        "config": _config_echo(args),
        "certificate": cert.to_dict(),
        "value": cert.primal_value,
        "timings": {},
    }
    tol = args.tol if args.tol is not None else 1e-6
    ok = cert.gap <= tol * (1 + abs(cert.primal_value)) and cert.admissibility_residual <= tol
    return _emit(args, report, pi=pi, exit_code=EXIT_OK if ok else EXIT_NOCONV)


def cmd_project(args) -> int:
    mu, nu, inst = _load_pair(args)
    theta = parse_theta(args.theta, nu.dim)
    from .barycentric import convex_order_margin

    sol = bt_solve(mu, nu, theta)
    eta = sol.eta
    margin = convex_order_margin(eta, nu)
    report = {
        "command": "project",
        "config": _config_echo(args),
        "value": sol.value,
        "means": sol.means.tolist(),
        "eta": wio.measure_to_dict(eta),
        "coupling": wio.coupling_to_dict(sol.coupling),
        "convex_order_margin": margin,
        "timings": {"iterations": sol.report.iterations, "gap": sol.report.gap},
    }
    if args.dual and theta.support_function and theta.polytope is not None:
        val, phi, grads, support = kr_dual(mu, nu, theta)
        report["kr_dual"] = {
            "value": val,
            "phi": phi.tolist(),
            "gradients": grads.tolist(),
            "support": support.tolist(),
        }
    code = EXIT_OK if sol.report.converged else EXIT_NOCONV
    return _emit(args, report, pi=sol.coupling, trace=sol.report.trace, exit_code=code)


def cmd_strassen(args) -> int:
    eta = wio.measure_from_dict(wio.load_json(args.eta))
    nu = wio.measure_from_dict(wio.load_json(args.nu))
    feasible, kappa, witness = strassen_lp(eta, nu)
    report = {
        "command": "strassen",
        "config": _config_echo(args),
        "feasible": bool(feasible),
        "timings": {},
    }
    if feasible:
        report["kappa"] = wio.coupling_to_dict(kappa)
        return _emit(args, report, pi=kappa, exit_code=EXIT_OK)
    report["witness"] = {
        "support": witness["support"].tolist(),
        "values": witness["values"].tolist(),
        "gap": witness["gap"],
        "convex_certified": witness["convex_certified"],
    }
    return _emit(args, report, exit_code=EXIT_INFEASIBLE)


def cmd_sinkhorn(args) -> int:
    mu, nu, inst = _load_pair(args)
    parsed = parse_cost_fn(args.cost, inst)
    cost = parsed[1]
    tol = args.tol if args.tol is not None else 1e-10
    iters = args.max_iters if args.max_iters is not None else 20000
    sol = sinkhorn(mu, nu, cost, eps=args.eps, tol=tol, max_iters=iters,
                   trace=args.trace)
    cert = eot_certify(sol)
    report = {
        "command": "sinkhorn",
        "config": _config_echo(args),
        "value": sol.value,
        "certificate": cert.to_dict(),
        "f": sol.f.tolist(),
        "g": sol.g.tolist(),
        "gibbs_residual": sol.gibbs_residual,
        "coupling": wio.coupling_to_dict(sol.coupling),
        "timings": {"iterations": sol.iterations},
    }
    if args.trace and sol.trace:
        report["trace"] = list(sol.trace)
    return _emit(args, report, pi=sol.coupling, trace=sol.trace, f=sol.f, g=sol.g,
                 exit_code=EXIT_OK if sol.converged else EXIT_NOCONV)


def cmd_regularize(args) -> int:
    mu, nu, inst = _load_pair(args)
    parsed = parse_cost_fn(args.cost, inst)
    cost = parsed[1]
    spec = args.h
    if spec.startswith("plugin:"):
        path = spec[len("plugin:"):]
        mod_spec = importlib.util.spec_from_file_location("wot_h_plugin", path)
        if mod_spec is None or mod_spec.loader is None:
            raise wio.SchemaError(f"cannot import plugin {path}")
        module = importlib.util.module_from_spec(mod_spec)
        mod_spec.loader.exec_module(module)
        horacle = module.build_regularizer((inst or {}).get("params", {}))
    else:
        parts = spec.split(":")
        eps = float(parts[1]) if len(parts) > 1 else 1.0
        if parts[0] == "entropy":
            horacle = entropy_regularizer(eps)
        elif parts[0] == "quadratic":
            horacle = quadratic_regularizer(eps)
        else:
            raise wio.SchemaError(f"unknown regularizer {spec!r}")
    tol = args.tol if args.tol is not None else 1e-9
    iters = args.max_iters if args.max_iters is not None else 5000
    sol = h_regularized_solve(mu, nu, cost, horacle, tol=tol, max_iters=iters)
    report = {
        "command": "regularize",
        "config": _config_echo(args),
        "value": sol.value,
        "alpha": sol.f.tolist(),
        "g": sol.g.tolist(),
        "gibbs_residual": sol.gibbs_residual,
        "support_spread": support_spread_check(sol, horacle),
        "literature_dual_value": sol.extra.get("dual_literature_value"),
        "coupling": wio.coupling_to_dict(sol.coupling),
        "timings": {"iterations": sol.iterations},
    }
    return _emit(args, report, pi=sol.coupling,
                 exit_code=EXIT_OK if sol.converged else EXIT_NOCONV)


def cmd_mwot(args) -> int:
    from .martingale import (chat_entropy, chat_zero, mbb_reg_solve,
                             relaxed_wmot_dual, relaxed_wmot_solve, wmot_oracle)

    mu, nu, inst = _load_pair(args)
    theta = parse_theta(args.theta, nu.dim)
    tol = args.tol if args.tol is not None else 1e-7
    if args.chat.startswith("mcov:"):
        gamma = wio.measure_from_dict(wio.load_json(args.chat[len("mcov:"):]))
        sol = mbb_reg_solve(mu, nu, gamma, alpha=args.alpha, beta=args.beta,
                            theta=theta, tol=tol)
        dual_value = None
    else:
        if args.chat == "zero":
            chat = chat_zero(nu)
        elif args.chat.startswith("entropy"):
            parts = args.chat.split(":")
            chat = chat_entropy(nu, float(parts[1]) if len(parts) > 1 else 1.0)
        else:
            raise wio.SchemaError(f"unknown chat {args.chat!r}")
        th = scaled(theta, args.beta) if args.beta != 1.0 else theta
        sol = relaxed_wmot_solve(mu, nu, th, chat, tol=tol)
        dual_value = None
        if args.dual:
            g0 = warm_dual_g(mu, nu, wmot_oracle(nu, th, chat), sol.coupling)
            _, dual_value, _ = relaxed_wmot_dual(mu, nu, th, chat, iters=8, init_g=g0)
    report = {
        "command": "mwot",
        "config": _config_echo(args),
        "value": sol.value,
        "transport_part": sol.transport_part,
        "fiber_part": sol.fiber_part,
        "eta": wio.measure_to_dict(sol.eta),
        "martingale_residual": sol.martingale_residual(),
        "coupling": wio.coupling_to_dict(sol.coupling),
        "kappa": wio.coupling_to_dict(sol.kappa),
        "timings": {"iterations": sol.report.iterations if sol.report else None},
    }
    if dual_value is not None:
        report["dual_value"] = dual_value
        report["gap"] = sol.value - dual_value
    converged = sol.report.converged if sol.report else True
    return _emit(args, report, pi=sol.coupling,
                 exit_code=EXIT_OK if converged else EXIT_NOCONV)


def cmd_remot(args) -> int:
    from .martingale import remot_solve

    mu, nu, inst = _load_pair(args)
    parsed = parse_cost_fn(args.cost, inst)
    cfn = _cost_callable(parsed)
    theta = scaled(theta_sq(1.0), args.beta)
    pi, eta, inner, rep = remot_solve(mu, nu, cfn, eps=args.eps, theta=theta,
                                      outer_iters=args.outer_iters)
    report = {
        "command": "remot",
        "config": _config_echo(args),
        "value": rep.value,
        "eta": wio.measure_to_dict(eta),
        "stationarity_residual": rep.gap,
        "gibbs_residual": rep.extra.get("gibbs_residual"),
        "coupling": wio.coupling_to_dict(pi),
        "timings": {"outer_iterations": rep.iterations,
                    "inner_iterations": inner.iterations},
    }
    if args.trace:
        report["trace"] = list(rep.trace)
    return _emit(args, report, pi=pi, trace=rep.trace,
                 exit_code=EXIT_OK if rep.converged else EXIT_NOCONV)


def cmd_probe(args) -> int:
    pi = wio.coupling_from_dict(wio.load_json(args.coupling))
    oracle = build_weak_oracle(args.cost, pi.mu, pi.nu, None)
    if args.kind == "cmono":
        pairs = [(pi.mu.points[i], rho.probabilities)
                 for i, rho in enumerate(pi.rows())]
        worst = c_monotonicity_probe(pairs, oracle, trials=args.trials,
                                     seed=_root_seed(args))
        refuted = worst < -1e-7
        report = {
            "command": "probe",
            "config": _config_echo(args),
            "worst_violation": worst,
            "c_monotone_refuted": bool(refuted),
            "timings": {"trials": args.trials},
        }
        return _emit(args, report, exit_code=EXIT_OK)
    from .weak import continuity_probe

    rows = pi.rows()
    results = []
    for i in range(pi.mu.n):
        # exhaust the support in descending conditional-mass order so the
        # tail masks carry almost all mass
        order = np.argsort(-rows[i].probabilities)
        masks = [order[: k + 1].tolist() for k in range(pi.nu.n)]
        results.append(bool(continuity_probe(oracle, pi.mu.points[i], rows[i], masks)))
    report = {
        "command": "probe",
        "config": _config_echo(args),
        "continuity": results,
        "timings": {},
    }
    return _emit(args, report, exit_code=EXIT_OK)


if __name__ == "__main__":
    sys.exit(main())
