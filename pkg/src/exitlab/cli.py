"""Command-line interface ``exitlab``.

States are 1-based on the command line and in all outputs.  JSON is written
with sorted keys and CSV floats with ``repr`` so that runs with the same
arguments are byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import action, chain, harness, sde, trap
from .builtin import CONFIGS, builtin_model
from .errors import ExitlabError
from .model import load_model


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _model(spec):
    path = Path(spec)
    if path.exists():
        return load_model(path)
    if spec in CONFIGS:
        return builtin_model(spec)
    raise SystemExit(f"model {spec!r} is neither a file nor a builtin ({', '.join(sorted(CONFIGS))})")


def _state(model, k):
    if not 1 <= k <= model.states:
        raise SystemExit(f"state must be in 1..{model.states}")
    return k - 1


def _dump(obj, path=None):
    text = json.dumps(harness.jsonable(obj), indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# --------------------------------------------------------------------------


def cmd_quasipotential(args):
    model = _model(args.model)
    k = _state(model, args.state)
    res = action.quasipotential(model, np.array(_floats(args.x)), args.lam, k, n_points=args.n_points)
    _dump({
        "value": res.value,
        "x": _floats(args.x),
        "lambda": args.lam,
        "state": args.state,
        "path": res.path.points,
        "diagnostics": {
            "iterations": res.iterations,
            "grad_norm": res.grad_norm,
            "converged": res.converged,
            "left_box": res.left_box,
        },
    })
    return 0


def cmd_mk(args):
    model = _model(args.model)
    states = [_state(model, args.state)] if args.state else list(range(model.states))
    out = []
    for k in states:
        root = action.solve_m(model, k)
        out.append({"state": k + 1, "m": root.m, "minimizer": root.x, "param": root.param, "residual": root.residual})
        if args.profile:
            path = Path(args.profile)
            if len(states) > 1:
                path = path.with_name(f"{path.stem}_state{k + 1}{path.suffix}")
            rows = [
                (lam, M, p, x[0], x[1])
                for lam, M, p, x in zip(root.profile_lambda, root.profile_M, root.profile_param, root.profile_x)
            ]
            _write_csv(path, ["lambda", "M", "param", "x1", "x2"], rows)
    _dump({"model": model.name, "roots": out})
    return 0


def _law_dict(law, Lambda):
    grid = np.linspace(0.0, max(Lambda, float(law.thresholds.max())), 101)
    return {
        "atoms": [{"location": a.location, "mass": a.mass, "by_state": a.by_state} for a in law.atoms],
        "continuous_mass": law.continuous_mass,
        "total_mass": law.total_mass,
        "exit_state_probs": law.exit_probs,
        "cdf_grid": {"lambda": grid, "cdf": law.cdf(grid)},
    }


def cmd_sigma_law(args):
    model = _model(args.model)
    m = np.array(_floats(args.mk)) if args.mk else action.solve_all(model).m
    law = chain.sigma_law(model.chain, m)
    out = {"m": m, **_law_dict(law, model.Lambda)}
    if args.mc:
        samples = chain.sample_sigma_mc(model.chain, m, args.mc, args.seed)
        out["mc"] = {
            "n": args.mc,
            "seed": args.seed,
            "ks": harness.ks_distance(samples.sigma, law),
            "exit_state_freq": np.bincount(samples.state, minlength=model.states) / args.mc,
        }
    _dump(out)
    return 0


def cmd_simulate(args):
    model = _model(args.model)
    observe = tuple(_floats(args.observe)) if args.observe else ()
    cfg = sde.SimConfig(eps=args.eps, h=args.h, seed=args.seed, observe=observe, Lambda=args.Lambda)
    lam = args.lam if args.mode == "frozen" else None
    k = _state(model, args.state) if args.mode == "frozen" else None
    batch = sde.simulate_batch(model, cfg, args.n, args.mode, lam=lam, k=k)
    rows = []
    for i in range(len(batch)):
        x = batch.exit_point[i]
        rows.append((int(batch.index[i]), args.seed, int(batch.censored[i]), float(batch.tau[i]),
                     float(batch.lambda_hat[i]), float(x[0]), float(x[1]), int(batch.state[i]) + 1))
    _write_csv(args.out, ["idx", "seed", "censored", "tau", "lambda_hat", "exit_x1", "exit_x2", "exit_state"], rows)
    summary = {
        "n": args.n,
        "eps": args.eps,
        "censored": int(batch.censored.sum()),
        "mean_lambda_hat": float(batch.lambda_hat.mean()),
        "samples": str(args.out),
    }
    if observe:
        dist = np.linalg.norm(batch.obs_x - model.O, axis=-1)
        near = np.where(batch.obs_exited, False, dist < args.eta)
        obs_rows = []
        for i in range(len(batch)):
            for j, lo in enumerate(batch.obs_lambda):
                p = batch.obs_x[i, j]
                obs_rows.append((int(batch.index[i]), float(lo), float(p[0]), float(p[1]),
                                 int(near[i, j]), int(batch.obs_exited[i, j])))
        obs_path = Path(args.out).with_name("observations.csv")
        _write_csv(obs_path, ["idx", "lambda_obs", "x1", "x2", "near_O", "exited"], obs_rows)
        summary["observations"] = str(obs_path)
        summary["fraction_near_or_exited"] = (near | batch.obs_exited).mean(axis=0)
    _dump(summary)
    return 0


def cmd_predict(args):
    model = _model(args.model)
    _dump({"model": model.name, **harness.predict(model).to_dict()})
    return 0


def cmd_study(args):
    model = _model(args.model)
    report = harness.run_convergence_study(
        model, _floats(args.eps), args.n, args.seed, eta=args.eta, replications=args.replications, h=args.h
    )
    harness.write_study_outputs(report, args.out)
    _dump({"verdicts": report.verdicts, "ks_median": report.ks_median, "hit_median": report.hit_median})
    trends = [report.verdicts["ks_nonincreasing"], report.verdicts["hit_nondecreasing"]]
    return 0 if all(v is True for v in trends) and report.verdicts["complete"] else 1


def _gamma(text):
    gamma = []
    for piece in text.split(";"):
        if piece.strip():
            a, b = _floats(piece)
            gamma.append((a, b))
    return gamma


def cmd_trap(args):
    geometry = json.loads(Path(args.geometry).read_text())
    gamma = _gamma(args.gamma) if args.gamma is not None else None
    xstar = _floats(args.xstar) if args.xstar else None
    problem = trap.load_trap_problem(geometry, gamma=gamma, xstar=xstar)
    sol = trap.solve_trap(problem, args.res)
    _write_csv(args.out, ["x", "y", "u"], sol.nodes())
    summary = {
        "c": sol.c,
        "residual": sol.residual,
        "normal_derivative_at_xstar": sol.normal_derivative_at_xstar,
        "u_min": sol.extremes[0],
        "u_max": sol.extremes[1],
        "resolution": args.res,
    }
    _dump(summary, Path(args.out).with_suffix(".json"))
    _dump(summary)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="exitlab", description="Exit problems for slowly varying Markov-modulated diffusions.")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quasipotential", help="minimum action from O to a point")
    q.add_argument("--model", required=True, help="model JSON file or builtin name")
    q.add_argument("--x", required=True, help="target point, comma separated")
    q.add_argument("--lambda", dest="lam", type=float, default=0.0)
    q.add_argument("--state", type=int, default=1)
    q.add_argument("--n-points", type=int, default=64)
    q.set_defaults(func=cmd_quasipotential)

    mk = sub.add_parser("mk", help="roots m^k of M(lambda) = lambda and exit points")
    mk.add_argument("--model", required=True)
    mk.add_argument("--state", type=int, default=0, help="1-based state (default: all)")
    mk.add_argument("--profile", help="CSV file for the (lambda, M) profile")
    mk.set_defaults(func=cmd_mk)

    s = sub.add_parser("sigma-law", help="law of the limit sigma")
    s.add_argument("--model", required=True)
    s.add_argument("--mk", help="thresholds m^k, comma separated (default: solve)")
    s.add_argument("--mc", type=int, default=0, help="Monte Carlo cross-check sample size")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_sigma_law)

    sim = sub.add_parser("simulate", help="Monte Carlo exit times")
    sim.add_argument("--model", required=True)
    sim.add_argument("--eps", type=float, required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--h", type=float, default=0.01)
    sim.add_argument("--Lambda", type=float, default=None, help="censoring level (default: model)")
    sim.add_argument("--mode", choices=["full", "frozen"], default="full")
    sim.add_argument("--lambda", dest="lam", type=float, default=0.0, help="frozen slow time")
    sim.add_argument("--state", type=int, default=1, help="frozen state (1-based)")
    sim.add_argument("--observe", help="observation lambdas, comma separated")
    sim.add_argument("--eta", type=float, default=0.2, help="radius for near_O")
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    pr = sub.add_parser("predict", help="predicted limit law and exit points")
    pr.add_argument("--model", required=True)
    pr.set_defaults(func=cmd_predict)

    st = sub.add_parser("study", help="Monte Carlo convergence study")
    st.add_argument("--model", required=True)
    st.add_argument("--eps", required=True, help="descending eps values, comma separated")
    st.add_argument("--n", type=int, default=1000)
    st.add_argument("--eta", type=float, default=0.2)
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--replications", type=int, default=5)
    st.add_argument("--h", type=float, default=0.01)
    st.add_argument("--out", required=True)
    st.set_defaults(func=cmd_study)

    t = sub.add_parser("trap", help="exit law through the outer boundary of an annular trap")
    t.add_argument("--geometry", required=True)
    t.add_argument("--gamma", help="arcs a,b[;a,b...] of the outer boundary (default: from geometry)")
    t.add_argument("--xstar", help="point of the inner boundary (default: from geometry)")
    t.add_argument("--res", type=int, default=256)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_trap)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExitlabError as exc:
        print(f"exitlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
