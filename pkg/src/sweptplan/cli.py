"""Command-line entry point: ``sweptplan <command> [options]``.

Commands
--------
plan        solve a scenario and write trajectory/audit/plot artifacts
fit-swept   fit the swept-volume radius model from a sampling config
sd          signed distance between two placed shapes
check-grad  finite-difference audit of every residual Jacobian

Exit codes: 0 success, 1 gradient check failure, 2 solver did not
converge, 3 configuration or input error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .geom import Placed, Polytope, shape_from_json
from .nlp import Block, SolverOptions, check_gradients
from .sdcalc import signed_distance
from .svgplot import trajectory_svg
from .sweptfit import (FitConfig, RadiusModel, fit_upper_bound, generate_samples,
                       heldout_statistics)
from .transcribe import Scenario, audit_trajectory, build_ocp, initial_guess, plan

EXIT_OK, EXIT_GRAD, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2, 3
GRAD_TOL = 1e-5
RECONSTRUCTION_NOTE = ("obstacle geometry and input bounds are calibrated reconstructions; "
                       "the reference figures publish no coordinates")


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not solver failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def threads() -> int:
    """Worker cap from ``SWEPTPLAN_THREADS`` (default 1)."""
    raw = os.environ.get("SWEPTPLAN_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SWEPTPLAN_THREADS must be an integer, got {raw!r}")
    return max(1, n)


def fmt(x) -> str:
    """Nine significant digits, no negative zero, empty for missing."""
    if x is None:
        return ""
    x = float(x)
    if not np.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return f"{x + 0.0:.9g}"


def _finite(x):
    x = float(x)
    return x if np.isfinite(x) else None


def git_hash(data: bytes) -> str:
    """Content hash in git's blob format."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _write(path: Path, text: str) -> str:
    data = text.encode()
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------- plan

def _load_scenario(path, mode, radius_model):
    try:
        sc = Scenario.load(path)
        if mode:
            sc.mode = mode
        if radius_model:
            sc.rmodel = RadiusModel.load(radius_model)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot load scenario: {exc}") from exc
    if sc.mode not in ("discrete", "continuous"):
        raise ConfigError(f"unknown mode {sc.mode!r}")
    if sc.mode == "continuous" and sc.rmodel is None:
        raise ConfigError("continuous mode needs a radius model (--radius-model)")
    return sc


def trajectory_csv(sc, tr) -> str:
    lines = ["k,t,p_x,p_y,psi,v,delta,a,s"]
    for k, x in enumerate(tr.states):
        u = tr.inputs[k] if k < sc.N else (None, None)
        lines.append(",".join([str(k), fmt(k * sc.dt), *map(fmt, x), *map(fmt, u)]))
    return "\n".join(lines) + "\n"


def audit_csv(audit) -> str:
    lines = ["interval,pose_index,sd"]
    lines += [f"{k},{i},{fmt(sd)}" for k, i, sd, _, _ in audit["rows"]]
    return "\n".join(lines) + "\n"


def cmd_plan(args) -> int:
    sc = _load_scenario(args.scenario, args.mode, args.radius_model)
    opts = SolverOptions()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    inputs = {
        "scenario": sc.to_json(),
        "radius_model": sc.rmodel.to_json() if sc.rmodel is not None and sc.mode == "continuous" else None,
        "solver_options": opts.to_json(),
        "audit_substeps": args.substeps,
        "version": __version__,
    }
    input_hash = git_hash(_dump(inputs).encode())

    tr = plan(sc, opts)
    audit = audit_trajectory(tr, sc, m=args.substeps, workers=threads())

    traj = tr.to_json()
    traj.update({"scenario": sc.name, "mode": sc.mode, "dt": sc.dt})
    hashes = {
        "trajectory.csv": _write(out / "trajectory.csv", trajectory_csv(sc, tr)),
        "trajectory.json": _write(out / "trajectory.json", _dump(traj)),
        "audit.csv": _write(out / "audit.csv", audit_csv(audit)),
        "plot.svg": _write(out / "plot.svg", trajectory_svg(sc, tr)),
    }
    run = {
        "schema": 1,
        "inputs": inputs,
        "input_hash": input_hash,
        "status": tr.report.status,
        "solver": tr.report.summary(),
        "audit": {
            "substeps": args.substeps,
            "min_sd": _finite(audit["min_sd"]),
            "hull_sd": [_finite(h) for h in audit["hull_sd"]],
            "obstacles": len(sc.obstacles),
        },
        "outputs": hashes,
        "note": RECONSTRUCTION_NOTE,
    }
    _write(out / "run.json", _dump(run))
    min_sd = audit["min_sd"]
    print(f"status={tr.report.status} objective={tr.report.objective:.6g} "
          f"min_sd={fmt(min_sd)} out={out}")
    return EXIT_OK if tr.report.optimal else EXIT_SOLVER


# ---------------------------------------------------------------- fit-swept

def cmd_fit_swept(args) -> int:
    try:
        with open(args.config) as fh:
            cfg = FitConfig.from_json(json.load(fh))
        if args.degree is not None:
            cfg.degree = args.degree
        cfg.validate()
        A = Polytope(np.asarray(cfg.vehicle, float))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad fit config: {exc}") from exc

    v, d, r = generate_samples(cfg, A)
    vg, dg = cfg.grid(cfg.v), cfg.grid(cfg.delta)
    model = fit_upper_bound(v, d, r, cfg.degree, v_range=(vg[0], vg[-1]), delta_range=(dg[0], dg[-1]))
    report = dict(model.report)
    if cfg.synthetic is None and cfg.heldout > 0:
        held = heldout_statistics(model, cfg, A)
        report["heldout"] = {key: held[key] for key in
                             ("count", "failures", "failures_over_tol", "worst_shortfall")}
    report["config"] = cfg.to_json()
    model = RadiusModel(model.degree, model.coeffs, model.v_range, model.delta_range, report)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    (out.parent / (out.stem + ".report.json")).write_text(_dump(report))
    print(f"degree={model.degree} samples={report['samples']} "
          f"max_violation={report['max_violation']:.3e} residual={report['objective_residual']:.6g}")
    if "heldout" in report:
        h = report["heldout"]
        print(f"heldout count={h['count']} failures={h['failures']} "
              f"over_tol={h['failures_over_tol']} worst={h['worst_shortfall']:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------- sd

def _read_shape(text):
    src = text.strip()
    if not src.startswith("{"):
        src = Path(text).read_text()
    return shape_from_json(json.loads(src))


def _read_pose(text):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3 or not all(np.isfinite(parts)):
        raise ValueError(f"pose must be x,y,psi, got {text!r}")
    return parts


def cmd_sd(args) -> int:
    try:
        A, B = _read_shape(args.shape_a), _read_shape(args.shape_b)
        xa, ya, pa = _read_pose(args.pose_a)
        xb, yb, pb = _read_pose(args.pose_b)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad shape or pose: {exc}") from exc
    res = signed_distance(Placed(A, pa, (xa, ya)), Placed(B, pb, (xb, yb)))
    c = res.witness_direction
    print(f"sd={res.sd + 0.0:.6f}")
    print(f"witness={c[0] + 0.0:.6f},{c[1] + 0.0:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------- check-grad

def _inject_fault(problem):
    """Corrupt one Jacobian entry of the dynamics block (auditor self-test)."""
    for i, b in enumerate(problem.eq):
        if b.name == "dynamics":
            def bad(zl, f=b.fun):
                v, J = f(zl)
                J = np.array(J)
                J[0, 0] += 1e-3
                return v, J
            problem.eq[i] = Block(b.name, b.size, b.cols, bad)
            return


def cmd_check_grad(args) -> int:
    sc = _load_scenario(args.scenario, args.mode, args.radius_model)
    ocp = build_ocp(sc)
    p = ocp.problem
    if args.inject_fault:
        _inject_fault(p)
    z0 = initial_guess(sc, ocp)
    rng = np.random.default_rng(args.seed)
    points = [z0] + [p.project(z0 + 0.05 * (1.0 + np.abs(z0)) * rng.standard_normal(p.n))
                     for _ in range(5)]
    worst, worst_block = 0.0, None
    for z in points:
        for name, err in check_gradients(p, z, per_block=True).items():
            if err > worst:
                worst, worst_block = err, name
    print(f"worst_error={worst:.3e} block={worst_block} points={len(points)}")
    if worst > GRAD_TOL:
        print(f"FAIL: block {worst_block} exceeds {GRAD_TOL:g}")
        return EXIT_GRAD
    return EXIT_OK


# ---------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sweptplan", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("plan", help="solve a scenario and write artifacts")
    p.add_argument("--scenario", required=True)
    p.add_argument("--mode", choices=("discrete", "continuous"))
    p.add_argument("--radius-model")
    p.add_argument("--out", required=True)
    p.add_argument("--substeps", type=int, default=100, help="audit poses per interval")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("fit-swept", help="fit the swept-volume radius model")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--degree", type=int)
    p.set_defaults(func=cmd_fit_swept)

    p = sub.add_parser("sd", help="signed distance between two placed shapes")
    p.add_argument("--shape-a", required=True, help="shape JSON (inline or file path)")
    p.add_argument("--shape-b", required=True)
    p.add_argument("--pose-a", default="0,0,0", help="x,y,psi")
    p.add_argument("--pose-b", default="0,0,0")
    p.set_defaults(func=cmd_sd)

    p = sub.add_parser("check-grad", help="audit residual Jacobians by finite differences")
    p.add_argument("--scenario", required=True)
    p.add_argument("--mode", choices=("discrete", "continuous"))
    p.add_argument("--radius-model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="store_true", help="corrupt one Jacobian entry")
    p.set_defaults(func=cmd_check_grad)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
