"""Command-line front end.

Subcommands: table (depth x width error grid -> CSV), recovery (node-wise
recovery report -> JSON lines), dynamics (trajectory export -> JSON lines),
verify (landscape check suite -> JSON lines, nonzero exit on unexpected
failure), potential-info (kernel properties).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import dynamics as dyn
from . import harness, landscape
from .errors import ChargeflowError
from .loss import Hypothesis, Objective, TargetNetwork
from .potentials import SPHERE, eval_potential, parse_potential

USAGE_EXIT = 2
FAILURE_EXIT = 1


def _add_common(p):
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--out", help="output path")
    p.add_argument("--seeds", help="seed list 'a,b,c', or a bare count N for seeds 0..N-1")


def _build_parser():
    parser = argparse.ArgumentParser(prog="chargeflow")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("table", help="depth/width training-error grid")
    _add_common(t)
    t.add_argument("--depths", help="comma-separated depths")
    t.add_argument("--widths", help="comma-separated widths")
    t.add_argument("--d", type=int)
    t.add_argument("--n-train", type=int, dest="n_train")
    t.add_argument("--n-test", type=int, dest="n_test")
    t.add_argument("--iters", type=int)
    t.add_argument("--alpha", type=float)
    t.add_argument("--batch", type=int)
    t.add_argument("--full-scale", action="store_true", dest="full_scale", default=None)
    t.add_argument("--workers", type=int, default=1)

    r = sub.add_parser("recovery", help="node-wise recovery experiment")
    _add_common(r)
    r.add_argument("--k", type=int)
    r.add_argument("--potential")
    r.add_argument("--separation", type=float)
    r.add_argument("--trials", type=int)
    r.add_argument("--radius-mult", type=float, dest="radius_mult")
    r.add_argument("--descent-T", type=int, dest="descent_T")
    r.add_argument("--descent-alpha", type=float, dest="descent_alpha")
    r.add_argument("--descent-eta", type=float, dest="descent_eta")
    r.add_argument("--descent-gamma", type=float, dest="descent_gamma")
    r.add_argument("--trace-stride", type=int, dest="trace_stride")

    d = sub.add_parser("dynamics", help="integrate particle motion, export trajectory")
    _add_common(d)
    d.add_argument("--potential")
    d.add_argument("--k", type=int)
    d.add_argument("--d", type=int)
    d.add_argument("--dt", type=float)
    d.add_argument("--steps", type=int)
    d.add_argument("--stride", type=int)
    d.add_argument("--scheme", choices=("euler", "rk4"))
    d.add_argument("--seed", type=int, help="single seed for the random configuration")

    v = sub.add_parser("verify", help="run landscape checks")
    _add_common(v)
    v.add_argument(
        "--check",
        default="all",
        choices=("all", "earnshaw", "eigstrict", "subharmonic", "sign-scan", "poly"),
    )

    i = sub.add_parser("potential-info", help="describe a kernel id")
    i.add_argument("--potential", required=True)
    return parser


def _overrides(args, keys):
    out = {}
    for key in keys:
        val = getattr(args, key, None)
        if val is None:
            continue
        if key == "seeds" and isinstance(val, str):
            val = harness.parse_seeds(val)  # bare N = seeds 0..N-1
        elif key in ("depths", "widths") and isinstance(val, str):
            val = tuple(int(x) for x in val.split(","))
        out[key] = val
    return out


def _config(args, keys):
    file_values = harness.parse_config_file(args.config) if args.config else {}
    file_values.pop("experiment", None)
    return harness.config_from(file_values, _overrides(args, keys))


def cmd_table(args):
    cfg = _config(
        args,
        ("depths", "widths", "seeds", "d", "n_train", "n_test", "iters", "alpha", "batch", "full_scale", "out"),
    )
    rows = harness.run_table(cfg, workers=args.workers)
    text = harness.rows_to_csv(rows)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
        print(f"wrote {len(rows)} rows to {cfg.out}")
    else:
        sys.stdout.write(text)
    by_depth = {}
    for row in rows:
        by_depth.setdefault(row.depth, []).append(row.test_err)
    for depth in sorted(by_depth):
        print(f"depth {depth}: mean test error {np.mean(by_depth[depth]):.5f}")
    return 0


def cmd_recovery(args):
    cfg = _config(
        args,
        (
            "seeds", "k", "potential", "separation", "trials", "radius_mult",
            "descent_T", "descent_alpha", "descent_eta", "descent_gamma",
            "trace_stride", "out",
        ),
    )
    report = harness.recovery_experiment(cfg)
    if cfg.out:
        harness.write_jsonl(report["records"], cfg.out)
        print(f"wrote {len(report['records'])} records to {cfg.out}")
    print(
        f"recovered {report['recovered_count']}/{len(cfg.seeds)} seeds "
        f"(k={cfg.k}, potential={cfg.potential})"
    )
    return 0


def cmd_dynamics(args):
    if getattr(args, "seed", None) is not None:
        args.seeds = f"{args.seed},"
    cfg = _config(
        args, ("seeds", "k", "d", "potential", "dt", "steps", "stride", "scheme", "out")
    )
    pot = parse_potential(cfg.potential)
    d = getattr(pot, "d", None) or (cfg.d or 3)
    seed = cfg.seeds[0]
    rng = np.random.default_rng(seed)
    if pot.manifold == SPHERE:
        pts = rng.standard_normal((2 * cfg.k, d))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    else:
        pts = rng.standard_normal((2 * cfg.k, d))
    target = TargetNetwork(w=pts[cfg.k :], b=rng.uniform(-1.0, 1.0, cfg.k))
    hyp = Hypothesis(theta=pts[: cfg.k], a=rng.uniform(-1.0, 1.0, cfg.k))
    obj = Objective(pot, target)
    system = dyn.system_from_objective(obj, hyp)
    _, records = dyn.run_trajectory(
        system, cfg.steps, cfg.dt, scheme=cfg.scheme, stride=cfg.stride,
        objective=obj, hypothesis_k=cfg.k,
    )
    if cfg.out:
        dyn.write_jsonl(records, cfg.out)
        print(f"wrote {len(records)} records to {cfg.out}")
    else:
        for rec in records:
            print(rec["t"], rec.get("loss"))
    return 0


def _verify_verdicts(seed=0):
    rng = np.random.default_rng(seed)
    verdicts = []

    def separated(k, d, scale=3.0, min_sep=1.0):
        while True:
            pts = rng.standard_normal((2 * k, d)) * scale
            diff = pts[:, None, :] - pts[None, :, :]
            dist = np.sqrt(np.sum(diff * diff, axis=-1))
            np.fill_diagonal(dist, np.inf)
            if dist.min() >= min_sep:
                return pts[:k], pts[k:]

    from .potentials import CoulombPotential, GaussianPotential, LogPotential

    for trial in range(5):
        theta, w = separated(3, 3)
        target = TargetNetwork(w=w, b=rng.uniform(-1, 1, 3))
        hyp = Hypothesis(theta=theta, a=rng.uniform(-1, 1, 3))
        verdicts.append(landscape.earnshaw_trace_check(CoulombPotential(3), target, hyp, 0))
    for trial in range(5):
        theta, w = separated(2, 2)
        target = TargetNetwork(w=w, b=rng.uniform(-1, 1, 2))
        hyp = Hypothesis(theta=theta, a=rng.uniform(-1, 1, 2))
        verdicts.append(landscape.earnshaw_trace_check(LogPotential(), target, hyp, 0))
    # control: the non-harmonic kernel must fail the trace test
    target = TargetNetwork(w=np.array([[2.0, 0.0, 0.0]]), b=[1.0])
    hyp = Hypothesis(theta=np.zeros((1, 3)), a=[-1.0])
    verdicts.append(landscape.earnshaw_trace_check(GaussianPotential(1.0), target, hyp, 0, tol=1e-2))

    for trial in range(5):
        theta, w = separated(3, 3)
        target = TargetNetwork(w=w, b=rng.uniform(-1, 1, 3))
        verdicts.append(landscape.eigstrict_laplacian_check(1.0, target, theta))

    thresh = landscape.subharmonic_sign_check(1.0, 3, np.sqrt(3.0))
    below = landscape.subharmonic_sign_check(1.0, 3, 1.0)
    above = landscape.subharmonic_sign_check(1.0, 3, 2.0)
    verdicts.append(
        landscape.LandscapeVerdict(
            check="subharmonic-threshold",
            digest="static",
            measured={"at_threshold": thresh, "below": below, "above": above},
            passed=bool(abs(thresh) < 1e-12 and below < 0 and above > 0),
            tol=1e-12,
        )
    )

    for trial in range(5):
        k = 3
        angles = rng.uniform(0, 2 * np.pi, k)
        w2 = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        target = TargetNetwork(w=w2, b=rng.uniform(-1, 1, k))
        res = landscape.sign_circle_scan(target, 2048)
        verdicts.append(
            landscape.LandscapeVerdict(
                check="sign-circle-scan",
                digest=landscape._digest(w=w2, b=target.b),
                measured={"n_minima": int(len(res.minima))},
                passed=res.all_matched,
                tol=res.resolution,
            )
        )

    theta = np.zeros(4)
    theta[:2] = 1.0 / np.sqrt(2.0)
    verdicts.append(landscape.poly_orthonormal_check(3, 4, theta, np.ones(4)))
    return verdicts


_CHECK_PREFIX = {
    "earnshaw": "earnshaw-trace",
    "eigstrict": "eigstrict-laplacian",
    "subharmonic": "subharmonic-threshold",
    "sign-scan": "sign-circle-scan",
    "poly": "poly-orthonormal",
}


def cmd_verify(args):
    verdicts = _verify_verdicts(seed=int(args.seeds.split(",")[0]) if args.seeds else 0)
    if args.check != "all":
        verdicts = [v for v in verdicts if v.check == _CHECK_PREFIX[args.check]]
    lines = [v.to_json() for v in verdicts]
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    failures = 0
    for v in verdicts:
        status = "PASS" if v.passed else ("EXPECTED-FAIL" if v.expected_fail else "FAIL")
        if not v.ok:
            failures += 1
        print(f"{status:14s} {v.check} {v.note}")
    print(f"{len(verdicts)} checks, {failures} unexpected failures")
    return FAILURE_EXIT if failures else 0


def cmd_potential_info(args):
    pot = parse_potential(args.potential)
    print(f"id: {args.potential}")
    print(f"name: {pot.name}")
    print(f"manifold: {pot.manifold}")
    print(f"finite diagonal: {pot.finite_diagonal}")
    if pot.manifold == SPHERE:
        probes = (1.0, 0.5, 0.0, -0.5)
        for rho in probes:
            print(f"  phi(rho={rho:+.1f}) = {float(pot.phi_rho(rho)):.6f}")
    else:
        d = getattr(pot, "d", 3)
        theta = np.zeros(d)
        for r in (0.5, 1.0, 2.0, 5.0):
            w = np.zeros(d)
            w[0] = r
            print(f"  phi(r={r}) = {eval_potential(pot, theta, w):.6f}")
    return 0


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_EXIT if exc.code not in (0, None) else 0
    handlers = {
        "table": cmd_table,
        "recovery": cmd_recovery,
        "dynamics": cmd_dynamics,
        "verify": cmd_verify,
        "potential-info": cmd_potential_info,
    }
    try:
        return handlers[args.command](args)
    except (ChargeflowError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILURE_EXIT


if __name__ == "__main__":
    sys.exit(main())
