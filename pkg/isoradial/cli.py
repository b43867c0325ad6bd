#!/usr/bin/env python3
"""
Isoradial random-cluster toolkit
Sampling, exact laws, track exchanges, loops, homotopy classes, transfer matrices and experiments
"""

import argparse
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from .config import configure_logging, get_settings
from .errors import IsoradialError
from .harness import EXPERIMENTS, ExperimentSpec, compare_reports, list_reports, run_experiment
from .homotopy import PunctureGrid, class_report
from .lattice import Topology, build_lattice, lattice_from_dict
from .loops import trace_loops
from .rcm import FREE, WIRED, as_boundary, cluster_count, connected, exact_distribution, make_rng, sample_mcmc
from .serialize import load_configuration, save_configuration, write_csv, write_json
from .sixvertex import build_transfer_block, leading_eigenvalue, sector_dimension, weights_from
from .transform import coupling_v1, track_exchange

_PI_FORM = re.compile(r"^\s*(?P<num>[-+]?\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(?P<den>\d+(?:\.\d+)?))?\s*$")


def parse_angle(text):
    """Radians, or a multiple of pi such as 'pi/3', '2pi/3', '0.25*pi'."""
    m = _PI_FORM.match(text.lower())
    if m:
        num = m.group("num")
        factor = float(num) if num not in ("", "+", "-") else (-1.0 if num == "-" else 1.0)
        den = float(m.group("den")) if m.group("den") else 1.0
        return factor * math.pi / den
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an angle: {text!r}") from None


def banner(title):
    print(f"\n{'=' * 70}")
    print(title)
    print(f"{'=' * 70}")


def _lattice_from_args(args):
    if getattr(args, "lattice", None):
        with open(args.lattice) as f:
            return lattice_from_dict(json.load(f))
    if args.angles:
        angles = [parse_angle(a) for a in args.angles.split(",")]
    else:
        angles = [args.alpha] * args.height
    return build_lattice(angles, args.width, topology=args.topology, parity=args.parity)


def _add_lattice_args(p):
    p.add_argument("--lattice", help="lattice JSON file")
    p.add_argument("--angles", help="comma-separated track angles, bottom to top (e.g. pi/2,pi/3)")
    p.add_argument("--alpha", type=parse_angle, default=math.pi / 2, help="uniform track angle")
    p.add_argument("--height", type=int, default=4, help="number of tracks for a uniform lattice")
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--topology", choices=[t.value for t in Topology], default=Topology.BOX.value)
    p.add_argument("--parity", type=int, choices=(0, 1), default=0)


def _bc(name):
    return {"free": FREE, "wired": WIRED}[name]


# ---------------------------------------------------------------------------
# rcm
# ---------------------------------------------------------------------------


def cmd_rcm_sample(args):
    lat = _lattice_from_args(args)
    bc = _bc(args.bc)
    seed = args.seed if args.seed is not None else get_settings().seed
    banner("RANDOM-CLUSTER SAMPLE")
    print(f"Lattice: {lat.topology.value}, {lat.num_vertices} vertices, {lat.num_edges} edges")
    print(f"q = {args.q}, bc = {args.bc}, seed = {seed}")

    print(f"\n[1/2] Running {args.sweeps} sweep(s) after burn-in...")
    cfg = sample_mcmc(lat, bc, args.q, args.sweeps, burn_in=args.burn_in, seed=seed, chain_id=args.chain)
    print(f"  ✓ {cfg.num_open} open edge(s), {cluster_count(cfg, bc)} cluster(s)")

    print("\n[2/2] Saving configuration...")
    out = Path(args.out) if args.out else get_settings().results_dir / f"config_{lat.digest()[:8]}_{seed}.json"
    save_configuration(out, cfg, bc=bc, q=args.q, seed=seed)
    print(f"  ✓ {out}")
    return 0


def cmd_rcm_exact(args):
    lat = _lattice_from_args(args)
    bc = _bc(args.bc)
    banner("EXACT DISTRIBUTION")
    dist = exact_distribution(lat, bc, args.q)
    marginals = dist.marginals()
    print(f"{len(dist.probabilities)} configurations on {dist.num_edges} edges, q = {args.q}")
    print(f"\n{'Edge':<6} {'Track':<6} {'Col':<6} {'Theta':<10} {'P[open]':<12}")
    print("-" * 70)
    rows = []
    for e, (j, n, _) in enumerate(lat.edge_tags):
        print(f"{e:<6} {j:<6} {n:<6} {lat.angles[e]:<10.6f} {marginals[e]:<12.9f}")
        rows.append({"edge": e, "track": int(j), "col": int(n), "theta": float(lat.angles[e]), "p_open": float(marginals[e])})
    if args.out:
        write_csv(args.out, rows)
        print(f"\n  ✓ Marginals written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# transform / coupling
# ---------------------------------------------------------------------------


def cmd_track_exchange(args):
    cfg, bc, header = load_configuration(args.config)
    bc = as_boundary(bc)
    q = args.q if args.q is not None else (header.get("q") or 1.0)
    seed = args.seed if args.seed is not None else get_settings().seed
    lat = cfg.graph
    banner(f"TRACK EXCHANGE {args.track - 1} <-> {args.track}")
    swapped, new = track_exchange(lat, cfg, args.track, make_rng(seed, args.chain), q, bc)
    print(f"  ✓ Angles {lat.track_angles[args.track - 1]:.6f}, {lat.track_angles[args.track]:.6f} exchanged")
    print(f"  ℹ Open edges: {cfg.num_open} → {new.num_open}")

    off_line = np.flatnonzero(lat.vertex_keys[:, 0] != args.track % lat.lines)
    broken = 0
    for a in range(len(off_line)):
        for b in range(a + 1, len(off_line)):
            u, v = int(off_line[a]), int(off_line[b])
            broken += connected(cfg, bc, u, v) != connected(new, bc, u, v)
    if broken:
        print(f"  ⚠ {broken} vertex pair(s) changed connectivity")
    else:
        print("  ✓ Connectivity off the middle line preserved")

    out = Path(args.out) if args.out else Path(args.config).with_name(Path(args.config).stem + f"_T{args.track}.json")
    save_configuration(out, new, bc=bc, q=q, seed=seed)
    print(f"  ✓ {out}")
    return 0


def cmd_coupling_v1(args):
    seed = args.seed if args.seed is not None else get_settings().seed
    banner(f"COUPLING V1 (N={args.N}, alpha={args.alpha:.6f})")
    steps = coupling_v1(
        args.N, args.alpha, seed=seed, width=args.width, params=args.q, topology=args.topology,
        sweeps=args.sweeps, burn_in=args.burn_in, record_every=args.record_every, steps=args.steps,
    )
    print(f"\n{'t':<6} {'Track':<8} {'Open':<8} {'Clusters':<10}")
    print("-" * 70)
    save_dir = Path(args.save_dir) if args.save_dir else get_settings().results_dir / f"coupling_v1_N{args.N}_{seed}"
    rows = []
    for step in steps:
        track = "-" if step.track is None else step.track
        k = cluster_count(step.configuration)
        print(f"{step.t:<6} {track!s:<8} {step.configuration.num_open:<8} {k:<10}")
        path = save_configuration(save_dir / f"step_{step.t:05d}.json", step.configuration, bc=FREE, q=args.q, seed=seed)
        rows.append({
            "t": step.t,
            "track": step.track,
            "open": step.configuration.num_open,
            "clusters": k,
            "configuration": path.name,
        })
    print(f"\n  ✓ {len(steps)} configuration(s) saved to {save_dir}")
    if args.out:
        write_csv(args.out, rows)
        print(f"\n  ✓ Trajectory written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# loops / homotopy
# ---------------------------------------------------------------------------


def cmd_loops_trace(args):
    cfg, _, _ = load_configuration(args.config)
    banner("LOOP REPRESENTATION")
    family = trace_loops(cfg)
    boundary = sum(lp.boundary for lp in family.loops)
    print(f"  F1 (primal outer boundaries): {len(family.F1)}")
    print(f"  F0 (dual outer boundaries):   {len(family.F0)}")
    print(f"  Touching the region boundary: {boundary}")
    if args.out:
        write_json(args.out, family.to_dict())
        print(f"\n  ✓ Loops written to {args.out}")
    return 0


def cmd_homotopy_class(args):
    cfg, _, _ = load_configuration(args.config)
    family = trace_loops(cfg)
    center = tuple(float(x) for x in args.center.split(",")) if args.center else tuple(cfg.graph.coords.mean(axis=0))
    grid = PunctureGrid.regular(args.eta, center=center, half_width=args.half_width)
    banner(f"HOMOTOPY CLASSES (eta={args.eta})")
    report = class_report(family, grid)
    for name in ("F0", "F1"):
        print(f"\n{name}:")
        if not report[name]:
            print("  (no loop surrounds two or more punctures)")
        for entry in report[name]:
            print(f"  {entry['count']:>3} × {entry['word']}")
    if args.out:
        write_json(args.out, {"eta": args.eta, "center": list(center), **report})
        print(f"\n  ✓ Classes written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# six-vertex
# ---------------------------------------------------------------------------


def _tm_eig(args):
    weights = weights_from(args.q, args.theta)
    banner(f"TRANSFER MATRIX N={args.N}, q={args.q}, theta={args.theta:.6f}")
    print(f"a = {weights.a:.12f}  b = {weights.b:.12f}  c = {weights.c:.12f}")
    ks = range(-(args.N // 2), args.N // 2 + 1) if args.sweep else [args.k]
    print(f"\n{'k':<6} {'Dim':<8} {'Lambda':<24} {'Residual':<12} {'Iter':<8}")
    print("-" * 70)
    rows = []
    for k in ks:
        pair = leading_eigenvalue(build_transfer_block(args.N, k, weights))
        print(f"{k:<6} {sector_dimension(args.N, k):<8} {pair.value:<24.15g} {pair.residual:<12.3e} {pair.iterations:<8}")
        rows.append({"N": args.N, "q": args.q, "theta": args.theta, "k": k, "lambda": pair.value, "residual": pair.residual})
    if args.out:
        write_csv(args.out, rows)
        print(f"\n  ✓ Eigenvalues written to {args.out}")
    return 0


def _add_tm_args(p):
    p.add_argument("--N", type=int, required=True, help="row width (even)")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--theta", type=parse_angle, required=True)
    p.add_argument("--k", type=int, default=0, help="sector: N/2 + k up arrows")
    p.add_argument("--sweep", action="store_true", help="all sectors")
    p.add_argument("--out", help="CSV output")


# ---------------------------------------------------------------------------
# experiments / reports
# ---------------------------------------------------------------------------


def cmd_exp(args):
    if args.config:
        spec = ExperimentSpec.from_json(args.config, name=args.name)
    else:
        spec = ExperimentSpec(name=args.name)
    data = spec.to_dict()
    if args.budget is not None:
        data["budget"] = args.budget
    if args.seed is not None:
        data["seed"] = args.seed
    spec = ExperimentSpec.from_dict(data)

    banner(f"EXPERIMENT: {spec.name}")
    print(f"Seed: {spec.seed}   Budget: {spec.budget}")
    print("\n[1/2] Running...")
    report = run_experiment(spec, workers=args.workers)
    for key in ("estimate", "stderr", "target"):
        print(f"  {key:<10} {report.summary.get(key)}")
    print(f"  {'✓' if report.passed else '⚠'} {'PASS' if report.passed else 'FAIL'}")

    print("\n[2/2] Saving report...")
    json_path, csv_path = report.save(args.results_dir)
    print(f"  ✓ {json_path}")
    print(f"  ✓ {csv_path}")
    return 0 if report.passed else 2


def cmd_reports_list(args):
    banner("SAVED REPORTS")
    reports = list_reports(args.results_dir)
    if not reports:
        print("No reports found")
        return 0
    print(f"\n{'#':<4} {'Experiment':<24} {'Seed':<12} {'Estimate':<16} {'Pass':<6}")
    print("-" * 70)
    for i, r in enumerate(reports, 1):
        est = r["estimate"]
        est = f"{est:.6g}" if isinstance(est, float) else str(est)
        print(f"{i:<4} {r['experiment']!s:<24} {r['seed']!s:<12} {est:<16} {r['pass']!s:<6}")
    return 0


def cmd_reports_compare(args):
    banner("REPORT COMPARISON")
    print(f"\nReport 1: {args.a}")
    print(f"Report 2: {args.b}")
    changes = compare_reports(args.a, args.b)
    if changes:
        banner("CHANGES DETECTED")
        for change in changes:
            print(change)
    else:
        banner("✓ NO CHANGES DETECTED")
        print("\nThe two reports are identical")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="isoradial", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--log-level", help="overrides ISORADIAL_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    rcm = sub.add_parser("rcm", help="sample or enumerate the random-cluster model").add_subparsers(dest="action", required=True)
    p = rcm.add_parser("sample")
    _add_lattice_args(p)
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--bc", choices=("free", "wired"), default="free")
    p.add_argument("--sweeps", type=int, default=1)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--chain", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rcm_sample)

    p = rcm.add_parser("exact")
    _add_lattice_args(p)
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--bc", choices=("free", "wired"), default="free")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rcm_exact)

    tr = sub.add_parser("transform", help="track exchanges").add_subparsers(dest="action", required=True)
    p = tr.add_parser("track-exchange")
    p.add_argument("--config", required=True, help="configuration JSON from 'rcm sample'")
    p.add_argument("--track", type=int, required=True, help="exchange tracks i-1 and i")
    p.add_argument("--q", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--chain", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_track_exchange)

    cp = sub.add_parser("coupling", help="coupling trajectories").add_subparsers(dest="action", required=True)
    p = cp.add_parser("v1")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--alpha", type=parse_angle, required=True)
    p.add_argument("--width", type=int, default=8)
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--topology", choices=[t.value for t in Topology], default=Topology.CYLINDER.value)
    p.add_argument("--sweeps", type=int, default=1)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--record-every", type=int, default=1)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="trajectory CSV")
    p.add_argument("--save-dir", help="directory for the per-step configuration files")
    p.set_defaults(func=cmd_coupling_v1)

    lp = sub.add_parser("loops", help="loop representation").add_subparsers(dest="action", required=True)
    p = lp.add_parser("trace")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_loops_trace)

    hp = sub.add_parser("homotopy", help="homotopy classes of loops").add_subparsers(dest="action", required=True)
    p = hp.add_parser("class")
    p.add_argument("--config", required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--center", help="x,y of the puncture grid centre (default: lattice centroid)")
    p.add_argument("--half-width", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_homotopy_class)

    p = sub.add_parser("tm-eig", help="leading transfer-matrix eigenvalues")
    _add_tm_args(p)
    p.set_defaults(func=_tm_eig)

    p = sub.add_parser("exp", help="run an experiment")
    p.add_argument("name", choices=sorted(EXPERIMENTS))
    p.add_argument("--config", help="experiment spec JSON")
    p.add_argument("--budget", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--results-dir")
    p.set_defaults(func=cmd_exp)

    rp = sub.add_parser("reports", help="saved experiment reports").add_subparsers(dest="action", required=True)
    p = rp.add_parser("list")
    p.add_argument("--results-dir")
    p.set_defaults(func=cmd_reports_list)
    p = rp.add_parser("compare")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_reports_compare)
    return parser


def _dispatch(func, args):
    try:
        return func(args)
    except IsoradialError as e:
        print(f"\n  ⚠ {e}")
        return 1
    except KeyboardInterrupt:
        print("\nCancelled")
        return 130


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    return _dispatch(args.func, args)


def tm_eig_main(argv=None):
    parser = argparse.ArgumentParser(prog="tm-eig", description="leading transfer-matrix eigenvalues")
    _add_tm_args(parser)
    args = parser.parse_args(argv)
    configure_logging()
    return _dispatch(_tm_eig, args)


if __name__ == "__main__":
    sys.exit(main())
