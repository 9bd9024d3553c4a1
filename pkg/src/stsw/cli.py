"""Command-line interface: distance, sample-tree, flow, validate, bench, replay.

Results go to stdout as JSON (or a one-line summary), tables go to CSV files,
and every run writes a manifest that ``stsw replay`` can re-execute.

Exit codes: 0 success, 1 check failure, 2 usage or IO error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .estimator import StswConfig, resolve_threads, stsw, stsw_with_trees
from .flow import FlowConfig, run_flow, target_12vmf, write_trajectory
from .ot_oracle import exact_w1_tree
from .sphere import DiscreteMeasure, load_point_cloud, random_orthogonal, sample_uniform_sphere, save_point_cloud
from .splitting import alpha, beta
from .tree_wasserstein import ProjectedPair, closed_form_graph, project_pair, tw_closed_form, tw_on_explicit_tree
from .trees import sample_tree, sample_trees

log = logging.getLogger("stsw")

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2

CLOSED_FORM_TOL = 1e-9
GRAPH_TOL = 1e-10
IDENTITY_TOL = 1e-12
TRIANGLE_TOL = 1e-9
ROTATION_TOL = 1e-9
MASS_TOL = 1e-10


class UsageError(Exception):
    """Bad input files or arguments; maps to exit code 2."""


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    seed: int | None
    version: str = __version__
    wall_time: float = 0.0
    outputs: dict = field(default_factory=dict)
    python: str = field(default_factory=platform.python_version)
    numpy: str = np.__version__
    cwd: str = field(default_factory=os.getcwd)

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        with open(path) as fh:
            return cls(**json.load(fh))


# ----------------------------------------------------------------------------
# helpers


def _load(path) -> DiscreteMeasure:
    try:
        return load_point_cloud(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _int_list(text: str) -> list:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("values must be positive integers")
    return vals


def _threads(text: str):
    if text == "auto":
        return text
    try:
        n = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("threads must be a positive integer or 'auto'") from exc
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return n


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def r_squared(x, y) -> float:
    """Coefficient of determination of the least-squares line through (x, y)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 3:
        raise ValueError("need at least three points for a meaningful fit")
    slope, icept = np.polyfit(x, y, 1)
    resid = y - (slope * x + icept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return float(1.0 - np.sum(resid**2) / ss_tot) if ss_tot > 0 else 1.0


# ----------------------------------------------------------------------------
# distance / sample-tree


def cmd_distance(args) -> tuple:
    mu = _load(args.input_a)
    nu = _load(args.input_b)
    if mu.dim != nu.dim:
        raise UsageError(f"dimension mismatch: {args.input_a} is on S^{mu.dim}, {args.input_b} on S^{nu.dim}")
    cfg = StswConfig(num_trees=args.trees, num_rays=args.rays, zeta=args.zeta, seed=args.seed, threads=args.threads)
    res = stsw(mu, nu, cfg)
    out = {
        "stsw": res.value,
        "per_tree_mean": float(res.per_tree.mean()),
        "per_tree_stderr": res.stderr,
        "config": cfg.to_dict(),
    }
    print(_dump(out))
    return EXIT_OK, {}


def cmd_sample_tree(args) -> tuple:
    trees = sample_trees(args.seed, args.dim, args.rays, args.index + 1)
    print(trees[args.index].to_json())
    return EXIT_OK, {}


# ----------------------------------------------------------------------------
# flow


def cmd_flow(args) -> tuple:
    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    density = None
    if args.target == "vmf12":
        if args.samples % 12:
            raise UsageError("--samples must be a multiple of 12 for the vmf12 target")
        density = target_12vmf(args.kappa)
        target = DiscreteMeasure(density.sample(rng, args.samples // 12))
    else:
        target = _load(args.target)
    source = DiscreteMeasure(sample_uniform_sphere(rng, target.dim, args.samples))
    cfg = FlowConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        stsw=StswConfig(num_trees=args.trees, num_rays=args.rays, zeta=args.zeta, seed=args.seed, threads=args.threads),
        eval_every=args.eval_every,
        resample_trees=not args.fixed_trees,
        mass_normalized=not args.raw_gradient,
    )
    result = run_flow(source, target, cfg, density)
    paths = {
        "trajectory": os.path.join(args.out, "trajectory.csv"),
        "final": os.path.join(args.out, "final.csv"),
        "target": os.path.join(args.out, "target.csv"),
    }
    write_trajectory(paths["trajectory"], result)
    save_point_cloud(paths["final"], result.final)
    save_point_cloud(paths["target"], target)
    last = result.trajectory[-1]
    print(f"epoch {last[0]} stsw {last[1]:.6g} log_w2 {last[2]:.4f} nll {last[3]:.2f}")
    return EXIT_OK, paths


# ----------------------------------------------------------------------------
# validate


def faulty_closed_form(pair: ProjectedPair) -> float:
    """Deliberately wrong closed form (drops the root segment); validate's self-test."""
    return tw_closed_form(ProjectedPair(pair.coords - pair.coords[0], pair.mass_diff))


def _random_measure(rng, d, n, weighted=True) -> DiscreteMeasure:
    w = rng.random(n) + 0.05 if weighted else None
    return DiscreteMeasure(sample_uniform_sphere(rng, d, n), None if w is None else w / w.sum())


def _shared_pair(rng, d, n):
    """Two measures on one support list, with random weights (some zero)."""
    pts = sample_uniform_sphere(rng, d, n)
    u = rng.random(n) * (rng.random(n) > 0.2)
    v = rng.random(n) * (rng.random(n) > 0.2)
    u[0] += 0.1
    v[-1] += 0.1
    return DiscreteMeasure(pts, u / u.sum()), DiscreteMeasure(pts, v / v.sum())


def oracle_instance(rng):
    """One random instance for the closed-form checks: (tree, mu, nu, zeta)."""
    d = int(rng.choice([2, 5, 10]))
    n = int(rng.integers(1, 9))
    k = int(rng.integers(1, 5))
    zeta = float(rng.choice([-5.0, 0.0, 2.0, 5.0]))
    mu, nu = _shared_pair(rng, d, n)
    return sample_tree(rng, d, k), mu, nu, zeta


def check_closed_form(instances: int, seed: int, closed_form=tw_closed_form) -> dict:
    rng = np.random.default_rng([seed, 1])
    err_lp = err_graph = err_mass = 0.0
    for _ in range(instances):
        tree, mu, nu, zeta = oracle_instance(rng)
        value = closed_form(project_pair(tree, mu, nu, zeta))
        err_lp = max(err_lp, abs(value - exact_w1_tree(tree, mu, nu, zeta)))
        err_graph = max(err_graph, abs(value - tw_on_explicit_tree(*closed_form_graph(tree, mu, nu, zeta))))
        for meas in (mu, nu):
            total = float(alpha(tree, meas, zeta).rows.sum(axis=1) @ meas.weights)
            err_mass = max(err_mass, abs(total - 1.0))
    return {
        "closed_form_vs_lp": (err_lp, err_lp <= CLOSED_FORM_TOL),
        "closed_form_vs_graph": (err_graph, err_graph <= GRAPH_TOL),
        "mass_conservation": (err_mass, err_mass <= MASS_TOL),
    }


def check_metric(instances: int, seed: int) -> dict:
    rng = np.random.default_rng([seed, 2])
    trees = sample_trees(seed, 2, 8, 64)
    ident = tri = 0.0
    sym_ok = True
    for _ in range(instances):
        a, b, c = (_random_measure(rng, 2, int(rng.integers(1, 11))) for _ in range(3))
        ident = max(ident, stsw_with_trees(a, a, trees).value)
        ab = stsw_with_trees(a, b, trees).value
        sym_ok &= ab == stsw_with_trees(b, a, trees).value
        ac = stsw_with_trees(a, c, trees).value
        bc = stsw_with_trees(b, c, trees).value
        tri = max(tri, ac - ab - bc)
    return {
        "identity": (ident, ident <= IDENTITY_TOL),
        "symmetry": (0.0 if sym_ok else 1.0, sym_ok),
        "triangle_slack": (tri, tri <= TRIANGLE_TOL),
    }


def check_rotation(instances: int, seed: int) -> dict:
    rng = np.random.default_rng([seed, 3])
    d = 2
    mu = _random_measure(rng, d, 12)
    nu = _random_measure(rng, d, 9)
    trees = sample_trees(seed, d, 5, 16)
    base = stsw_with_trees(mu, nu, trees).value
    err_val = err_beta = 0.0
    for _ in range(instances):
        g = random_orthogonal(rng, d)
        moved = stsw_with_trees(mu.transformed(g), nu.transformed(g), [t.transformed(g) for t in trees]).value
        err_val = max(err_val, abs(moved - base))
        y = sample_uniform_sphere(rng, d, 1)[0]
        t = trees[0]
        err_beta = max(err_beta, float(np.abs(beta(t.transformed(g), g.apply(y)) - beta(t, y)).max()))
    return {
        "rotation_value": (err_val, err_val <= ROTATION_TOL),
        "rotation_beta": (err_beta, err_beta <= ROTATION_TOL),
    }


def run_checks(instances: int, seed: int, inject_fault: bool = False) -> dict:
    closed_form = faulty_closed_form if inject_fault else tw_closed_form
    results = {}
    results.update(check_closed_form(instances, seed, closed_form))
    results.update(check_metric(instances, seed))
    results.update(check_rotation(instances, seed))
    return results


def cmd_validate(args) -> tuple:
    results = run_checks(args.instances, args.seed, args.inject_fault)
    ok = True
    for name, (err, passed) in results.items():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name} max_error={err:.3e}")
    print(f"{'all checks passed' if ok else 'validation FAILED'} ({args.instances} instances)")
    return (EXIT_OK if ok else EXIT_CHECK), {}


# ----------------------------------------------------------------------------
# bench

BENCH_COLUMNS = ("L", "k", "N", "d", "wall_time")


def bench_rows(trees, rays, samples, dim, repeats, seed, threads=1) -> list:
    """Time the estimator over the grid.

    Each list with more than one entry is swept while the other two stay at
    their first entry.  Trees and point clouds are built before timing starts,
    so a row measures the estimator call only.
    """
    base = (trees[0], rays[0], samples[0])
    settings = []
    for axis, values in enumerate((trees, rays, samples)):
        if len(values) > 1:
            for v in values:
                s = list(base)
                s[axis] = v
                settings.append(tuple(s))
    if not settings:
        settings = [base]
    rows = []
    for L, k, N in settings:
        rng = np.random.default_rng([seed, L, k, N])
        mu = DiscreteMeasure(sample_uniform_sphere(rng, dim, N))
        nu = DiscreteMeasure(sample_uniform_sphere(rng, dim, N))
        tr = sample_trees(seed, dim, k, L)
        stsw_with_trees(mu, nu, tr[:1], threads=threads)  # warm-up
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            stsw_with_trees(mu, nu, tr, threads=threads)
            times.append(time.perf_counter() - t0)
        rows.append((L, k, N, dim, float(np.mean(times))))
    return rows


def sweep_fits(rows, trees, rays, samples) -> dict:
    fits = {}
    for axis, name, values in ((0, "L", trees), (1, "k", rays), (2, "N", samples)):
        if len(values) < 3:
            continue
        others = [i for i in range(3) if i != axis]
        base = [(trees[0], rays[0], samples[0])[i] for i in others]
        sel = [r for r in rows if [r[i] for i in others] == base]
        fits[name] = r_squared([r[axis] for r in sel], [r[4] for r in sel])
    return fits


def cmd_bench(args) -> tuple:
    rows = bench_rows(args.trees, args.rays, args.samples, args.dim, args.repeats, args.seed, resolve_threads(args.threads))
    with open(args.out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(BENCH_COLUMNS)
        for r in rows:
            wr.writerow(list(r[:4]) + [repr(r[4])])
    fits = sweep_fits(rows, args.trees, args.rays, args.samples)
    for name, r2 in fits.items():
        print(f"R2 {name} {r2:.4f}")
    return EXIT_OK, {"bench": args.out}


# ----------------------------------------------------------------------------
# replay


def cmd_replay(args) -> tuple:
    try:
        manifest = RunManifest.read(args.manifest_file)
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"cannot read manifest {args.manifest_file}: {exc}") from exc
    argv = list(manifest.argv)
    if args.manifest:
        argv += ["--manifest", os.path.abspath(args.manifest)]
    here = os.getcwd()
    os.chdir(manifest.cwd)  # relative paths in argv were recorded against this directory
    try:
        return main(argv), {}
    finally:
        os.chdir(here)


# ----------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stsw", description="Spherical tree-sliced Wasserstein tools.")
    p.add_argument("--version", action="version", version=f"stsw {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--manifest", default=None, help="manifest path (default depends on the command)")

    def estimator_flags(sp, trees=200, rays=10):
        sp.add_argument("--trees", type=int, default=trees)
        sp.add_argument("--rays", type=int, default=rays)
        sp.add_argument("--zeta", type=float, default=2.0)
        sp.add_argument("--threads", type=_threads, default="auto")

    sp = sub.add_parser("distance", help="estimate the distance between two point clouds")
    sp.add_argument("--input-a", required=True)
    sp.add_argument("--input-b", required=True)
    estimator_flags(sp)
    common(sp)
    sp.set_defaults(func=cmd_distance)

    sp = sub.add_parser("sample-tree", help="print one sampled tree as JSON")
    sp.add_argument("--dim", type=int, default=2, help="sphere dimension d")
    sp.add_argument("--rays", type=int, default=10)
    sp.add_argument("--index", type=int, default=0, help="tree index within the seeded stream")
    common(sp)
    sp.set_defaults(func=cmd_sample_tree)

    sp = sub.add_parser("flow", help="gradient flow from a uniform source to a target")
    sp.add_argument("--target", default="vmf12", help="'vmf12' or a point-cloud CSV")
    sp.add_argument("--samples", type=int, default=2400)
    sp.add_argument("--kappa", type=float, default=50.0)
    sp.add_argument("--epochs", type=int, default=500)
    sp.add_argument("--lr", type=float, default=0.01)
    sp.add_argument("--eval-every", type=int, default=50)
    sp.add_argument("--fixed-trees", action="store_true", help="use one tree set for every epoch")
    sp.add_argument("--raw-gradient", action="store_true", help="step along the raw gradient, not per unit mass")
    sp.add_argument("--out", default="flow_out")
    estimator_flags(sp, rays=5)
    common(sp)
    sp.set_defaults(func=cmd_flow)

    sp = sub.add_parser("validate", help="run the oracle and invariance checks")
    sp.add_argument("--instances", type=int, default=200)
    sp.add_argument("--inject-fault", action="store_true", help="use a broken closed form (self-test)")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("bench", help="time the estimator over grids of L, k, N")
    sp.add_argument("--trees", type=_int_list, default=[200, 400, 600, 800, 1000, 1200, 1400, 1600, 1800, 2000])
    sp.add_argument("--rays", type=_int_list, default=[5])
    sp.add_argument("--samples", type=_int_list, default=[500])
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--repeats", type=int, default=3)
    sp.add_argument("--threads", type=_threads, default=1)
    sp.add_argument("--out", default="bench.csv")
    common(sp)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    sp.add_argument("manifest_file")
    sp.add_argument("--manifest", default=None, help="where the replay writes its own manifest")
    sp.set_defaults(func=cmd_replay)
    return p


def _default_manifest(args) -> str | None:
    if args.command == "replay":
        return None
    if args.command == "flow":
        return os.path.join(args.out, "manifest.json")
    if args.command == "bench":
        return os.path.splitext(args.out)[0] + ".manifest.json"
    return f"stsw-{args.command}.manifest.json"


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        code, outputs = args.func(args)
    except UsageError as exc:
        print(f"stsw: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"stsw: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"stsw: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    manifest_path = args.manifest or _default_manifest(args)
    if manifest_path:
        # Record the argv without --manifest so a replay can choose its own.
        replay_argv = _strip_manifest_flag(argv)
        config = {k: v for k, v in vars(args).items() if k not in ("func", "manifest")}
        manifest = RunManifest(
            command=args.command,
            argv=replay_argv,
            config=config,
            seed=getattr(args, "seed", None),
            wall_time=time.perf_counter() - start,
            outputs=outputs,
        )
        try:
            manifest.write(manifest_path)
        except OSError as exc:
            print(f"stsw: error: cannot write manifest: {exc}", file=sys.stderr)
            return EXIT_USAGE
    return code


def _strip_manifest_flag(argv: list) -> list:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--manifest":
            skip = True
            continue
        if a.startswith("--manifest="):
            continue
        out.append(a)
    return out


if __name__ == "__main__":
    sys.exit(main())
