"""The nine acceptance criteria at their stated tolerances.

Each test records a one-line verdict that the terminal summary prints.
Criterion 6 runs three full 500-epoch flows (several minutes each).
"""

import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from conftest import record
from stsw.cli import bench_rows, oracle_instance, sweep_fits
from stsw.estimator import StswConfig, merge_points, stsw, stsw_with_trees
from stsw.flow import FlowConfig, run_flow, source_value_and_grad, vmf12_problem
from stsw.ot_oracle import exact_w1_tree, finite_diff_gradient
from stsw.sphere import DiscreteMeasure, random_orthogonal, sample_uniform_sphere, sample_vmf
from stsw.splitting import alpha, beta
from stsw.tree_wasserstein import closed_form_graph, project_pair, tw_closed_form, tw_on_explicit_tree
from stsw.trees import sample_trees, stack_trees

# (tree, measure, zeta) triples seen by criteria 1-5, re-checked by criterion 9.
MASS_PAIRS = []


def _instances(count=200, seed=2024):
    rng = np.random.default_rng(seed)
    return [oracle_instance(rng) for _ in range(count)]


def _random_measure(rng, d, n):
    w = rng.random(n) + 0.05
    return DiscreteMeasure(sample_uniform_sphere(rng, d, n), w / w.sum())


def test_c1_oracle_equivalence():
    start = time.perf_counter()
    worst = 0.0
    for tree, mu, nu, zeta in _instances():
        closed = tw_closed_form(project_pair(tree, mu, nu, zeta))
        worst = max(worst, abs(closed - exact_w1_tree(tree, mu, nu, zeta)))
        MASS_PAIRS.extend([(tree, mu, zeta), (tree, nu, zeta)])
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 30.0
    record(1, ok, f"closed form vs LP: max |diff| {worst:.2e} (tol 1e-9), 200 instances in {elapsed:.1f}s (limit 30s)")
    assert worst <= 1e-9
    assert elapsed < 30.0


def test_c2_explicit_graph():
    worst = 0.0
    for tree, mu, nu, zeta in _instances():
        closed = tw_closed_form(project_pair(tree, mu, nu, zeta))
        worst = max(worst, abs(closed - tw_on_explicit_tree(*closed_form_graph(tree, mu, nu, zeta))))
    record(2, worst <= 1e-10, f"closed form vs explicit tree: max |diff| {worst:.2e} (tol 1e-10)")
    assert worst <= 1e-10


def test_c3_metric_axioms():
    rng = np.random.default_rng(3)
    trees = sample_trees(3, 2, 8, 64)
    ident = slack = -np.inf
    symmetric = True
    for _ in range(100):
        a, b, c = (_random_measure(rng, 2, int(rng.integers(1, 16))) for _ in range(3))
        ident = max(ident, stsw_with_trees(a, a, trees).value)
        ab = stsw_with_trees(a, b, trees).value
        symmetric &= ab == stsw_with_trees(b, a, trees).value
        bc = stsw_with_trees(b, c, trees).value
        ac = stsw_with_trees(a, c, trees).value
        slack = max(slack, ac - ab - bc)
        MASS_PAIRS.extend((t, m, 2.0) for t in trees[:2] for m in (a, b, c))
    ok = ident <= 1e-12 and symmetric and slack <= 1e-9
    record(3, ok, f"identity max {ident:.1e} (tol 1e-12), symmetry exact: {symmetric}, triangle max slack {slack:.2e} (tol 1e-9)")
    assert ident <= 1e-12
    assert symmetric
    assert slack <= 1e-9


def test_c4_rotation_invariance():
    rng = np.random.default_rng(4)
    d = 3
    mu = _random_measure(rng, d, 15)
    nu = _random_measure(rng, d, 11)
    trees = sample_trees(4, d, 6, 32)
    base = stsw_with_trees(mu, nu, trees).value
    err_value = err_beta = 0.0
    for _ in range(50):
        g = random_orthogonal(rng, d)
        moved_trees = [t.transformed(g) for t in trees]
        moved = stsw_with_trees(mu.transformed(g), nu.transformed(g), moved_trees).value
        err_value = max(err_value, abs(moved - base))
        for y in sample_uniform_sphere(rng, d, 5):
            for t, mt in zip(trees[:4], moved_trees[:4]):
                err_beta = max(err_beta, float(np.abs(beta(mt, g.apply(y)) - beta(t, y)).max()))
        MASS_PAIRS.extend([(moved_trees[0], mu.transformed(g), 2.0), (moved_trees[0], nu.transformed(g), 2.0)])
    ok = err_value <= 1e-9 and err_beta <= 1e-9
    record(4, ok, f"value max |diff| {err_value:.2e}, beta max |diff| {err_beta:.2e} (tol 1e-9), 50 rotations")
    assert err_value <= 1e-9
    assert err_beta <= 1e-9


def _non_degenerate(a, u, b, v, trees, zeta):
    """Probe filter: coordinate gaps > 1e-3 (including from the root) and all suffix sums > 1e-6."""
    pts, uu, vv, _, _ = merge_points(a, u, b, v)
    support = DiscreteMeasure(pts)
    for tree in trees:
        c = np.arccos(np.clip(pts @ tree.root, -1.0, 1.0))
        order = np.argsort(c)
        if np.diff(c[order], prepend=0.0).min() <= 1e-3:
            return False
        m = alpha(tree, support, zeta).rows[order] * (uu - vv)[order, None]
        if np.abs(np.cumsum(m[::-1], axis=0)).min() <= 1e-6:
            return False
    return True


def test_c5_gradient_correctness():
    rng = np.random.default_rng(5)
    zeta = 2.0
    errors = []
    while len(errors) < 500:
        n = int(rng.integers(1, 21))
        m = int(rng.integers(1, 21))
        a = sample_uniform_sphere(rng, 2, n)
        b = sample_uniform_sphere(rng, 2, m)
        u = rng.random(n) + 0.05
        v = rng.random(m) + 0.05
        u /= u.sum()
        v /= v.sum()
        trees = sample_trees(int(rng.integers(2**31)), 2, 4, 8)
        if not _non_degenerate(a, u, b, v, trees, zeta):
            continue
        roots, dirs = stack_trees(trees)
        _, _, g = source_value_and_grad(a, u, b, v, roots, dirs, zeta)
        fd = finite_diff_gradient(lambda x: source_value_and_grad(x, u, b, v, roots, dirs, zeta)[0], a, h=1e-5)
        errors.append(np.linalg.norm(g - fd) / np.linalg.norm(fd))
        MASS_PAIRS.append((trees[0], DiscreteMeasure(a, u), zeta))
    frac = float(np.mean(np.asarray(errors) < 1e-4))
    record(5, frac >= 0.95, f"{frac:.1%} of 500 probes within relative error 1e-4 (need >= 95%)")
    assert frac >= 0.95


# ----------------------------------------------------------------------------
# criterion 6: the 12-vMF gradient flow

FLOW_SEEDS = (0, 1, 2)


@pytest.fixture(scope="module")
def flow_runs():
    runs = {}
    for seed in FLOW_SEEDS:
        source, target, mix = vmf12_problem(np.random.default_rng(seed), samples=2400)
        cfg = FlowConfig(
            learning_rate=0.01,
            epochs=500,
            stsw=StswConfig(num_trees=200, num_rays=5, seed=seed),
            eval_every=100,
        )
        start = time.perf_counter()
        res = run_flow(source, target, cfg, mix)
        runs[seed] = (res, time.perf_counter() - start, mix.nll(target.supports))
    return runs


def _windows_decreasing(loss, width=10):
    """Fraction of consecutive non-overlapping windows with loss[end] <= loss[start]."""
    starts = np.arange(0, loss.size - width, width)
    return float(np.mean(loss[starts + width] <= loss[starts]))


def test_c6_gradient_flow(flow_runs):
    lines = []
    checks = {"log_w2": True, "nll": True, "monotone": True, "runtime": True}
    for seed, (res, elapsed, target_nll) in flow_runs.items():
        log_w2 = res.column("log_w2")[-1]
        nll = res.column("nll")[-1]
        frac = _windows_decreasing(res.column("stsw"))
        checks["log_w2"] &= log_w2 <= -3.5
        checks["nll"] &= nll <= -4900
        checks["monotone"] &= frac >= 0.9
        checks["runtime"] &= elapsed < 600
        lines.append(
            f"seed {seed}: log W2 {log_w2:.3f}, NLL {nll:.1f} (target samples {target_nll:.1f}), "
            f"decreasing windows {frac:.0%}, {elapsed:.0f}s"
        )
    verdict = ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items())
    record(6, all(checks.values()), f"[{verdict}] " + "; ".join(lines))
    failed = [k for k, v in checks.items() if not v]
    assert not failed, f"failed parts: {failed}; " + "; ".join(lines)


# ----------------------------------------------------------------------------


def test_c7_runtime_linearity():
    grids = {
        "L": (list(range(200, 2001, 200)), [5], [500]),
        "k": ([100], [5] + list(range(50, 501, 50)), [500]),
        "N": ([100], [5], list(range(500, 10001, 500))),
    }
    fits = {}
    for name, (trees, rays, samples) in grids.items():
        rows = bench_rows(trees, rays, samples, dim=2, repeats=3, seed=0)
        fits[name] = sweep_fits(rows, trees, rays, samples)[name]
    ok = all(r2 >= 0.95 for r2 in fits.values())
    record(7, ok, "R2 " + ", ".join(f"{k} {v:.4f}" for k, v in fits.items()) + " (need >= 0.95)")
    assert ok, fits


def test_c8_kappa_trend():
    kappas = [1, 5, 10, 20, 50, 100, 200]
    uniform = DiscreteMeasure(sample_uniform_sphere(np.random.default_rng(80), 2, 500))
    mean = np.array([0.0, 0.0, 1.0])
    values = []
    for kappa in kappas:
        vmf = DiscreteMeasure(sample_vmf(np.random.default_rng(81), mean, kappa, 500))
        values.append(stsw(vmf, uniform, StswConfig(num_trees=200, num_rays=10, seed=8)).value)
    rho = spearmanr(kappas, values).statistic
    record(8, rho >= 0.9, f"Spearman {rho:.3f} (need >= 0.9); values " + ", ".join(f"{v:.3f}" for v in values))
    assert rho >= 0.9


def test_c9_mass_conservation():
    assert MASS_PAIRS, "run together with criteria 1-5"
    worst = 0.0
    for tree, measure, zeta in MASS_PAIRS:
        rows = alpha(tree, measure, zeta).rows
        worst = max(worst, abs(float((rows * measure.weights[:, None]).sum()) - 1.0))
    record(9, worst <= 1e-10, f"max |total projected mass - 1| {worst:.2e} over {len(MASS_PAIRS)} (tree, measure) pairs")
    assert worst <= 1e-10
