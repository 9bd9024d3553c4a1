"""Gradient flow on the sphere driven by the tree-sliced distance.

Contains the analytic gradient of the fixed-tree estimator with respect to the
source supports, the 12-component vMF target, the vMF mixture density used for
NLL reporting, and the projected gradient descent loop.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .estimator import StswConfig, block_size, merge_points, resolve_threads, _map_blocks
from .ot_oracle import exact_w2_sphere
from .sphere import DiscreteMeasure, normalize_rows, sample_uniform_sphere, sample_vmf
from .splitting import alpha_kn, beta_parts
from .tree_wasserstein import sort_masses
from .trees import sample_trees, stack_trees

log = logging.getLogger(__name__)

# Floor on 1 - cos^2 before taking inverse square roots in arccos derivatives.
_ARCCOS_GUARD = 1e-12


# ----------------------------------------------------------------------------
# analytic gradient


def value_and_grad_batch(points, w, roots, directions, zeta: float):
    """Per-tree values and the gradient of their sum w.r.t. ``points``.

    points (n, D), w (n,), roots (B, D), directions (B, k, D).
    Returns (values (B,), grad (n, D)).

    The sort order is frozen at the forward pass.  Within a group of exactly
    tied coordinates the coordinate derivative is the mean of the one-sided
    derivatives, which is zero when the tied masses cancel.
    """
    B, k, n = directions.shape[0], directions.shape[1], points.shape[0]
    parts = beta_parts(points, roots, directions)
    t = parts.t
    c = np.arccos(np.clip(t, -1.0, 1.0))
    alpha = alpha_kn(parts.beta, zeta)  # (B, k, n)
    sm = sort_masses(c, alpha, w)
    abs_sum = np.abs(sm.suffix).sum(axis=1)  # (B, n)
    values = np.einsum("bn,bn->b", sm.dc, abs_sum)

    # d value / d c_p in sorted order.
    if np.any(sm.cs[:, 1:] == sm.cs[:, :-1]):
        g_c_sorted = _tied_coord_grad(sm)
    else:
        g_c_sorted = abs_sum.copy()
        g_c_sorted[:, :-1] -= abs_sum[:, 1:]

    # d value / d alpha_{i,p} = w_p * sum_{j <= p} dc_j sign(S_{i,j}).
    g_alpha_sorted = np.cumsum(sm.dc[:, None, :] * np.sign(sm.suffix), axis=2)
    g_alpha_sorted *= sm.ws[:, None, :]

    g_c = np.empty_like(g_c_sorted)
    np.put_along_axis(g_c, sm.order, g_c_sorted, axis=1)
    g_alpha = np.empty_like(g_alpha_sorted)
    np.put_along_axis(g_alpha, np.broadcast_to(sm.order[:, None, :], g_alpha.shape), g_alpha_sorted, axis=2)

    g_beta = zeta * alpha * (g_alpha - (alpha * g_alpha).sum(axis=1, keepdims=True))

    # beta_i = rho * arccos(z_i) with rho = |a - t x|, e = (a - t x) / rho, z_i = <a, y_i> / rho:
    # d beta_i / da = -(y_i - z_i e) / sqrt(1 - z_i^2) + arccos(z_i) e.
    z = parts.z
    inv_s = 1.0 / np.sqrt(np.maximum(1.0 - z * z, _ARCCOS_GUARD))
    inv_s *= np.abs(parts.z_raw) < 1.0
    if parts.pole.any():
        g_beta *= ~parts.pole[:, None, :]
    gb_s = g_beta * inv_s
    coef_e = (gb_s * z + g_beta * parts.acz).sum(axis=1) / parts.rho  # (B, n)
    coef_root = -coef_e * t
    # arc coordinate c = arccos t
    c_live = np.abs(t) < 1.0
    coef_root -= c_live * g_c / np.sqrt(np.maximum(1.0 - t * t, _ARCCOS_GUARD))

    grad = coef_e.sum(axis=0)[:, None] * points
    grad += coef_root.T @ roots
    grad -= gb_s.reshape(B * k, n).T @ directions.reshape(B * k, -1)
    return values, grad


def _tied_coord_grad(sm) -> np.ndarray:
    """Coordinate derivative (sorted order) when some coordinates tie exactly."""
    B, n = sm.cs.shape
    idx = np.broadcast_to(np.arange(n), (B, n))
    new_group = np.ones((B, n), dtype=bool)
    new_group[:, 1:] = sm.cs[:, 1:] != sm.cs[:, :-1]
    start = np.maximum.accumulate(np.where(new_group, idx, 0), axis=1)
    group_end = np.ones((B, n), dtype=bool)
    group_end[:, :-1] = new_group[:, 1:]
    end = np.minimum.accumulate(np.where(group_end, idx, n - 1)[:, ::-1], axis=1)[:, ::-1]
    padded = np.concatenate([sm.suffix, np.zeros(sm.suffix.shape[:2] + (1,))], axis=2)
    head = np.take_along_axis(padded, start[:, None, :], axis=2)
    tail = np.take_along_axis(padded, (end + 1)[:, None, :], axis=2)
    right = (np.abs(tail + sm.m) - np.abs(tail)).sum(axis=1)
    left = (np.abs(head) - np.abs(head - sm.m)).sum(axis=1)
    return 0.5 * (right + left)


def _value_and_grad(points, w, roots, directions, zeta, threads=1):
    n, k = points.shape[0], directions.shape[1]
    blocks = _map_blocks(
        lambda s, e: value_and_grad_batch(points, w, roots[s:e], directions[s:e], zeta),
        roots.shape[0],
        block_size(n, k) // 4 or 1,
        threads,
    )
    values = np.concatenate([b[0] for b in blocks])
    grad = blocks[0][1].copy()
    for b in blocks[1:]:
        grad += b[1]
    return values, grad / roots.shape[0]


def source_value_and_grad(src_pts, u, tgt_pts, v, roots, directions, zeta, threads=1):
    """Fixed-tree estimator and its gradient w.r.t. each source support.

    Works on raw arrays (no renormalization), so it is a plain function of the
    ambient source coordinates.  Returns (mean value, per-tree values, grad (n_src, D)).
    """
    pts, uu, vv, inv_src, _ = merge_points(src_pts, u, tgt_pts, v)
    values, g = _value_and_grad(pts, uu - vv, roots, directions, zeta, threads)
    # Exactly coincident source atoms share their merged support's gradient by mass.
    share = np.divide(u, uu[inv_src], out=np.zeros_like(u), where=uu[inv_src] > 0)
    return float(values.mean()), values, g[inv_src] * share[:, None]


def stsw_grad(source: DiscreteMeasure, target: DiscreteMeasure, trees, zeta: float) -> np.ndarray:
    """Ambient gradient of the fixed-tree estimator w.r.t. source supports, shape (n, d+1)."""
    roots, dirs = stack_trees(trees)
    _, _, g = source_value_and_grad(source.supports, source.weights, target.supports, target.weights, roots, dirs, zeta)
    return g


# ----------------------------------------------------------------------------
# vMF mixture target and density


@dataclass(frozen=True)
class VmfMixture:
    means: np.ndarray  # (m, d+1)
    kappa: float

    def __post_init__(self):
        mu = np.array(self.means, dtype=np.float64, ndmin=2)
        if np.any(np.abs(np.linalg.norm(mu, axis=1) - 1.0) > 1e-12):
            raise ValueError("mixture means must be unit vectors")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        object.__setattr__(self, "means", mu)

    def sample(self, rng: np.random.Generator, per_component: int) -> np.ndarray:
        return np.vstack([sample_vmf(rng, m, self.kappa, per_component) for m in self.means])

    def log_density(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        d = self.means.shape[1] - 1
        comp = log_vmf_normalizer(d, self.kappa) + self.kappa * (x @ self.means.T)
        top = comp.max(axis=1, keepdims=True)
        return (top + np.log(np.exp(comp - top).mean(axis=1, keepdims=True)))[:, 0]

    def nll(self, x) -> float:
        """Negative log-likelihood of the points, summed over points."""
        return float(-self.log_density(x).sum())


def target_12vmf(kappa: float = 50.0) -> VmfMixture:
    """Twelve vMF components centred on the vertices of an icosahedron."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    raw = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]  # fmt: skip
    return VmfMixture(normalize_rows(np.array(raw, dtype=np.float64)), kappa)


def log_bessel_iv(order: float, x: float) -> float:
    """log I_order(x) for order >= 0, x >= 0.

    Power series summed in log space up to x = 300, Hankel asymptotic above.
    """
    if x < 0 or order < 0:
        raise ValueError("need order >= 0 and x >= 0")
    if x == 0.0:
        return 0.0 if order == 0 else -math.inf
    if x <= 300.0:
        half = math.log(x / 2.0)
        n_terms = int(x + 12.0 * math.sqrt(x) + 40.0)
        m = np.arange(n_terms, dtype=np.float64)
        lg_m1 = np.array([math.lgamma(k + 1.0) for k in range(n_terms)])
        lg_mv = np.array([math.lgamma(k + order + 1.0) for k in range(n_terms)])
        logs = (2.0 * m + order) * half - lg_m1 - lg_mv
        top = logs.max()
        return float(top + math.log(np.exp(logs - top).sum()))
    mu = 4.0 * order * order
    term, total = 1.0, 1.0
    for k in range(1, 30):
        term *= -(mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    return x - 0.5 * math.log(2.0 * math.pi * x) + math.log(total)


def log_vmf_normalizer(d: int, kappa: float) -> float:
    """log C(kappa) for the vMF density C(kappa) exp(kappa <mu, x>) on S^d."""
    p = d + 1
    if kappa == 0:
        return -(math.log(2.0) + (p / 2.0) * math.log(math.pi) - math.lgamma(p / 2.0))
    nu = p / 2.0 - 1.0
    return nu * math.log(kappa) - (p / 2.0) * math.log(2.0 * math.pi) - log_bessel_iv(nu, kappa)


# ----------------------------------------------------------------------------
# projected gradient descent


@dataclass(frozen=True)
class FlowConfig:
    learning_rate: float = 0.01
    epochs: int = 500
    stsw: StswConfig = field(default_factory=lambda: StswConfig(num_trees=200, num_rays=5))
    eval_every: int = 50
    resample_trees: bool = True
    # Scale each support's step by 1 / its mass (particle velocity).
    mass_normalized: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


@dataclass
class FlowResult:
    trajectory: list  # rows of (epoch, stsw, log_w2, nll, wall_time_s)
    final: DiscreteMeasure

    def column(self, name: str) -> np.ndarray:
        i = TRAJECTORY_COLUMNS.index(name)
        return np.array([row[i] for row in self.trajectory], dtype=np.float64)


TRAJECTORY_COLUMNS = ("epoch", "stsw", "log_w2", "nll", "wall_time_s")


def run_flow(source0: DiscreteMeasure, target: DiscreteMeasure, config: FlowConfig, density: VmfMixture | None = None) -> FlowResult:
    """Move the source supports by projected gradient descent on the estimator.

    Tree draws are seeded from ``config.stsw.seed`` (one stream per epoch and
    tree index when resampling), so runs are reproducible.
    """
    if source0.dim != target.dim:
        raise ValueError("source and target live on different spheres")
    cfg = config.stsw
    threads = resolve_threads(cfg.threads)
    d = source0.dim
    x = source0.supports.copy()
    u = source0.weights
    step_scale = 1.0 / u[:, None] if config.mass_normalized else 1.0
    fixed = None
    if not config.resample_trees:
        fixed = stack_trees(sample_trees(cfg.seed, d, cfg.num_rays, cfg.num_trees))

    rows = []
    start = time.perf_counter()
    for epoch in range(config.epochs + 1):
        if fixed is None:
            roots, dirs = stack_trees(sample_trees((cfg.seed, epoch), d, cfg.num_rays, cfg.num_trees))
        else:
            roots, dirs = fixed
        value, _, grad = source_value_and_grad(x, u, target.supports, target.weights, roots, dirs, cfg.zeta, threads)
        log_w2 = nll = math.nan
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            current = DiscreteMeasure(x, u)
            log_w2 = math.log(max(exact_w2_sphere(current, target), 1e-300))
            if density is not None:
                nll = density.nll(x)
        rows.append((epoch, value, log_w2, nll, time.perf_counter() - start))
        if epoch == config.epochs:
            break
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient at epoch {epoch}")
        step = config.learning_rate * step_scale * grad
        # Rows that do not move are left bit-identical; renormalizing an
        # already-unit row can flip its last bits and split coincident atoms.
        moving = np.any(step != 0.0, axis=1)
        x = x.copy()
        x[moving] = normalize_rows(x[moving] - step[moving])
        if epoch % 50 == 0:
            log.info("epoch %d stsw %.6g", epoch, value)
    return FlowResult(rows, DiscreteMeasure(x, u))


def write_trajectory(path, result: FlowResult):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(TRAJECTORY_COLUMNS)
        for row in result.trajectory:
            wr.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def vmf12_problem(rng: np.random.Generator, samples: int = 2400):
    """Uniform source and 12-vMF target point clouds of equal size."""
    mix = target_12vmf()
    per = samples // 12
    if per * 12 != samples:
        raise ValueError("samples must be a multiple of 12")
    target = DiscreteMeasure(mix.sample(rng, per))
    source = DiscreteMeasure(sample_uniform_sphere(rng, 2, samples))
    return source, target, mix
