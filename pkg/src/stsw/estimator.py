"""Monte Carlo estimator of the spherical tree-sliced Wasserstein distance.

The distance is the mean, over L independently sampled spherical trees, of the
closed-form tree-Wasserstein value between the two pushed-forward measures.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .sphere import DiscreteMeasure
from .splitting import DEFAULT_ZETA
from .tree_wasserstein import tw_batch
from .trees import SphericalTree, sample_trees, stack_trees

THREADS_ENV = "STSW_THREADS"
# Upper bound on B*n*k elements per batched block.
_BLOCK_ELEMS = 1 << 21


@dataclass(frozen=True)
class StswConfig:
    num_trees: int = 200
    num_rays: int = 10
    zeta: float = DEFAULT_ZETA
    seed: int = 0
    threads: int | str = "auto"

    def __post_init__(self):
        if self.num_trees < 1 or self.num_rays < 1:
            raise ValueError("num_trees and num_rays must be >= 1")
        if not (self.threads == "auto" or (isinstance(self.threads, int) and self.threads >= 1)):
            raise ValueError("threads must be a positive integer or 'auto'")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StswResult:
    value: float
    per_tree: np.ndarray
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def stderr(self) -> float:
        if self.per_tree.size < 2:
            return 0.0
        return float(self.per_tree.std(ddof=1) / np.sqrt(self.per_tree.size))


def resolve_threads(threads) -> int:
    if threads == "auto":
        env = os.environ.get(THREADS_ENV)
        if env:
            return max(1, int(env))
        return os.cpu_count() or 1
    return int(threads)


def merge_points(a_pts, a_w, b_pts, b_w):
    """Common support list for two weighted point sets (raw arrays).

    Returns (points, u, v, inv_a, inv_b) with ``points[inv_a] == a_pts``.
    Exactly coincident points are merged and the list is sorted
    lexicographically, so the result does not depend on argument order or on
    the order of points inside each set.
    """
    if a_pts.shape[1] != b_pts.shape[1]:
        raise ValueError(f"dimension mismatch: {a_pts.shape[1]} vs {b_pts.shape[1]} coordinates")
    pts, inverse = np.unique(np.vstack([a_pts, b_pts]), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    na = a_pts.shape[0]
    u = np.zeros(pts.shape[0])
    v = np.zeros(pts.shape[0])
    np.add.at(u, inverse[:na], a_w)
    np.add.at(v, inverse[na:], b_w)
    return pts, u, v, inverse[:na], inverse[na:]


def merge_measures(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """(points, u, v) for two measures on a shared support list."""
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: S^{mu.dim} vs S^{nu.dim}")
    pts, u, v, _, _ = merge_points(mu.supports, mu.weights, nu.supports, nu.weights)
    return pts, u, v


def block_size(n: int, k: int) -> int:
    """Trees per batched block; depends on problem size only, never on threads."""
    return max(1, _BLOCK_ELEMS // max(1, n * k))


def _map_blocks(fn, num_trees: int, bsize: int, threads: int) -> list:
    starts = list(range(0, num_trees, bsize))
    if threads <= 1 or len(starts) == 1:
        return [fn(s, min(s + bsize, num_trees)) for s in starts]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: fn(s, min(s + bsize, num_trees)), starts))


def per_tree_values(points, w, roots, directions, zeta: float, threads: int = 1) -> np.ndarray:
    n = points.shape[0]
    k = directions.shape[1]
    bsize = block_size(n, k)
    blocks = _map_blocks(
        lambda s, e: tw_batch(points, w, roots[s:e], directions[s:e], zeta), roots.shape[0], bsize, threads
    )
    return np.concatenate(blocks)


def stsw_with_trees(mu: DiscreteMeasure, nu: DiscreteMeasure, trees, zeta: float = DEFAULT_ZETA, threads=1) -> StswResult:
    """Estimator over a fixed list of trees (no randomness)."""
    start = time.perf_counter()
    roots, dirs = stack_trees(trees)
    if roots.shape[1] != mu.supports.shape[1]:
        raise ValueError("trees and measures live on spheres of different dimension")
    pts, u, v = merge_measures(mu, nu)
    vals = per_tree_values(pts, u - v, roots, dirs, zeta, resolve_threads(threads))
    return StswResult(
        value=float(vals.mean()),
        per_tree=vals,
        config={"num_trees": len(vals), "num_rays": dirs.shape[1], "zeta": zeta},
        wall_time=time.perf_counter() - start,
    )


def stsw(mu: DiscreteMeasure, nu: DiscreteMeasure, config: StswConfig = StswConfig()) -> StswResult:
    start = time.perf_counter()
    if mu.supports.shape[1] != nu.supports.shape[1]:
        raise ValueError(f"dimension mismatch: S^{mu.dim} vs S^{nu.dim}")
    trees = sample_trees(config.seed, mu.dim, config.num_rays, config.num_trees)
    res = stsw_with_trees(mu, nu, trees, config.zeta, config.threads)
    res.config = config.to_dict()
    res.wall_time = time.perf_counter() - start
    return res


def sample_tree_arrays(seed, d: int, k: int, num_trees: int) -> tuple:
    """Sampled trees stacked as (roots, directions) arrays."""
    trees: list[SphericalTree] = sample_trees(seed, d, k, num_trees)
    return stack_trees(trees)
