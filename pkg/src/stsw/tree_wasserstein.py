"""Wasserstein-1 between two measures pushed onto one spherical tree.

Both measures live on a common support list.  After sorting supports by their
arc coordinate c_j, the transport cost is

    sum_j (c_j - c_{j-1}) * sum_i | sum_{p >= j} alpha_{p,i} (u_p - v_p) |

with c_0 = 0: on ray i, the segment (c_{j-1}, c_j] is crossed by exactly the
net mass that sits at or beyond c_j on that ray.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .sphere import DiscreteMeasure
from .splitting import alpha_batch, alpha_kn, beta_parts
from .trees import SphericalTree


@dataclass(frozen=True)
class ProjectedPair:
    """Sorted arc coordinates and the per-ray mass difference at each of them."""

    coords: np.ndarray  # (n,), nondecreasing in [0, pi]
    mass_diff: np.ndarray  # (n, k)

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        m = np.asarray(self.mass_diff, dtype=np.float64)
        if m.ndim != 2 or c.shape != (m.shape[0],):
            raise ValueError("coords must be (n,) and mass_diff (n, k)")
        if np.any(np.diff(c) < 0) or c.size and (c[0] < 0 or c[-1] > np.pi):
            raise ValueError("coords must be sorted within [0, pi]")
        if abs(m.sum()) > 1e-10:
            raise ValueError(f"mass difference does not balance (total {m.sum():.3g})")
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "mass_diff", m)


def project_pair(tree: SphericalTree, mu: DiscreteMeasure, nu: DiscreteMeasure, zeta: float) -> ProjectedPair:
    """Push mu and nu (which must share their support list) onto ``tree``."""
    if mu.supports.shape != nu.supports.shape or not np.array_equal(mu.supports, nu.supports):
        raise ValueError("mu and nu must share the same support list; merge them first")
    if mu.supports.shape[1] != tree.root.shape[0]:
        raise ValueError("measure and tree dimensions differ")
    pts = mu.supports
    c = np.arccos(np.clip(pts @ tree.root, -1.0, 1.0))
    a = alpha_batch(pts, tree.root[None, :], tree.directions[None], zeta)[0]
    order = np.argsort(c, kind="stable")
    diff = a * (mu.weights - nu.weights)[:, None]
    return ProjectedPair(c[order], diff[order])


def tw_closed_form(pair: ProjectedPair) -> float:
    c = pair.coords
    m = pair.mass_diff
    acc = np.zeros(m.shape[1])
    total = 0.0
    # Single reverse sweep; acc holds the per-ray suffix sum from index j on.
    for j in range(c.shape[0] - 1, -1, -1):
        acc += m[j]
        prev = c[j - 1] if j > 0 else 0.0
        total += (c[j] - prev) * np.abs(acc).sum()
    return float(total)


@dataclass
class SortedMasses:
    """Batched projected masses in coordinate order, rays on axis 1.

    order (B, n) sorts each tree's coordinates; cs = sorted coordinates;
    ws = w[order]; m (B, k, n) = alpha * w in sorted order; suffix = reverse
    cumulative sum of m along the support axis; dc = gaps of cs with c_0 = 0.
    """

    order: np.ndarray
    cs: np.ndarray
    ws: np.ndarray
    m: np.ndarray
    suffix: np.ndarray
    dc: np.ndarray


def sort_masses(c: np.ndarray, alpha: np.ndarray, w: np.ndarray) -> SortedMasses:
    order = np.argsort(c, axis=1, kind="stable")
    cs = np.take_along_axis(c, order, axis=1)
    ws = w[order]
    m = np.take_along_axis(alpha, order[:, None, :], axis=2) * ws[:, None, :]
    suffix = np.cumsum(m[..., ::-1], axis=2)[..., ::-1]
    dc = np.diff(cs, axis=1, prepend=0.0)
    return SortedMasses(order, cs, ws, m, suffix, dc)


def tw_batch(points: np.ndarray, w: np.ndarray, roots: np.ndarray, directions: np.ndarray, zeta: float) -> np.ndarray:
    """Closed-form value for B trees at once.

    points (n, D) shared supports, w (n,) = u - v, roots (B, D),
    directions (B, k, D)  ->  (B,) tree-Wasserstein values.
    """
    parts = beta_parts(points, roots, directions)
    c = np.arccos(np.clip(parts.t, -1.0, 1.0))
    sm = sort_masses(c, alpha_kn(parts.beta, zeta), w)
    return np.einsum("bn,bn->b", sm.dc, np.abs(sm.suffix).sum(axis=1))


def tw_on_explicit_tree(num_nodes: int, edges, mu_masses, nu_masses, root: int = 0) -> float:
    """Tree-Wasserstein on an explicit weighted tree:
    sum over edges of length * |mu(subtree) - nu(subtree)|.

    ``edges`` is an iterable of (u, v, length); orientation does not matter.
    The two mass vectors must have equal totals.
    """
    mu_masses = np.asarray(mu_masses, dtype=np.float64)
    nu_masses = np.asarray(nu_masses, dtype=np.float64)
    if mu_masses.shape != (num_nodes,) or nu_masses.shape != (num_nodes,):
        raise ValueError("need one mass per node")
    if abs(mu_masses.sum() - nu_masses.sum()) > 1e-10:
        raise ValueError("mass totals differ")
    adj = defaultdict(list)
    n_edges = 0
    for u, v, length in edges:
        if u == v:
            raise ValueError(f"self-loop at node {u}")
        adj[u].append((v, float(length)))
        adj[v].append((u, float(length)))
        n_edges += 1
    if n_edges != num_nodes - 1:
        raise ValueError(f"{n_edges} edges on {num_nodes} nodes cannot form a tree (cycle or disconnected)")

    parent = np.full(num_nodes, -1)
    parent_len = np.zeros(num_nodes)
    seen = np.zeros(num_nodes, dtype=bool)
    seen[root] = True
    order = [root]
    stack = [root]
    while stack:
        node = stack.pop()
        for nb, length in adj[node]:
            if nb == parent[node]:
                continue
            if seen[nb]:
                raise ValueError("cycle detected in edge list")
            seen[nb] = True
            parent[nb] = node
            parent_len[nb] = length
            order.append(nb)
            stack.append(nb)
    if not seen.all():
        raise ValueError("edge list does not connect every node")

    diff = mu_masses - nu_masses
    total = 0.0
    for node in reversed(order[1:]):
        total += parent_len[node] * abs(diff[node])
        diff[parent[node]] += diff[node]
    return float(total)


def closed_form_graph(tree: SphericalTree, mu: DiscreteMeasure, nu: DiscreteMeasure, zeta: float):
    """The explicit graph behind the closed form, built directly from the measures.

    Node 0 is the root; node 1 + i*n + j is support j's crossing point on ray i.
    Nodes on a ray are chained in coordinate order.  Returns
    (num_nodes, edges, mu_masses, nu_masses).
    """
    if not np.array_equal(mu.supports, nu.supports):
        raise ValueError("mu and nu must share the same support list")
    pts = mu.supports
    n = pts.shape[0]
    k = tree.k
    c = np.arccos(np.clip(pts @ tree.root, -1.0, 1.0))
    a = alpha_batch(pts, tree.root[None, :], tree.directions[None], zeta)[0]
    rank = sorted(range(n), key=lambda j: c[j])
    num_nodes = 1 + n * k
    edges = []
    mu_m = np.zeros(num_nodes)
    nu_m = np.zeros(num_nodes)
    for i in range(k):
        prev_node, prev_c = 0, 0.0
        for j in rank:
            node = 1 + i * n + j
            edges.append((prev_node, node, c[j] - prev_c))
            mu_m[node] = a[j, i] * mu.weights[j]
            nu_m[node] = a[j, i] * nu.weights[j]
            prev_node, prev_c = node, c[j]
    return num_nodes, edges, mu_m, nu_m
