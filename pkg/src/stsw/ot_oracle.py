"""Exact optimal transport at desk scale, used to validate the closed form.

Two solvers are implemented here rather than imported, so that the checks they
back stay independent of any outside OT code:

* ``network_simplex``: primal transportation simplex on the bipartite graph
  (spanning-tree bases, Dantzig pricing, Bland's rule after stalling).
* ``solve_assignment``: shortest augmenting paths with dual potentials
  (Hungarian / Jonker-Volgenant family) for square problems with uniform weights.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .sphere import DiscreteMeasure, geodesic_distance
from .splitting import alpha_batch
from .trees import SphericalTree, TreePoint, tree_metric

MAX_TREE_ATOMS = 64
MAX_ASSIGNMENT_N = 4096
MAX_LP_CELLS = 10**6
DEFAULT_FD_STEP = 1e-5


def check_cost_matrix(cost) -> np.ndarray:
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    if not np.all(np.isfinite(c)) or np.any(c < 0):
        raise ValueError("cost matrix entries must be finite and nonnegative")
    return c


def _northwest_corner(a: np.ndarray, b: np.ndarray):
    m, n = a.size, b.size
    ra, rb = a.copy(), b.copy()
    flow = {}
    i = j = 0
    while True:
        x = min(ra[i], rb[j])
        flow[(i, j)] = x
        ra[i] -= x
        rb[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if j == n - 1 or (i < m - 1 and ra[i] <= rb[j]):
            i += 1
        else:
            j += 1
    return flow


def network_simplex(supply, demand, cost, tol: float = 1e-12, max_iter: int = 100_000):
    """Minimum-cost transport plan between ``supply`` (m,) and ``demand`` (n,).

    Totals must agree to 1e-9; the last demand entry absorbs round-off.
    Returns (optimal cost, plan of shape (m, n)).
    """
    a = np.asarray(supply, dtype=np.float64).copy()
    b = np.asarray(demand, dtype=np.float64).copy()
    c = check_cost_matrix(cost)
    m, n = a.size, b.size
    if c.shape != (m, n):
        raise ValueError(f"cost shape {c.shape} does not match ({m}, {n})")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("masses must be nonnegative")
    if abs(a.sum() - b.sum()) > 1e-9:
        raise ValueError(f"unbalanced transport problem: {a.sum()} vs {b.sum()}")
    b[-1] = max(0.0, b[-1] + (a.sum() - b.sum()))

    flow = _northwest_corner(a, b)
    # Bipartite basis tree: row nodes 0..m-1, column nodes m..m+n-1.
    adj = [set() for _ in range(m + n)]
    for i, j in flow:
        adj[i].add(m + j)
        adj[m + j].add(i)

    degenerate_run = 0
    for _ in range(max_iter):
        pot = _potentials(adj, flow, c, m, n)
        reduced = c - pot[:m, None] - pot[None, m:]
        bland = degenerate_run > m + n
        if bland:
            neg = np.flatnonzero(reduced.ravel() < -tol)
            if neg.size == 0:
                break
            ei, ej = divmod(int(neg[0]), n)
        else:
            idx = int(np.argmin(reduced))
            ei, ej = divmod(idx, n)
            if reduced[ei, ej] >= -tol:
                break
        path = _tree_path(adj, m + ej, ei)  # column ej ... row ei
        # Cycle cells: entering (+), then alternate along the path back to ej.
        cells = []
        for s in range(len(path) - 1):
            u_, v_ = path[s], path[s + 1]
            cells.append((u_, v_ - m) if u_ < m else (v_, u_ - m))
        cells.reverse()
        minus = cells[0::2]
        theta = min(flow[cell] for cell in minus)
        candidates = [cell for cell in minus if flow[cell] <= theta]
        leave = min(candidates) if bland else candidates[0]
        degenerate_run = degenerate_run + 1 if theta <= 0.0 else 0
        flow[(ei, ej)] = 0.0
        for s, cell in enumerate(cells):
            flow[cell] += -theta if s % 2 == 0 else theta
        flow[(ei, ej)] = theta
        del flow[leave]
        adj[leave[0]].discard(m + leave[1])
        adj[m + leave[1]].discard(leave[0])
        adj[ei].add(m + ej)
        adj[m + ej].add(ei)
    else:
        raise RuntimeError("network simplex did not converge")

    plan = np.zeros((m, n))
    for (i, j), x in flow.items():
        plan[i, j] = max(x, 0.0)
    return float(np.sum(plan * c)), plan


def _potentials(adj, flow, c, m, n) -> np.ndarray:
    pot = np.full(m + n, np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if np.isnan(pot[nb]):
                if node < m:
                    pot[nb] = c[node, nb - m] - pot[node]
                else:
                    pot[nb] = c[nb, node - m] - pot[node]
                queue.append(nb)
    if np.isnan(pot).any():
        raise RuntimeError("basis is not a spanning tree")
    return pot


def _tree_path(adj, start: int, goal: int) -> list:
    prev = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nb in adj[node]:
            if nb not in prev:
                prev[nb] = node
                queue.append(nb)
    path = [goal]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


def solve_assignment(cost) -> tuple:
    """Minimum-cost perfect matching of a square cost matrix.

    Returns (total cost, col_of_row).  Starts from a column reduction with a
    greedy tight matching, then augments each free row along a shortest path
    in reduced costs.
    """
    c = check_cost_matrix(cost)
    n = c.shape[0]
    if c.shape != (n, n):
        raise ValueError("assignment needs a square cost matrix")
    if n == 0:
        return 0.0, np.zeros(0, dtype=int)
    u = np.zeros(n)
    v = c.min(axis=0)
    row_of_col = np.full(n, -1)
    col_of_row = np.full(n, -1)
    for j in range(n):
        i = int(np.argmin(c[:, j]))
        if col_of_row[i] < 0:
            col_of_row[i] = j
            row_of_col[j] = i

    for free in np.flatnonzero(col_of_row < 0):
        dist = c[free] - u[free] - v
        pred = np.full(n, free)
        scanned = np.zeros(n, dtype=bool)
        while True:
            j = int(np.argmin(np.where(scanned, np.inf, dist)))
            delta = dist[j]
            i = row_of_col[j]
            if i < 0:
                break
            scanned[j] = True
            cand = delta + c[i] - u[i] - v
            better = (~scanned) & (cand < dist)
            dist[better] = cand[better]
            pred[better] = i
        # Shift potentials by the shortest-path distances: all reduced costs stay
        # nonnegative and every edge on the augmenting path becomes tight.
        sc = np.flatnonzero(scanned)
        shift = delta - dist[sc]
        u[row_of_col[sc]] += shift
        v[sc] -= shift
        u[free] += delta
        while True:
            i = pred[j]
            row_of_col[j] = i
            j, col_of_row[i] = col_of_row[i], j
            if i == free:
                break
    total = float(c[np.arange(n), col_of_row].sum())
    return total, col_of_row


def tree_atoms(tree: SphericalTree, measure: DiscreteMeasure, zeta: float):
    """Pushed-forward atoms of ``measure`` on ``tree``: lists of TreePoint and masses.

    Zero-mass atoms are dropped.
    """
    pts = measure.supports
    c = np.arccos(np.clip(pts @ tree.root, -1.0, 1.0))
    a = alpha_batch(pts, tree.root[None, :], tree.directions[None], zeta)[0]
    points, masses = [], []
    for j in range(pts.shape[0]):
        for i in range(tree.k):
            m = a[j, i] * measure.weights[j]
            if m > 0.0:
                points.append(TreePoint(i, float(c[j])))
                masses.append(m)
    return points, np.asarray(masses)


def exact_w1_tree(tree: SphericalTree, mu: DiscreteMeasure, nu: DiscreteMeasure, zeta: float) -> float:
    """W1 between the two pushed-forward measures with the tree metric, by LP."""
    for meas in (mu, nu):
        if np.count_nonzero(meas.weights) * tree.k > MAX_TREE_ATOMS:
            raise ValueError(f"more than {MAX_TREE_ATOMS} atoms per measure; too large for the exact oracle")
    pa, ma = tree_atoms(tree, mu, zeta)
    pb, mb = tree_atoms(tree, nu, zeta)
    cost = np.array([[tree_metric(p, q) for q in pb] for p in pa])
    value, _ = network_simplex(ma, mb, cost)
    return value


def exact_w2_sphere(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """W2 with squared geodesic ground cost, solved exactly."""
    if mu.dim != nu.dim:
        raise ValueError("dimension mismatch")
    cost = geodesic_distance(mu.supports[:, None, :], nu.supports[None, :, :]) ** 2
    uniform = (
        mu.n == nu.n
        and np.all(mu.weights == mu.weights[0])
        and np.all(nu.weights == nu.weights[0])
    )
    if uniform:
        if mu.n > MAX_ASSIGNMENT_N:
            raise ValueError(f"assignment limited to n <= {MAX_ASSIGNMENT_N}")
        total, _ = solve_assignment(cost)
        return float(np.sqrt(max(total / mu.n, 0.0)))
    if mu.n * nu.n > MAX_LP_CELLS:
        raise ValueError(f"transport LP limited to n*m <= {MAX_LP_CELLS}")
    total, _ = network_simplex(mu.weights, nu.weights, cost)
    return float(np.sqrt(max(total, 0.0)))


def finite_diff_gradient(f, supports, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central differences of scalar ``f(supports)`` w.r.t. every ambient coordinate."""
    if h <= 0:
        raise ValueError("step must be positive")
    x = np.array(supports, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        orig = x[idx]
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad
