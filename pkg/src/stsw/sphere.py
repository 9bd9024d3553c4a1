"""Geometry of the unit hypersphere S^d embedded in R^(d+1).

Points are plain float64 numpy arrays of shape (d+1,) or (n, d+1).
Randomness always comes from a caller-supplied ``numpy.random.Generator``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

# 1 - <x, y> below this means y sits at the projection pole x.
EPS_POLE = 1e-9
UNIT_TOL = 1e-12


class _AtInfinity:
    """Marker returned by stereographic projection of the pole itself."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "AT_INFINITY"


AT_INFINITY = _AtInfinity()


def unit_vector(coords) -> np.ndarray:
    """Return ``coords`` as a float64 unit vector (renormalized)."""
    v = np.asarray(coords, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise ValueError(f"expected a 1-D vector with at least 2 coordinates, got shape {v.shape}")
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or norm == 0.0:
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / norm


def normalize_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _check_same_dim(a: np.ndarray, b: np.ndarray):
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def geodesic_distance(a, b):
    """Great-circle distance ``arccos<a, b>``, broadcasting over leading axes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_dim(a, b)
    return np.arccos(np.clip(np.sum(a * b, axis=-1), -1.0, 1.0))


def stereographic_project(x, y):
    """Project ``y`` from the pole ``x`` onto the hyperplane through 0 orthogonal to ``x``.

    Returns ``AT_INFINITY`` when ``y`` coincides with the pole (within ``EPS_POLE``).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_same_dim(x, y)
    gap = 1.0 - float(x @ y)
    if gap < EPS_POLE:
        return AT_INFINITY
    return (-(x @ y) / gap) * x + y / gap


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point cloud on S^d.

    ``supports`` has shape (n, d+1) and is renormalized row-wise on construction;
    ``weights`` default to uniform and must sum to one.
    """

    supports: np.ndarray
    weights: np.ndarray

    def __init__(self, supports, weights=None):
        pts = np.array(supports, dtype=np.float64, ndmin=2)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 2:
            raise ValueError(f"supports must have shape (n >= 1, d+1 >= 2), got {pts.shape}")
        norms = np.linalg.norm(pts, axis=1)
        if not np.all(np.isfinite(norms)) or np.any(norms == 0.0):
            raise ValueError("supports must be finite and nonzero")
        # Rows already unit to within a couple of ulps are kept bit-for-bit, so
        # rebuilding a measure from its own supports is idempotent.
        off = np.abs(norms - 1.0) > 2.0 * np.finfo(np.float64).eps
        pts[off] /= norms[off, None]
        n = pts.shape[0]
        if weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.array(weights, dtype=np.float64).reshape(-1)
            if w.shape[0] != n:
                raise ValueError(f"{n} supports but {w.shape[0]} weights")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite and nonnegative")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"weights sum to {w.sum():.17g}, expected 1")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "supports", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.supports.shape[0]

    @property
    def dim(self) -> int:
        """Intrinsic sphere dimension d."""
        return self.supports.shape[1] - 1

    def transformed(self, g: "OrthogonalTransform") -> "DiscreteMeasure":
        return DiscreteMeasure(g.apply(self.supports), self.weights)


@dataclass(frozen=True)
class OrthogonalTransform:
    matrix: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.matrix, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("orthogonal transform must be a square matrix")
        if not np.allclose(q @ q.T, np.eye(q.shape[0]), rtol=0.0, atol=1e-10):
            raise ValueError("matrix is not orthogonal within 1e-10")
        object.__setattr__(self, "matrix", q)

    def apply(self, points):
        """Apply to a single vector or to each row of an (n, d+1) array."""
        return np.asarray(points, dtype=np.float64) @ self.matrix.T


def sample_uniform_sphere(rng: np.random.Generator, d: int, count: int) -> np.ndarray:
    """Draw ``count`` i.i.d. uniform points on S^d as an array of shape (count, d+1)."""
    if d < 1 or count < 1:
        raise ValueError("need d >= 1 and count >= 1")
    return normalize_rows(rng.standard_normal((count, d + 1)))


def _tangent_basis(mean: np.ndarray) -> np.ndarray:
    """Orthonormal basis (rows) of the hyperplane orthogonal to ``mean``."""
    # Householder reflection mapping e_0 to mean; its remaining columns span mean's complement.
    dim = mean.shape[0]
    e0 = np.zeros(dim)
    e0[0] = 1.0
    v = e0 - mean
    nv = np.linalg.norm(v)
    if nv < 1e-12:
        return np.eye(dim)[1:]
    v /= nv
    h = np.eye(dim) - 2.0 * np.outer(v, v)
    return h[:, 1:].T


def _sample_vmf_cosines(rng: np.random.Generator, kappa: float, m: int, count: int) -> np.ndarray:
    """Wood's rejection sampler for w = <mean, X> with X ~ vMF on S^(m-1)."""
    dim = m - 1
    b = dim / (np.sqrt(4.0 * kappa**2 + dim**2) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + dim * np.log(1.0 - x0**2)
    out = np.empty(count)
    filled = 0
    while filled < count:
        batch = max(16, 2 * (count - filled))
        z = rng.beta(dim / 2.0, dim / 2.0, size=batch)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=batch)
        ok = kappa * w + dim * np.log(1.0 - x0 * w) - c >= np.log(u)
        acc = w[ok][: count - filled]
        out[filled : filled + acc.size] = acc
        filled += acc.size
    return out


def sample_vmf(rng: np.random.Generator, mean, kappa: float, count: int) -> np.ndarray:
    """Draw ``count`` samples from vMF(mean, kappa), shape (count, d+1)."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    mu = unit_vector(mean)
    m = mu.shape[0]
    if kappa == 0:
        return sample_uniform_sphere(rng, m - 1, count)
    w = _sample_vmf_cosines(rng, float(kappa), m, count)
    tangent = normalize_rows(rng.standard_normal((count, m - 1)) @ _tangent_basis(mu))
    pts = w[:, None] * mu[None, :] + np.sqrt(np.clip(1.0 - w**2, 0.0, None))[:, None] * tangent
    return normalize_rows(pts)


def random_orthogonal(rng: np.random.Generator, d: int) -> OrthogonalTransform:
    """Haar-distributed element of O(d+1) (QR of a Gaussian matrix, sign-corrected)."""
    if d < 1:
        raise ValueError("need d >= 1")
    a = rng.standard_normal((d + 1, d + 1))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))[None, :]
    return OrthogonalTransform(q)


def load_point_cloud(path) -> DiscreteMeasure:
    """Read a point-cloud CSV: d+1 coordinate columns and an optional ``weight`` column.

    A header row is optional; if present, a column named ``weight`` is taken as
    the weights.  Without headers every column is a coordinate.  Non-unit rows
    are renormalized with a warning.
    """
    with open(path, newline="") as fh:
        first = fh.readline()
    first_fields = [f.strip() for f in first.strip().split(",")]
    has_header = any(_not_a_number(f) for f in first_fields)
    data = np.loadtxt(path, delimiter=",", skiprows=1 if has_header else 0, ndmin=2)
    weights = None
    if has_header and first_fields[-1].lower() == "weight":
        weights = data[:, -1]
        data = data[:, :-1]
    if data.shape[0] < 1:
        raise ValueError(f"{path}: no rows")
    norms = np.linalg.norm(data, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        warnings.warn(f"{path}: {int(np.sum(np.abs(norms - 1.0) > 1e-9))} rows were not unit norm; renormalized")
    if weights is not None:
        weights = weights / weights.sum()
    return DiscreteMeasure(data, weights)


def save_point_cloud(path, measure: DiscreteMeasure, with_weights: bool = True):
    d1 = measure.supports.shape[1]
    header = [f"x{i}" for i in range(d1)]
    cols = measure.supports
    if with_weights:
        header.append("weight")
        cols = np.column_stack([cols, measure.weights])
    np.savetxt(path, cols, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def _not_a_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return True
    return False
