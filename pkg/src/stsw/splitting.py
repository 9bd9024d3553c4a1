"""Splitting maps: how each point's mass is shared among the k rays of a tree.

``beta`` is an O(d+1)-invariant arc-distance feature per ray and ``alpha`` is
``softmax(zeta * beta)`` taken over the rays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sphere import EPS_POLE, DiscreteMeasure
from .trees import SphericalTree

DEFAULT_ZETA = 2.0


@dataclass(frozen=True)
class SplitWeights:
    rows: np.ndarray  # (n, k), each row on the probability simplex


@dataclass
class BetaParts:
    """Intermediate arrays of the batched beta evaluation, rays on axis 1.

    t (B, n) = <root, a>; rho (B, n) = |a - t root|; z (B, k, n) clipped cosine
    inside the arccos; z_raw before clipping; acz = arccos(z); pole (B, n)
    marks supports at +-root; beta (B, k, n).
    """

    t: np.ndarray
    rho: np.ndarray
    pole: np.ndarray
    z_raw: np.ndarray
    z: np.ndarray
    acz: np.ndarray
    beta: np.ndarray


def beta_parts(points: np.ndarray, roots: np.ndarray, directions: np.ndarray) -> BetaParts:
    """beta for n points against B trees, laid out (B, k, n).

    The radius sqrt(1 - <x, a>^2) is evaluated as |a - <x, a> x|, which is the
    same number on the sphere but keeps the arccos argument inside [-1, 1]
    when ``points`` are perturbed off it (finite-difference checks).
    """
    t = roots @ points.T  # (B, n)
    q = directions @ points.T  # (B, k, n)
    rho2 = np.einsum("nd,nd->n", points, points)[None, :] - t * t
    pole = rho2 < EPS_POLE**2
    rho = np.sqrt(np.where(pole, 1.0, rho2))
    z_raw = q / rho[:, None, :]
    z = np.clip(z_raw, -1.0, 1.0)
    acz = np.arccos(z)
    out = acz * rho[:, None, :]
    if pole.any():
        out[np.broadcast_to(pole[:, None, :], out.shape)] = 0.0
    return BetaParts(t, rho, pole, z_raw, z, acz, out)


def beta_batch(points: np.ndarray, roots: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """points (n, D), roots (B, D), directions (B, k, D)  ->  (B, n, k)."""
    return beta_parts(points, roots, directions).beta.transpose(0, 2, 1)


def softmax_rows(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=axis, keepdims=True))
    e /= e.sum(axis=axis, keepdims=True)
    return e


def alpha_kn(beta_kn: np.ndarray, zeta: float) -> np.ndarray:
    """Softmax over the ray axis of a (B, k, n) beta array."""
    return softmax_rows(zeta * beta_kn, axis=1)


def alpha_batch(points, roots, directions, zeta: float) -> np.ndarray:
    """(B, n, k) split weights."""
    return alpha_kn(beta_parts(points, roots, directions).beta, zeta).transpose(0, 2, 1)


def beta(tree: SphericalTree, point) -> np.ndarray:
    p = np.asarray(point, dtype=np.float64)
    if p.shape != tree.root.shape:
        raise ValueError("point and tree dimensions differ")
    return beta_batch(p[None, :], tree.root[None, :], tree.directions[None])[0, 0]


def alpha(tree: SphericalTree, measure: DiscreteMeasure, zeta: float = DEFAULT_ZETA) -> SplitWeights:
    if measure.supports.shape[1] != tree.root.shape[0]:
        raise ValueError("measure and tree dimensions differ")
    rows = alpha_batch(measure.supports, tree.root[None, :], tree.directions[None], zeta)[0]
    return SplitWeights(rows)
