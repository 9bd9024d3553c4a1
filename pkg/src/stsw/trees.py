"""Spherical trees: a root on S^d plus k unit directions orthogonal to it.

Ray i is the great semicircle leaving the root through direction i; a point
on it is addressed by its arc length t in [0, pi] from the root.  All rays
share the root (t = 0) and nothing else.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .sphere import AT_INFINITY, DiscreteMeasure, OrthogonalTransform, geodesic_distance, stereographic_project

MAX_REDRAWS = 100
_MIN_PROJ_NORM = 1e-9
_MIN_DIRECTION_GAP = 1e-9


@dataclass(frozen=True)
class SphericalTree:
    root: np.ndarray
    directions: np.ndarray  # (k, d+1)

    def __post_init__(self):
        root = np.asarray(self.root, dtype=np.float64)
        dirs = np.array(self.directions, dtype=np.float64, ndmin=2)
        if root.ndim != 1 or dirs.ndim != 2 or dirs.shape[1] != root.shape[0]:
            raise ValueError("root must be (d+1,) and directions (k, d+1)")
        if dirs.shape[0] < 1:
            raise ValueError("a spherical tree needs at least one direction")
        if abs(np.linalg.norm(root) - 1.0) > 1e-12:
            raise ValueError("root is not a unit vector")
        if np.any(np.abs(np.linalg.norm(dirs, axis=1) - 1.0) > 1e-12):
            raise ValueError("directions must be unit vectors")
        if np.any(np.abs(dirs @ root) > 1e-10):
            raise ValueError("directions must be orthogonal to the root")
        if dirs.shape[0] > 1:
            gaps = geodesic_distance(dirs[:, None, :], dirs[None, :, :])
            np.fill_diagonal(gaps, np.inf)
            if gaps.min() < _MIN_DIRECTION_GAP:
                raise ValueError("directions must be pairwise distinct")
        root.setflags(write=False)
        dirs.setflags(write=False)
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "directions", dirs)

    @property
    def k(self) -> int:
        return self.directions.shape[0]

    @property
    def dim(self) -> int:
        return self.root.shape[0] - 1

    def transformed(self, g: OrthogonalTransform) -> "SphericalTree":
        return SphericalTree(g.apply(self.root), g.apply(self.directions))

    def to_json(self) -> str:
        return json.dumps({"root": self.root.tolist(), "directions": self.directions.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "SphericalTree":
        obj = json.loads(text)
        return cls(np.array(obj["root"]), np.array(obj["directions"]))


@dataclass(frozen=True)
class TreePoint:
    ray_index: int
    coord: float

    def __post_init__(self):
        if not 0.0 <= self.coord <= np.pi:
            raise ValueError(f"tree coordinate {self.coord} outside [0, pi]")
        if self.ray_index < 0:
            raise ValueError("ray index must be nonnegative")


def tree_metric(a: TreePoint, b: TreePoint) -> float:
    if a.ray_index == b.ray_index:
        return abs(a.coord - b.coord)
    return a.coord + b.coord


def _draw_direction(rng: np.random.Generator, root: np.ndarray, existing: list) -> np.ndarray:
    for _ in range(MAX_REDRAWS + 1):
        g = rng.standard_normal(root.shape[0])
        y = g / np.linalg.norm(g)
        proj = stereographic_project(root, y)
        if proj is AT_INFINITY:
            continue
        norm = np.linalg.norm(proj)
        if norm < _MIN_PROJ_NORM:
            continue
        y = proj / norm
        # Remove the round-off component along the root left by the projection formula.
        y = y - (y @ root) * root
        y /= np.linalg.norm(y)
        if existing and geodesic_distance(np.asarray(existing), y).min() < _MIN_DIRECTION_GAP:
            continue
        return y
    raise RuntimeError(f"could not draw a non-degenerate tree direction in {MAX_REDRAWS} redraws")


def sample_tree(rng: np.random.Generator, d: int, k: int) -> SphericalTree:
    """Sample a tree: Gaussian root normalized to S^d, then k Gaussian points
    pushed through the stereographic projection at the root and normalized."""
    if d < 1 or k < 1:
        raise ValueError("need d >= 1 and k >= 1")
    if d == 1 and k > 2:
        raise ValueError("on S^1 only two distinct directions are orthogonal to the root; need k <= 2")
    g = rng.standard_normal(d + 1)
    root = g / np.linalg.norm(g)
    dirs: list = []
    for _ in range(k):
        dirs.append(_draw_direction(rng, root, dirs))
    return SphericalTree(root, np.asarray(dirs))


def tree_rngs(seed: int, count: int, offset: int = 0) -> list:
    """Independent generators for tree indices ``offset .. offset+count-1``.

    Tree i always gets the same stream for a given seed, whatever the batch layout.
    """
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=(offset + i,))) for i in range(count)]


def sample_trees(seed: int, d: int, k: int, count: int) -> list:
    return [sample_tree(r, d, k) for r in tree_rngs(seed, count)]


def stack_trees(trees) -> tuple:
    """Stack trees into arrays ``roots`` (L, d+1) and ``directions`` (L, k, d+1)."""
    trees = list(trees)
    if not trees:
        raise ValueError("need at least one tree")
    k = trees[0].k
    if any(t.k != k or t.dim != trees[0].dim for t in trees):
        raise ValueError("all trees must share k and dimension")
    return np.stack([t.root for t in trees]), np.stack([t.directions for t in trees])


def project_coords(tree: SphericalTree, measure: DiscreteMeasure) -> np.ndarray:
    """Arc-length coordinate arccos<root, a_j> of every support."""
    if measure.supports.shape[1] != tree.root.shape[0]:
        raise ValueError("measure and tree dimensions differ")
    return geodesic_distance(measure.supports, tree.root[None, :])
