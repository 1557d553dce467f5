"""Point clouds as discrete probability measures on the plane."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import InputError

WEIGHT_SUM_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """A weighted set of planar points ``sum_i w_i * delta(x_i)``.

    The constructor only checks shapes so that invalid measures can still be
    represented and reported by :func:`validate_dataset`. Use
    :func:`make_uniform_cloud` to build a cloud that is valid by construction.
    """

    points: np.ndarray
    weights: np.ndarray
    ordered: bool = False

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InputError(f"points must have shape (s, 2), got {pts.shape}")
        w = _frozen(self.weights)
        if w.shape != (pts.shape[0],):
            raise InputError(
                f"weights must have shape ({pts.shape[0]},), got {w.shape}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "ordered", bool(self.ordered))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.size

    @property
    def is_uniform(self) -> bool:
        return self.size > 0 and bool(np.all(self.weights == self.weights[0]))

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def diameter(self) -> float:
        return support_diameter(self)

    def violations(self) -> list[str]:
        """Names of the measure invariants this cloud breaks."""
        out = []
        if self.size < 1:
            out.append("empty support")
        if not np.all(np.isfinite(self.points)):
            out.append("non-finite coordinate")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            out.append("negative or non-finite weight")
        elif self.size and abs(self.weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            out.append(f"weights sum to {self.weights.sum():.12g}, not 1")
        return out

    def translate(self, offset) -> "PointCloud":
        return PointCloud(self.points + np.asarray(offset, dtype=float),
                          self.weights, self.ordered)

    def with_points(self, points) -> "PointCloud":
        return PointCloud(points, self.weights, self.ordered)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return (self.ordered == other.ordered
                and np.array_equal(self.points, other.points)
                and np.array_equal(self.weights, other.weights))

    __hash__ = None

    def __repr__(self):
        kind = "ordered" if self.ordered else "unordered"
        return f"PointCloud(s={self.size}, {kind})"


def make_uniform_cloud(points, ordered: bool = False) -> PointCloud:
    """Uniform measure on ``points``; duplicate points are kept as separate atoms."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        raise InputError("point list is empty")
    pts = pts.reshape(-1, 2) if pts.ndim == 1 else pts
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InputError(f"expected a list of (x, y) pairs, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InputError("non-finite coordinate")
    s = pts.shape[0]
    return PointCloud(pts, np.full(s, 1.0 / s), ordered)


def support_diameter(*clouds: PointCloud) -> float:
    """Largest distance between any two support points of the given clouds."""
    pts = np.vstack([c.points for c in clouds])
    if pts.shape[0] < 2:
        return 0.0
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    return float(np.sqrt(d2.max()))


@dataclass(frozen=True)
class Dataset:
    """An indexed collection of point clouds sharing the ``ordered`` flag."""

    clouds: tuple[PointCloud, ...]
    ordered: bool = False
    uniform_cardinality: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "clouds", tuple(self.clouds))

    @classmethod
    def from_points(cls, clouds: Iterable, ordered: bool = False) -> "Dataset":
        """Build a dataset of uniform clouds; ``uniform_cardinality`` is inferred."""
        members = tuple(make_uniform_cloud(p, ordered) for p in clouds)
        sizes = {c.size for c in members}
        common = sizes.pop() if len(sizes) == 1 else None
        return cls(members, ordered, common)

    @classmethod
    def of(cls, clouds: Sequence[PointCloud]) -> "Dataset":
        clouds = tuple(clouds)
        ordered = clouds[0].ordered if clouds else False
        sizes = {c.size for c in clouds}
        return cls(clouds, ordered, sizes.pop() if len(sizes) == 1 else None)

    def __len__(self) -> int:
        return len(self.clouds)

    def __iter__(self) -> Iterator[PointCloud]:
        return iter(self.clouds)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Dataset.of(self.clouds[i])
        return self.clouds[i]

    def subset(self, indices) -> "Dataset":
        return Dataset.of([self.clouds[i] for i in indices])

    def stacked(self) -> np.ndarray:
        """Coordinates as an ``(N, s, 2)`` array; needs a common cardinality."""
        sizes = {c.size for c in self.clouds}
        if len(sizes) != 1:
            raise InputError("clouds have different cardinalities")
        return np.stack([c.points for c in self.clouds])


@dataclass(frozen=True)
class Violation:
    cloud: int | None  # None for dataset-level rules
    rule: str

    def __str__(self):
        where = "dataset" if self.cloud is None else f"cloud {self.cloud}"
        return f"{where}: {self.rule}"


def validate_dataset(d: Dataset) -> list[Violation]:
    """Return every broken invariant of ``d``; an empty list means valid."""
    out: list[Violation] = []
    if len(d) < 1:
        out.append(Violation(None, "dataset is empty"))
    if any(c.ordered != d.ordered for c in d.clouds):
        out.append(Violation(None, "members disagree on the ordered flag"))
    for i, c in enumerate(d.clouds):
        out.extend(Violation(i, rule) for rule in c.violations())
        if d.uniform_cardinality is not None and c.size != d.uniform_cardinality:
            out.append(Violation(
                i, f"has {c.size} points, expected {d.uniform_cardinality}"))
    return out


def check_dataset(d: Dataset) -> Dataset:
    problems = validate_dataset(d)
    if problems:
        raise InputError("; ".join(map(str, problems)))
    return d
