"""Weighted Wasserstein barycenters with free support."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from . import ot
from .errors import InputError
from .measures import PointCloud, support_diameter

BARYCENTER_MAX_ITER = 100
BARYCENTER_TOL = 1e-6  # relative to the diameter of the input supports
INIT_STRATEGIES = ("largest", "mean", "random")


@dataclass(frozen=True, eq=False)
class BarycentricCoordinates:
    """Convex weights over the vertices of a simplex."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if v.size == 0:
            raise InputError("barycentric coordinates are empty")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise InputError("barycentric coordinates must be finite and nonnegative")
        if abs(v.sum() - 1.0) > 1e-12:
            raise InputError(f"barycentric coordinates sum to {v.sum()!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def tolist(self):
        return self.values.tolist()


def as_coordinates(coords) -> BarycentricCoordinates:
    if isinstance(coords, BarycentricCoordinates):
        return coords
    return BarycentricCoordinates(np.asarray(coords, dtype=float))


def sample_dirichlet(m: int, rng: np.random.Generator) -> BarycentricCoordinates:
    """Uniform draw from the (m-1)-simplex, i.e. Dir(1, ..., 1)."""
    if m < 1:
        raise InputError("need at least one vertex")
    lam = rng.dirichlet(np.ones(m))
    # renormalize so the stored sum is 1 to the last bit the check allows
    return BarycentricCoordinates(lam / lam.sum())


@dataclass(frozen=True)
class BarycenterResult:
    cloud: PointCloud
    objective: float
    iterations: int
    converged: bool
    trace: tuple[float, ...] = ()


def _resample(points: np.ndarray, size: int) -> np.ndarray:
    if points.shape[0] == size:
        return points.copy()
    idx = np.round(np.linspace(0, points.shape[0] - 1, size)).astype(int)
    return points[idx].copy()


def _initial_support(measures, lam, size, init, rng):
    if init == "largest":
        return _resample(measures[int(np.argmax(lam))].points, size)
    if init == "random":
        if rng is None:
            raise InputError("init='random' needs a generator")
        return _resample(measures[int(rng.integers(len(measures)))].points, size)
    if init == "mean":
        if any(m.size != size for m in measures):
            raise InputError("init='mean' needs every measure to have support_size points")
        return np.einsum("i,ijk->jk", lam, np.stack([m.points for m in measures]))
    raise InputError(f"unknown init strategy {init!r}; expected one of {INIT_STRATEGIES}")


def _plan_matrix(X, b, m: PointCloud, exact: bool):
    C = ot.cost_matrix(X, m.points)
    if exact:
        plan = ot.solve_exact(b, m.weights, C, max_size=ot.EXACT_MAX_SIZE)
        return plan.matrix, plan.cost
    plan = ot.sinkhorn_plan(PointCloud(X, b), m)
    return plan.matrix, plan.cost


def free_support_barycenter(measures, coords, support_size: int | None = None,
                            init: str = "largest", tol: float | None = None,
                            max_iter: int = BARYCENTER_MAX_ITER,
                            rng: np.random.Generator | None = None) -> BarycenterResult:
    """Locally optimal minimizer of ``sum_i lam_i W2^2(mu_i, mu)``.

    Alternates optimal plans from the current support to each input and a
    move of every support point to the lambda-weighted average of its
    transported images. With exact plans the objective cannot increase.

    Parameters
    ----------
    measures : sequence of PointCloud
    coords : BarycentricCoordinates or array-like
        One weight per measure.
    support_size : int, optional
        Number of barycenter atoms; defaults to the common input cardinality
        (or to the size of the initial measure when cardinalities differ).
    init : {"largest", "mean", "random"}
        Start from the measure with the largest weight (ties: lowest index),
        from the lambda-weighted coordinate mean, or from a random input.
    tol : float, optional
        Stop once no support point moves more than this; defaults to
        ``1e-6 * diam`` of the input supports.
    max_iter : int
        Iteration cap; the result carries ``converged=False`` if reached.
    """
    measures = list(measures)
    if not measures:
        raise InputError("no measures given")
    lam = as_coordinates(coords).values
    if lam.size != len(measures):
        raise InputError(f"{lam.size} coordinates for {len(measures)} measures")
    for i, m in enumerate(measures):
        bad = m.violations()
        if bad:
            raise InputError(f"measure {i}: {', '.join(bad)}")
    sizes = {m.size for m in measures}
    if support_size is None:
        support_size = sizes.pop() if len(sizes) == 1 else measures[int(np.argmax(lam))].size
        sizes = {m.size for m in measures}
    if support_size < 1:
        raise InputError("support_size must be at least 1")
    if tol is None:
        tol = BARYCENTER_TOL * support_diameter(*measures)
    tol = max(tol, 1e-12)

    active = [(float(w), m) for w, m in zip(lam, measures) if w > 0]
    exact = max(sizes | {support_size}) <= ot.EXACT_MAX_SIZE
    b = np.full(support_size, 1.0 / support_size)
    X = _initial_support(measures, lam, support_size, init, rng)
    ordered = measures[0].ordered

    def solve(X):
        plans, obj = [], 0.0
        for w, m in active:
            P, cost = _plan_matrix(X, b, m, exact)
            plans.append(P)
            obj += w * cost
        return plans, obj

    plans, obj = solve(X)
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Xn = np.zeros_like(X)
        for (w, m), P in zip(active, plans):
            Xn += w * (P @ m.points)
        Xn /= b[:, None]
        disp = float(np.sqrt(((Xn - X) ** 2).sum(1)).max())
        X = Xn
        plans, obj = solve(X)
        trace.append(obj)
        if disp < tol:
            converged = True
            break
    cloud = PointCloud(X, b, ordered)
    return BarycenterResult(cloud, max(obj, 0.0), it, converged, tuple(trace))


def ordered_barycenter(measures, coords) -> PointCloud:
    """Keypoint-wise weighted mean of ordered clouds with equal cardinality."""
    measures = list(measures)
    lam = as_coordinates(coords).values
    if lam.size != len(measures) or not measures:
        raise InputError(f"{lam.size} coordinates for {len(measures)} measures")
    if not all(m.ordered for m in measures):
        raise InputError("ordered barycenter needs ordered clouds")
    if len({m.size for m in measures}) != 1:
        raise InputError("ordered barycenter needs equal cardinalities")
    if not all(m.is_uniform for m in measures):
        raise InputError("ordered barycenter needs uniform weights")
    pts = np.einsum("i,ijk->jk", lam, np.stack([m.points for m in measures]))
    return PointCloud(pts, measures[0].weights, True)


# --------------------------------------------------------------------------
# Vectorized fixed point for many coordinate vectors over tiny clouds

ENUM_MAX_SIZE = 5
_ENUM_CHUNK = 2048


def permutation_table(s: int) -> np.ndarray:
    return np.array(list(permutations(range(s))), dtype=np.intp)


def matched_costs(X: np.ndarray, Y: np.ndarray, perms: np.ndarray):
    """Best matching of each batch cloud in ``X`` (B, s, 2) onto ``Y`` (s, 2).

    Returns the mean squared matched distance and the index of the optimal
    permutation in ``perms`` for every batch element.
    """
    D = ((X[:, :, None, :] - Y[None, None, :, :]) ** 2).sum(-1)
    s = X.shape[1]
    costs = D[:, np.arange(s)[None, :], perms].mean(-1)
    best = costs.argmin(1)
    return costs[np.arange(X.shape[0]), best], best


def batch_barycenters(vertices, lambdas, tol: float | None = None,
                      max_iter: int = BARYCENTER_MAX_ITER) -> np.ndarray:
    """Barycenter supports for many coordinate vectors at once.

    Same fixed point as :func:`free_support_barycenter` with the default
    ``largest`` initialization, restricted to uniform clouds sharing a
    cardinality of at most ``ENUM_MAX_SIZE``; plans come from enumerating
    all permutations. Larger clouds fall back to a loop.

    Returns an array of shape (B, s, 2).
    """
    vertices = list(vertices)
    lambdas = np.atleast_2d(np.asarray(lambdas, dtype=float))
    sizes = {v.size for v in vertices}
    if len(sizes) != 1 or sizes.pop() > ENUM_MAX_SIZE or not all(v.is_uniform for v in vertices):
        return np.stack([free_support_barycenter(vertices, lam, tol=tol, max_iter=max_iter).cloud.points
                         for lam in lambdas])
    if tol is None:
        tol = BARYCENTER_TOL * support_diameter(*vertices)
    tol = max(tol, 1e-12)
    Y = np.stack([v.points for v in vertices])
    s = Y.shape[1]
    perms = permutation_table(s)
    out = np.empty((lambdas.shape[0], s, 2))
    for start in range(0, lambdas.shape[0], _ENUM_CHUNK):
        lam = lambdas[start:start + _ENUM_CHUNK]
        X = Y[lam.argmax(1)].copy()
        live = np.arange(lam.shape[0])
        for _ in range(max_iter):
            Xl, ll = X[live], lam[live]
            Xn = np.zeros_like(Xl)
            for i in range(Y.shape[0]):
                _, best = matched_costs(Xl, Y[i], perms)
                Xn += ll[:, i, None, None] * Y[i][perms[best]]
            disp = np.sqrt(((Xn - Xl) ** 2).sum(-1)).max(-1)
            X[live] = Xn
            live = live[disp >= tol]
            if live.size == 0:
                break
        out[start:start + lam.shape[0]] = X
    return out
