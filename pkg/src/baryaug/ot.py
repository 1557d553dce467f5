"""2-Wasserstein distances between point clouds.

Three routes are provided:

* :func:`w2_exact` solves the transport problem exactly. Equal-size uniform
  clouds reduce to a linear assignment (an optimal plan is a permutation);
  unequal uniform clouds are expanded to a common multiple and also solved
  as an assignment; anything else goes through a linear program.
* :func:`w2_sinkhorn` runs log-domain entropic Sinkhorn iterations and
  reports the square root of the transport cost of the regularized plan.
* :func:`w2_ordered` is the index-matched L2 shortcut for ordered landmarks.
  It is only a distance upper bound unless the identity matching is optimal.
"""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

from .errors import BaryaugError, ConvergenceError, InputError, SizeLimitError
from .measures import Dataset, PointCloud, check_dataset

EXACT_MAX_SIZE = 64
EXPANSION_MAX = 512  # largest lcm(s_a, s_b) solved by replicated assignment
LP_SIMPLEX_MAX = 20_000  # larger LPs use interior point with crossover
SINKHORN_EPSILON = 1e-2
SINKHORN_MAX_ITER = 2000
SINKHORN_TOL = 1e-7
SINKHORN_CHUNK = 256


@dataclass(frozen=True)
class TransportPlan:
    matrix: np.ndarray
    cost: float
    converged: bool = True
    iterations: int = 0

    def marginal_residual(self, a, b) -> float:
        return float(max(np.abs(self.matrix.sum(1) - a).max(),
                         np.abs(self.matrix.sum(0) - b).max()))


def cost_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Squared Euclidean ground cost between two point arrays."""
    return cdist(x, y, "sqeuclidean")


def _uniform(w: np.ndarray) -> bool:
    return bool(np.all(w == w[0]))


# costs use fsum so that swapping the two clouds gives the identical value
def _assignment_plan(C: np.ndarray) -> TransportPlan:
    n = C.shape[0]
    rows, cols = linear_sum_assignment(C)
    P = np.zeros_like(C)
    P[rows, cols] = 1.0 / n
    return TransportPlan(P, math.fsum(C[rows, cols]) / n)


def _expanded_plan(C: np.ndarray) -> TransportPlan:
    n, m = C.shape
    L = math.lcm(n, m)
    ra, rb = L // n, L // m
    big = np.repeat(np.repeat(C, ra, axis=0), rb, axis=1)
    rows, cols = linear_sum_assignment(big)
    P = np.zeros_like(C)
    np.add.at(P, (rows // ra, cols // rb), 1.0 / L)
    return TransportPlan(P, math.fsum(big[rows, cols]) / L)


def _lp_plan(a: np.ndarray, b: np.ndarray, C: np.ndarray) -> TransportPlan:
    n, m = C.shape
    rows = sparse.kron(sparse.identity(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.identity(m))
    A_eq = sparse.vstack([rows, cols]).tocsr()
    # one marginal constraint is redundant; drop it for a full-rank system
    res = linprog(C.ravel(), A_eq=A_eq[:-1], b_eq=np.concatenate([a, b])[:-1],
                  bounds=(0, None), method="highs-ds" if n * m <= LP_SIMPLEX_MAX else "highs-ipm")
    if res.status != 0:
        raise ConvergenceError(f"transport LP failed: {res.message}")
    P = np.clip(res.x.reshape(n, m), 0.0, None)
    return TransportPlan(P, math.fsum((P * C).ravel()))


def solve_exact(a, b, C, solver: str = "auto",
                max_size: int | None = None) -> TransportPlan:
    """Exact discrete optimal transport for the cost matrix ``C``.

    Parameters
    ----------
    a, b : array-like
        Source and target weights (each summing to one).
    C : ndarray, shape (len(a), len(b))
        Ground cost.
    solver : {"auto", "assignment", "lp"}
        ``auto`` uses an assignment for uniform marginals (directly for equal
        sizes, through replication when the least common multiple is small)
        and the HiGHS dual simplex otherwise.
    max_size : int, optional
        Cap on either side for the linear-program route.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    n, m = C.shape
    if a.shape != (n,) or b.shape != (m,):
        raise InputError("marginal sizes do not match the cost matrix")
    if n == 1 or m == 1:
        P = np.outer(a, b)
        return TransportPlan(P, float((P * C).sum()))
    uniform = _uniform(a) and _uniform(b)
    if solver == "assignment" or (solver == "auto" and uniform):
        if not uniform:
            raise InputError("assignment solver needs uniform marginals")
        if n == m:
            return _assignment_plan(C)
        if math.lcm(n, m) <= EXPANSION_MAX or solver == "assignment":
            return _expanded_plan(C)
    elif solver not in ("auto", "lp"):
        raise InputError(f"unknown exact solver {solver!r}")
    if max_size is not None and max(n, m) > max_size:
        raise SizeLimitError(
            f"exact transport limited to {max_size} points, got {n}x{m}")
    return _lp_plan(a, b, C)


def w2_exact(a: PointCloud, b: PointCloud, max_size: int = EXACT_MAX_SIZE):
    """Exact 2-Wasserstein distance and an optimal plan.

    The ``max_size`` cap only guards the linear-program route; uniform clouds
    are always solved by assignment.
    """
    plan = solve_exact(a.weights, b.weights, cost_matrix(a.points, b.points),
                       max_size=max_size)
    return math.sqrt(max(plan.cost, 0.0)), plan


def w2_ordered(a: PointCloud, b: PointCloud) -> float:
    """Index-matched L2 distance ``sqrt(sum_i w_i |x_i - y_i|^2)``."""
    if a.size != b.size:
        raise InputError("ordered distance needs equal cardinalities")
    return math.sqrt(float(a.weights @ ((a.points - b.points) ** 2).sum(1)))


# --------------------------------------------------------------------------
# Sinkhorn


def _lse(x, axis):
    m = x.max(axis=axis, keepdims=True)
    m[~np.isfinite(m)] = 0.0
    np.subtract(x, m, out=x)
    np.exp(x, out=x)
    return np.log(x.sum(axis=axis)) + np.squeeze(m, axis=axis)


def _sinkhorn_log(C, log_a, log_b, eps, max_iter, tol):
    """Batched log-domain Sinkhorn on ``C`` of shape (B, n, m).

    Returns the plans, iteration counts and convergence flags. Converged
    problems are frozen so each result matches an unbatched run.
    """
    B = C.shape[0]
    e = eps[:, None, None]
    Ce = C / e
    a = np.exp(log_a)
    g = np.zeros(C.shape[:1] + C.shape[2:])
    f = -eps[:, None] * _lse(log_b[:, None, :] - Ce, axis=2)
    iters = np.zeros(B, dtype=int)
    done = np.zeros(B, dtype=bool)
    idx = np.arange(B)
    Ci, ei, la, lb = Ce, eps[:, None], log_a, log_b
    for it in range(1, max_iter + 1):
        fi = f[idx]
        gi = -ei * _lse((fi / ei)[:, :, None] - Ci + la[:, :, None], axis=1)
        fn = -ei * _lse((gi / ei)[:, None, :] - Ci + lb[:, None, :], axis=2)
        if not (np.all(np.isfinite(fn)) and np.all(np.isfinite(gi))):
            raise ConvergenceError("log-domain Sinkhorn produced non-finite potentials")
        err = (a[idx] * np.abs(np.expm1((fi - fn) / ei))).sum(1)
        f[idx], g[idx] = fn, gi
        iters[idx] = it
        ok = err < tol
        if ok.any():
            done[idx[ok]] = True
            idx = idx[~ok]
            if idx.size == 0:
                break
            Ci, ei, la, lb = Ce[idx], eps[idx, None], log_a[idx], log_b[idx]
    P = np.exp((f[:, :, None] + g[:, None, :] - C) / e
               + log_a[:, :, None] + log_b[:, None, :])
    return P, iters, done


def _sinkhorn_kernel(C, a, b, eps, max_iter, tol):
    """Classical scaling iterations; returns None when the kernel underflows."""
    K = np.exp(-C / eps)
    u = np.ones_like(a)
    v = np.ones_like(b)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for it in range(1, max_iter + 1):
            v = b / (K.T @ u)
            u_new = a / (K @ v)
            if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v))):
                return None
            err = np.abs(u * (K @ v) - a).sum()
            u = u_new
            if err < tol:
                break
    P = u[:, None] * K * v[None, :]
    return P, it, err < tol


def _relative_eps(C: np.ndarray, epsilon: float) -> float:
    scale = C.max() if C.size else 0.0
    return epsilon * (scale if scale > 0 else 1.0)


def sinkhorn_plan(a: PointCloud, b: PointCloud, epsilon: float = SINKHORN_EPSILON,
                  max_iter: int = SINKHORN_MAX_ITER, tol: float = SINKHORN_TOL,
                  log_domain: bool = True) -> TransportPlan:
    """Entropic plan with regularization ``epsilon * diam**2``.

    ``diam`` is the diameter of the union of both supports, which for the
    squared Euclidean cost is ``sqrt(max C)`` up to within-cloud pairs.
    """
    if not epsilon > 0:
        raise InputError("epsilon must be positive")
    pts = np.vstack([a.points, b.points])
    C = cost_matrix(a.points, b.points)
    eps = _relative_eps(cost_matrix(pts, pts), epsilon)
    if not log_domain:
        out = _sinkhorn_kernel(C, a.weights, b.weights, eps, max_iter, tol)
        if out is not None:
            P, it, ok = out
            return TransportPlan(P, float((P * C).sum()), bool(ok), int(it))
    with np.errstate(divide="ignore"):
        la, lb = np.log(a.weights), np.log(b.weights)
    P, it, ok = _sinkhorn_log(C[None], la[None], lb[None], np.array([eps]),
                              max_iter, tol)
    return TransportPlan(P[0], float((P[0] * C).sum()), bool(ok[0]), int(it[0]))


def w2_sinkhorn(a: PointCloud, b: PointCloud, epsilon: float = SINKHORN_EPSILON,
                max_iter: int = SINKHORN_MAX_ITER, tol: float = SINKHORN_TOL,
                log_domain: bool = True, debias: bool = False):
    """Entropic approximation of W2: ``sqrt(<P_eps, C>)``.

    With ``debias=True`` the self-transport costs are subtracted,
    ``sqrt(max(c_ab - (c_aa + c_bb) / 2, 0))``, all at the pair's epsilon.
    """
    plan = sinkhorn_plan(a, b, epsilon, max_iter, tol, log_domain)
    cost = plan.cost
    if debias:
        pts = np.vstack([a.points, b.points])
        eps_abs = _relative_eps(cost_matrix(pts, pts), epsilon)
        self_costs = []
        for c in (a, b):
            cd = c.diameter() ** 2
            # reuse the pair's absolute epsilon for the self terms
            rel = eps_abs / cd if cd > 0 else epsilon
            self_costs.append(sinkhorn_plan(c, c, rel, max_iter, tol, log_domain).cost)
        cost = max(cost - 0.5 * sum(self_costs), 0.0)
    return math.sqrt(max(cost, 0.0)), plan


def _sinkhorn_pairs(clouds, pairs, epsilon, max_iter, tol):
    """Plan costs for a homogeneous-shape batch of index pairs."""
    X = np.stack([clouds[i].points for i, _ in pairs])
    Y = np.stack([clouds[j].points for _, j in pairs])
    C = ((X[:, :, None, :] - Y[:, None, :, :]) ** 2).sum(-1)
    Z = np.concatenate([X, Y], axis=1)
    diam2 = ((Z[:, :, None, :] - Z[:, None, :, :]) ** 2).sum(-1).max(axis=(1, 2))
    eps = epsilon * np.where(diam2 > 0, diam2, 1.0)
    with np.errstate(divide="ignore"):
        la = np.log(np.stack([clouds[i].weights for i, _ in pairs]))
        lb = np.log(np.stack([clouds[j].weights for _, j in pairs]))
    P, _, _ = _sinkhorn_log(C, la, lb, eps, max_iter, tol)
    return np.sqrt(np.maximum((P * C).sum(axis=(1, 2)), 0.0))


# --------------------------------------------------------------------------
# Distance matrices


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray
    method: str = "exact"

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def violations(self) -> list[str]:
        v = self.values
        out = []
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            return ["matrix is not square"]
        if np.abs(v - v.T).max(initial=0.0) > 1e-9:
            out.append("matrix is not symmetric")
        if np.any(np.diag(v) != 0):
            out.append("diagonal is not zero")
        if np.any(v < 0):
            out.append("negative entries")
        return out

    def to_csv(self, path) -> None:
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, method: str = "unknown") -> "DistanceMatrix":
        try:
            v = np.loadtxt(path, delimiter=",", ndmin=2)
        except ValueError as e:
            raise InputError(f"{path}: {e}") from e
        return cls(v, method)

    def save_cache(self, path, fingerprint: str) -> None:
        with open(path, "wb") as fh:
            np.savez(fh, values=self.values, method=np.array(self.method),
                     fingerprint=np.array(fingerprint))

    @classmethod
    def load_cache(cls, path, fingerprint: str | None = None):
        """Load a cached matrix; returns None if ``fingerprint`` does not match."""
        with np.load(path, allow_pickle=False) as z:
            if fingerprint is not None and str(z["fingerprint"]) != fingerprint:
                return None
            return cls(z["values"], str(z["method"]))


def method_name(method: str, epsilon: float = SINKHORN_EPSILON,
                debias: bool = False) -> str:
    if method == "sinkhorn":
        return f"sinkhorn(eps={epsilon!r}{',debiased' if debias else ''})"
    if method in ("exact", "ordered"):
        return method
    raise InputError(f"unknown OT method {method!r}")


def method_fingerprint(method: str, **params) -> str:
    return hashlib.sha256(method_name(method, **params).encode()).hexdigest()[:16]


def pair_distance(a: PointCloud, b: PointCloud, method: str = "exact",
                  epsilon: float = SINKHORN_EPSILON, debias: bool = False) -> float:
    if method == "exact":
        return w2_exact(a, b)[0]
    if method == "sinkhorn":
        return w2_sinkhorn(a, b, epsilon, debias=debias)[0]
    if method == "ordered":
        return w2_ordered(a, b)
    raise InputError(f"unknown OT method {method!r}")


def _wrap_pair(i, j, exc):
    cls = type(exc) if isinstance(exc, BaryaugError) else ConvergenceError
    err = cls(f"pair ({i}, {j}): {exc}")
    err.pair = (i, j)
    return err


def cross_distances(A, B, method: str = "exact", epsilon: float = SINKHORN_EPSILON,
                    debias: bool = False, threads: int = 1) -> np.ndarray:
    """Rectangular matrix of W2 distances between two collections of clouds."""
    A, B = list(A), list(B)
    pairs = [(i, j) for i in range(len(A)) for j in range(len(B))]
    out = np.zeros((len(A), len(B)))
    pool = A + B
    idx = [(i, len(A) + j) for i, j in pairs]
    for (i, j), v in zip(pairs, _evaluate_pairs(pool, idx, method, epsilon,
                                                debias, threads)):
        out[i, j] = v
    return out


def _evaluate_pairs(clouds, pairs, method, epsilon, debias, threads):
    """Distances for index pairs into ``clouds``, in input order."""
    if method == "ordered":
        sizes = {c.size for c in clouds}
        if len(sizes) > 1:
            raise InputError("ordered distance needs equal cardinalities")
        if not pairs:
            return []
        X = np.stack([c.points for c in clouds])
        W = np.stack([c.weights for c in clouds])
        I = np.array([p[0] for p in pairs])
        J = np.array([p[1] for p in pairs])
        sq = ((X[I] - X[J]) ** 2).sum(-1)
        return list(np.sqrt((W[I] * sq).sum(-1)))

    if method == "sinkhorn" and not debias:
        groups: dict = {}
        for k, (i, j) in enumerate(pairs):
            groups.setdefault((clouds[i].size, clouds[j].size), []).append(k)
        chunks = []
        for ks in groups.values():
            for s in range(0, len(ks), SINKHORN_CHUNK):
                chunks.append(ks[s:s + SINKHORN_CHUNK])

        def run(ks):
            try:
                return _sinkhorn_pairs(clouds, [pairs[k] for k in ks], epsilon,
                                       SINKHORN_MAX_ITER, SINKHORN_TOL)
            except BaryaugError:
                for k in ks:  # locate the offending pair
                    i, j = pairs[k]
                    try:
                        w2_sinkhorn(clouds[i], clouds[j], epsilon)
                    except BaryaugError as e:
                        raise _wrap_pair(i, j, e) from e
                raise

        out = [0.0] * len(pairs)
        with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
            for ks, vals in zip(chunks, ex.map(run, chunks)):
                for k, v in zip(ks, vals):
                    out[k] = float(v)
        return out

    method_name(method)  # validates the name

    def one(p):
        i, j = p
        try:
            return pair_distance(clouds[i], clouds[j], method, epsilon, debias)
        except BaryaugError as e:
            raise _wrap_pair(i, j, e) from e

    if threads <= 1:
        return [one(p) for p in pairs]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(one, pairs, chunksize=64))


def pairwise_matrix(d: Dataset, method: str = "exact", epsilon: float = SINKHORN_EPSILON,
                    debias: bool = False, threads: int = 1) -> DistanceMatrix:
    """All pairwise W2 distances of a dataset.

    Only the upper triangle is solved and mirrored, so the result is exactly
    symmetric. Work is split into a fixed sequence of jobs, which keeps the
    output independent of ``threads``.
    """
    check_dataset(d)
    n = len(d)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    vals = _evaluate_pairs(d.clouds, pairs, method, epsilon, debias, threads)
    M = np.zeros((n, n))
    for (i, j), v in zip(pairs, vals):
        M[i, j] = M[j, i] = v
    return DistanceMatrix(M, method_name(method, epsilon, debias))
