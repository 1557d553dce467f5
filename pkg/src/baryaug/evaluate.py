"""Set-level quality metrics for augmented landmark collections."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import ot
from .barycenter import ENUM_MAX_SIZE, batch_barycenters, matched_costs, permutation_table
from .errors import InputError
from .measures import Dataset, PointCloud, support_diameter
from .sampler import AugmentationConfig, geometric_augment, sample_from_complex, build_graph
from .graph import maximal_cliques

CURVE_SIZES = (100, 300, 600)
CURVE_RUNS = 20


def _clouds(x) -> list[PointCloud]:
    return list(x.clouds) if isinstance(x, Dataset) else list(x)


def meta_w2(setA, setB, method: str = "exact", epsilon: float = ot.SINKHORN_EPSILON,
            solver: str = "auto", threads: int = 1) -> float:
    """W2 between two sets of clouds, each cloud weighted equally.

    The ground cost between clouds is their squared W2 distance (computed
    with ``method``); the outer problem is solved exactly.
    """
    A, B = _clouds(setA), _clouds(setB)
    if not A or not B:
        raise InputError("both sets must be nonempty")
    G = ot.cross_distances(A, B, method, epsilon, threads=threads) ** 2
    plan = ot.solve_exact(np.full(len(A), 1 / len(A)), np.full(len(B), 1 / len(B)),
                          G, solver=solver)
    return math.sqrt(max(plan.cost, 0.0))


def knn_kl(setA, setB, k: int = 1, dim_eff: float | None = None,
           method: str = "exact", epsilon: float = ot.SINKHORN_EPSILON,
           threads: int = 1) -> float:
    """k-nearest-neighbor estimate of KL(A || B) in the W2 metric space of clouds.

    ``(d / n) * sum_i log(s_k(i) / r_k(i)) + log(m / (n - 1))`` where ``r_k``
    is the k-th neighbor distance inside A and ``s_k`` the k-th neighbor
    distance from A into B. ``d`` defaults to ``2 * s``. The estimate can be
    negative. Zero neighbor distances are floored at ``1e-12`` times the
    largest observed distance.
    """
    A, B = _clouds(setA), _clouds(setB)
    n, m = len(A), len(B)
    if k < 1 or n <= k or m <= k:
        raise InputError(f"knn_kl needs |A| > k and |B| > k (|A|={n}, |B|={m}, k={k})")
    if dim_eff is None:
        sizes = {c.size for c in A + B}
        if len(sizes) != 1:
            raise InputError("dim_eff required when cardinalities differ")
        dim_eff = 2 * sizes.pop()
    DAA = ot.pairwise_matrix(Dataset.of(A), method, epsilon, threads=threads).values.copy()
    np.fill_diagonal(DAA, np.inf)
    DAB = ot.cross_distances(A, B, method, epsilon, threads=threads)
    r = np.sort(DAA, axis=1)[:, k - 1]
    s = np.sort(DAB, axis=1)[:, k - 1]
    floor = 1e-12 * max(np.max(DAB), np.max(DAA[np.isfinite(DAA)]), 1e-300)
    r, s = np.maximum(r, floor), np.maximum(s, floor)
    return float(dim_eff / n * np.log(s / r).sum() + math.log(m / (n - 1)))


@dataclass(frozen=True)
class CoveringCheck:
    bound: float
    mc_estimate: float
    holds: bool
    stderr: float
    radii: tuple[float, ...]
    n_mc: int


def _costs_to_vertices(points: np.ndarray, vertices) -> np.ndarray:
    """Squared W2 from each batch cloud (uniform weights) to each vertex."""
    s = points.shape[1]
    if s <= ENUM_MAX_SIZE and all(v.size == s and v.is_uniform for v in vertices):
        perms = permutation_table(s)
        return np.stack([matched_costs(points, v.points, perms)[0] for v in vertices], axis=1)
    w = np.full(s, 1.0 / s)
    return np.array([[ot.w2_exact(PointCloud(p, w), v)[0] ** 2 for v in vertices]
                     for p in points])


def verify_covering_bound(vertices, interior: PointCloud, n_mc: int = 10_000,
                          seed: int = 0, margin_se: float = 3.0) -> CoveringCheck:
    """Monte-Carlo check of ``W2^2(mu_1, mu_2) <= sum_i r_i^2 / (2k)``.

    ``mu_2`` is uniform on the ``k`` vertices and ``mu_1`` is approximated by
    ``n_mc`` barycenters at Dir(1, ..., 1) coordinates. ``r_i`` is the W2
    distance from vertex ``i`` to ``interior``. The check passes when the
    estimate is at most the bound plus ``margin_se`` standard errors, where
    the standard error is that of the mean per-draw transported cost. A
    round-off slack of ``1e-12 * L**2``, with ``L`` the larger of the
    support diameter and the largest absolute coordinate, is added to the right-hand side.
    """
    vertices = list(vertices)
    k = len(vertices)
    if k < 1:
        raise InputError("need at least one vertex")
    radii = np.array([ot.w2_exact(v, interior)[0] for v in vertices])
    bound = float((radii ** 2).sum() / (2 * k))
    rng = np.random.default_rng(seed)
    lambdas = rng.dirichlet(np.ones(k), size=n_mc)
    X = batch_barycenters(vertices, lambdas)
    C = _costs_to_vertices(X, vertices)
    plan = ot.solve_exact(np.full(n_mc, 1 / n_mc), np.full(k, 1 / k), C)
    per_draw = n_mc * (plan.matrix * C).sum(1)
    est = float(plan.cost)
    se = float(per_draw.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else 0.0
    # round-off floor; rounding error scales with the coordinate magnitude
    scale = max(support_diameter(*vertices, interior),
                max(float(np.abs(v.points).max()) for v in vertices))
    slack = 1e-12 * scale ** 2
    return CoveringCheck(bound, est, est <= bound + margin_se * se + slack, se,
                         tuple(radii.tolist()), n_mc)


@dataclass
class EvalReport:
    meta_w2: float
    kl_estimate: float | None
    sizes: tuple[int, int]
    fingerprints: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"meta_w2": self.meta_w2, "kl_estimate": self.kl_estimate,
                "sizes": list(self.sizes), "fingerprints": self.fingerprints}

    def to_text(self) -> str:
        lines = [f"sets        |A|={self.sizes[0]}  |B|={self.sizes[1]}",
                 f"meta_w2     {self.meta_w2:.10g}"]
        if self.kl_estimate is not None:
            lines.append(f"kl_estimate {self.kl_estimate:.10g}")
        lines += [f"{k:<11} {v}" for k, v in sorted(self.fingerprints.items())]
        return "\n".join(lines) + "\n"


def evaluate(setA, setB, method: str = "exact", epsilon: float = ot.SINKHORN_EPSILON,
             kl_k: int | None = 1, dim_eff: float | None = None,
             threads: int = 1) -> EvalReport:
    A, B = _clouds(setA), _clouds(setB)
    mw = meta_w2(A, B, method, epsilon, threads=threads)
    kl = None
    fp = {"ground": ot.method_name(method, epsilon)}
    if kl_k is not None and len(A) > kl_k and len(B) > kl_k:
        kl = knn_kl(A, B, kl_k, dim_eff, method, epsilon, threads=threads)
        fp["kl"] = f"knn-divergence(k={kl_k},dim={'2s' if dim_eff is None else dim_eff})"
        fp["kl_note"] = "artifact-chosen estimator"
    return EvalReport(mw, kl, (len(A), len(B)), fp)


def meta_w2_curve(pool: Dataset, holdout, cfg: AugmentationConfig,
                  sizes=CURVE_SIZES, runs: int = CURVE_RUNS, seed: int = 0,
                  baseline: str = "barycentric",
                  pool_distances: ot.DistanceMatrix | None = None) -> list[dict]:
    """meta_w2 between augmented subsets of ``pool`` and ``holdout``, over sizes.

    For each size ``N`` and run ``r`` a random size-``N`` subset of the pool
    is drawn, augmented to ``cfg.n_aug`` samples (barycentric, or the
    geometric baseline with ``baseline="geometric"``) and compared with the
    holdout. Rows carry the median and quartiles over runs.
    """
    H = _clouds(holdout)
    if pool_distances is None and baseline == "barycentric":
        pool_distances = ot.pairwise_matrix(pool, cfg.ot_method, cfg.epsilon,
                                            threads=cfg.threads)
    rows = []
    for N in sizes:
        if N > len(pool):
            raise InputError(f"pool has {len(pool)} clouds, cannot draw {N}")
        vals = []
        for r in range(runs):
            ss = np.random.SeedSequence(seed, spawn_key=(N, r))
            sub_seed, aug_seed = (int(x) for x in ss.generate_state(2))
            idx = np.sort(np.random.default_rng(sub_seed).choice(len(pool), N, replace=False))
            sub = pool.subset(idx)
            if baseline == "geometric":
                aug = geometric_augment(sub, n_aug=cfg.n_aug, seed=aug_seed)
            elif baseline == "barycentric":
                M = ot.DistanceMatrix(pool_distances.values[np.ix_(idx, idx)],
                                      pool_distances.method)
                c = maximal_cliques(build_graph(M, cfg), cfg.max_clique_size)
                aug = [s.cloud for s in
                       sample_from_complex(sub, c, replace(cfg, master_seed=aug_seed))]
            else:
                raise InputError(f"unknown baseline {baseline!r}")
            vals.append(meta_w2(aug, H, cfg.ot_method, cfg.epsilon, threads=cfg.threads))
        v = np.array(vals)
        rows.append({"N": N, "median": float(np.median(v)),
                     "q25": float(np.quantile(v, 0.25)), "q75": float(np.quantile(v, 0.75)),
                     "min": float(v.min()), "max": float(v.max()), "runs": runs,
                     "values": vals})
    return rows
