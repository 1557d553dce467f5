"""Barycentric oversampling over the clique complex of a W2 neighbor graph.

The pipeline is: pairwise W2 matrix -> symmetrized kNN (or ckNN) graph ->
maximal cliques -> repeated draws of a clique, of Dirichlet(1, ..., 1)
coordinates over its vertices, and of the corresponding barycenter.

Clique ``c`` is drawn with probability ``sum_{i in c} p_i / N`` where
``p_i = 1 / #{cliques containing i}``. The normalizer is exact: summing
over cliques counts each vertex once per containing clique, so the total
mass is ``sum_i p_i * #{cliques containing i} = N``. Every vertex thus gets
the same total selection weight regardless of how many cliques it sits in.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import ot
from .barycenter import (BarycentricCoordinates, free_support_barycenter,
                         ordered_barycenter, sample_dirichlet)
from .errors import InputError
from .graph import CliqueComplex, cknn_graph, knn_graph, maximal_cliques
from .measures import Dataset, PointCloud, check_dataset

DEFAULT_K = 15
DEFAULT_N_AUG = 7000


@dataclass(frozen=True)
class AugmentationConfig:
    k: int = DEFAULT_K
    n_aug: int = DEFAULT_N_AUG
    graph_rule: str = "knn"  # "knn" | "mutual-knn" | "cknn"
    delta: float | None = None
    ot_method: str = "exact"
    epsilon: float = ot.SINKHORN_EPSILON
    barycenter: str = "free"  # "free" | "ordered"
    init: str = "largest"
    bary_tol: float | None = None
    bary_max_iter: int = 100
    max_clique_size: int | None = None
    master_seed: int = 0
    threads: int = 1
    bounds: tuple[float, float, float, float] | None = None  # xmin, ymin, xmax, ymax

    def validate(self) -> "AugmentationConfig":
        if self.k < 1:
            raise InputError("k must be at least 1")
        if self.n_aug < 1:
            raise InputError("n_aug must be at least 1")
        if self.graph_rule not in ("knn", "mutual-knn", "cknn"):
            raise InputError(f"unknown graph rule {self.graph_rule!r}")
        if self.graph_rule == "cknn" and not (self.delta and self.delta > 0):
            raise InputError("cknn needs a positive delta")
        if self.barycenter not in ("free", "ordered"):
            raise InputError(f"unknown barycenter mode {self.barycenter!r}")
        ot.method_name(self.ot_method, self.epsilon)
        return self

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class AugmentedSample:
    cloud: PointCloud
    clique_vertices: tuple[int, ...]
    coords: BarycentricCoordinates
    seed: tuple[int, int]
    out_of_bounds: bool = False
    converged: bool = True

    def provenance(self) -> dict:
        return {"index": self.seed[1], "clique": list(self.clique_vertices),
                "lambda": self.coords.tolist(), "seed": list(self.seed),
                "out_of_bounds": self.out_of_bounds, "converged": self.converged}


@dataclass
class AugmentationRun:
    samples: list[AugmentedSample]
    distances: ot.DistanceMatrix
    complex: CliqueComplex
    config: AugmentationConfig
    timings: dict = field(default_factory=dict)

    @property
    def clouds(self) -> list[PointCloud]:
        return [s.cloud for s in self.samples]


def sample_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for sample ``index``; order of generation is irrelevant."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def clique_probabilities(c: CliqueComplex) -> np.ndarray:
    if len(c.cliques) == 0:
        raise InputError("clique complex is empty")
    mass = np.array([c.vertex_weights[list(q)].sum() for q in c.cliques])
    return mass / c.n


def build_graph(m: ot.DistanceMatrix, cfg: AugmentationConfig):
    if cfg.graph_rule == "cknn":
        return cknn_graph(m, cfg.k, cfg.delta)
    return knn_graph(m, cfg.k, mutual=cfg.graph_rule == "mutual-knn")


def build_complex(d: Dataset, cfg: AugmentationConfig,
                  distances: ot.DistanceMatrix | None = None):
    """Distance matrix, neighbor graph and clique complex for ``d``."""
    if distances is None:
        distances = ot.pairwise_matrix(d, cfg.ot_method, cfg.epsilon, threads=cfg.threads)
    elif distances.n != len(d):
        raise InputError(f"distance matrix is {distances.n}x{distances.n} for {len(d)} clouds")
    g = build_graph(distances, cfg)
    return distances, g, maximal_cliques(g, cfg.max_clique_size)


def _in_bounds(cloud: PointCloud, bounds) -> bool:
    if bounds is None:
        return True
    x0, y0, x1, y1 = bounds
    p = cloud.points
    return bool(np.all((p[:, 0] >= x0) & (p[:, 0] <= x1) & (p[:, 1] >= y0) & (p[:, 1] <= y1)))


def draw_sample(d: Dataset, c: CliqueComplex, probs: np.ndarray,
                cfg: AugmentationConfig, index: int) -> AugmentedSample:
    """Generate sample ``index``; depends only on (master_seed, index)."""
    rng = sample_rng(cfg.master_seed, index)
    q = c.cliques[int(rng.choice(len(c.cliques), p=probs))]
    lam = sample_dirichlet(len(q), rng)
    members = [d[i] for i in q]
    if cfg.barycenter == "ordered":
        cloud, ok = ordered_barycenter(members, lam), True
    else:
        res = free_support_barycenter(members, lam, init=cfg.init, tol=cfg.bary_tol,
                                      max_iter=cfg.bary_max_iter, rng=rng)
        cloud, ok = res.cloud, res.converged
    return AugmentedSample(cloud, q, lam, (cfg.master_seed, index),
                           not _in_bounds(cloud, cfg.bounds), ok)


def sample_from_complex(d: Dataset, c: CliqueComplex, cfg: AugmentationConfig,
                        start: int = 0) -> list[AugmentedSample]:
    probs = clique_probabilities(c)
    indices = range(start, start + cfg.n_aug)
    if cfg.threads <= 1:
        return [draw_sample(d, c, probs, cfg, i) for i in indices]
    with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
        return list(ex.map(lambda i: draw_sample(d, c, probs, cfg, i), indices,
                           chunksize=16))


def augment(d: Dataset, cfg: AugmentationConfig,
            distances: ot.DistanceMatrix | None = None) -> AugmentationRun:
    """Generate ``cfg.n_aug`` barycentric samples from ``d``.

    Samples are drawn with replacement over cliques and a fresh lambda is
    drawn for every sample, including repeated cliques.
    """

    check_dataset(d)
    cfg.validate()
    if len(d) <= cfg.k:
        raise InputError(f"need more than k={cfg.k} clouds, got {len(d)}")
    t0 = time.perf_counter()
    distances, _, complex_ = build_complex(d, cfg, distances)
    t1 = time.perf_counter()
    samples = sample_from_complex(d, complex_, cfg)
    t2 = time.perf_counter()
    return AugmentationRun(samples, distances, complex_, cfg,
                           {"graph_s": t1 - t0, "sampling_s": t2 - t1})


def geometric_augment(d: Dataset, scale_max: float = 0.10, rot_max: float = math.pi / 12,
                      prob: float = 0.3, n_aug: int = DEFAULT_N_AUG,
                      seed: int = 0) -> list[PointCloud]:
    """Random rotation and scaling about the centroid of a uniformly chosen input.

    With probability ``prob`` a cloud is rotated by ``U(-rot_max, rot_max)``
    and scaled by ``U(1 - scale_max, 1 + scale_max)``; otherwise it is copied.
    """
    if not 0 <= prob <= 1:
        raise InputError("prob must lie in [0, 1]")
    if scale_max < 0 or rot_max < 0:
        raise InputError("scale_max and rot_max must be nonnegative")
    if n_aug < 1:
        raise InputError("n_aug must be at least 1")
    check_dataset(d)
    out = []
    for i in range(n_aug):
        rng = sample_rng(seed, i)
        src = d[int(rng.integers(len(d)))]
        apply, theta, scale = rng.random() < prob, rng.uniform(-1, 1), rng.uniform(-1, 1)
        if not apply or (scale_max == 0 and rot_max == 0):
            out.append(src)
            continue
        theta *= rot_max
        scale = 1 + scale * scale_max
        c, s = math.cos(theta), math.sin(theta)
        R = scale * np.array([[c, -s], [s, c]])
        center = src.mean
        out.append(src.with_points((src.points - center) @ R.T + center))
    return out


def write_provenance(samples, fh) -> None:
    """One JSON record per line."""
    for s in samples:
        fh.write(json.dumps(s.provenance(), sort_keys=True) + "\n")


def read_provenance(fh) -> list[dict]:
    out = []
    for lineno, line in enumerate(fh, 1):
        if line.strip():
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise InputError(f"provenance line {lineno}: {e}") from e
    return out
