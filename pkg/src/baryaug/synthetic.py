"""Synthetic landmark families with known low-dimensional structure."""
from __future__ import annotations

import numpy as np

from .measures import Dataset


def ellipse_family(n: int, s: int = 8, seed: int = 0, center=(32.0, 32.0),
                   ordered: bool = False) -> Dataset:
    """Clouds of ``s`` points on axis-aligned ellipses, two latent parameters.

    With ``u, v ~ U(0, 1)`` the semi-axes are ``a = 10 + 6u`` and
    ``b = 6 + 4v + 3u^2`` pixels; points sit at equally spaced angles.
    """
    rng = np.random.default_rng(seed)
    uv = rng.random((n, 2))
    return ellipse_clouds(uv, s, center, ordered)


def ellipse_clouds(uv, s: int = 8, center=(32.0, 32.0), ordered: bool = False) -> Dataset:
    uv = np.atleast_2d(np.asarray(uv, dtype=float))
    t = 2 * np.pi * np.arange(s) / s
    a = 10 + 6 * uv[:, 0]
    b = 6 + 4 * uv[:, 1] + 3 * uv[:, 0] ** 2
    pts = np.stack([center[0] + a[:, None] * np.cos(t), center[1] + b[:, None] * np.sin(t)], -1)
    return Dataset.from_points(pts, ordered)


def translate_family(base, offsets, ordered: bool = False) -> Dataset:
    base = np.asarray(base, dtype=float)
    return Dataset.from_points([base + np.asarray(o, dtype=float) for o in offsets], ordered)
