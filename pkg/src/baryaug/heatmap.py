"""Gaussian heatmaps of landmark coordinates.

Pixel ``(i, j)`` is row ``i``, column ``j`` with its center at integer
coordinates; a landmark ``(x, y)`` lies at column ``x``, row ``y``. Each
channel is ``exp(-d^2 / (2 sigma^2))`` with ``d`` the distance from the
pixel center to the landmark, then normalized.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .measures import PointCloud

DEFAULT_SIGMA = 4.0
MAGIC = b"HMP1"
_HEADER = struct.Struct("<4sIII")  # magic, channels, height, width; 16 bytes


@dataclass(frozen=True, eq=False)
class Heatmap:
    tensor: np.ndarray  # (channels, H, W)
    sigma: float
    normalization: str = "sum"
    out_of_frame: tuple[bool, ...] = ()

    @property
    def channels(self) -> int:
        return self.tensor.shape[0]

    def argmax(self, channel: int = 0) -> tuple[int, int]:
        """(row, col) of the channel maximum."""
        return np.unravel_index(int(self.tensor[channel].argmax()), self.tensor.shape[1:])


def _check(sigma, h, w):
    if not (sigma > 0 and np.isfinite(sigma)):
        raise InputError(f"sigma must be positive, got {sigma!r}")
    if h < 1 or w < 1:
        raise InputError("heatmap size must be at least 1x1")


def gaussian_channels(points, sigma: float, h: int, w: int) -> np.ndarray:
    """Unnormalized ``exp(-d^2 / 2 sigma^2)`` for every point, shape (s, h, w)."""
    _check(sigma, h, w)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return np.exp(_log_gaussians(pts, sigma, h, w))


def _log_gaussians(pts: np.ndarray, sigma: float, h: int, w: int) -> np.ndarray:
    rows = np.arange(h, dtype=float)
    cols = np.arange(w, dtype=float)
    dy2 = (rows[None, :] - pts[:, 1:2]) ** 2
    dx2 = (cols[None, :] - pts[:, 0:1]) ** 2
    return -(dy2[:, :, None] + dx2[:, None, :]) / (2 * sigma ** 2)


def _normalize(ch: np.ndarray, log_ch, mode: str) -> np.ndarray:
    if not ch.max() > 0:
        # the Gaussian underflows inside the frame; rebuild from log values
        log_ch = log_ch()
        ch = np.exp(log_ch - log_ch.max())
    if mode == "sum":
        return ch / ch.sum()
    if mode == "peak":
        return ch / ch.max()
    raise InputError(f"unknown normalization {mode!r}")


def _out_of_frame(pts: np.ndarray, h: int, w: int) -> tuple[bool, ...]:
    return tuple(bool(not (0 <= x < w and 0 <= y < h)) for x, y in pts)


def render(cloud: PointCloud, sigma: float = DEFAULT_SIGMA, h: int = 64, w: int = 64,
           normalization: str = "sum") -> Heatmap:
    """One channel per landmark of an ordered cloud.

    Landmarks outside ``[0, w) x [0, h)`` are rendered anyway: the part of
    the Gaussian inside the frame is renormalized and the channel is flagged.
    """
    if not cloud.ordered:
        raise InputError("render needs an ordered cloud; use render_unordered")
    pts = cloud.points
    raw = gaussian_channels(pts, sigma, h, w)
    out = np.stack([_normalize(raw[k], lambda k=k: _log_gaussians(pts[k:k + 1], sigma, h, w)[0],
                               normalization) for k in range(len(pts))])
    return Heatmap(out, float(sigma), normalization, _out_of_frame(pts, h, w))


def render_unordered(cloud: PointCloud, sigma: float = DEFAULT_SIGMA, h: int = 64,
                     w: int = 64, normalization: str = "sum") -> Heatmap:
    """Single channel holding the sum of all per-point Gaussians."""
    pts = cloud.points
    raw = gaussian_channels(pts, sigma, h, w).sum(0)

    def log_sum():
        lg = _log_gaussians(pts, sigma, h, w)
        top = lg.max(0)
        return top + np.log(np.exp(lg - top).sum(0))

    out = _normalize(raw, log_sum, normalization)[None]
    return Heatmap(out, float(sigma), normalization, (any(_out_of_frame(pts, h, w)),))


def to_bytes(hm: Heatmap) -> bytes:
    c, h, w = hm.tensor.shape
    return _HEADER.pack(MAGIC, c, h, w) + np.ascontiguousarray(hm.tensor, dtype="<f8").tobytes()


def from_bytes(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise InputError("heatmap file is shorter than its header")
    magic, c, h, w = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise InputError(f"bad heatmap magic {magic!r}")
    body = data[_HEADER.size:]
    if len(body) != 8 * c * h * w:
        raise InputError(f"heatmap body has {len(body)} bytes, expected {8 * c * h * w}")
    return np.frombuffer(body, dtype="<f8").reshape(c, h, w).copy()


def to_text(hm: Heatmap) -> str:
    c, h, w = hm.tensor.shape
    lines = [f"heatmap {c} {h} {w}"]
    for k in range(c):
        for i in range(h):
            lines.append(" ".join(repr(float(v)) for v in hm.tensor[k, i]))
    return "\n".join(lines) + "\n"


def from_text(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    try:
        tag, c, h, w = lines[0].split()
        if tag != "heatmap":
            raise ValueError(tag)
        c, h, w = int(c), int(h), int(w)
        rows = [[float(v) for v in ln.split()] for ln in lines[1:]]
        arr = np.array(rows, dtype=float)
        return arr.reshape(c, h, w)
    except (ValueError, IndexError) as e:
        raise InputError(f"malformed heatmap text: {e}") from e
