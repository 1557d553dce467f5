"""Landmark files, digests, caches and run manifests."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .errors import InputError
from .measures import Dataset, make_uniform_cloud

FORMAT_TAG = "baryaug-landmarks"
CACHE_ENV = "BARYAUG_CACHE_DIR"


def _parse_cloud(rec, index: int, ordered: bool):
    try:
        pts = np.array(rec, dtype=float)
    except (TypeError, ValueError) as e:
        raise InputError(f"landmark record {index}: not an array of [x, y] pairs") from e
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
        raise InputError(f"landmark record {index}: expected a nonempty list of [x, y] pairs")
    try:
        return make_uniform_cloud(pts, ordered)
    except InputError as e:
        raise InputError(f"landmark record {index}: {e}") from e


def loads_json(text: str) -> Dataset:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"invalid JSON at line {e.lineno}: {e.msg}") from e
    if not isinstance(doc, dict) or "landmarks" not in doc:
        raise InputError("landmark file needs a top-level object with 'landmarks'")
    ordered = bool(doc.get("ordered", False))
    recs = doc["landmarks"]
    if not isinstance(recs, list) or not recs:
        raise InputError("'landmarks' must be a nonempty array")
    clouds = [_parse_cloud(r, i, ordered) for i, r in enumerate(recs)]
    n_points = doc.get("n_points")
    if n_points is not None:
        for i, c in enumerate(clouds):
            if c.size != n_points:
                raise InputError(f"landmark record {i}: has {c.size} points, n_points={n_points}")
    return Dataset.of(clouds)


def dumps_json(d) -> str:
    clouds = list(d)
    sizes = {c.size for c in clouds}
    doc = {
        "format": FORMAT_TAG,
        "version": 1,
        "ordered": bool(clouds[0].ordered) if clouds else False,
        "n_points": sizes.pop() if len(sizes) == 1 else None,
        "landmarks": [c.points.tolist() for c in clouds],
    }
    # floats are written with repr, so finite doubles round-trip exactly
    return json.dumps(doc) + "\n"


def loads_csv(text: str, ordered: bool = False) -> Dataset:
    """One cloud per row: ``x1, y1, x2, y2, ...``; ``#`` lines are skipped."""
    clouds = []
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].lstrip().startswith("#")]
    for i, row in enumerate(rows):
        try:
            vals = [float(v) for v in row if v.strip() != ""]
        except ValueError as e:
            raise InputError(f"landmark record {i}: {e}") from e
        if not vals or len(vals) % 2:
            raise InputError(f"landmark record {i}: needs an even number of values")
        clouds.append(_parse_cloud(np.reshape(vals, (-1, 2)), i, ordered))
    if not clouds:
        raise InputError("CSV landmark file has no rows")
    return Dataset.of(clouds)


def dumps_csv(d) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    for c in d:
        w.writerow([repr(float(v)) for v in c.points.ravel()])
    return out.getvalue()


def detect_format(path, explicit: str | None = None) -> str:
    if explicit:
        return explicit
    return "csv" if str(path).lower().endswith(".csv") else "json"


def read_landmarks(path, fmt: str | None = None, ordered: bool | None = None) -> Dataset:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from e
    if detect_format(path, fmt) == "csv":
        return loads_csv(text, bool(ordered))
    d = loads_json(text)
    if ordered is not None and ordered != d.ordered:
        d = Dataset.from_points([c.points for c in d], ordered)
    return d


def write_landmarks(d, path, fmt: str | None = None) -> None:
    text = dumps_csv(d) if detect_format(path, fmt) == "csv" else dumps_json(d)
    atomic_write(path, text.encode())


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


@contextmanager
def cleanup_on_failure(*paths):
    """Remove ``paths`` if the block raises, so no partial outputs survive."""
    try:
        yield
    except BaseException:
        for p in paths:
            try:
                Path(p).unlink()
            except FileNotFoundError:
                pass
        raise


def cache_dir() -> Path:
    root = os.environ.get(CACHE_ENV)
    return Path(root) if root else Path.home() / ".cache" / "baryaug"


def cache_path(input_digest: str, fingerprint: str) -> Path:
    key = hashlib.sha256(f"{input_digest}:{fingerprint}".encode()).hexdigest()[:32]
    return cache_dir() / f"dist-{key}.npz"
