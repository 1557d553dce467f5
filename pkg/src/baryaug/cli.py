"""Command line interface.

Exit codes: 0 success, 2 bad input, 3 numerical failure, 4 resource limit.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from io import StringIO
from pathlib import Path

import numpy as np

from . import __version__, evaluate, heatmap, io, ot
from .barycenter import free_support_barycenter
from .errors import BaryaugError, ConvergenceError, InputError
from .graph import maximal_cliques
from .sampler import (DEFAULT_K, DEFAULT_N_AUG, AugmentationConfig, augment, build_graph,
                      geometric_augment, write_provenance)

log = logging.getLogger("baryaug")


# --------------------------------------------------------------------------
# shared plumbing


def _load(args, path=None):
    path = path or args.input
    return io.read_landmarks(path, getattr(args, "input_format", None),
                             True if getattr(args, "ordered", False) else None)


def _fingerprint(args) -> str:
    return f"{ot.method_name(args.ot, args.epsilon)}|baryaug-{__version__}"


def _distances(args, d, input_path) -> ot.DistanceMatrix:
    """Pairwise matrix, served from the cache when the fingerprint matches."""
    fp = _fingerprint(args)
    if getattr(args, "matrix", None):
        m = ot.DistanceMatrix.from_csv(args.matrix, "file")
        if m.n != len(d):
            raise InputError(f"matrix {args.matrix} is {m.n}x{m.n} for {len(d)} clouds")
        return m
    path = None
    if not args.no_cache:
        digest = io.sha256_file(input_path)
        path = io.cache_path(digest + ("|ordered" if d.ordered else ""),
                             ot.method_name(args.ot, args.epsilon))
        if path.exists():
            cached = ot.DistanceMatrix.load_cache(path, fp)
            if cached is not None and cached.n == len(d):
                log.info("cache hit %s: skipped recomputation", path.name)
                args._cache_hit = True
                return cached
            log.info("stale cache %s: recomputing", path.name)
    m = ot.pairwise_matrix(d, args.ot, args.epsilon, threads=args.threads)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        m.save_cache(path, fp)
    return m


def _write_manifest(args, argv, inputs, outputs, timings, config=None, path=None):
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "config": config if config is not None else _config_snapshot(args),
        "inputs": {str(p): io.sha256_file(p) for p in inputs},
        "outputs": {str(p): io.sha256_file(p) for p in outputs},
        "master_seed": getattr(args, "seed", None),
        "tool_version": __version__,
        "timings": timings,
    }
    path = Path(path or str(outputs[0]) + ".manifest.json")
    io.atomic_write(path, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    return path


def _config_snapshot(args) -> dict:
    skip = {"func", "command", "_cache_hit"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _add_ot(p):
    p.add_argument("--ot", choices=("exact", "sinkhorn", "ordered"), default="exact",
                   help="W2 solver (default: exact)")
    p.add_argument("--epsilon", type=float, default=ot.SINKHORN_EPSILON,
                   help="Sinkhorn regularization relative to squared diameter")
    p.add_argument("--threads", type=int, default=1)


def _add_input(p, many=False):
    if not many:
        p.add_argument("input", help="landmark file (.json or .csv)")
    p.add_argument("--input-format", choices=("json", "csv"))
    p.add_argument("--ordered", action="store_true",
                   help="treat landmarks as ordered (needed for CSV input)")


def _add_graph(p):
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--delta", type=float, help="use the ckNN rule with this delta")
    p.add_argument("--mutual", action="store_true", help="mutual instead of union kNN")
    p.add_argument("--matrix", help="precomputed distance matrix CSV")
    p.add_argument("--no-cache", action="store_true")


def _graph_rule(args) -> str:
    if args.delta is not None:
        return "cknn"
    return "mutual-knn" if args.mutual else "knn"


# --------------------------------------------------------------------------
# commands


def cmd_dist(args, argv):
    t0 = time.perf_counter()
    d = _load(args)
    with io.cleanup_on_failure(args.output):
        m = _distances(args, d, args.input)
        data = _matrix_bytes(m)
        io.atomic_write(args.output, data)
    dt = time.perf_counter() - t0
    print(f"N={len(d)} method={m.method} wall={dt:.3f}s"
          + (" (cached)" if getattr(args, "_cache_hit", False) else ""))
    _write_manifest(args, argv, [args.input], [args.output], {"wall_s": dt})
    return 0


def _matrix_bytes(m: ot.DistanceMatrix) -> bytes:
    buf = StringIO()
    m.to_csv(buf)
    return buf.getvalue().encode()


def cmd_graph(args, argv):
    t0 = time.perf_counter()
    d = _load(args)
    cfg = AugmentationConfig(k=args.k, graph_rule=_graph_rule(args), delta=args.delta)
    cfg.validate()
    with io.cleanup_on_failure(args.output):
        g = build_graph(_distances(args, d, args.input), cfg)
        io.atomic_write(args.output, g.to_text().encode())
    print(f"n={g.n} edges={len(g.edges)} rule={g.rule}")
    _write_manifest(args, argv, [args.input], [args.output],
                    {"wall_s": time.perf_counter() - t0})
    return 0


def cmd_cliques(args, argv):
    t0 = time.perf_counter()
    d = _load(args)
    cfg = AugmentationConfig(k=args.k, graph_rule=_graph_rule(args), delta=args.delta)
    cfg.validate()
    with io.cleanup_on_failure(args.output):
        g = build_graph(_distances(args, d, args.input), cfg)
        c = maximal_cliques(g, args.max_clique_size)
        io.atomic_write(args.output, c.to_text().encode())
    sizes = [len(q) for q in c.cliques]
    print(f"n={c.n} cliques={len(c)} max_size={max(sizes)}")
    _write_manifest(args, argv, [args.input], [args.output],
                    {"wall_s": time.perf_counter() - t0})
    return 0


def cmd_augment(args, argv):
    t0 = time.perf_counter()
    d = _load(args)
    bounds = tuple(args.bounds) if args.bounds else None
    cfg = AugmentationConfig(
        k=args.k, n_aug=args.n_aug, graph_rule=_graph_rule(args), delta=args.delta,
        ot_method=args.ot, epsilon=args.epsilon, barycenter=args.barycenter,
        max_clique_size=args.max_clique_size, master_seed=args.seed,
        threads=args.threads, bounds=bounds)
    cfg.validate()
    sidecar = Path(str(args.output) + ".provenance.jsonl")
    with io.cleanup_on_failure(args.output, sidecar):
        m = _distances(args, d, args.input)
        run = augment(d, cfg, distances=m)
        io.write_landmarks(run.clouds, args.output, args.format)
        with open(sidecar, "w") as fh:
            write_provenance(run.samples, fh)
    flagged = sum(s.out_of_bounds for s in run.samples)
    unconverged = sum(not s.converged for s in run.samples)
    print(f"samples={len(run.samples)} cliques={len(run.complex)} "
          f"out_of_bounds={flagged} unconverged={unconverged}")
    timings = dict(run.timings, wall_s=time.perf_counter() - t0)
    _write_manifest(args, argv, [args.input], [args.output, sidecar], timings,
                    config=cfg.to_dict())
    return 0


def cmd_geom_augment(args, argv):
    t0 = time.perf_counter()
    d = _load(args)
    with io.cleanup_on_failure(args.output):
        out = geometric_augment(d, args.scale_max, args.rot_max, args.prob, args.n_aug, args.seed)
        io.write_landmarks(out, args.output, args.format)
    print(f"samples={len(out)}")
    _write_manifest(args, argv, [args.input], [args.output],
                    {"wall_s": time.perf_counter() - t0})
    return 0


def cmd_eval(args, argv):
    t0 = time.perf_counter()
    A = _load(args, args.set_a)
    B = _load(args, args.set_b)
    outputs = []
    if args.sweep:
        cfg = AugmentationConfig(k=args.k, n_aug=args.n_aug or len(B), ot_method=args.ot,
                                 epsilon=args.epsilon, threads=args.threads)
        cfg.validate()
        rows = evaluate.meta_w2_curve(A, B, cfg, tuple(args.sizes), args.runs, args.seed,
                                      baseline=args.baseline)
        lines = ["N,median,q25,q75,min,max,runs"]
        lines += [f"{r['N']},{r['median']!r},{r['q25']!r},{r['q75']!r},{r['min']!r},"
                  f"{r['max']!r},{r['runs']}" for r in rows]
        text = "\n".join(lines) + "\n"
    else:
        rep = evaluate.evaluate(A, B, args.ot, args.epsilon, kl_k=args.kl_k,
                                dim_eff=args.dim_eff, threads=args.threads)
        text = (json.dumps(rep.to_dict(), sort_keys=True) + "\n"
                if args.format == "json" else rep.to_text())
    if args.output:
        with io.cleanup_on_failure(args.output):
            io.atomic_write(args.output, text.encode())
        outputs.append(args.output)
    sys.stdout.write(text)
    if outputs:
        _write_manifest(args, argv, [args.set_a, args.set_b], outputs,
                        {"wall_s": time.perf_counter() - t0})
    return 0


def cmd_heatmap(args, argv):
    t0 = time.perf_counter()
    d = _load(args)
    h, w = args.size
    out_dir = Path(args.output)
    written = []
    try:
        for i, c in enumerate(d):
            if args.unordered or not c.ordered:
                hm = heatmap.render_unordered(c, args.sigma, h, w, args.normalization)
            else:
                hm = heatmap.render(c, args.sigma, h, w, args.normalization)
            if args.text:
                path, data = out_dir / f"heatmap_{i:05d}.txt", heatmap.to_text(hm).encode()
            else:
                path, data = out_dir / f"heatmap_{i:05d}.hmap", heatmap.to_bytes(hm)
            io.atomic_write(path, data)
            written.append(path)
            if any(hm.out_of_frame):
                log.warning("cloud %d has landmarks outside the frame", i)
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    print(f"heatmaps={len(written)} channels={hm.channels} size={h}x{w} sigma={args.sigma}")
    _write_manifest(args, argv, [args.input], written, {"wall_s": time.perf_counter() - t0},
                    path=out_dir / "manifest.json")
    return 0


def cmd_verify_theorem(args, argv):
    t0 = time.perf_counter()
    d = _load(args)
    vertices = list(d)
    lam = np.asarray(args.weights, dtype=float) if args.weights else np.ones(len(vertices))
    if lam.size != len(vertices) or np.any(lam < 0) or lam.sum() <= 0:
        raise InputError(f"--weights needs {len(vertices)} nonnegative values")
    interior = free_support_barycenter(vertices, lam / lam.sum()).cloud
    res = evaluate.verify_covering_bound(vertices, interior, args.n_mc, args.seed)
    rec = {"k": len(vertices), "bound": res.bound, "mc_estimate": res.mc_estimate,
           "stderr": res.stderr, "holds": res.holds, "radii": list(res.radii),
           "n_mc": res.n_mc}
    text = json.dumps(rec, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if args.output:
        io.atomic_write(args.output, text.encode())
        _write_manifest(args, argv, [args.input], [args.output],
                        {"wall_s": time.perf_counter() - t0})
    return 0 if res.holds else 3


def cmd_replay(args, argv):
    try:
        manifest = json.loads(Path(args.manifest).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read manifest {args.manifest}: {e}") from e
    code = main(manifest["argv"])
    if code != 0:
        return code
    bad = [p for p, digest in manifest["outputs"].items() if io.sha256_file(p) != digest]
    for p in bad:
        print(f"MISMATCH {p}")
    if bad:
        return 3
    print(f"replay ok: {len(manifest['outputs'])} outputs identical")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="baryaug", description=(
        "Barycentric oversampling of landmark point clouds in Wasserstein space."))
    ap.add_argument("--version", action="version", version=f"baryaug {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dist", help="pairwise W2 distance matrix")
    _add_input(p)
    _add_ot(p)
    p.add_argument("-o", "--output", required=True, help="CSV matrix")
    p.add_argument("--no-cache", action="store_true")
    p.set_defaults(func=cmd_dist)

    for name, func, helptext in (("graph", cmd_graph, "neighborhood graph"),
                                 ("cliques", cmd_cliques, "maximal cliques")):
        p = sub.add_parser(name, help=helptext)
        _add_input(p)
        _add_ot(p)
        _add_graph(p)
        p.add_argument("-o", "--output", required=True)
        if name == "cliques":
            p.add_argument("--max-clique-size", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("augment", help="barycentric oversampling")
    _add_input(p)
    _add_ot(p)
    _add_graph(p)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--n-aug", type=int, default=DEFAULT_N_AUG)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--barycenter", choices=("free", "ordered"), default="free")
    p.add_argument("--max-clique-size", type=int)
    p.add_argument("--bounds", type=float, nargs=4, metavar=("XMIN", "YMIN", "XMAX", "YMAX"))
    p.add_argument("--format", choices=("json", "csv"))
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("geom-augment", help="random rotation/scaling baseline")
    _add_input(p)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--n-aug", type=int, default=DEFAULT_N_AUG)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale-max", type=float, default=0.10)
    p.add_argument("--rot-max", type=float, default=math.pi / 12)
    p.add_argument("--prob", type=float, default=0.3)
    p.add_argument("--format", choices=("json", "csv"))
    p.set_defaults(func=cmd_geom_augment)

    p = sub.add_parser("eval", help="meta-W2 and KL between two landmark sets")
    p.add_argument("set_a")
    p.add_argument("set_b")
    _add_input(p, many=True)
    _add_ot(p)
    p.add_argument("-o", "--output")
    p.add_argument("--format", choices=("json", "csv", "text"), default="text")
    p.add_argument("--kl-k", type=int, default=1)
    p.add_argument("--dim-eff", type=float)
    p.add_argument("--sweep", action="store_true",
                   help="augment subsets of SET_A and compare to SET_B; emits CSV")
    p.add_argument("--sizes", type=int, nargs="+", default=list(evaluate.CURVE_SIZES))
    p.add_argument("--runs", type=int, default=evaluate.CURVE_RUNS)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--n-aug", type=int, help="samples per run (default |SET_B|)")
    p.add_argument("--baseline", choices=("barycentric", "geometric"), default="barycentric")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("heatmap", help="render Gaussian heatmaps")
    _add_input(p)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--sigma", type=float, default=heatmap.DEFAULT_SIGMA)
    p.add_argument("--size", type=int, nargs=2, default=(64, 64), metavar=("H", "W"))
    p.add_argument("--unordered", action="store_true", help="single summed channel")
    p.add_argument("--normalization", choices=("sum", "peak"), default="sum")
    p.add_argument("--text", action="store_true", help="text grid instead of binary")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("verify-theorem", help="Monte-Carlo check of the simplex covering bound")
    _add_input(p)
    p.add_argument("--weights", type=float, nargs="+",
                   help="barycentric weights of the interior point (default uniform)")
    p.add_argument("--n-mc", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_verify_theorem)

    p = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args, argv)
    except BaryaugError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"error: {e}", file=sys.stderr)
        return ConvergenceError.exit_code
    except MemoryError:
        print("error: out of memory", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
