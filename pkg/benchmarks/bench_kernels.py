"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5]

The first numba call compiles (or loads the on-disk cache) and is not
timed.  Both routes get the same arrays, so the outputs are compared too.
"""
import argparse
import time

import numpy as np

from boolperc import _kernels as K
from boolperc import forest as fo
from boolperc import geometry as geo
from boolperc import process as pr
from boolperc.rng import stream
from boolperc.scene import build_scene


def best_of(fn, repeat):
    fn()
    ts = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t)
    return min(ts)


def cases():
    om = pr.sample_poisson(geo.EUCLIDEAN2, 30.0, 3.0, 1.0, pr.Constant(1.0), stream(1))
    pts, rad = np.ascontiguousarray(om.points), om.radii.copy()
    yield "ball_edges (E2, %d balls)" % len(om), \
        lambda: K.ball_edges_nb(pts, rad, False), lambda: K.ball_edges_np(pts, rad, False)

    hom = pr.sample_poisson(geo.HYPERBOLIC_PLANE, 7.0, 2.0, 0.3, pr.Constant(1.0), stream(2))
    hp, hr = np.ascontiguousarray(hom.points), hom.radii.copy()
    yield "ball_edges (H2, %d balls)" % len(hom), \
        lambda: K.ball_edges_nb(hp, hr, True), lambda: K.ball_edges_np(hp, hr, True)

    ei, ej = K.ball_edges_nb(pts, rad, False)
    n = len(om)
    yield "components", lambda: K.components_nb(n, ei, ej), lambda: K.components_np(n, ei, ej)

    S = build_scene(geo.EUCLIDEAN2, om.restrict(20.0, 3.0), 23.0, 20.0, 0.1)
    r = S.raster
    mask = ~S.occupied
    group = np.zeros(r.n, dtype=np.int64)
    yield "label_masked (%d cells)" % r.n, \
        lambda: K.label_masked_nb(r.indptr, r.indices, mask, group), \
        lambda: K.label_masked_np(r.indptr, r.indices, mask, group)

    ip, ix, w = r.metric_graph()
    src = np.flatnonzero(mask)[:1].astype(np.int64)
    yield "dijkstra (cutoff 5)", \
        lambda: K.dijkstra_nb(ip, ix, w, mask, src, 5.0), lambda: K.dijkstra_np(ip, ix, w, mask, src, 5.0)

    t = fo.regular_tree(3, 12)
    starts = np.zeros(20000, dtype=np.int64)
    u = stream(3).random((20000, 20))
    yield "walk_paths (20000 x 20)", \
        lambda: K.walk_paths_nb(t.indptr, t.indices, starts, u, True), \
        lambda: K.walk_paths_np(t.indptr, t.indices, starts, u, True)

    ue = stream(4).random((5000, 500))
    yield "escape_runs (5000 x 500)", \
        lambda: K.escape_runs_nb(t.indptr, t.indices, 0, t.exits, ue), \
        lambda: K.escape_runs_np(t.indptr, t.indices, 0, t.exits, ue)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not K.HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    print(f"{'kernel':32s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, nb, npy in cases():
        a, b = nb(), npy()
        a, b = (a if isinstance(a, tuple) else (a,)), (b if isinstance(b, tuple) else (b,))
        same = all(np.array_equal(x, y) for x, y in zip(a, b))
        tn, tp = best_of(nb, args.repeat), best_of(npy, args.repeat)
        flag = "" if same else "  (outputs differ)"
        print(f"{name:32s} {tn * 1e3:10.2f} {tp * 1e3:10.2f} {tp / tn:8.1f}{flag}")


if __name__ == "__main__":
    main()
