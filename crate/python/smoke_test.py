#!/usr/bin/env python3
"""End-to-end smoke test of the rairs_py extension.

Builds the module with cargo if needed, imports it straight from the
cargo target directory, and walks the whole surface: synthetic data,
exact ground truth, build/search/recall, insert/delete, save/load, cell
stats, the grouped batch mode, and the AIR-loss verifier.

Run from anywhere:  python3 python/smoke_test.py
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_module():
    lib = None
    for profile in ("release", "debug"):
        cand = REPO / "target" / profile / "librairs_py.so"
        if cand.exists():
            lib = cand
            break
    if lib is None:
        print("building rairs-py (cargo build -p rairs-py) ...")
        subprocess.run(
            ["cargo", "build", "-p", "rairs-py"], cwd=REPO, check=True
        )
        lib = REPO / "target" / "debug" / "librairs_py.so"
    stage = Path(tempfile.mkdtemp(prefix="rairs_py_"))
    shutil.copy2(lib, stage / "rairs_py.so")
    sys.path.insert(0, str(stage))
    import rairs_py

    return rairs_py


def recall(found, truth):
    hits = sum(len(set(f) & set(t)) for f, t in zip(found, truth))
    return hits / sum(len(t) for t in truth)


def main():
    m = import_module()

    base, base_ids = m.generate_synthetic(4000, 16, clusters=32, seed=1, spread=0.15)
    queries, _ = m.generate_synthetic(50, 16, clusters=32, seed=1, spread=0.15, skip=4000)
    gt_ids, gt_dists = m.exact_knn(base, queries, 10)
    assert len(gt_ids) == 50 and len(gt_ids[0]) == 10
    assert all(a <= b for d in gt_dists for a, b in zip(d, d[1:]))
    print("exact_knn ok")

    index = m.Index.build(base, base_ids, strategy="air-strict", lam=0.5, nlist=32, seed=7)
    assert (index.ntotal, index.dim, index.nlist) == (4000, 16, 32)
    assert index.strategy == "srair" and index.metric == "l2"
    assert len(index) == 4000 and "srair" in repr(index)

    ids, dists, stats = index.search(queries, k=10, nprobe=32, k_factor=400)
    assert recall(ids, gt_ids) == 1.0, "full probe + full refinement must be exact"
    assert all(s[0] > 0 for s in stats)
    r8 = recall(index.search(queries, k=10, nprobe=8)[0], gt_ids)
    assert 0.5 < r8 <= 1.0
    print(f"search ok (recall@10: nprobe=8 {r8:.3f}, exhaustive 1.000)")

    gids, gdists, gstats, switches = m.Index.batch_search_grouped(
        index, queries, k=10, nprobe=8
    )
    sids, sdists, sstats = index.search(queries, k=10, nprobe=8)
    assert (gids, gdists, gstats) == (sids, sdists, sstats)
    assert 0 < switches <= 32
    print(f"grouped batch ok ({switches} list switches)")

    stats = index.cell_stats()
    assert stats["stored_copies"] >= 4000
    assert 0.0 < stats["pair_cell_vector_fraction"] <= 1.0
    assert sum(k * v for k, v in stats["size_histogram"].items()) >= 4000
    print("cell_stats ok")

    extra, extra_ids = m.generate_synthetic(100, 16, clusters=32, seed=1, spread=0.15, skip=5000)
    index.add(extra, extra_ids)
    assert index.ntotal == 4100 and index.contains(5000)
    deleted, missing = index.delete([5000, 5001, 999_999])
    assert sorted(deleted) == [5000, 5001] and missing == [999_999]
    assert not index.contains(5000)
    hit_ids, _, _ = index.search(extra[:5], k=3, nprobe=32)
    assert all(5000 not in ids and 5001 not in ids for ids in hit_ids)
    print("insert/delete ok")

    with tempfile.TemporaryDirectory() as td:
        path = str(Path(td) / "smoke.idx")
        index.save(path)
        loaded = m.Index.load(path)
        assert loaded.ntotal == index.ntotal and loaded.strategy == index.strategy
        a = index.search(queries, k=10, nprobe=8)
        b = loaded.search(queries, k=10, nprobe=8)
        assert a == b
    print("save/load ok")

    assert abs(m.sin_power_integral(0) - math.pi) < 1e-15
    assert m.sin_power_integral(1) == 2.0
    report = m.verify_air(d=8, l_m=0.5, candidates=50, samples=50_000, seed=3)
    assert report["correlation"] >= 0.99
    assert report["ratio_spread"] <= 1.1
    assert abs(report["ratio"] - report["ratio_theory"]) / report["ratio_theory"] < 0.05
    print(
        "verify_air ok (correlation %.4f, ratio %.4f vs theory %.4f)"
        % (report["correlation"], report["ratio"], report["ratio_theory"])
    )

    print("smoke test passed")


if __name__ == "__main__":
    main()
