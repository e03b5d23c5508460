#!/usr/bin/env python3
"""Smoke test for the pprop_py extension module.

Builds the cdylib if needed, loads it, and exercises graph generation,
dataset IO, propagation and a tiny experiment matrix.

Usage: python3 python/smoke_test.py
"""
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def ensure_module():
    so = ROOT / "target" / "debug" / "libpprop_py.so"
    if not so.exists():
        subprocess.run(
            ["cargo", "build", "-p", "pprop-python"], cwd=ROOT, check=True
        )
    staged = Path(__file__).resolve().parent / "pprop_py.so"
    if not staged.exists() or so.stat().st_mtime > staged.stat().st_mtime:
        shutil.copy2(so, staged)
    sys.path.insert(0, str(staged.parent))


def main():
    ensure_module()
    import pprop_py as pp

    g = pp.sbm(
        blocks=3,
        nodes_per_block=40,
        p_intra=0.25,
        p_inter=0.03,
        features_per_class=8,
        noise=0.3,
        seed=7,
    )
    assert g.n == 120
    assert g.num_classes == 3
    assert len(g.labels) == 120
    assert all(0 <= u < v < 120 for u, v in g.edges)
    print(f"generated {g!r}")

    with tempfile.TemporaryDirectory() as d:
        g.save(d, "smoke")
        g2 = pp.load(d, "smoke")
        assert g2.n == g.n and g2.edges == g.edges and g2.labels == g.labels
    print("dataset round trip ok")

    h = [[1.0 if g.labels[i] == c else 0.0 for c in range(3)] for i in range(g.n)]
    exact = g.propagate_exact(h, alpha=0.1)
    approx = g.propagate_iterative(h, alpha=0.1, steps=50)
    err = max(
        abs(a - b) for ra, rb in zip(exact, approx) for a, b in zip(ra, rb)
    )
    assert err < 1e-2, f"iterative propagation too far from exact: {err}"
    print(f"propagation ok (max |exact - K=50| = {err:.2e})")

    runs, summary = pp.run_experiment(
        g,
        """
        model = "appnp"
        k = 10
        alpha = 0.1
        split_seeds = [1000, 1001]
        init_seeds = [1]
        max_epochs = 300
        """,
    )
    assert len(runs) == 2
    assert summary["failed_runs"] == 0
    assert 0.0 <= summary["accuracy_mean"] <= 1.0
    print(f"experiment ok: accuracy {summary['accuracy_mean']:.3f}")

    mean, lo, hi = pp.bootstrap_ci([0.8, 0.82, 0.85, 0.78, 0.8], seed=3)
    assert lo <= mean <= hi
    t, p, d = pp.paired_t_test([0.9, 0.8, 0.85], [0.7, 0.6, 0.62])
    assert d > 0 and p < 0.05 and not math.isnan(t)
    print("stats ok")
    print("smoke test passed")


if __name__ == "__main__":
    main()
