"""Smoke test for the glaa_py extension.

Build first:
    cargo build --release -p glaa-py --features extension-module
then run:
    python3 python/smoke_test.py
"""

import importlib.util
import math
import pathlib
import random
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_extension():
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libglaa_py.so"
        if lib.exists():
            break
    else:
        sys.exit("libglaa_py.so not found; build the glaa-py crate first")
    # The loader wants the module's own name on the file.
    tmp = pathlib.Path(tempfile.mkdtemp()) / "glaa_py.so"
    shutil.copy(lib, tmp)
    spec = importlib.util.spec_from_file_location("glaa_py", tmp)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def planted(n, p1, p2, seed):
    """X and Y share a 1-d signal whose sign flips with scalar Z."""
    rng = random.Random(seed)
    x, y, z = [], [], []
    for _ in range(n):
        zi = rng.gauss(0, 1)
        u = rng.gauss(0, 1)
        v = math.copysign(0.9, zi) * u + math.sqrt(1 - 0.81) * rng.gauss(0, 1)
        x.append([u if j == 0 else rng.gauss(0, 1) for j in range(p1)])
        y.append([v if j == 0 else rng.gauss(0, 1) for j in range(p2)])
        z.append([zi])
    return x, y, z


def main():
    glaa = load_extension()
    x, y, z = planted(400, 8, 6, seed=1)

    res = glaa.fit(x, y, z, [1, 1, 1], eta_tilde=[0.05, 0.05, 0.0])
    assert res["converged"], res
    assert res["active_sets"][0] == [1], res["active_sets"]
    assert res["active_sets"][1] == [1], res["active_sets"]
    assert len(res["loadings"][0]) == 8

    tuned = glaa.tune(x, y, z, [1, 1, 1], grid_size=3, seed=4)
    assert len(tuned["loss_table"]) == 16
    assert tuned == glaa.tune(x, y, z, [1, 1, 1], grid_size=3, seed=4)
    assert 1 in tuned["refit"]["active_sets"][0]

    try:
        glaa.fit(x, y, z, [2, 2, 2])
    except ValueError as e:
        assert "rank" in str(e)
    else:
        raise AssertionError("rank larger than p3 was accepted")

    rows = glaa.simulate(3, 2, seed=0, n=80)
    assert [r["method"] for r in rows] == ["GLAA", "ULA"]
    assert 0.0 <= rows[0]["d"][0] <= 1.0

    print("glaa_py smoke test passed")


if __name__ == "__main__":
    main()
