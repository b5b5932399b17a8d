"""Smoke test for the dualcert_py extension.

Build first:  cargo build --release -p dualcert-py
Then:         python3 python/smoke_test.py
"""

import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load():
    for name in ("libdualcert_py.so", "libdualcert_py.dylib", "dualcert_py.dll"):
        src = os.path.join(ROOT, "target", "release", name)
        if os.path.exists(src):
            tmp = tempfile.mkdtemp()
            shutil.copy(src, os.path.join(tmp, "dualcert_py.pyd" if name.endswith(".dll") else "dualcert_py.so"))
            sys.path.insert(0, tmp)
            import dualcert_py

            return dualcert_py
    sys.exit("extension not built; run `cargo build --release -p dualcert-py`")


def main():
    dc = load()
    print("dualcert_py", dc.__version__)

    fam = dc.Family.gaussian(2, 1.0)
    assert fam.kind == "gaussian" and fam.dim == 2
    assert dc.Family(fam.to_dict()).to_dict() == fam.to_dict()
    rows = fam.sample(1000, seed=3)
    assert len(rows) == 1000 and len(rows[0]) == 2
    assert rows == fam.sample(1000, seed=3)

    # closed forms
    r = dc.cohen_radius(0.9, 1.0)
    assert r["certifiable"] and abs(r["radius"] - 1.2815515655) < 1e-8
    assert abs(dc.cohen_bound(0.9, 1.0, r["radius"]) - 0.5) < 1e-9
    assert abs(dc.clopper_pearson(1000, 1000, 0.001) - 0.001 ** (1 / 1000)) < 1e-12

    # discrepancy at λ = 1 is total variation: 2Φ(r/2σ) − 1
    threat = dc.Threat("l2", 2.0)
    wd = dc.worst_delta(fam, threat)
    est = dc.discrepancy(fam, wd["vector"], [1.0], n=200_000, seed=1)[0]
    tv = math.erf(1.0 / math.sqrt(2))
    assert abs(est["mean"] - tv) < 5 * est["std_err"], (est, tv)

    # certify with a Python callable and with a synthetic spec
    ball = {"kind": "ball_indicator", "norm": "l2", "center": [0.0, 0.0], "radius": 3.0}

    def inside(batch):
        return [1 if x * x + y * y <= 9.0 else 0 for x, y in batch]

    t = dc.Threat("l2", 0.2)
    a = dc.certify(inside, [0.0, 0.0], fam, t, n1=5000, n2=20000, seed=7)
    b = dc.certify(ball, [0.0, 0.0], fam, t, n1=5000, n2=20000, seed=7)
    assert a["bound"] == b["bound"] and a["successes"] == b["successes"], (a, b)
    assert a["certified"], a
    exact = dc.exact_value(ball, [0.0, 0.0], fam, [0.2, 0.0])
    assert a["bound"] <= exact, (a["bound"], exact)
    print("certificate bound", a["bound"], "exact worst value", exact)

    rep = dc.certify_radius(ball, [0.0, 0.0], fam, dc.Threat("l2", 3.0), n1=5000, n2=20000, iterations=8)
    print("certified radius", rep["radius"])
    assert 0.0 < rep["radius"] < 3.0

    try:
        dc.Family.mixed_norm(3, 5.0, 1.0)
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("k >= d accepted")

    def broken(batch):
        return [2] * len(batch)

    try:
        dc.certify(broken, [0.0, 0.0], fam, t, n1=100, n2=100)
    except RuntimeError as e:
        print("transport error:", e)
    else:
        raise AssertionError("bad labels accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
