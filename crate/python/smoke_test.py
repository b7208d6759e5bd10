#!/usr/bin/env python3
"""Smoke test for the mdballs_py extension module.

Build the module first:

    cargo build --release -p mdballs-py

then run:

    python3 python/smoke_test.py
"""

import json
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def locate_module():
    for profile in ("release", "debug"):
        so = ROOT / "target" / profile / "libmdballs_py.so"
        if so.exists():
            return so
    sys.exit("libmdballs_py.so not found; run `cargo build -p mdballs-py` first")


def main():
    with tempfile.TemporaryDirectory() as td:
        shutil.copy(locate_module(), pathlib.Path(td) / "mdballs_py.so")
        sys.path.insert(0, td)
        import mdballs_py as mb

        # rank probabilities: two-choice over 4 bins
        p = mb.probability_vector("d-choice", 4, d=2)
        assert p == [1 / 16, 3 / 16, 5 / 16, 7 / 16], p
        assert abs(sum(mb.probability_vector("beta-choice", 10, beta=0.3)) - 1.0) < 1e-12

        # tail bound closed form
        assert abs(mb.chernoff_tail(1.0, 1.0) - 0.25 * math.e) < 1e-12

        # plan execution is deterministic
        plan = "n = 16\nm = 64\ntrials = 3\nseed = 7\n"
        csv1, summary1 = mb.run_plan(plan)
        csv2, summary2 = mb.run_plan(plan)
        assert csv1 == csv2 and summary1 == summary2
        summary = json.loads(summary1)
        point = summary["points"][0]
        assert point["trials"] == 3
        assert point["ci_lower"] <= point["mean"] <= point["ci_upper"]

        # a single simulated state and its gap report
        loads, report = mb.simulate_state("n = 8\nD = 2\nm = 100\nsource.f = 1\nseed = 1\n")
        assert len(loads) == 2 and len(loads[0]) == 8
        assert sum(sum(row) for row in loads) == 100.0
        gaps = json.loads(report)
        assert gaps["t"] == 100 and gaps["max_gap"] >= 0.0

        # exact oracle anchor: one-choice, n=2, m=2 has E[gap] = 1/2
        tiny = "n = 2\nm = 2\nprocess.kind = one-choice\nseed = 3\n"
        assert mb.exact_expected_gap(tiny) == 0.5
        check = json.loads(mb.oracle_check(tiny, trials=20000))
        assert check["passed"], check

        # empty-state potential for the plain variant is 2n
        drift = json.loads(
            mb.drift("n = 4096\nm = 4096\npotentials = beta-plain\n", at=0, samples=200)
        )
        assert drift["gamma"] == 8192.0

    print("smoke test passed")


if __name__ == "__main__":
    main()
