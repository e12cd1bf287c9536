"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the measured metrics.
"""

import math
import subprocess
import sys

import pytest

from cpass.verify import read_metrics_csv, run_all


@pytest.fixture(scope="session")
def results():
    return {r.key: r for r in run_all(seed_base=0)}


def _report(res):
    print("\n" + res.line())
    assert res.seconds < res.limit_s, f"runtime {res.seconds:.1f}s exceeds {res.limit_s:g}s"
    assert res.passed, res.line()


def test_criterion_1_dof_slope_and_rank(results):
    _report(results["1"])


def test_criterion_2_power_scaling(results):
    _report(results["2"])


def test_criterion_3_solver_micro_oracles(results):
    _report(results["3"])


def test_criterion_4_monotone_descent(results):
    _report(results["4"])


def test_criterion_5_energy_and_feasibility(results):
    _report(results["5"])


def test_criterion_6_architecture_comparison(results):
    _report(results["6"])


def test_criterion_7_verify_is_deterministic(tmp_path):
    outs = [tmp_path / f"run{i}.csv" for i in range(2)]
    procs = [subprocess.Popen([sys.executable, "-m", "cpass.cli", "verify", "--seed-base", "0",
                               "--out", str(o)], stdout=subprocess.DEVNULL)
             for o in outs]
    for p in procs:
        p.wait(timeout=1200)
    a, b = (read_metrics_csv(o.read_text()) for o in outs)
    assert a.keys() == b.keys() and a
    worst = 0.0
    for k in a:
        x, y = a[k], b[k]
        if math.isnan(x) or math.isnan(y):
            worst = worst if (math.isnan(x) and math.isnan(y)) else math.inf
        elif x != y:
            worst = max(worst, abs(x - y) / max(1.0, abs(x)))
    ok = worst <= 1e-9
    print(f"\n[{'PASS' if ok else 'FAIL'}] 7 determinism: metrics={len(a)}, worst_rel_diff={worst:.3g}")
    assert ok
