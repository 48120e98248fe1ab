"""End-to-end acceptance criteria at their pinned tolerances.

Each test records one PASS/FAIL line (shown in the terminal summary) and then
asserts. The lambda=10 sweep is computed once and shared by criteria 3-5.
"""
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from _reference import backward_euler_grad_error
from ctstokes.cli import main
from ctstokes.experiment import build_system, parse_config, run_single
from ctstokes.manufactured import AnalyticStokes
from ctstokes.selftest import run_selftest

pytestmark = pytest.mark.slow


def report(label, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def _sweep(overrides):
    cfg = parse_config("", overrides)
    system = build_system(cfg)
    start = time.perf_counter()
    results = [run_single(system, cfg, dt) for dt in cfg.dt]
    return cfg, results, time.perf_counter() - start


@pytest.fixture(scope="module")
def sweep10():
    return _sweep({"lambda": "10", "T": "3", "nx": "48", "ny": "48"})


def test_c1_oracle_suite():
    start = time.perf_counter()
    ok = run_selftest(verbose=False)
    elapsed = time.perf_counter() - start
    passed = report("C1 oracle suite", ok and elapsed < 30,
                    f"all checks {'pass' if ok else 'do not pass'}, {elapsed:.1f} s (< 30 s)")
    assert passed


def test_c2_projection_rate():
    start = time.perf_counter()
    cfg, results, _ = _sweep({"lambda": "1", "T": "1", "nx": "48", "ny": "48",
                              "dt": "0.1,0.05,0.025,0.0125"})
    system = build_system(cfg)
    floor = backward_euler_grad_error(system, AnalyticStokes(1.0, cfg.mu), cfg.T, 0.00625)
    errs = [math.sqrt(r.rows[-1].error_grad_sq / cfg.mu) for r in results]
    elapsed = time.perf_counter() - start
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    orders = []
    for (dt0, e0), (dt1, e1) in zip(zip(cfg.dt, errs), zip(cfg.dt[1:], errs[1:])):
        if e1 > 3 * floor:
            orders.append(math.log(e0 / e1) / math.log(dt0 / dt1))
    in_band = bool(orders) and all(0.4 <= p <= 1.6 for p in orders)
    ok = decreasing and in_band and elapsed < 300
    detail = (f"errors {', '.join(f'{e:.4g}' for e in errs)}; floor {floor:.4g}; "
              f"orders above 3x floor {', '.join(f'{p:.3f}' for p in orders)}; {elapsed:.0f} s")
    assert report("C2 velocity gradient rate in [0.4, 1.6]", ok, detail)


def _final(results):
    return [r.rows[-1] for r in results]


def test_c3a_eff2_bounded(sweep10):
    cfg, results, elapsed = sweep10
    eff2 = [r.eff2 for r in _final(results)]
    spread = max(eff2) / min(eff2)
    ok = spread < 10 and elapsed < 900
    assert report("C3a eff2(T=3) varies < 10x", ok,
                  f"eff2 {', '.join(f'{e:.3f}' for e in eff2)}; spread {spread:.2f}; sweep {elapsed:.0f} s")


def test_c3b_est1_over_est2_monotone(sweep10):
    cfg, results, _ = sweep10
    ratio = [r.est1 / r.est2 for r in _final(results)]
    ok = all(b > a for a, b in zip(ratio, ratio[1:]))
    assert report("C3b est1/est2 increases as dt decreases", ok,
                  ", ".join(f"{x:.3f}" for x in ratio))


def test_c3c_est1_over_est2_exceeds_3(sweep10):
    cfg, results, _ = sweep10
    last = _final(results)[-1]
    ratio = last.est1 / last.est2
    assert report("C3c est1/est2 > 3 at dt=0.00625", ratio > 3,
                  f"ratio {ratio:.4f} (T*est2/est2 = {cfg.T:g} bounds it)")


def test_c4a_est3_below_est2(sweep10):
    rows = _final(sweep10[1])[-2:]
    ok = all(r.est3 <= r.est2 for r in rows)
    assert report("C4a est3 <= est2 for two smallest dt", ok,
                  "; ".join(f"dt={r.dt:g}: {r.est3:.4g} <= {r.est2:.4g}" for r in rows))


def test_c4b_eff3_decreases(sweep10):
    eff3 = [r.eff3 for r in _final(sweep10[1])]
    ok = all(b < a for a, b in zip(eff3, eff3[1:]))
    assert report("C4b eff3 decreases with dt", ok, ", ".join(f"{e:.4f}" for e in eff3))


def test_c4c_eff2_no_large_drop(sweep10):
    eff2 = [r.eff2 for r in _final(sweep10[1])]
    worst = max(eff2[i] / eff2[j] for i in range(len(eff2)) for j in range(i, len(eff2)))
    ok = worst <= 3
    assert report("C4c eff2 never drops by > 3x", ok,
                  f"largest drop factor {worst:.3f}")


def test_c5_proof_chain(sweep10):
    lines = []
    ok = True
    for r in sweep10[1]:
        L = r.ledger
        holds = L.proof_lhs <= L.proof_rhs * (1 + 1e-10)
        ok &= holds
        lines.append(f"dt={r.dt:g}: {L.proof_lhs:.4g} <= {L.proof_rhs:.4g}")
    assert report("C5 proof-chain inequality", ok, "; ".join(lines))


def test_c6_linf_gap():
    cfg, results, elapsed = _sweep({"lambda": "1", "T": "10", "nx": "48", "ny": "48",
                                    "dt": "0.1,0.05,0.025"})
    ratios = [r.rows[-1].linf_term / r.rows[-1].est2 for r in results]
    ok = all(x < 0.05 for x in ratios) and elapsed < 600
    assert report("C6 linf_term/est2 < 0.05 at lambda=1, T=10", ok,
                  f"ratios {', '.join(f'{x:.4f}' for x in ratios)}; {elapsed:.0f} s")


def test_c7_zero_data_exact():
    cfg = parse_config("", {"nx": "8", "ny": "8", "T": "0.5", "dt": "0.1,0.05", "amplitude": "0"})
    system = build_system(cfg)
    ok = True
    for dt in cfg.dt:
        res = run_single(system, cfg, dt)
        L = res.ledger
        ok &= L.est1 == L.est2 == L.est3 == L.error == 0.0
        ok &= all(v == 0.0 for v in L.sums.values()) and L.linf == 0.0
        ok &= not res.trajectory_end.u.any() and not res.trajectory_end.p.any()
        ok &= all(math.isnan(r.eff2) for r in res.rows)
    assert report("C7 zero data gives bitwise zero accumulators", ok,
                  "est1 = est2 = est3 = error = 0.0, effectivities NaN")


def test_c8_deterministic_csv(tmp_path):
    args = ["run", "--nx", "8", "--ny", "8", "--T", "0.5", "--dt", "0.1,0.05"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    same = a.read_bytes() == b.read_bytes()
    assert report("C8 byte-identical CSV on rerun", same, f"{len(a.read_bytes())} bytes each")


def test_invariant_pressure_ratio_bounded(sweep10):
    # per-interval pressure_increment / ||div(b - a)||^2, max over the run
    ratios = [r.ledger.pressure_ratio() for r in sweep10[1]]
    growth = max(b / a for a, b in zip(ratios, ratios[1:]))
    ok = growth <= 2.0
    assert report("INV pressure_increment bounded by div increment", ok,
                  f"max ratio per dt {', '.join(f'{x:.4g}' for x in ratios)}; "
                  f"largest growth per halving {growth:.3f}")
