import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctstokes import estimators as est
from ctstokes.manufactured import AnalyticStokes
from ctstokes.quadrature import gauss_legendre
from ctstokes.scheme import TimeGrid, run_scheme


def _random_interval(s, seed):
    rng = np.random.default_rng(seed)
    a = s.extend(rng.standard_normal(len(s.velocity.free)))
    b = s.extend(rng.standard_normal(len(s.velocity.free)))
    p0, p1 = rng.standard_normal((2, s.pressure.ndof))
    return a, b, p0, p1


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_closed_forms_vs_time_gauss(small_system, seed):
    s = small_system
    a, b, p0, p1 = _random_interval(s, seed)
    dt = 0.03
    t = est.interval_terms(s, a, b, p0, p1, dt, dt)
    ts, ws = gauss_legendre(5, 0.0, dt)
    u = [(x / dt) * b + (1 - x / dt) * a for x in ts]
    gi = sum(w * s.grad_norm_sq(b - v) for v, w in zip(u, ws))
    dl = sum(w * s.div_norm_sq(v) for v, w in zip(u, ws))
    assert t.grad_increment == pytest.approx(gi, rel=1e-12)
    assert t.div_l2 == pytest.approx(dl, rel=1e-12)
    assert t.div_sq_integral == pytest.approx(dl, rel=1e-12)
    assert t.div_rate_l1 ** 2 == pytest.approx(s.div_norm_sq(b - a), rel=1e-12)
    assert t.div_rate_l2 == pytest.approx(s.div_norm_sq(b - a) / dt, rel=1e-12)
    assert t.div_endpoint_sq_max == pytest.approx(max(s.div_norm_sq(a), s.div_norm_sq(b)), rel=1e-12)


def test_pressure_increment_uses_both_steps(small_system):
    s = small_system
    a, b, p0, p1 = _random_interval(s, 9)
    t = est.interval_terms(s, a, b, p0, p1, 0.1, 0.05)
    assert t.pressure_increment == pytest.approx(s.pressure_grad_norm_sq(0.05 * p1 - 0.1 * p0), rel=1e-12)


def test_viscosity_weights_only_viscous_terms(small_system):
    from ctstokes.fem import assemble_system
    s2 = assemble_system(small_system.mesh, 2.5)
    a, b, p0, p1 = _random_interval(small_system, 4)
    t1 = est.interval_terms(small_system, a, b, p0, p1, 0.1, 0.1)
    t2 = est.interval_terms(s2, a, b, p0, p1, 0.1, 0.1)
    assert t2.grad_increment == pytest.approx(2.5 * t1.grad_increment, rel=1e-14)
    assert t2.div_l2 == pytest.approx(2.5 * t1.div_l2, rel=1e-14)
    assert t2.div_rate_l2 == t1.div_rate_l2


def test_terms_nonnegative_and_zero_for_zero_data(small_system):
    s = small_system
    z = np.zeros(s.velocity.ndof)
    zp = np.zeros(s.pressure.ndof)
    t = est.interval_terms(s, z, z, zp, zp, 0.1, 0.1)
    assert all(getattr(t, k) == 0.0 for k in ("grad_increment", "div_l2", "div_rate_l1",
                                             "div_rate_l2", "pressure_increment"))


def test_dual_norm_dense_oracle(small_system):
    s = small_system
    g = lambda x, y: np.column_stack([np.cos(x + y), x - y**2])
    load = est.assemble_riesz_load(s, g)
    f = s.velocity.free
    A = (s.K + s.M).toarray()[np.ix_(f, f)]
    ref = load[f] @ np.linalg.solve(A, load[f])
    assert est.dual_norm_sq(s, g) == pytest.approx(ref, rel=1e-9)
    assert est.dual_norm_sq(s, load) == pytest.approx(ref, rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(-50, 50))
def test_dual_norm_homogeneous_of_degree_two(c):
    s = _cached_system()
    load = np.sin(np.arange(s.velocity.ndof, dtype=float))
    base = est.dual_norm_sq(s, load)
    assert est.dual_norm_sq(s, c * load) == pytest.approx(c * c * base, rel=1e-9, abs=1e-300)


_SYS = {}


def _cached_system():
    from ctstokes.fem import assemble_system
    from ctstokes.mesh import Rect, build_structured_mesh
    if "s" not in _SYS:
        _SYS["s"] = assemble_system(build_structured_mesh(Rect(), 3, 3), 1.0)
    return _SYS["s"]


def _trajectory(s, case, T=0.3, dt=0.1):
    ev = est.ErrorEvaluator(s, case)
    g = TimeGrid.uniform(T, dt)
    tr = run_scheme(s, g, lambda n: ev.data.averaged_load(g.times[n], g.times[n + 1]))
    return ev, g, tr


def test_error_terms_wrapper_matches_evaluator(small_system, case10):
    ev, g, tr = _trajectory(small_system, case10)
    a = ev.error_terms(tr[1].u, tr[2].u, tr[1].p, g.times[1], g.times[2])
    b = est.error_terms(small_system, tr, 1, case10)
    np.testing.assert_allclose(a, b, rtol=1e-8)


def test_time_rule_converges(small_system, case10):
    ev, g, tr = _trajectory(small_system, case10, T=0.05, dt=0.025)
    e3 = est.error_terms(small_system, tr, 1, case10, time_rule=3)[0]
    e5 = est.error_terms(small_system, tr, 1, case10, time_rule=5)[0]
    assert abs(e3 - e5) / e5 < 0.01


def _fold(s, case, T=0.3, dt=0.1, include_linf=True):
    ev, g, tr = _trajectory(s, case, T, dt)
    ledger = est.EstimatorLedger(g.N, include_linf)
    for n in range(g.N):
        a, b = tr[n], tr[n + 1]
        t = est.interval_terms(s, a.u, b.u, a.p, b.p, g.dt(n), g.dt(n + 1))
        errs = ev.error_terms(a.u, b.u, a.p, g.times[n], g.times[n + 1])
        ledger.accumulate(est.with_errors(t, *errs), n, g.times[n + 1])
    return ledger


def test_ledger_identities(small_system, case10):
    L = _fold(small_system, case10)
    s = L.sums
    assert L.est1 == s["grad_increment"] + s["div_l2"] + s["div_rate_l1"] ** 2
    assert L.est2 - L.est3 == pytest.approx(
        s["div_l2"] + s["div_rate_l2"] - s["pressure_increment"], rel=1e-12)
    cp = L.checkpoints[-1]
    assert cp.T == pytest.approx(0.3)
    assert cp.eff2 == pytest.approx((cp.est2 + cp.linf_term) / cp.error_total, rel=1e-15)
    assert len(L.checkpoints) == 3


def test_ledger_monotone_in_time(small_system, case10):
    L = _fold(small_system, case10)
    for a, b in zip(L.checkpoints, L.checkpoints[1:]):
        assert b.est2 >= a.est2 and b.error_total >= a.error_total and b.linf_term >= a.linf_term


def test_proof_chain_inequality(small_system, case10):
    L = _fold(small_system, case10)
    assert L.proof_lhs <= L.proof_rhs * (1 + 1e-10)


def test_linf_flag(small_system, case10):
    with_ = _fold(small_system, case10, include_linf=True).checkpoints[-1]
    without = _fold(small_system, case10, include_linf=False).checkpoints[-1]
    assert with_.eff2 > without.eff2
    assert without.eff2 == pytest.approx(without.est2 / without.error_total, rel=1e-15)


def test_out_of_order_rejected():
    L = est.EstimatorLedger(3)
    with pytest.raises(ValueError):
        L.accumulate(est.IntervalTerms(dt=0.1), 1)


def test_effectivity_flags_zero_error():
    assert np.isnan(est.effectivity(0.0, 0.0))
    assert est.effectivity(2.0, 4.0) == 0.5


def test_exact_injection_beats_scheme():
    from ctstokes.fem import assemble_system, interpolate
    from ctstokes.mesh import Rect, build_structured_mesh
    # needs a mesh fine enough for the interpolation error to sit below the splitting error
    s = assemble_system(build_structured_mesh(Rect(), 8, 8), 1.0)
    case = AnalyticStokes(1.0)
    ev, g, tr = _trajectory(s, case, T=0.5, dt=0.1)
    us = [interpolate(s.velocity, case.velocity, t) for t in g.times]
    for u in us:
        u[s.velocity.dirichlet] = 0.0
    ps = [interpolate(s.pressure, case.pressure, t) for t in g.times]
    inj = sum(ev.error_terms(us[n], us[n + 1], ps[n], g.times[n], g.times[n + 1])[0] for n in range(g.N))
    run = sum(ev.error_terms(tr[n].u, tr[n + 1].u, tr[n].p, g.times[n], g.times[n + 1])[0]
              for n in range(g.N))
    assert inj < run
