"""Oracle checks on small meshes, runnable as ``ctstokes selftest``.

Every check compares a code path against an independent reference (closed
form, dense linear algebra, finite differences, Gauss quadrature in time) and
returns ``(passed, detail)``.
"""
from __future__ import annotations

import time
from math import factorial

import numpy as np

from . import estimators as est
from .experiment import format_csv, format_gnuplot, parse_config, run_experiment, all_rows
from .fem import (
    assemble_system,
    barycentric_gradients,
    evaluate_velocity,
    interpolate,
    p2_gradients,
    p2_values,
)
from .linalg import as_csr, cg_solve, spmv
from .manufactured import AnalyticStokes, CaseData, averaged_coefficients
from .mesh import Rect, build_structured_mesh, mesh_statistics
from .quadrature import gauss_legendre, make_quadrature
from .scheme import ChorinTemam, TimeGrid, reconstruct

RECT = Rect()


def _system(n=4, mu=1.0):
    return assemble_system(build_structured_mesh(RECT, n, n), mu)


def _rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


def check_mesh_counts():
    m = build_structured_mesh(RECT, 2, 2)
    euler_edges = m.n_vertices + m.n_triangles - 1
    ok = (m.n_edges == euler_edges == 16 and int(m.boundary_vertex.sum()) == 2 * (2 + 2)
          and mesh_statistics(m)[:2] == (0.5, 0.5))
    return ok, f"E={m.n_edges} (Euler {euler_edges}), boundary vertices {m.boundary_vertex.sum()}"


def check_spmv_dense():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((10, 10))
    A = B @ B.T + 10 * np.eye(10)
    x = rng.standard_normal(10)
    err = _rel(spmv(as_csr(A), x), A @ x)
    return err <= 1e-13, f"rel err {err:.2e}"


def check_cg_small():
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    b = np.array([1.0, 2.0])
    x, rep = cg_solve(as_csr(A), b)
    err = _rel(x, np.linalg.solve(A, b))
    return err <= 1e-10 and rep.converged, f"rel err {err:.2e}"


def check_cg_neumann():
    A = np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
    b = np.array([1.0, 0.0, -1.0])
    x, rep = cg_solve(as_csr(A), b, nullspace="constants")
    err = _rel(x, np.linalg.pinv(A) @ b)
    return err <= 1e-10 and abs(x.mean()) <= 1e-12, f"rel err {err:.2e}"


def check_quadrature():
    worst = 0.0
    for deg in (2, 4, 6):
        r = make_quadrature(deg)
        x, y = r.points.T
        for a in range(deg + 1):
            for b in range(deg + 1 - a):
                exact = factorial(a) * factorial(b) / factorial(a + b + 2)
                worst = max(worst, abs(r.weights @ (x**a * y**b) - exact) / exact)
    r4 = make_quadrature(4)
    x, y = r4.points.T
    ok180 = abs(r4.weights @ (x**2 * y**2) - 1 / 180) <= 1e-15
    return worst <= 1e-14 and ok180, f"worst rel err {worst:.2e}"


def check_patch_stiffness():
    """Element stiffness times a linear field equals its boundary flux."""
    m = build_structured_mesh(RECT, 2, 2)
    bgrad, area = barycentric_gradients(m)
    rule = make_quadrature(2)
    grad = np.array([0.7, -1.3])
    worst = 0.0
    for f in range(m.n_triangles):
        dphi = p2_gradients(rule.barycentric, bgrad[f:f + 1])[0]        # nq, 6, 2
        Ke = 2 * area[f] * np.einsum("q,qid,qjd->ij", rule.weights, dphi, dphi)
        verts = m.vertices[m.triangles[f]]
        nodes = np.vstack([verts, 0.5 * (verts + np.roll(verts, -1, axis=0))])
        ue = nodes @ grad + 0.25
        flux = np.zeros(6)
        for k in range(3):
            p, q = verts[k], verts[(k + 1) % 3]
            t = q - p
            L = np.hypot(*t)
            normal = np.array([t[1], -t[0]]) / L                          # outward (CCW)
            bary = np.zeros((3, 3))
            bary[0, k], bary[2, (k + 1) % 3] = 1.0, 1.0
            bary[1, k] = bary[1, (k + 1) % 3] = 0.5
            phi = p2_values(bary)                                         # Simpson nodes
            flux += (grad @ normal) * L / 6 * (phi[0] + 4 * phi[1] + phi[2])
        worst = max(worst, np.max(np.abs(Ke @ ue - flux)))
    return worst <= 1e-13, f"max abs err {worst:.2e}"


def check_adjoint_identity():
    s = _system(3)
    interior = ~s.velocity.dirichlet
    err = float(abs((s.G + s.D.T)[interior]).max())
    return err <= 1e-13, f"max |G + D^T| {err:.2e}"


def check_p2_reproduction():
    s = _system(3)
    U = interpolate(s.velocity, lambda x, y: np.column_stack([x**2, x * y - y**2]))
    pts = np.random.default_rng(1).uniform(-1, 1, (20, 2))
    exact = np.column_stack([pts[:, 0] ** 2, pts[:, 0] * pts[:, 1] - pts[:, 1] ** 2])
    err = float(np.max(np.abs(evaluate_velocity(s.mesh, U, pts) - exact)))
    return err <= 1e-14, f"max abs err {err:.2e}"


def check_grad_norm():
    s = _system(3)
    U = interpolate(s.velocity, lambda x, y: np.column_stack([x, -y]))
    g = s.quad.velocity_gradients(U)
    val = s.quad.integrate(np.sum(g * g, axis=(1, 2)))
    return abs(val - 8.0) <= 1e-12, f"||grad u_h||^2 = {val:.15g}"


def _fd_case():
    rng = np.random.default_rng(2)
    return AnalyticStokes(lam=10.0, mu=1.0), rng.uniform(0, 3, 20), rng.uniform(-1, 1, (20, 2))


def check_fd_gradients():
    case, ts, pts = _fd_case()
    h = 1e-6
    worst_u = worst_p = 0.0
    for t, (x, y) in zip(ts, pts):
        g = case.velocity_gradient(t, x, y)[0]
        gp = case.pressure_gradient(t, x, y)[0]
        for j, (dx, dy) in enumerate(((h, 0.0), (0.0, h))):
            du = (case.velocity(t, x + dx, y + dy) - case.velocity(t, x - dx, y - dy))[0] / (2 * h)
            dp = (case.pressure(t, x + dx, y + dy) - case.pressure(t, x - dx, y - dy))[0] / (2 * h)
            worst_u = max(worst_u, np.max(np.abs(du - g[:, j])))
            worst_p = max(worst_p, abs(dp - gp[j]))
        dudt = (case.velocity(t + h, x, y) - case.velocity(t - h, x, y))[0] / (2 * h)
        worst_u = max(worst_u, np.max(np.abs(dudt - case.velocity_time_derivative(t, x, y)[0])))
    return max(worst_u, worst_p) <= 1e-7, f"grad u {worst_u:.2e}, grad p {worst_p:.2e}"


def check_fd_laplacian():
    case, ts, pts = _fd_case()
    h = 5e-5
    worst = 0.0
    for t, (x, y) in zip(ts, pts):
        u = lambda a, b: case.velocity(t, a, b)[0]
        lap = (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - 4 * u(x, y)) / h**2
        worst = max(worst, np.max(np.abs(lap - case.velocity_laplacian(t, x, y)[0])))
    return worst <= 1e-5, f"max abs err {worst:.2e}"


def check_averaged_forcing():
    lam, t0 = 10.0, 0.37
    dt = 1e-5
    c, s = averaged_coefficients(lam, t0, t0 + dt)
    tm = t0 + dt / 2
    taylor = max(abs(c - np.cos(lam * tm)), abs(s - np.sin(lam * tm)))

    sysm = _system(3)
    data = CaseData(sysm, AnalyticStokes(lam, 1.0))
    t0, t1 = 0.3, 0.4
    ts, ws = gauss_legendre(10, t0, t1)
    ref = sum(w * data.load_at(t) for t, w in zip(ts, ws)) / (t1 - t0)
    err = _rel(data.averaged_load(t0, t1), ref)
    return taylor <= 1e-8 and err <= 1e-12, f"taylor {taylor:.2e}, load rel err {err:.2e}"


def check_velocity_step_dense():
    s = _system(2)
    case = AnalyticStokes(10.0, 1.0)
    data = CaseData(s, case)
    stepper = ChorinTemam(s)
    rng = np.random.default_rng(3)
    u_prev = s.extend(rng.standard_normal(len(s.velocity.free)))
    p = rng.standard_normal(s.pressure.ndof)
    dt = 0.05
    load = data.averaged_load(0.0, dt)
    u, _ = stepper.velocity_step(u_prev, p, dt, load)
    f = s.velocity.free
    A = (s.M / dt + s.K).toarray()[np.ix_(f, f)]
    b = (load + s.M @ u_prev / dt - s.G @ p)[f]
    err = _rel(u[f], np.linalg.solve(A, b))
    # a constant pressure exerts no force on H1_0 test functions
    u_c, _ = stepper.velocity_step(u_prev, np.full(s.pressure.ndof, 3.0), dt, load)
    u_0, _ = stepper.velocity_step(u_prev, np.zeros(s.pressure.ndof), dt, load)
    const = _rel(u_c, u_0)
    return err <= 1e-9 and const <= 1e-9, f"rel err {err:.2e}, const-p {const:.2e}"


def check_pressure_step_dense():
    s = _system(2)
    rng = np.random.default_rng(4)
    u = s.extend(rng.standard_normal(len(s.velocity.free)))
    dt = 0.05
    p, _ = ChorinTemam(s).pressure_step(u, dt)
    b = -(s.D @ u) / dt
    ref = np.linalg.pinv(s.Kp.toarray()) @ b
    w = s.pressure.lumped_weights
    ref -= w @ ref / w.sum()
    err = _rel(p, ref)
    return err <= 1e-9, f"rel err {err:.2e}"


def check_self_convergence():
    s = _system(8)
    case = AnalyticStokes(1.0, 1.0)
    data = CaseData(s, case)
    T = 0.4

    def final(dt):
        g = TimeGrid.uniform(T, dt)
        tr = ChorinTemam(s).run(g, lambda n: data.averaged_load(g.times[n], g.times[n + 1]))
        return tr[-1].u

    ref = final(0.1 / 8)
    e1 = s.grad_norm_sq(final(0.1) - ref)
    e2 = s.grad_norm_sq(final(0.05) - ref)
    return e2 < e1, f"|grad e|^2: dt=0.1 {e1:.3e}, dt=0.05 {e2:.3e}"


def _interval(s, seed=5):
    rng = np.random.default_rng(seed)
    a = s.extend(rng.standard_normal(len(s.velocity.free)))
    b = s.extend(rng.standard_normal(len(s.velocity.free)))
    p0, p1 = rng.standard_normal((2, s.pressure.ndof))
    return a, b, p0, p1


def check_interval_closed_forms():
    s = _system(3)
    a, b, p0, p1 = _interval(s)
    dt = 0.07
    terms = est.interval_terms(s, a, b, p0, p1, dt, dt)
    ts, ws = gauss_legendre(5, 0.0, dt)
    gi = dl = 0.0
    for t, w in zip(ts, ws):
        u = (t / dt) * b + (1 - t / dt) * a
        gi += w * s.grad_norm_sq(b - u)
        dl += w * s.div_norm_sq(u)
    e1 = abs(terms.grad_increment - gi) / gi
    e2 = abs(terms.div_l2 - dl) / dl
    return max(e1, e2) <= 1e-12, f"grad_increment {e1:.2e}, div_l2 {e2:.2e}"


def check_estimator_difference():
    s = _system(3)
    a, b, p0, p1 = _interval(s, 6)
    dt, dt_next = 0.05, 0.04
    ledger = est.EstimatorLedger(1)
    ledger.accumulate(est.interval_terms(s, a, b, p0, p1, dt, dt_next), 0)
    # matrix route, independent of the quadrature route used by interval_terms
    div_l2 = dt / 3 * (s.div_norm_sq(a) + s.div_inner(a, b) + s.div_norm_sq(b))
    rate = s.div_norm_sq(b - a) / dt
    pinc = s.pressure_grad_norm_sq(dt_next * p1 - dt * p0)
    expected = div_l2 + rate - pinc
    err = abs((ledger.est2 - ledger.est3) - expected) / abs(expected)
    return err <= 1e-10, f"rel err {err:.2e}"


def check_dual_norm_dense():
    s = _system(4)
    g = lambda x, y: np.column_stack([np.sin(np.pi * x) * np.cos(np.pi * y), x * y + 1])
    val = est.dual_norm_sq(s, g)
    load = est.assemble_riesz_load(s, g)
    f = s.velocity.free
    A = (s.K + s.M).toarray()[np.ix_(f, f)]
    ref = load[f] @ np.linalg.solve(A, load[f])
    err = abs(val - ref) / ref
    scale = abs(est.dual_norm_sq(s, 3.0 * load) - 9.0 * val) / (9.0 * val)
    return err <= 1e-9 and scale <= 1e-10, f"rel err {err:.2e}, scaling {scale:.2e}"


def _run_errors(s, case, dt, T, u_of=None, time_points=3):
    grid = TimeGrid.uniform(T, dt)
    ev = est.ErrorEvaluator(s, case, time_points=time_points)
    if u_of is None:
        tr = ChorinTemam(s).run(grid, lambda n: ev.data.averaged_load(grid.times[n], grid.times[n + 1]))
        us, ps = [st.u for st in tr.states], [st.p for st in tr.states]
    else:
        us, ps = u_of(grid)
    total = 0.0
    for n in range(grid.N):
        total += ev.error_terms(us[n], us[n + 1], ps[n], grid.times[n], grid.times[n + 1])[0]
    return total


def check_exact_injection():
    s = _system(8)
    case = AnalyticStokes(1.0, 1.0)

    def exact(grid):
        us = [interpolate(s.velocity, case.velocity, t) for t in grid.times]
        for u in us:
            u[s.velocity.dirichlet] = 0.0
        ps = [interpolate(s.pressure, case.pressure, t) for t in grid.times]
        return us, ps

    injected = _run_errors(s, case, 0.1, 0.5, exact)
    scheme = _run_errors(s, case, 0.1, 0.5)
    return injected < scheme, f"injected {injected:.3e} < scheme {scheme:.3e}"


def check_time_rule_refinement():
    s = _system(8)
    case = AnalyticStokes(10.0, 1.0)
    e3 = _run_errors(s, case, 0.025, 0.1, time_points=3)
    e5 = _run_errors(s, case, 0.025, 0.1, time_points=5)
    diff = abs(e3 - e5) / e5
    return diff < 0.01, f"3 vs 5 point rel diff {diff:.2e}"


def check_reconstruction():
    s = _system(2)
    data = CaseData(s, AnalyticStokes(10.0, 1.0))
    g = TimeGrid.uniform(0.3, 0.1)
    tr = ChorinTemam(s).run(g, lambda n: data.averaged_load(g.times[n], g.times[n + 1]))
    u_end, p_end, _ = reconstruct(tr, g.times[2])
    u_mid, _, _ = reconstruct(tr, 0.5 * (g.times[1] + g.times[2]))
    ok = (np.array_equal(u_end, tr[2].u) and np.array_equal(p_end, tr[1].p)
          and _rel(u_mid, 0.5 * (tr[1].u + tr[2].u)) <= 1e-15)
    return ok, "endpoint, midpoint and pressure values"


def check_determinism_and_formats():
    cfg = parse_config("nx = 3\nny = 3\nT = 0.2\ndt = 0.1, 0.05\n")
    first = format_csv(all_rows(run_experiment(cfg)))
    rows = all_rows(run_experiment(cfg))
    second = format_csv(rows)
    blocks = [b for b in format_gnuplot(rows).split("\n\n\n") if b.strip()]
    cols = {len(line.split()) for b in blocks for line in b.splitlines() if not line.startswith("#")}
    ok = first == second and cols == {2} and len(blocks) == 2
    return ok, f"identical={first == second}, gnuplot columns {sorted(cols)}"


CHECKS = [
    ("mesh Euler relation and counts", check_mesh_counts),
    ("spmv vs dense product", check_spmv_dense),
    ("cg 2x2 vs direct solve", check_cg_small),
    ("cg singular Neumann vs pseudo-inverse", check_cg_neumann),
    ("quadrature monomial exactness", check_quadrature),
    ("element stiffness patch test", check_patch_stiffness),
    ("adjoint identity G = -D^T", check_adjoint_identity),
    ("P2 reproduces quadratics", check_p2_reproduction),
    ("grad norm of (x, -y)", check_grad_norm),
    ("analytic gradients vs finite differences", check_fd_gradients),
    ("analytic Laplacian vs finite differences", check_fd_laplacian),
    ("time-averaged forcing oracles", check_averaged_forcing),
    ("velocity step vs dense solve", check_velocity_step_dense),
    ("pressure step vs pseudo-inverse", check_pressure_step_dense),
    ("scheme self-convergence", check_self_convergence),
    ("reconstruction values", check_reconstruction),
    ("interval closed forms vs Gauss in time", check_interval_closed_forms),
    ("est2 - est3 recomputation", check_estimator_difference),
    ("Riesz dual norm vs dense solve", check_dual_norm_dense),
    ("exact-solution injection error", check_exact_injection),
    ("time rule refinement 3 vs 5 points", check_time_rule_refinement),
    ("determinism and output formats", check_determinism_and_formats),
]


def run_selftest(verbose: bool = True) -> bool:
    start = time.perf_counter()
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # report and keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= bool(ok)
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    if verbose:
        print(f"{'PASS' if all_ok else 'FAIL'}  selftest ({time.perf_counter() - start:.1f} s)")
    return all_ok

