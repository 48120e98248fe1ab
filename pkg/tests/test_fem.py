import numpy as np
import pytest

from ctstokes.fem import (
    assemble_system,
    evaluate_pressure,
    evaluate_velocity,
    integrate_field,
    interpolate,
    p2_values,
)
from ctstokes.mesh import Rect, build_structured_mesh


def test_p2_partition_of_unity_and_nodal():
    bary = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5]])
    np.testing.assert_allclose(p2_values(bary), np.eye(6), atol=1e-15)
    pts = np.random.default_rng(0).dirichlet(np.ones(3), 10)
    np.testing.assert_allclose(p2_values(pts).sum(axis=1), 1.0, atol=1e-14)


def test_mass_matrix_integrates_constants(small_system):
    s = small_system
    one = interpolate(s.velocity, lambda x, y: np.column_stack([np.ones_like(x), np.zeros_like(x)]))
    assert one @ (s.M @ one) == pytest.approx(4.0, rel=1e-13)
    assert s.Mp.sum() == pytest.approx(4.0, rel=1e-13)
    assert s.pressure.lumped_weights.sum() == pytest.approx(4.0, rel=1e-13)


def test_matrices_symmetric_semidefinite(small_system):
    s = small_system
    for A in (s.M, s.K, s.C, s.Kp, s.Mp):
        assert abs(A - A.T).max() < 1e-13
        assert np.linalg.eigvalsh(A.toarray()).min() > -1e-10


def test_pressure_stiffness_kernel(small_system):
    np.testing.assert_allclose(small_system.Kp @ np.ones(small_system.pressure.ndof), 0, atol=1e-13)


def test_adjoint_identity_on_free_rows(small_system):
    s = small_system
    assert abs((s.G + s.D.T)[~s.velocity.dirichlet]).max() <= 1e-13


def test_stiffness_matches_gradient_norm(small_system):
    s = small_system
    U = interpolate(s.velocity, lambda x, y: np.column_stack([x * y, x**2 - y]))
    # |grad|^2 = y^2 + 5x^2 + 1 over [-1,1]^2
    exact = 4 / 3 + 20 / 3 + 4
    assert U @ (s.K @ U) == pytest.approx(exact, rel=1e-12)
    assert s.grad_norm_sq(U) == pytest.approx(exact, rel=1e-12)


def test_divdiv_and_pressure_grad(small_system):
    s = small_system
    U = interpolate(s.velocity, lambda x, y: np.column_stack([x**2, y]))
    # div = 2x + 1
    exact = 16 / 3 + 4
    assert U @ (s.C @ U) == pytest.approx(exact, rel=1e-12)
    assert s.div_norm_sq(U) == pytest.approx(exact, rel=1e-12)
    P = interpolate(s.pressure, lambda x, y: 2 * x - y)
    assert s.pressure_grad_norm_sq(P) == pytest.approx(5 * 4, rel=1e-12)


@pytest.mark.parametrize("degree", [2, 4, 6])
def test_quadratic_reproduction(degree):
    s = assemble_system(build_structured_mesh(Rect(), 3, 2), 1.0, degree=degree)
    U = interpolate(s.velocity, lambda x, y: np.column_stack([x * y, 1 - y**2]))
    pts = np.random.default_rng(5).uniform(-1, 1, (30, 2))
    ref = np.column_stack([pts[:, 0] * pts[:, 1], 1 - pts[:, 1] ** 2])
    np.testing.assert_allclose(evaluate_velocity(s.mesh, U, pts), ref, atol=1e-14)
    P = interpolate(s.pressure, lambda x, y: 3 * x + y)
    np.testing.assert_allclose(evaluate_pressure(s.mesh, P, pts), 3 * pts[:, 0] + pts[:, 1], atol=1e-14)


def test_assembly_degree_independent_for_polynomials():
    m = build_structured_mesh(Rect(), 3, 3)
    a, b = assemble_system(m, 1.0, degree=4), assemble_system(m, 1.0, degree=6)
    for name in ("M", "K", "C", "D", "Kp"):
        assert abs(getattr(a, name) - getattr(b, name)).max() < 1e-13


def test_viscosity_scales_nothing_in_matrices():
    m = build_structured_mesh(Rect(), 2, 2)
    a, b = assemble_system(m, 1.0), assemble_system(m, 0.3)
    assert abs(a.K - b.K).max() == 0 and b.mu == 0.3


def test_integrate_field_product(small_system):
    s = small_system
    U = interpolate(s.velocity, lambda x, y: np.column_stack([x, y]))
    val = integrate_field(s.quad, lambda x, g: g[:, 0, 0] + g[:, 1, 1], g=("grad_u", U))
    assert val == pytest.approx(8.0, rel=1e-13)


def test_restrict_extend_roundtrip(small_system, rng):
    s = small_system
    v = rng.standard_normal(len(s.velocity.free))
    U = s.extend(v)
    assert np.all(U[s.velocity.dirichlet] == 0)
    np.testing.assert_array_equal(U[s.velocity.free], v)
    assert s.restrict(s.M).shape == (len(v), len(v))
