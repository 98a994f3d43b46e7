import mpmath
import numpy as np
import pytest

from hdgcontrol.problems import (example1, example2, get_problem, lshape_mesh, polar_angle,
                                 square_mesh, verify_manufactured)

PI = np.pi


def pt(*xy):
    return np.array(xy, dtype=float)


def test_example1_data():
    p = example1()
    assert p.alpha == 1.0 and (p.bounds.lower, p.bounds.upper) == (-0.1, 0.1)
    assert p.f(pt(0.25, 0.25)) == pytest.approx(8 * PI ** 2 + 1, rel=1e-14)
    n = pt(-1.0, 0.0)
    assert np.sum(p.exact.grad_z(pt(0.0, 0.5)) * n) == pytest.approx(0.0, abs=1e-14)
    assert p.g1(pt(0.0, 0.5), n) == 0.0


def test_example1_forcing_against_finite_differences():
    p = example1()
    x, h = pt(0.25, 0.25), 1e-4
    e0, e1 = pt(h, 0), pt(0, h)
    lap = (p.exact.y(x + e0) + p.exact.y(x - e0) + p.exact.y(x + e1) + p.exact.y(x - e1)
           - 4 * p.exact.y(x)) / h ** 2
    assert -lap + p.exact.y(x) == pytest.approx(float(p.f(x)), rel=1e-5)


def test_example2_data():
    p = example2()
    assert p.alpha == 1.0 and (p.bounds.lower, p.bounds.upper) == (-0.2, 0.2)
    mpmath.mp.dps = 30
    want = mpmath.cos(2 * mpmath.pi / 3)
    assert p.exact.z(pt(-1.0, 0.0)) == pytest.approx(float(want), abs=1e-15)
    x, h = pt(-0.5, 0.5), 1e-4
    e0, e1 = pt(h, 0), pt(0, h)
    z = p.exact.z
    lap = (z(x + e0) + z(x - e0) + z(x + e1) + z(x - e1) - 4 * z(x)) / h ** 2
    assert abs(lap) < 1e-5


def test_polar_angle_branch():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 1e-17], [-1.0, -1e-17], [0.0, -1.0]])
    np.testing.assert_allclose(polar_angle(x), [0, PI / 2, PI, PI, 1.5 * PI], atol=1e-15)
    # adjoint continuous across the negative x1-axis
    z = example2().exact.z
    assert z(pt(-0.5, 1e-12)) == pytest.approx(z(pt(-0.5, -1e-12)), abs=1e-10)
    # agrees with the arccos form on the upper half plane
    rng = np.random.default_rng(0)
    y = rng.uniform(-1, 1, (100, 2))
    y[:, 1] = np.abs(y[:, 1])
    r = np.hypot(*y.T)
    np.testing.assert_allclose(polar_angle(y), np.arccos(y[:, 0] / r), atol=1e-7)


def test_example2_gradient_grows_like_r_minus_third():
    z = example2().exact.z
    for ang in (0.3, 1.5, 2.8, 4.0):
        d = pt(np.cos(ang), np.sin(ang))
        radii = np.array([1e-2, 1e-3, 1e-4])
        mags = []
        for r in radii:
            h = 1e-3 * r
            gx = (z(r * d + pt(h, 0)) - z(r * d - pt(h, 0))) / (2 * h)
            gy = (z(r * d + pt(0, h)) - z(r * d - pt(0, h))) / (2 * h)
            mags.append(np.hypot(gx, gy))
        slope = np.polyfit(np.log(radii), np.log(mags), 1)[0]
        assert slope == pytest.approx(-1 / 3, abs=1e-3)
        assert mags[-1] == pytest.approx((2 / 3) * radii[-1] ** (-1 / 3), rel=1e-4)


def test_manufactured_audits_pass():
    for p in (example1(), example2()):
        report = verify_manufactured(p, samples=10_000)
        assert report.passed, report.violations


def test_corrupted_forcing_is_caught():
    p = example1()
    bad = p.with_data(f=lambda x: p.f(x) + 1.0)
    report = verify_manufactured(bad, samples=2000)
    assert not report.passed
    assert report.residuals["state_pde"] == pytest.approx(1.0, abs=1e-4)
    assert any(v.startswith("state_pde") for v in report.violations)


def test_initial_meshes():
    L = lshape_mesh()
    assert L.n_elements == 6 and L.total_area == pytest.approx(3.0, rel=1e-12)
    assert np.all(np.any(L.refinement_edge_vertices() == 0, axis=1))
    S = square_mesh(1)
    assert S.n_elements == 2 and S.total_area == pytest.approx(1.0)
    assert example1().initial_mesh.n_elements == 32


def test_get_problem():
    assert get_problem("example2").name == "example2"
    with pytest.raises(KeyError):
        get_problem("example3")
    with pytest.raises(ValueError):
        example1().with_data(alpha=0.0)
