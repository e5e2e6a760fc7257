import math

import numpy as np
import pytest

from wan_obstacle.problems import (
    EXAMPLE3_BETA,
    REGISTRY,
    bump,
    eval_exact,
    example3_beta_residual,
    fd_gradient,
    get_problem,
    z1,
    z2,
    d2z1,
    d2z2,
    dz1,
    dz2,
)
from wan_obstacle.problems import ProblemSpec
from wan_obstacle.domain import Box


def at(*coords):
    return np.array([coords], dtype=float)


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_registered_problems_satisfy_invariants(name):
    report = get_problem(name).check_invariants()
    assert report["psi_minus_h_max"] <= 1e-9


def test_example1_values():
    p = get_problem("example1")
    assert p.exact(at(0.5))[0] == pytest.approx(12.5)
    assert p.exact(at(0.25))[0] == pytest.approx(25 - 12.5 * math.sqrt(2), abs=1e-12)
    assert p.exact(at(0.25))[0] == pytest.approx(7.322330, abs=1e-6)
    assert p.obstacle(at(0.25))[0] == pytest.approx(6.25)
    assert p.obstacle(at(0.75))[0] == pytest.approx(6.25)


def test_example1_right_branch_vanishes_at_boundary():
    # the right branch is (100 - 50 sqrt2)(1 - x): continuous and zero at x = 1
    p = get_problem("example1")
    c = 1 - 1 / (2 * math.sqrt(2))
    assert p.exact(at(0.9))[0] == pytest.approx((100 - 50 * math.sqrt(2)) * 0.1)
    assert p.exact(at(c - 1e-12))[0] == pytest.approx(p.exact(at(c))[0], abs=1e-8)
    assert p.exact(at(1.0))[0] == 0.0


def test_example2_values():
    p = get_problem("example2")
    assert p.drift == (1.0,)
    assert p.exact(at(0.0))[0] == 1.0
    assert p.source(at(0.0))[0] == pytest.approx(-(2 * math.sqrt(3) - 2))
    assert p.source(at(0.0))[0] == pytest.approx(-1.464102, abs=1e-6)
    for s in (-1, 1):
        x = s * (2 - math.sqrt(3))
        assert p.exact(at(x))[0] == pytest.approx(p.obstacle(at(x))[0], abs=1e-12)


def test_example2_strong_form_outside_contact():
    # -u'' + u' = f on the two linear branches
    p = get_problem("example2")
    x = np.array([[-1.5], [-0.9], [0.9], [1.5]])
    du = fd_gradient(p.exact, x)[:, 0]
    assert np.allclose(du, p.source(x))


def test_example3_values():
    p = get_problem("example3")
    assert p.obstacle(at(-0.5))[0] == pytest.approx(1.0)
    xs = np.linspace(-0.5, 0.5, 11, endpoint=False)[:, None]
    np.testing.assert_allclose(p.exact(xs), 1.0)
    assert p.exact(at(-1.0))[0] == pytest.approx(0.0, abs=1e-15)
    assert p.exact(at(1.0))[0] == pytest.approx(0.0, abs=1e-15)
    assert 0.0 < bump(np.array(0.35)) < 1.0
    assert bump(np.array(0.2)) == 1.0 and bump(np.array(0.45)) == 0.0


def test_example3_beta_is_an_approximate_root():
    assert EXAMPLE3_BETA == 0.02376
    assert abs(example3_beta_residual()) < 1e-3
    # the tangency residual changes sign across the printed root
    assert example3_beta_residual(0.02) * example3_beta_residual(0.03) < 0


def test_example4_polynomials():
    assert z1(0.25) == pytest.approx(1.0)
    assert z2(0.4) == pytest.approx(1.0)
    for v in (z1(0.0), z1(0.5), z2(0.0), z2(0.8)):
        assert v == pytest.approx(0.0, abs=1e-12)
    x = np.linspace(0, 1, 7)
    h = 1e-5
    np.testing.assert_allclose(dz1(x), (z1(x + h) - z1(x - h)) / (2 * h), rtol=1e-6, atol=1e-4)
    np.testing.assert_allclose(dz2(x), (z2(x + h) - z2(x - h)) / (2 * h), rtol=1e-6, atol=1e-4)
    np.testing.assert_allclose(d2z1(x), (dz1(x + h) - dz1(x - h)) / (2 * h), rtol=1e-6, atol=1e-3)
    np.testing.assert_allclose(d2z2(x), (dz2(x + h) - dz2(x - h)) / (2 * h), rtol=1e-6, atol=1e-3)


def test_example4_source_is_minus_laplacian_on_support():
    p = get_problem("example4")
    pts = np.array([[0.2, 0.3], [0.4, 0.6], [0.1, 0.1]])
    h = 1e-4
    lap = sum(
        (p.exact(pts + e) - 2 * p.exact(pts) + p.exact(pts - e)) / h**2 for e in (np.array([h, 0]), np.array([0, h]))
    )
    np.testing.assert_allclose(p.source(pts), -lap, rtol=1e-5)


def test_example5_values():
    p = get_problem("example5")
    assert p.exact(at(0.5, 0.3))[0] == pytest.approx(0.0625)
    assert p.source(at(0.5, -0.7))[0] == pytest.approx(-3.0)
    assert p.exact(at(-0.5, 0.2))[0] == 0.0 and p.source(at(-0.5, 0.2))[0] == 0.0


def test_example5_biactive_half_domain():
    p = get_problem("example5")
    h = 1 / 64
    xs = np.arange(-1 + h, -h / 2, h)
    X, Y = np.meshgrid(xs, np.arange(-1 + h, 1 - h / 2, h), indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    res = -sum((p.exact(pts + e) - 2 * p.exact(pts) + p.exact(pts - e)) / h**2 for e in ([h, 0], [0, h])) - p.source(pts)
    assert np.max(np.abs(p.exact(pts) - p.obstacle(pts))) <= 1e-8
    assert np.max(np.abs(res)) <= 1e-8


def test_example6_values():
    p = get_problem("example6")
    assert p.exact(at(0.0, 0.0))[0] == 1.0
    assert p.exact(at(0.5, 0.0))[0] == 0.0 and p.exact(at(0.3, 0.4))[0] == pytest.approx(0.0, abs=1e-15)
    assert p.source(at(0.9, 0.0))[0] == -1.0


def test_example6_source_is_minus_laplacian_inside_disc():
    p = get_problem("example6")
    pts = np.array([[0.1, 0.2], [0.0, 0.3], [-0.2, 0.1]])
    h = 1e-4
    lap = sum((p.exact(pts + e) - 2 * p.exact(pts) + p.exact(pts - e)) / h**2 for e in ([h, 0], [0, h]))
    np.testing.assert_allclose(p.source(pts), -lap, rtol=1e-5)


@pytest.mark.parametrize("name", ["example1", "example2", "example4", "example5", "example6"])
def test_analytic_gradients_match_finite_differences(name, rng):
    p = get_problem(name)
    lo, hi = np.array(p.domain.lower), np.array(p.domain.upper)
    x = rng.uniform(lo, hi, size=(40, p.dim))
    np.testing.assert_allclose(p.exact_grad(x), fd_gradient(p.exact, x), rtol=1e-5, atol=1e-4)


def test_eval_exact_examples():
    _, g6 = eval_exact(get_problem("example6"), at(0.0, 0.0))
    np.testing.assert_array_equal(g6, [[0.0, 0.0]])
    _, g5 = eval_exact(get_problem("example5"), at(0.5, 0.0))
    np.testing.assert_allclose(g5, [[0.5, 0.0]])
    u3, g3 = eval_exact(get_problem("example3"), at(0.0))
    assert u3[0] == 1.0 and g3[0, 0] == pytest.approx(0.0, abs=1e-8)


def test_eval_exact_rejects_missing_solution():
    spec = ProblemSpec("none", Box.interval(0, 1), lambda p: np.zeros(len(p)), lambda p: np.zeros(len(p)), lambda p: np.zeros(len(p)))
    with pytest.raises(ValueError):
        eval_exact(spec, at(0.5))


def test_invariant_violation_detected():
    spec = ProblemSpec("bad", Box.interval(0, 1), lambda p: np.zeros(len(p)), lambda p: np.ones(len(p)), lambda p: np.zeros(len(p)))
    with pytest.raises(ValueError, match="obstacle exceeds"):
        spec.check_invariants()


def test_unknown_problem():
    with pytest.raises(KeyError):
        get_problem("example7")


def test_default_gap_weights_by_dimension():
    assert get_problem("example1").gamma_weight == 1e-4
    assert get_problem("example5").gamma_weight == 5e-4
