import math

import numpy as np
import pytest

from wan_obstacle.domain import Box
from wan_obstacle.oracle import (
    complementarity_defect,
    grid_error,
    optimal_omega,
    pgs_solve_2d,
    psor_solve_1d,
    write_csv,
)
from wan_obstacle.problems import ProblemSpec, example4_printed_solution, get_problem


def zeros(p):
    return np.zeros(len(np.atleast_2d(p)))


def test_no_obstacle_zero_data_gives_zero():
    spec = ProblemSpec("flat", Box.interval(0, 1), zeros, zeros, zeros)
    sol = psor_solve_1d(spec, 64, obstacle=np.full(66, -np.inf), initial=np.linspace(0, 1, 66) ** 2)
    assert sol.converged
    # iterate-difference tol 1e-10 bounds the error by about tol / (1 - rho) = O(tol / h)
    assert np.max(np.abs(sol.u)) <= 1e-7


def test_2d_zero_data_gives_zero():
    spec = ProblemSpec("flat2", Box.rectangle(0, 1, 0, 1), zeros, zeros, zeros)
    sol = pgs_solve_2d(spec, 17, initial=np.ones((17, 17)))
    assert sol.converged and np.max(np.abs(sol.u)) <= 1e-7


def test_plain_gauss_seidel_agrees_with_over_relaxation():
    p = get_problem("example5")
    a = pgs_solve_2d(p, 17, omega=1.0)
    b = pgs_solve_2d(p, 17)
    assert a.converged and b.converged
    np.testing.assert_allclose(a.u, b.u, atol=1e-8)


@pytest.mark.parametrize("name", ["example1", "example2", "example3"])
def test_1d_accuracy_and_refinement(name):
    p = get_problem(name)
    errs = []
    for M in (512, 1024, 2048):
        sol = psor_solve_1d(p, M)
        assert sol.converged
        errs.append(grid_error(sol, p.exact))
    assert errs[-1] <= 5e-3
    assert errs[0] > errs[1] > errs[2]
    umax = np.max(np.abs(p.exact(sol.points())))
    assert errs[-1] <= 5 * sol.h_grid * (1 + umax)


def test_example2_contact_interval():
    p = get_problem("example2")
    sol = psor_solve_1d(p, 2048)
    active = np.flatnonzero(np.abs(sol.u - sol.psi) <= 1e-12)
    x = sol.axes[0]
    edge = 2 - math.sqrt(3)
    assert abs(x[active[0]] + edge) <= 2 * sol.h_grid
    assert abs(x[active[-1]] - edge) <= 2 * sol.h_grid


def test_example5_on_257_grid():
    p = get_problem("example5")
    sol = pgs_solve_2d(p, 257)
    assert sol.converged and grid_error(sol, p.exact) <= 5e-3


def test_example4_candidate_decision():
    """Only z1(x) z2(y) is consistent with the printed source under refinement."""
    p = get_problem("example4")
    ours, printed = [], []
    for n in (33, 65, 129):
        sol = pgs_solve_2d(p, n)
        ours.append(grid_error(sol, p.exact))
        printed.append(grid_error(sol, example4_printed_solution))
    assert ours[0] > ours[1] > ours[2] and ours[2] < 2e-3
    assert min(printed) > 100


@pytest.mark.parametrize("name", ["example1", "example2", "example3"])
def test_restart_from_solution_converges_immediately(name):
    p = get_problem(name)
    sol = psor_solve_1d(p, 256)
    again = psor_solve_1d(p, 256, initial=sol.u)
    assert again.converged and again.iterations <= 2


def test_restart_2d():
    p = get_problem("example6")
    sol = pgs_solve_2d(p, 33)
    assert pgs_solve_2d(p, 33, initial=sol.u).iterations <= 2


@pytest.mark.parametrize("name", ["example1", "example2", "example3", "example5", "example6"])
def test_discrete_complementarity_at_convergence(name):
    p = get_problem(name)
    tol = 1e-10
    sol = psor_solve_1d(p, 512, tol=tol) if p.dim == 1 else pgs_solve_2d(p, 65, tol=tol)
    assert complementarity_defect(sol) <= 10 * tol
    assert np.all(sol.u >= sol.psi - 1e-15)


def test_second_order_in_smooth_case():
    # Example 5 is smooth away from x = 0, where u* = x^4 is C^3: errors quarter per refinement
    p = get_problem("example5")
    e = [grid_error(pgs_solve_2d(p, n), p.exact) for n in (33, 65, 129)]
    assert 3.0 < e[0] / e[1] < 5.0 and 3.0 < e[1] / e[2] < 5.0


def test_non_converged_flag():
    sol = psor_solve_1d(get_problem("example1"), 512, max_iters=3)
    assert not sol.converged and sol.iterations == 3


def test_drift_stability_check():
    wild = ProblemSpec("wild", Box.interval(0, 1), zeros, zeros, zeros, drift=(500.0,))
    with pytest.raises(ValueError, match="M-matrix"):
        psor_solve_1d(wild, 100)
    psor_solve_1d(wild, 400)


def test_argument_validation():
    p1, p2 = get_problem("example1"), get_problem("example5")
    with pytest.raises(ValueError):
        psor_solve_1d(p1, 2)
    with pytest.raises(ValueError):
        psor_solve_1d(p1, 16, omega=2.0)
    with pytest.raises(ValueError):
        psor_solve_1d(p1, 16, tol=0)
    with pytest.raises(ValueError):
        pgs_solve_2d(p2, 4)
    with pytest.raises(ValueError):
        psor_solve_1d(p2, 16)
    with pytest.raises(ValueError):
        pgs_solve_2d(p1, 16)


def test_optimal_omega_range():
    assert 1.0 < optimal_omega(1 / 2049) < 2.0
    assert optimal_omega(0.5) == pytest.approx(1.0)


def test_csv_output(tmp_path):
    sol = psor_solve_1d(get_problem("example1"), 8)
    path = tmp_path / "o.csv"
    write_csv(sol, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,u" and len(lines) == 11
    assert lines[1] == "0.0,0.0"
    sol2 = pgs_solve_2d(get_problem("example5"), 5)
    write_csv(sol2, path)
    assert path.read_text().splitlines()[0] == "x,y,u"
