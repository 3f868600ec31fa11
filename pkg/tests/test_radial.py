import numpy as np
import pytest
from scipy.integrate import solve_bvp, solve_ivp

from henon.errors import InvalidConfigError, SupercriticalError
from henon.problem import ProblemParams, from_lane_emden_form
from henon.radial import (lane_emden_shoot, ode_residual, rescale_to_unit_ball,
                          solve_henon_radial)


def test_linear_case_first_zero_is_pi():
    shot = lane_emden_shoot(3.0, 1.0)
    assert shot.subcritical
    assert abs(shot.R0 - np.pi) <= 1e-8


def test_critical_case_has_no_zero():
    shot = lane_emden_shoot(3.0, 5.0)
    assert not shot.subcritical and shot.R0 is None
    r = np.linspace(0.0, 10.0, 2001)
    w, _ = shot.profile(r)
    assert np.max(np.abs(w - (1 + r**2 / 3) ** -0.5)) <= 1e-8


def test_index_three_first_zero():
    shot = lane_emden_shoot(3.0, 3.0)
    assert shot.R0 == pytest.approx(6.896848619, abs=1e-8)


def test_rejects_low_dimension():
    with pytest.raises(InvalidConfigError):
        lane_emden_shoot(2.0, 3.0)


def _first_zero(m, p, a):
    """Independent shot with w(0) = a, launched from the two-term series."""
    r0 = 1e-4
    w0 = a - a**p * r0**2 / (2 * m)
    dw0 = -a**p * r0 / m

    def rhs(r, y):
        return [y[1], -(m - 1) / r * y[1] - np.abs(y[0]) ** (p - 1) * y[0]]

    def zero(r, y):
        return y[0]

    zero.terminal = True
    sol = solve_ivp(rhs, (r0, 1e3), [w0, dw0], method="LSODA", rtol=1e-12, atol=1e-14,
                    events=zero)
    return sol.t_events[0][0]


@pytest.mark.parametrize("a", [0.5, 2.0, 4.0])
def test_scaling_law(a):
    m, p = 3.0, 3.0
    base = lane_emden_shoot(m, p).R0
    assert _first_zero(m, p, a) == pytest.approx(base * a ** (-(p - 1) / 2), rel=1e-6)


def test_rescale_to_unit_ball_index_three():
    v = rescale_to_unit_ball(lane_emden_shoot(3.0, 3.0))
    assert v.central_value == pytest.approx(6.896848619, abs=1e-7)
    assert abs(v.values[-1]) <= 1e-10
    assert ode_residual(v) <= 1e-8


def test_rescale_rejects_supercritical():
    with pytest.raises(SupercriticalError):
        rescale_to_unit_ball(lane_emden_shoot(3.0, 5.0))


def test_classical_case_central_value():
    v = solve_henon_radial(ProblemParams(3, 0.0, 3.0))
    assert v.central_value == pytest.approx(6.896848619, abs=1e-7)


def test_weighted_case_is_transformed_lane_emden():
    v = solve_henon_radial(ProblemParams(3, 2.0, 3.0))
    ref = from_lane_emden_form(rescale_to_unit_ball(lane_emden_shoot(2.5, 3.0)), 2.0)
    assert np.max(np.abs(v.values - ref.values)) <= 1e-12


@pytest.mark.parametrize("p", [7.0, 8.0])
def test_supercritical_rejected(p):
    with pytest.raises(SupercriticalError, match="supercritical"):
        solve_henon_radial(ProblemParams(3, 1.0, p))


@pytest.mark.parametrize("N, alpha, p", [(3, 1.0, 2.0), (3, 1.0, 6.5), (4, 2.0, 3.0), (5, 0.5, 1.5)])
def test_solution_properties(N, alpha, p):
    v = solve_henon_radial(ProblemParams(N, alpha, p))
    assert np.all(v.values[:-1] > 0)
    assert abs(v.values[-1]) <= 1e-10
    assert v.dvalues[0] == 0
    assert np.all(v.dvalues[1:] < 0)
    assert ode_residual(v, relative=True) <= 1e-7


def test_collocation_oracle():
    N, alpha, p = 3, 2.0, 3.0
    v = solve_henon_radial(ProblemParams(N, alpha, p))

    def f(r, y):
        return np.vstack([y[1], -r**alpha * np.abs(y[0]) ** (p - 1) * y[0]])

    r = np.linspace(0.0, 1.0, 201)
    guess = np.vstack([v.central_value * (1 - r**2), -2 * v.central_value * r])
    sol = solve_bvp(f, lambda ya, yb: np.array([ya[1], yb[0]]), r, guess,
                    S=np.array([[0.0, 0.0], [0.0, -(N - 1)]]), tol=1e-9, max_nodes=100000)
    assert sol.status == 0
    rr = np.linspace(0.0, 1.0, 2001)
    assert np.max(np.abs(sol.sol(rr)[0] - v(rr)[0])) <= 1e-6
