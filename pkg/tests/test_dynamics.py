import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asvrl.dynamics import (HydroParams, IntegrationDivergedError,
                            ReferenceState, VehicleState, dynamics_matrices,
                            integrate_step, nominal_derivative, planner_step,
                            rk4_step, rotation_matrix, true_derivative,
                            unmodeled_forces, wrap_angle)
from asvrl.scenarios import build_scenario, reference_path

angles = st.floats(min_value=-50.0, max_value=50.0,
                   allow_nan=False, allow_infinity=False)
speeds = st.floats(min_value=-5.0, max_value=5.0,
                   allow_nan=False, allow_infinity=False)


def test_rotation_identity():
    assert np.allclose(rotation_matrix(0.0), np.eye(3))


def test_rotation_quarter_turn():
    out = rotation_matrix(np.pi / 2) @ np.array([1.0, 0.0, 0.0])
    assert np.allclose(out, [0.0, 1.0, 0.0], atol=1e-15)


@given(psi=angles)
@settings(max_examples=200, deadline=None)
def test_rotation_orthonormal(psi):
    R = rotation_matrix(psi)
    assert np.max(np.abs(R.T @ R - np.eye(3))) <= 1e-12
    assert abs(np.linalg.det(R) - 1.0) <= 1e-12
    assert R[2, 2] == 1.0


def test_inertia_entries_from_parameter_table():
    p = HydroParams()
    assert p.M11 == pytest.approx(25.8)
    assert p.M22 == pytest.approx(33.8)
    assert p.M33 == pytest.approx(2.76)
    assert p.M23 == pytest.approx(1.0948)
    M = p.inertia()
    assert np.allclose(M, M.T)
    assert np.all(np.linalg.eigvalsh(M) > 0)


def test_coriolis_pure_sway():
    M, C, D = dynamics_matrices(np.array([0.0, 1.0, 0.0]), HydroParams())
    assert C[0, 2] == pytest.approx(-33.8)
    assert C[1, 2] == pytest.approx(0.0)
    assert np.max(np.abs(C + C.T)) == 0.0


def test_damping_pure_surge():
    _, _, D = dynamics_matrices(np.array([1.0, 0.0, 0.0]), HydroParams())
    assert D[0, 0] == pytest.approx(0.7225 + 1.3274 + 1.8664)


@given(u=speeds, v=speeds, r=speeds)
@settings(max_examples=200, deadline=None)
def test_coriolis_skew_symmetric(u, v, r):
    _, C, _ = dynamics_matrices(np.array([u, v, r]), HydroParams())
    assert np.max(np.abs(C + C.T)) <= 1e-12


def test_non_positive_definite_inertia_rejected():
    bad = HydroParams(m=0.1, Y_dv=10.0)   # makes M22 negative
    with pytest.raises(ValueError):
        dynamics_matrices(np.zeros(3), bad)


def test_unmodeled_forces_values():
    assert np.allclose(unmodeled_forces(np.zeros(3)), 0.0)
    g = unmodeled_forces(np.array([1.0, 1.0, 1.0]))
    assert np.allclose(g, [0.621, 0.912, 0.434])
    g = unmodeled_forces(np.array([1.0, 0.0, 2.0]))
    assert np.allclose(g, [0.0, 0.0, 0.624])


def test_true_derivative_equilibrium_and_kinematics():
    p = HydroParams()
    assert np.allclose(true_derivative(np.zeros(6), np.zeros(3), p), 0.0)
    x = np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    dx = true_derivative(x, np.zeros(3), p)
    assert np.allclose(dx[:3], [1.0, 0.0, 0.0])
    assert dx[3] == pytest.approx(-3.9163 / 25.8)


def test_nominal_derivative_surge_decay():
    p = HydroParams()
    assert np.allclose(nominal_derivative(np.zeros(6), np.zeros(3), p), 0.0)
    x = np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    dx = nominal_derivative(x, np.zeros(3), p)
    assert dx[3] == pytest.approx(-0.7225 / 25.8)


def test_true_minus_nominal_equals_uncertainty_terms():
    # difference must be exactly M^-1(tau - (C+D)nu - G) - M_m^-1(tau - D_m nu)
    p = HydroParams()
    rng = np.random.default_rng(7)
    for _ in range(25):
        x = rng.uniform(-1, 1, 6)
        tau = rng.uniform(-5, 5, 3)
        dt_true = true_derivative(x, tau, p)
        dt_nom = nominal_derivative(x, tau, p)
        nu = x[3:]
        M, C, D = dynamics_matrices(nu, p)
        lhs = dt_true[3:] - dt_nom[3:]
        rhs = (np.linalg.solve(M, tau - (C + D) @ nu - unmodeled_forces(nu))
               - (tau - p.nominal_damping() @ nu)
               / np.diag(p.nominal_inertia()))
        assert np.allclose(lhs, rhs, atol=1e-14)
        assert np.allclose(dt_true[:3], dt_nom[:3])  # shared kinematics


def test_true_matches_nominal_when_uncertainty_removed():
    p = HydroParams(x_g=0.0, X_uu=0.0, X_uuu=0.0, Y_vv=0.0, Y_rv=0.0,
                    Y_r=0.0, Y_vr=0.0, Y_rr=0.0, N_v=0.0, N_vv=0.0,
                    N_rv=0.0, N_vr=0.0, N_rr=0.0)
    rng = np.random.default_rng(3)
    no_g = lambda nu: np.zeros(3)
    for _ in range(20):
        x = rng.uniform(-1, 1, 6)
        x[4] = 0.0
        x[5] = 0.0            # C(nu)nu vanishes off the sway/yaw axes
        tau = rng.uniform(-5, 5, 3)
        a = true_derivative(x, tau, p, unmodeled=no_g)
        b = nominal_derivative(x, tau, p)
        assert np.allclose(a, b, atol=1e-13)


def test_rk4_exponential_step():
    out = rk4_step(lambda x: -x, np.array([1.0]), 0.1)
    assert out[0] == pytest.approx(np.exp(-0.1), abs=1e-7)


def test_rk4_zero_field():
    x = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(rk4_step(lambda x: np.zeros(3), x, 0.5), x)


def test_rk4_global_order_four():
    # halving dt shrinks the accumulated error over a fixed interval ~16x
    def run(dt):
        x = np.array([1.0])
        for _ in range(int(round(1.0 / dt))):
            x = rk4_step(lambda s: -s, x, dt)
        return abs(x[0] - np.exp(-1.0))

    ratio = run(0.1) / run(0.05)
    assert 14.0 <= ratio <= 18.0


def test_rk4_rejects_bad_dt_and_divergence():
    with pytest.raises(ValueError):
        rk4_step(lambda x: x, np.array([1.0]), 0.0)
    with np.errstate(over="ignore"), pytest.raises(IntegrationDivergedError):
        rk4_step(lambda x: x ** 3, np.array([1e160]), 1.0)


def test_integrate_step_matches_rk4():
    p = HydroParams()
    state = VehicleState(eta=np.array([1.0, 2.0, 0.3]),
                         nu=np.array([0.5, 0.1, -0.2]))
    tau = np.array([1.0, 0.0, 0.5])
    out = integrate_step(state, tau, 0.1, p)
    ref = rk4_step(lambda x: true_derivative(x, tau, p),
                   state.as_vector(), 0.1)
    assert np.allclose(out.as_vector(), ref)


def test_planner_at_rest_is_fixed():
    ref = ReferenceState()
    nxt = planner_step(ref, 0.1)
    assert np.allclose(nxt.eta_r, 0.0)
    assert np.allclose(nxt.nu_r, 0.0)


def test_planner_straight_line():
    ref = ReferenceState(eta_r=np.array([0.0, 0.0, np.pi / 4]),
                         nu_r=np.array([0.4, 0.0, 0.0]))
    nxt = planner_step(ref, 0.1)
    step = 0.4 * 0.1 * np.cos(np.pi / 4)
    assert np.allclose(nxt.eta_r[:2], [step, step], atol=1e-12)
    assert nxt.nu_r[1] == 0.0


def test_planner_rk4_order_on_turning_reference():
    # dt values chosen to divide every schedule breakpoint, so the remaining
    # error is pure integrator truncation
    sc = build_scenario(1)

    def final_pose(dt):
        path = reference_path(sc, 100.0, dt=dt)
        return path[-1, 1:4]

    exact = final_pose(0.00625)
    e1 = np.linalg.norm(final_pose(0.5) - exact)
    e2 = np.linalg.norm(final_pose(0.25) - exact)
    assert 14.0 <= e1 / e2 <= 18.0


def test_scenario1_surge_schedule_integrates_exactly():
    sc = build_scenario(1)
    path = reference_path(sc, 30.0, dt=0.1)
    k20 = int(round(20.0 / 0.1))
    assert path[k20, 4] == pytest.approx(0.5, abs=1e-12)
    assert path[-1, 4] == pytest.approx(0.5, abs=1e-12)  # constant after 20 s


def test_reference_profile_values():
    sc = build_scenario(1)
    assert sc.accel_at(10.0)[0] == pytest.approx(0.005)
    assert sc.accel_at(10.0)[2] == 0.0
    assert sc.accel_at(30.0)[2] == pytest.approx(np.pi / 600)
    assert sc.accel_at(130.0, eval_profile=True)[2] == pytest.approx(-np.pi / 600)
    assert sc.accel_at(1e6)[2] == 0.0          # beyond the last breakpoint
    assert sc.accel_at(25.0)[2] == pytest.approx(np.pi / 600)  # right-continuous


@given(a=st.floats(min_value=-100, max_value=100, allow_nan=False))
@settings(max_examples=200, deadline=None)
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -np.pi < w <= np.pi
    assert abs((a - w) % (2 * np.pi)) < 1e-9 or \
        abs((a - w) % (2 * np.pi) - 2 * np.pi) < 1e-9
