"""3-DOF surface-vehicle dynamics: true plant, linear nominal model, RK4, planner.

State convention: eta = (x, y, psi) in the inertial frame, nu = (u, v, r) in the
body frame. Headings are stored unwrapped; wrapping happens only where errors
are formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class IntegrationDivergedError(RuntimeError):
    """Raised when an integration step produces non-finite state."""


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = -((-a + np.pi) % (2.0 * np.pi) - np.pi)
    return w


@dataclass
class HydroParams:
    """Rigid-body and hydrodynamic coefficients of the supply-ship model."""

    m: float = 23.8
    I_z: float = 1.76
    x_g: float = 0.046
    X_du: float = -2.0       # added mass X_udot
    X_u: float = -0.7225
    X_uu: float = -1.3274    # X_|u|u
    X_uuu: float = -1.8664
    Y_dv: float = -10.0      # Y_vdot
    Y_v: float = -38.612
    Y_vv: float = -36.2823   # Y_|v|v
    Y_rv: float = -0.805     # Y_|r|v
    Y_dr: float = -0.0       # Y_rdot
    Y_r: float = 0.1079
    Y_vr: float = -0.845     # Y_|v|r
    Y_rr: float = -3.45      # Y_|r|r
    N_v: float = -0.1052
    N_vv: float = 5.0437     # N_|v|v
    N_rv: float = -0.13      # N_|r|v
    N_dr: float = -1.0       # N_rdot
    N_r: float = -1.9
    N_vr: float = 0.08       # N_|v|r
    N_rr: float = -0.75      # N_|r|r

    @property
    def M11(self) -> float:
        return self.m - self.X_du

    @property
    def M22(self) -> float:
        return self.m - self.Y_dv

    @property
    def M23(self) -> float:
        return self.m * self.x_g - self.Y_dr

    @property
    def M33(self) -> float:
        return self.I_z - self.N_dr

    def inertia(self) -> np.ndarray:
        M = np.array([
            [self.M11, 0.0, 0.0],
            [0.0, self.M22, self.M23],
            [0.0, self.M23, self.M33],
        ])
        return M

    def validate(self) -> None:
        if not (self.M11 > 0 and self.M22 > 0
                and self.M22 * self.M33 - self.M23 ** 2 > 0):
            raise ValueError("inertia matrix is not positive definite")

    def nominal_inertia(self) -> np.ndarray:
        return np.diag([self.M11, self.M22, self.M33])

    def nominal_damping(self) -> np.ndarray:
        # first entry read as -X_u: the coefficient table has no X_v
        return np.diag([-self.X_u, -self.Y_v, -self.N_r])


@dataclass
class VehicleState:
    eta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    nu: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.eta, self.nu])

    @staticmethod
    def from_vector(x: np.ndarray) -> "VehicleState":
        x = np.asarray(x, dtype=float)
        return VehicleState(eta=x[:3].copy(), nu=x[3:].copy())

    def copy(self) -> "VehicleState":
        return VehicleState(self.eta.copy(), self.nu.copy())


@dataclass
class ReferenceState:
    """Planner state: pose, velocity (sway fixed at 0) and acceleration."""

    eta_r: np.ndarray = field(default_factory=lambda: np.zeros(3))
    nu_r: np.ndarray = field(default_factory=lambda: np.zeros(3))
    a_r: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def copy(self) -> "ReferenceState":
        return ReferenceState(self.eta_r.copy(), self.nu_r.copy(),
                              self.a_r.copy())


def rotation_matrix(psi: float) -> np.ndarray:
    """Rotation about z from body to inertial frame."""
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def dynamics_matrices(nu: np.ndarray,
                      params: HydroParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inertia M, Coriolis C(nu) and damping D(nu) of the true plant."""
    params.validate()
    u, v, r = nu
    M = params.inertia()

    c13 = -params.M22 * v - params.M23 * r
    c23 = params.M11 * u
    C = np.array([
        [0.0, 0.0, c13],
        [0.0, 0.0, c23],
        [-c13, -c23, 0.0],
    ])

    d11 = -params.X_u - params.X_uu * abs(u) - params.X_uuu * u ** 2
    d22 = -params.Y_v - params.Y_vv * abs(v) - params.Y_rv * abs(r)
    d23 = -params.Y_r - params.Y_vr * abs(v) - params.Y_rr * abs(r)
    d32 = -params.N_v - params.N_vv * abs(v) - params.N_rv * abs(r)
    d33 = -params.N_r - params.N_vr * abs(v) - params.N_rr * abs(r)
    D = np.array([
        [d11, 0.0, 0.0],
        [0.0, d22, d23],
        [0.0, d32, d33],
    ])
    return M, C, D


def unmodeled_forces(nu: np.ndarray) -> np.ndarray:
    """Unmodeled force/moment vector of the true plant; hidden from controllers."""
    u, v, r = nu
    g1 = 0.279 * u * v ** 2 + 0.342 * v ** 2 * r
    g2 = 0.912 * u ** 2 * v
    g3 = 0.156 * u * r ** 2 + 0.278 * u * r * v ** 3
    return np.array([g1, g2, g3])


def true_derivative(x: np.ndarray, tau: np.ndarray, params: HydroParams,
                    unmodeled=unmodeled_forces) -> np.ndarray:
    """Six-state derivative of the true plant for a held input tau."""
    eta, nu = x[:3], x[3:]
    M, C, D = dynamics_matrices(nu, params)
    eta_dot = rotation_matrix(eta[2]) @ nu
    nu_dot = np.linalg.solve(M, tau - (C + D) @ nu - unmodeled(nu))
    return np.concatenate([eta_dot, nu_dot])


def nominal_derivative(x_m: np.ndarray, tau: np.ndarray,
                       params: HydroParams) -> np.ndarray:
    """Six-state derivative of the linear nominal model."""
    eta, nu = x_m[:3], x_m[3:]
    M_m = np.array([params.M11, params.M22, params.M33])
    D_m = np.array([-params.X_u, -params.Y_v, -params.N_r])
    eta_dot = rotation_matrix(eta[2]) @ nu
    nu_dot = (tau - D_m * nu) / M_m
    return np.concatenate([eta_dot, nu_dot])


def rk4_step(f, x: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of x' = f(x)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationDivergedError("state became non-finite")
    return out


def integrate_step(state: VehicleState, tau: np.ndarray, dt: float,
                   params: HydroParams, nominal: bool = False) -> VehicleState:
    """Advance a plant or nominal-model state by dt under a held input."""
    tau = np.asarray(tau, dtype=float)
    if nominal:
        f = lambda x: nominal_derivative(x, tau, params)
    else:
        f = lambda x: true_derivative(x, tau, params)
    return VehicleState.from_vector(rk4_step(f, state.as_vector(), dt))


def planner_step(ref: ReferenceState, dt: float) -> ReferenceState:
    """Advance the reference planner by dt with the current a_r held."""
    a_r = ref.a_r

    def f(x):
        eta_dot = rotation_matrix(x[2]) @ x[3:]
        return np.concatenate([eta_dot, a_r])

    out = rk4_step(f, np.concatenate([ref.eta_r, ref.nu_r]), dt)
    nxt = ReferenceState(eta_r=out[:3], nu_r=out[3:], a_r=a_r.copy())
    nxt.nu_r[1] = 0.0
    return nxt
