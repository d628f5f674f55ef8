"""MDP layer: observation assembly, rewards, obstacle geometry, episode loop.

Rewards follow the convention R_t = R(s_t, u_t): both terms are evaluated at
the pre-step state together with the applied learned action.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .baseline import BacksteppingGains, baseline_control
from .dynamics import (HydroParams, IntegrationDivergedError, ReferenceState,
                       VehicleState, integrate_step, planner_step, wrap_angle)

if TYPE_CHECKING:
    from .scenarios import ScenarioProfile

OBS_SLOT_WIDTH = 5          # rel position (2), rel velocity (2), visibility flag


@dataclass
class Obstacle:
    p: np.ndarray                 # current position (m)
    v: np.ndarray                 # velocity (m/s), constant
    d_o: float                    # physical radius (m)
    d_s: float                    # safe-region radius (m)
    q_c: float = 1.0              # max collision cost
    c: float = 25.0               # sigmoid sensitivity

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.q_c < 0:
            raise ValueError("q_c must be non-negative")
        if self.c <= 0:
            raise ValueError("c must be positive")

    def at_time(self, t: float) -> np.ndarray:
        return self.p + self.v * t

    def copy(self) -> "Obstacle":
        return Obstacle(self.p.copy(), self.v.copy(), self.d_o, self.d_s,
                        self.q_c, self.c)


@dataclass
class RewardWeights:
    h1: np.ndarray = field(default_factory=lambda: np.array(
        [0.025, 0.025, 0.0016, 0.005, 0.001, 0.0]))
    h2: np.ndarray = field(default_factory=lambda: np.array(
        [1.25e-3, 1.25e-3]))

    def __post_init__(self):
        self.h1 = np.asarray(self.h1, dtype=float)
        self.h2 = np.asarray(self.h2, dtype=float)
        if np.any(self.h1 < 0) or np.any(self.h2 <= 0):
            raise ValueError("h1 must be >= 0 and h2 > 0 on the diagonal")


def closest_approach(p_a: np.ndarray, v_a: np.ndarray,
                     obstacle: Obstacle) -> tuple[float, bool]:
    """Closest possible distance under current relative velocity, and whether
    the vehicle is moving toward the obstacle."""
    rel_v = np.asarray(v_a, dtype=float) - obstacle.v
    rel_p = obstacle.p - np.asarray(p_a, dtype=float)
    speed = np.hypot(rel_v[0], rel_v[1])
    if speed == 0.0:
        return float(np.hypot(rel_p[0], rel_p[1])), False
    closing = float(rel_v @ rel_p) > 0.0
    cross = rel_v[0] * rel_p[1] - rel_v[1] * rel_p[0]
    return abs(cross) / speed, closing


def collision_reward(p_a: np.ndarray, v_a: np.ndarray,
                     obstacles: Sequence[Obstacle], d_d: float) -> float:
    """Sigmoid collision-avoidance penalty over detected, closing obstacles."""
    if d_d <= 0:
        raise ValueError("detection radius must be positive")
    total = 0.0
    for ob in obstacles:
        d_ao = float(np.hypot(*(ob.p - np.asarray(p_a, dtype=float))))
        if d_ao > d_d:
            continue
        d_it, closing = closest_approach(p_a, v_a, ob)
        if not closing:
            continue
        total -= ob.q_c / (1.0 + np.exp(ob.c * (d_it - ob.d_s)))
    return total


def tracking_reward(x: np.ndarray, x_m: np.ndarray, u_l: np.ndarray,
                    weights: RewardWeights) -> float:
    """Quadratic penalty on model-reference error and learned-control effort."""
    e = np.asarray(x, dtype=float) - np.asarray(x_m, dtype=float)
    e[2] = wrap_angle(e[2])
    u_l = np.asarray(u_l, dtype=float)
    return float(-(e @ (weights.h1 * e)) - u_l @ (weights.h2 * u_l))


def world_velocity(x: np.ndarray) -> np.ndarray:
    """Planar inertial-frame velocity of a six-state vehicle vector."""
    psi = x[2]
    c, s = np.cos(psi), np.sin(psi)
    return np.array([c * x[3] - s * x[4], s * x[3] + c * x[4]])


def observation_width(k_max: int) -> int:
    return 14 + OBS_SLOT_WIDTH * k_max


def assemble_observation(x_m: np.ndarray, x: np.ndarray, u_b: np.ndarray,
                         obstacles: Sequence[Obstacle], d_d: float,
                         k_max: int) -> np.ndarray:
    """Fixed-width state vector: nominal state, plant state, baseline action,
    then nearest-first obstacle slots (zeroed when not visible)."""
    p_a = np.asarray(x, dtype=float)[:2]
    v_a = world_velocity(np.asarray(x, dtype=float))
    visible = []
    for ob in obstacles:
        d_ao = float(np.hypot(*(ob.p - p_a)))
        if d_ao <= d_d:
            visible.append((d_ao, ob))
    visible.sort(key=lambda pair: pair[0])

    slots = np.zeros(k_max * OBS_SLOT_WIDTH)
    for i, (_, ob) in enumerate(visible[:k_max]):
        base = i * OBS_SLOT_WIDTH
        slots[base:base + 2] = ob.p - p_a
        slots[base + 2:base + 4] = ob.v - v_a
        slots[base + 4] = 1.0
    return np.concatenate([np.asarray(x_m, dtype=float),
                           np.asarray(x, dtype=float),
                           np.asarray(u_b, dtype=float)[[0, 2]], slots])


def expand_action(u_l: np.ndarray) -> np.ndarray:
    """Lift a (tau_u, tau_r) action to a 3-vector with tau_v = 0."""
    return np.array([u_l[0], 0.0, u_l[1]])


class TrackingEnv:
    """Sampled-data closed loop around the true plant, nominal model,
    reference planner and constant-velocity obstacles."""

    def __init__(self, scenario: "ScenarioProfile",
                 params: HydroParams | None = None,
                 gains: BacksteppingGains | None = None,
                 weights: RewardWeights | None = None,
                 dt: float = 0.1, k_max: int = 3,
                 episode_steps: int | None = None,
                 include_baseline: bool = True,
                 eval_profile: bool = False):
        self.scenario = scenario
        self.params = params if params is not None else HydroParams()
        self.params.validate()
        self.gains = gains if gains is not None else BacksteppingGains()
        self.weights = weights if weights is not None else RewardWeights()
        self.dt = dt
        self.k_max = k_max
        self.include_baseline = include_baseline
        # phase-randomised episodes land anywhere on the evaluation profile,
        # so their schedule lookups must follow it too
        self.eval_profile = eval_profile or scenario.phase_horizon > 0.0
        seconds = (scenario.eval_seconds if eval_profile
                   else scenario.train_seconds)
        self.episode_steps = (episode_steps if episode_steps is not None
                              else int(round(seconds / dt)))
        for ob in scenario.obstacles:
            if not ob.d_s > ob.d_o + scenario.d_a:
                raise ValueError("safe radius must exceed d_o + d_a")
        self._ready = False

    @property
    def obs_dim(self) -> int:
        return observation_width(self.k_max)

    def reset(self, seed: int | None = None,
              rng: np.random.Generator | None = None,
              fixed_ic: np.ndarray | None = None) -> np.ndarray:
        """Start an episode; the plant pose is sampled unless fixed_ic given.

        With a positive scenario phase horizon the episode begins at a random
        point of the evaluation profile, with the sampling ranges re-centred
        on the reference state there.
        """
        sc = self.scenario
        if rng is None:
            rng = np.random.default_rng(seed)
        t0 = 0.0
        ref0 = ReferenceState(eta_r=sc.eta_r0.copy(), nu_r=sc.nu_r0.copy(),
                              a_r=sc.accel_at(0.0, self.eval_profile))
        if fixed_ic is None and sc.phase_horizon > 0.0:
            row = self._phase_table()[
                rng.integers(0, int(round(sc.phase_horizon / self.dt)) + 1)]
            t0 = row[0]
            ref0 = ReferenceState(eta_r=row[1:4].copy(), nu_r=row[4:7].copy(),
                                  a_r=sc.accel_at(t0, self.eval_profile))
        if fixed_ic is not None:
            x0 = np.asarray(fixed_ic, dtype=float).copy()
        else:
            center = np.array([0.0, 0.0, 0.25 * np.pi, sc.nu_r0[0]])
            x0 = np.array([
                rng.uniform(*sc.xy_range),
                rng.uniform(*sc.xy_range),
                rng.uniform(*sc.psi_range),
                rng.uniform(*sc.u_range),
                0.0, 0.0,
            ])
            if t0 > 0.0:
                x0[:4] += np.concatenate([ref0.eta_r[:2], [ref0.eta_r[2]],
                                          [ref0.nu_r[0]]]) - center
        self.plant = VehicleState(eta=x0[:3].copy(), nu=x0[3:].copy())
        self.nominal = VehicleState(eta=ref0.eta_r.copy(),
                                    nu=ref0.nu_r.copy())
        self.ref = ref0
        self.obstacles = [ob.copy() for ob in sc.obstacles]
        for ob in self.obstacles:
            ob.p = ob.p + ob.v * t0
        self.t = t0
        self.steps = 0
        self.diverged = False
        self._ready = True
        obs = self._observe()
        self._cached_obs = obs
        return obs

    def _phase_table(self) -> np.ndarray:
        table = getattr(self, "_phase_rows", None)
        if table is None:
            from .scenarios import reference_path
            table = reference_path(self.scenario, self.scenario.eval_seconds,
                                   dt=self.dt, eval_profile=True)
            self._phase_rows = table
        return table

    def _baseline(self, state: VehicleState) -> np.ndarray:
        return baseline_control(state, self.ref, self.gains, self.params)

    def _observe(self) -> np.ndarray:
        u_b = (self._baseline(self.plant) if self.include_baseline
               else np.zeros(3))
        self._u_b = u_b
        return assemble_observation(self.nominal.as_vector(),
                                    self.plant.as_vector(), u_b,
                                    self.obstacles, self.scenario.d_d,
                                    self.k_max)

    def reward_terms(self, u_l: np.ndarray) -> tuple[float, float]:
        x = self.plant.as_vector()
        r1 = tracking_reward(x, self.nominal.as_vector(), u_l, self.weights)
        r2 = collision_reward(x[:2], world_velocity(x), self.obstacles,
                              self.scenario.d_d)
        return r1, r2

    def step(self, u_l: np.ndarray) -> tuple[np.ndarray, float, bool, dict]:
        if not self._ready:
            raise RuntimeError("reset() must be called before step()")
        u_l = np.asarray(u_l, dtype=float)
        r1, r2 = self.reward_terms(u_l)
        reward = r1 + r2

        tau = expand_action(u_l)
        if self.include_baseline:
            tau = tau + self._u_b
        tau_m = self._baseline(self.nominal)

        info = {"r_track": r1, "r_avoid": r2, "u_b": self._u_b[[0, 2]].copy(),
                "diverged": False, "truncated": False}
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                self.plant = integrate_step(self.plant, tau, self.dt,
                                            self.params)
        except IntegrationDivergedError:
            self.diverged = True
            info["diverged"] = True
            self.steps += 1
            return self._last_obs(), reward, True, info
        self.nominal = integrate_step(self.nominal, tau_m, self.dt,
                                      self.params, nominal=True)
        self.ref = planner_step(self.ref, self.dt)
        self.t += self.dt
        self.ref.a_r = self.scenario.accel_at(self.t, self.eval_profile)
        for ob in self.obstacles:
            ob.p = ob.p + ob.v * self.dt
        self.steps += 1

        obs = self._observe()
        self._cached_obs = obs
        done = self.steps >= self.episode_steps
        # the step budget truncates rather than terminates: values may be
        # bootstrapped through it, unlike a divergence
        info["truncated"] = done
        return obs, reward, done, info

    def _last_obs(self) -> np.ndarray:
        cached = getattr(self, "_cached_obs", None)
        if cached is None:
            return np.zeros(self.obs_dim)
        return cached.copy()
