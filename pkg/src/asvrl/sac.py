"""Soft actor-critic trainer around the tracking environment.

Twin critics are stored as stacked weight tensors (leading axis 2) so both
evaluate in one batched matmul. Every random draw comes from named generator
streams spawned off the run seed, so training is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    from contextlib import nullcontext

    def threadpool_limits(*args, **kwargs):
        return nullcontext()

from . import neural
from .environment import TrackingEnv, observation_width

ACTION_DIM = 2


@dataclass
class SacConfig:
    gamma: float = 0.998
    lr_q: float = 1e-3
    lr_pi: float = 1e-4
    lr_alpha: float = 1e-4
    kappa: float = 0.01
    batch_size: int = 128
    replay_capacity: int = 1_000_000
    episodes: int = 1000
    dt: float = 0.1
    hidden: tuple[int, int] = (128, 128)
    tau_max: tuple[float, float] = (200.0, 200.0)
    target_entropy: float = -float(ACTION_DIM)
    init_alpha: float = 0.2
    bootstrap_episodes: int = 10
    bootstrap_sweeps: int = 2000
    updates_per_step: int = 1
    jq_threshold: float = 1e-3
    checkpoint_every: int = 100
    seed: int = 0

    def desk_scale(self) -> "SacConfig":
        """Minutes-long preset: shorter budget, actuator bound sized to the
        vessel so early exploration cannot fling the plant tens of metres,
        and a cooler initial temperature so the exploration noise anneals
        within the short run. The J_Q early stop is disabled: at this scale
        the critic residual crosses 1e-3 long before the actor converges."""
        return replace(self, episodes=150, tau_max=(20.0, 20.0),
                       checkpoint_every=25, jq_threshold=0.0,
                       init_alpha=0.05)


@dataclass
class ObsScaler:
    """Fixed affine feature map in front of the networks.

    Layout: scaled nominal state, scaled (plant - nominal) difference, scaled
    baseline action, scaled obstacle slots. Invertible, so no information is
    added or lost; it only conditions the inputs.
    """

    scale_nominal: np.ndarray
    scale_error: np.ndarray
    scale_baseline: np.ndarray
    scale_slot: np.ndarray
    k_max: int

    @staticmethod
    def default(k_max: int = 3, d_d: float = 7.5) -> "ObsScaler":
        # absolute pose is dynamically irrelevant (translation-invariant
        # plant), so its channels are scaled near zero; velocities, errors,
        # baseline action and relative obstacle slots carry the signal
        return ObsScaler(
            scale_nominal=np.array([1e-3, 1e-3, 1e-3, 1.0, 1.0, 2.0]),
            scale_error=np.ones(6),
            scale_baseline=np.full(2, 1 / 20),
            scale_slot=np.array([1 / d_d, 1 / d_d, 1.0, 1.0, 1.0]),
            k_max=k_max)

    def transform(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(obs)
        out = np.empty_like(obs)
        out[:, :6] = obs[:, :6] * self.scale_nominal
        out[:, 6:12] = (obs[:, 6:12] - obs[:, :6]) * self.scale_error
        out[:, 12:14] = obs[:, 12:14] * self.scale_baseline
        slots = obs[:, 14:].reshape(obs.shape[0], self.k_max, 5)
        out[:, 14:] = (slots * self.scale_slot).reshape(obs.shape[0], -1)
        return out

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.scale_nominal, self.scale_error,
                               self.scale_baseline, self.scale_slot])

    @staticmethod
    def from_vector(vec: np.ndarray, k_max: int) -> "ObsScaler":
        vec = np.asarray(vec, dtype=float)
        return ObsScaler(vec[:6].copy(), vec[6:12].copy(), vec[12:14].copy(),
                         vec[14:19].copy(), k_max)


class ReplayMemory:
    """Bounded FIFO ring sampled uniformly with replacement."""

    def __init__(self, capacity: int, obs_dim: int,
                 act_dim: int = ACTION_DIM):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self._alloc = min(capacity, 4096)
        self._grow(self._alloc)
        self.size = 0
        self.head = 0

    def _grow(self, n: int) -> None:
        def make(old, width):
            new = np.zeros((n, width))
            if old is not None:
                new[:old.shape[0]] = old
            return new

        self.obs = make(getattr(self, "obs", None), self.obs_dim)
        self.act = make(getattr(self, "act", None), self.act_dim)
        self.rew = make(getattr(self, "rew", None), 1)
        self.nxt = make(getattr(self, "nxt", None), self.obs_dim)
        self.done = make(getattr(self, "done", None), 1)
        self._alloc = n

    def push(self, s, a, r, s_next, done) -> None:
        if self.head >= self._alloc and self._alloc < self.capacity:
            self._grow(min(self.capacity, self._alloc * 2))
        i = self.head
        self.obs[i] = s
        self.act[i] = a
        self.rew[i, 0] = r
        self.nxt[i] = s_next
        self.done[i, 0] = float(done)
        self.head = (self.head + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator) -> dict:
        if self.size == 0:
            raise ValueError("cannot sample from empty replay memory")
        idx = rng.integers(0, self.size, size=n)
        return {"s": self.obs[idx], "a": self.act[idx],
                "r": self.rew[idx, 0], "s_next": self.nxt[idx],
                "done": self.done[idx, 0]}


@dataclass
class Trainer:
    config: SacConfig
    obs_dim: int
    actor: list[np.ndarray]
    critics: list[np.ndarray]      # stacked: each (2, out, in+1)
    targets: list[np.ndarray]
    log_alpha: np.ndarray          # 0-d array
    adam_actor: neural.AdamState
    adam_critic: neural.AdamState
    adam_alpha: neural.AdamState
    scaler: ObsScaler
    replay: ReplayMemory
    rngs: dict[str, np.random.Generator]
    tau_max: np.ndarray
    total_env_steps: int = 0
    total_updates: int = 0
    episodes_done: int = 0
    ws: dict = field(default_factory=dict)

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))


def make_trainer(config: SacConfig, obs_dim: int | None = None,
                 k_max: int = 3, d_d: float = 7.5) -> Trainer:
    if obs_dim is None:
        obs_dim = observation_width(k_max)
    ss = np.random.SeedSequence(config.seed)
    names = ["init", "env", "explore", "target", "replay"]
    rngs = {n: np.random.default_rng(s)
            for n, s in zip(names, ss.spawn(len(names)))}
    h1, h2 = config.hidden
    actor = neural.init_mlp([obs_dim, h1, h2, 2 * ACTION_DIM], rngs["init"])
    critics = neural.init_mlp([obs_dim + ACTION_DIM, h1, h2, 1],
                              rngs["init"], stack=2)
    targets = [w.copy() for w in critics]
    return Trainer(
        config=config, obs_dim=obs_dim, actor=actor, critics=critics,
        targets=targets, log_alpha=np.array(np.log(config.init_alpha)),
        adam_actor=neural.AdamState.for_params(actor, config.lr_pi),
        adam_critic=neural.AdamState.for_params(critics, config.lr_q),
        adam_alpha=neural.AdamState.for_params([np.array(0.0)],
                                               config.lr_alpha),
        scaler=ObsScaler.default(k_max=k_max, d_d=d_d),
        replay=ReplayMemory(config.replay_capacity,
                            obs_dim=obs_dim),
        rngs=rngs, tau_max=np.asarray(config.tau_max, dtype=float))


def actor_outputs(actor: list[np.ndarray], feats: np.ndarray,
                  ws: dict | None = None,
                  tag: str = "") -> tuple[np.ndarray, np.ndarray, np.ndarray, list]:
    out, cache = neural.mlp_forward(actor, feats, ws=ws, tag=tag)
    mean = out[:, :ACTION_DIM]
    log_sigma, mask = neural.clamp_log_sigma(out[:, ACTION_DIM:])
    return mean, log_sigma, mask, cache


def critic_values(critics: list[np.ndarray], feats: np.ndarray,
                  actions: np.ndarray, tau_max: np.ndarray,
                  ws: dict | None = None,
                  tag: str = "") -> tuple[np.ndarray, list, np.ndarray]:
    x = neural._buf(ws, (tag, "in"), feats.shape[:-1] + (feats.shape[-1] + ACTION_DIM,))
    x[..., :feats.shape[-1]] = feats
    np.divide(actions, tau_max, out=x[..., feats.shape[-1]:])
    x2 = np.broadcast_to(x, (2,) + x.shape)
    q, cache = neural.mlp_forward(critics, x2, ws=ws, tag=tag)
    return q[..., 0], cache, x


def soft_target_value(r: np.ndarray, done: np.ndarray, q_next_min: np.ndarray,
                      logp_next: np.ndarray, gamma: float,
                      alpha: float) -> np.ndarray:
    """Two-critic entropy-regularised backup; terminal samples keep Y = R."""
    return r + gamma * (1.0 - done) * q_next_min - \
        gamma * (1.0 - done) * alpha * logp_next


def compute_target(trainer: Trainer, batch: dict) -> np.ndarray:
    cfg = trainer.config
    feats_next = trainer.scaler.transform(batch["s_next"])
    mean, log_sigma, _, _ = actor_outputs(trainer.actor, feats_next,
                                          ws=trainer.ws, tag="actor_next")
    noise = trainer.rngs["target"].standard_normal(mean.shape)
    a_next, logp_next, _ = neural.sample_action(mean, log_sigma, noise,
                                                trainer.tau_max)
    q_next, _, _ = critic_values(trainer.targets, feats_next, a_next,
                                 trainer.tau_max, ws=trainer.ws, tag="tgt")
    return soft_target_value(batch["r"], batch["done"], q_next.min(axis=0),
                             logp_next, cfg.gamma, trainer.alpha)


def critic_update(trainer: Trainer, batch: dict,
                  y_target: np.ndarray) -> float:
    """One Adam step per critic on the Bellman residual; returns J_Q."""
    feats = trainer.scaler.transform(batch["s"])
    q, cache, _ = critic_values(trainer.critics, feats, batch["a"],
                                trainer.tau_max, ws=trainer.ws, tag="critic")
    resid = q - y_target            # (2, B)
    n = resid.shape[-1]
    grads, _ = neural.mlp_backward(trainer.critics, cache,
                                   (resid / n)[..., None],
                                   ws=trainer.ws, tag="critic")
    neural.adam_step(trainer.critics, grads, trainer.adam_critic)
    return float(0.5 * np.mean(resid ** 2))


def actor_update(trainer: Trainer, batch: dict,
                 q_grad_fn=None) -> tuple[float, np.ndarray]:
    """One Adam step on E[alpha ln pi - min Q]; returns (J_pi, log probs).

    q_grad_fn(feats, actions) -> (q_min, dq/daction) may be injected; the
    default evaluates the frozen twin critics.
    """
    feats = trainer.scaler.transform(batch["s"])
    mean, log_sigma, mask, cache = actor_outputs(trainer.actor, feats,
                                                 ws=trainer.ws, tag="actor")
    noise = trainer.rngs["explore"].standard_normal(mean.shape)
    action, logp, aux = neural.sample_action(mean, log_sigma, noise,
                                             trainer.tau_max)
    if q_grad_fn is None:
        q_min, dq_da = _twin_q_and_grad(trainer, feats, action)
    else:
        q_min, dq_da = q_grad_fn(feats, action)

    n = feats.shape[0]
    alpha = trainer.alpha
    j_pi = float(np.mean(alpha * logp - q_min))

    dlogp_dpre, dact_dpre = neural.squash_gradients(aux, trainer.tau_max)
    dl_dpre = (alpha * dlogp_dpre - dq_da * dact_dpre) / n
    dl_dmean = dl_dpre
    dl_dls = (-alpha / n + dl_dpre * aux["sigma"] * noise) * mask
    upstream = np.concatenate([dl_dmean, dl_dls], axis=-1)
    grads, _ = neural.mlp_backward(trainer.actor, cache, upstream,
                                   ws=trainer.ws, tag="actor")
    neural.adam_step(trainer.actor, grads, trainer.adam_actor)
    return j_pi, logp


def _twin_q_and_grad(trainer: Trainer, feats: np.ndarray,
                     action: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q, cache, _ = critic_values(trainer.critics, feats, action,
                                trainer.tau_max, ws=trainer.ws, tag="pi_q")
    pick = np.argmin(q, axis=0)          # (B,)
    gq = np.zeros(q.shape + (1,))
    gq[pick, np.arange(q.shape[1]), 0] = 1.0
    _, gin = neural.mlp_backward(trainer.critics, cache, gq,
                                 ws=trainer.ws, tag="pi_q")
    dq_dx = gin.sum(axis=0)              # shared input across the stack
    dq_da = dq_dx[:, -ACTION_DIM:] / trainer.tau_max
    return q.min(axis=0), dq_da


def temperature_update(trainer: Trainer, logp: np.ndarray) -> float:
    """One Adam step on J_alpha via the log parameterisation."""
    cfg = trainer.config
    alpha = trainer.alpha
    j_alpha = float(np.mean(-alpha * logp - alpha * cfg.target_entropy))
    grad = alpha * float(np.mean(-logp) - cfg.target_entropy)
    neural.adam_step([trainer.log_alpha], [np.array(grad)],
                     trainer.adam_alpha)
    return j_alpha


def polyak_update(trainer: Trainer) -> None:
    k = trainer.config.kappa
    for tgt, src in zip(trainer.targets, trainer.critics):
        tgt *= (1.0 - k)
        tgt += k * src


def gradient_phase(trainer: Trainer) -> dict:
    """Algorithm step: sample a batch, update critics, actor, temperature,
    then Polyak-mix the targets."""
    batch = trainer.replay.sample(trainer.config.batch_size,
                                  trainer.rngs["replay"])
    y = compute_target(trainer, batch)
    j_q = critic_update(trainer, batch, y)
    j_pi, logp = actor_update(trainer, batch)
    j_alpha = temperature_update(trainer, logp)
    polyak_update(trainer)
    trainer.total_updates += 1
    return {"j_q": j_q, "j_pi": j_pi, "j_alpha": j_alpha,
            "entropy": float(np.mean(-logp))}


def bootstrap_phase(env: TrackingEnv, trainer: Trainer,
                    episodes: int | None = None) -> dict:
    """Collect baseline-only data (u_l = 0) and pre-fit the critics on it.

    The fitted value is that of the baseline policy: next actions stay 0 and
    the entropy term is off, matching the exploration-free initial fit.
    """
    cfg = trainer.config
    episodes = cfg.bootstrap_episodes if episodes is None else episodes
    zero = np.zeros(ACTION_DIM)
    for _ in range(episodes):
        obs = env.reset(rng=trainer.rngs["env"])
        done = False
        while not done:
            obs2, r, done, info = env.step(zero)
            terminal = done and not info["truncated"]
            trainer.replay.push(obs, zero, r, obs2, terminal)
            obs = obs2
            trainer.total_env_steps += 1

    if trainer.replay.size == 0:
        return {"sweeps": 0, "residual_before": None, "residual_after": None}

    probe = trainer.replay.sample(min(512, trainer.replay.size),
                                  trainer.rngs["replay"])

    def baseline_residual() -> float:
        feats = trainer.scaler.transform(probe["s"])
        q, _, _ = critic_values(trainer.critics, feats, probe["a"],
                                trainer.tau_max)  # probe path stays unbuffered
        y = _baseline_target(trainer, probe)
        return float(0.5 * np.mean((q - y) ** 2))

    before = baseline_residual()
    for _ in range(cfg.bootstrap_sweeps):
        batch = trainer.replay.sample(cfg.batch_size, trainer.rngs["replay"])
        y = _baseline_target(trainer, batch)
        critic_update(trainer, batch, y)
        polyak_update(trainer)
    trainer.targets = [w.copy() for w in trainer.critics]
    after = baseline_residual()
    return {"sweeps": cfg.bootstrap_sweeps, "residual_before": before,
            "residual_after": after}


def _baseline_target(trainer: Trainer, batch: dict) -> np.ndarray:
    feats_next = trainer.scaler.transform(batch["s_next"])
    zero = np.zeros((feats_next.shape[0], ACTION_DIM))
    q_next, _, _ = critic_values(trainer.targets, feats_next, zero,
                                 trainer.tau_max, ws=trainer.ws, tag="tgt")
    return batch["r"] + trainer.config.gamma * (1.0 - batch["done"]) \
        * q_next.min(axis=0)


def sample_policy_action(trainer: Trainer, obs: np.ndarray) -> np.ndarray:
    feats = trainer.scaler.transform(obs[None, :])
    mean, log_sigma, _, _ = actor_outputs(trainer.actor, feats,
                                          ws=trainer.ws, tag="act1")
    noise = trainer.rngs["explore"].standard_normal(mean.shape)
    action, _, _ = neural.sample_action(mean, log_sigma, noise,
                                        trainer.tau_max)
    return action[0]


def train(env: TrackingEnv, trainer: Trainer,
          checkpoint_fn=None, bootstrap: bool = True) -> list[dict]:
    """Run Algorithm-style training; returns the per-episode learning curve.

    checkpoint_fn(tag, trainer), when given, is called after the bootstrap
    and then every config.checkpoint_every episodes and at the end.
    """
    cfg = trainer.config
    with threadpool_limits(limits=1):
        return _train_loop(env, trainer, cfg, checkpoint_fn, bootstrap)


def _train_loop(env: TrackingEnv, trainer: Trainer, cfg: SacConfig,
                checkpoint_fn, bootstrap: bool) -> list[dict]:
    if bootstrap:
        bootstrap_phase(env, trainer)
    if checkpoint_fn is not None:
        checkpoint_fn("ep0000", trainer)

    curve: list[dict] = []
    for episode in range(cfg.episodes):
        obs = env.reset(rng=trainer.rngs["env"])
        ep_return = 0.0
        stats: dict[str, list] = {"j_q": [], "j_pi": [], "entropy": []}
        done = False
        while not done:
            action = sample_policy_action(trainer, obs)
            obs2, r, done, info = env.step(action)
            # a hit step budget truncates the episode without ending the
            # task: only real terminations (divergence) stop the backup
            terminal = done and not info["truncated"]
            trainer.replay.push(obs, action, r, obs2, terminal)
            obs = obs2
            ep_return += r
            trainer.total_env_steps += 1
            if trainer.replay.size >= cfg.batch_size:
                for _ in range(cfg.updates_per_step):
                    out = gradient_phase(trainer)
                    for key in stats:
                        stats[key].append(out[key])
        trainer.episodes_done += 1
        row = {
            "episode": episode,
            "return": ep_return,
            "j_q": float(np.mean(stats["j_q"])) if stats["j_q"] else np.nan,
            "j_pi": float(np.mean(stats["j_pi"])) if stats["j_pi"] else np.nan,
            "alpha": trainer.alpha,
            "entropy": (float(np.mean(stats["entropy"]))
                        if stats["entropy"] else np.nan),
        }
        curve.append(row)
        if checkpoint_fn is not None and cfg.checkpoint_every > 0 \
                and (episode + 1) % cfg.checkpoint_every == 0:
            checkpoint_fn(f"ep{episode + 1:04d}", trainer)
        if stats["j_q"] and row["j_q"] < cfg.jq_threshold:
            break
    if checkpoint_fn is not None:
        checkpoint_fn("final", trainer)
    return curve


@dataclass
class ActorPolicy:
    """Frozen deterministic policy for evaluation."""

    actor: list[np.ndarray]
    scaler: ObsScaler
    tau_max: np.ndarray

    def act(self, obs: np.ndarray) -> np.ndarray:
        feats = self.scaler.transform(obs[None, :])
        out, _ = neural.mlp_forward(self.actor, feats)
        return neural.deterministic_action(out[0, :ACTION_DIM], self.tau_max)

    @staticmethod
    def from_trainer(trainer: Trainer) -> "ActorPolicy":
        return ActorPolicy([w.copy() for w in trainer.actor],
                           trainer.scaler, trainer.tau_max.copy())


def deterministic_rollout(env: TrackingEnv,
                          policy: ActorPolicy | None) -> dict:
    """Noise-free evaluation episode; policy None means baseline only.

    Returns per-step arrays (steps + 1 rows; the last row holds the terminal
    state with the controls the policy would apply there) plus metrics.
    """
    from .environment import closest_approach, world_velocity

    obs = env.reset(fixed_ic=env.scenario.eval_ic)
    n_obs = len(env.scenario.obstacles)
    rows = []
    min_clearance = np.inf
    done = False
    while True:
        u_l = policy.act(obs) if policy is not None else np.zeros(ACTION_DIM)
        r1, r2 = env.reward_terms(u_l)
        x = env.plant.as_vector()
        p_a, v_a = x[:2], world_velocity(x)
        dao_dit = []
        for ob in env.obstacles:
            d_ao = float(np.hypot(*(ob.p - p_a)))
            d_it, _ = closest_approach(p_a, v_a, ob)
            dao_dit.extend([d_ao, d_it])
            clearance = d_ao - env.scenario.d_a - ob.d_o
            min_clearance = min(min_clearance, clearance)
        rows.append([env.t, *x, *env.nominal.as_vector(),
                     *env.ref.eta_r, *env.ref.nu_r,
                     *env._u_b[[0, 2]], *u_l, r1, r2, *dao_dit])
        if done:
            break
        obs, _, done, info = env.step(u_l)
        if info["diverged"]:
            done = True

    data = np.array(rows)
    t = data[:, 0]
    err = np.hypot(data[:, 1] - data[:, 7], data[:, 2] - data[:, 8])
    window = (t >= 80.0) & (t <= 200.0)
    metrics = {
        "mean_dist_err_80_200": (float(err[window].mean())
                                 if window.any() else float(err.mean())),
        "max_dist_err": float(err.max()),
        "min_clearance": (float(min_clearance) if n_obs else np.inf),
        "diverged": bool(env.diverged),
    }
    return {"rows": data, "n_obstacles": n_obs, "metrics": metrics}
