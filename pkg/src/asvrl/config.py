"""Run configuration: JSON file with every default embedded, so an empty
config reproduces the published setup; user keys deep-merge over defaults."""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path

import numpy as np

from .baseline import BacksteppingGains
from .dynamics import HydroParams
from .environment import Obstacle, RewardWeights, TrackingEnv
from .sac import SacConfig
from .scenarios import ScenarioProfile, build_scenario, desk_scale

OUT_ROOT_ENV = "ASVRL_OUT"


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    sac = dataclasses.asdict(SacConfig())
    sac.pop("seed")
    return {
        "scenario": 1,
        "seeds": [0],
        "desk_scale": False,
        "no_baseline": False,
        "k_max": 3,
        "obstacle_c": 25.0,
        "obstacle_qc": 1.0,
        "obstacles": None,
        "sweep_c": [0.25, 2.5, 25.0],
        "sac": sac,
        "hydro": dataclasses.asdict(HydroParams()),
        "gains": {
            "k1": BacksteppingGains().k1.tolist(),
            "k2": BacksteppingGains().k2.tolist(),
            "los_lookahead": BacksteppingGains().los_lookahead,
        },
        "reward": {
            "h1": RewardWeights().h1.tolist(),
            "h2": RewardWeights().h2.tolist(),
        },
    }


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key: {key!r}")
        if isinstance(value, dict) and isinstance(base[key], dict):
            out[key] = _deep_merge(base[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None) -> dict:
    cfg = default_config()
    if path is None:
        return cfg
    try:
        user = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    return _deep_merge(cfg, user)


def make_hydro(cfg: dict) -> HydroParams:
    return HydroParams(**cfg["hydro"])


def make_gains(cfg: dict) -> BacksteppingGains:
    g = cfg["gains"]
    return BacksteppingGains(k1=np.array(g["k1"]), k2=np.array(g["k2"]),
                             los_lookahead=g["los_lookahead"])


def make_weights(cfg: dict) -> RewardWeights:
    r = cfg["reward"]
    return RewardWeights(h1=np.array(r["h1"]), h2=np.array(r["h2"]))


def make_scenario(cfg: dict) -> ScenarioProfile:
    sid = int(cfg["scenario"])
    if sid not in (1, 2, 3, 4):
        raise ConfigError(f"scenario must be 1-4, got {sid}")
    profile = build_scenario(sid, c=float(cfg["obstacle_c"]),
                             q_c=float(cfg["obstacle_qc"]))
    if cfg["obstacles"] is not None:
        profile.obstacles = [
            Obstacle(p=np.array(ob["p"]), v=np.array(ob.get("v", [0.0, 0.0])),
                     d_o=ob["d_o"], d_s=ob["d_s"],
                     q_c=ob.get("q_c", cfg["obstacle_qc"]),
                     c=ob.get("c", cfg["obstacle_c"]))
            for ob in cfg["obstacles"]
        ]
    if cfg["desk_scale"]:
        profile = desk_scale(profile)
    return profile


def make_sac_config(cfg: dict, seed: int) -> SacConfig:
    sac = SacConfig(seed=seed, **{k: tuple(v) if isinstance(v, list) else v
                                  for k, v in cfg["sac"].items()})
    if cfg["desk_scale"]:
        # the preset only touches fields the user left at their defaults
        ref = default_config()["sac"]
        desk = sac.desk_scale()
        updates = {}
        for name in ("episodes", "tau_max", "checkpoint_every",
                     "jq_threshold"):
            current = getattr(sac, name)
            default = ref[name]
            if isinstance(default, list):
                default = tuple(default)
            if current == default:
                updates[name] = getattr(desk, name)
        sac = dataclasses.replace(sac, **updates)
    return sac


def make_env(cfg: dict, eval_profile: bool = False,
             include_baseline: bool | None = None) -> TrackingEnv:
    if include_baseline is None:
        include_baseline = not cfg["no_baseline"]
    return TrackingEnv(make_scenario(cfg), params=make_hydro(cfg),
                       gains=make_gains(cfg), weights=make_weights(cfg),
                       dt=float(cfg["sac"]["dt"]), k_max=int(cfg["k_max"]),
                       include_baseline=include_baseline,
                       eval_profile=eval_profile)


def default_out_root() -> Path:
    return Path(os.environ.get(OUT_ROOT_ENV, "runs"))
