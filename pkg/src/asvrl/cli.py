"""Command-line entry point: train, eval, verify, and the c-sweep."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as aio
from .config import (ConfigError, default_out_root, load_config, make_env,
                     make_sac_config, make_scenario)
from .environment import Obstacle, closest_approach
from .sac import ActorPolicy, deterministic_rollout, make_trainer, train
from .verify import (fd_gradient, brute_force_closest, random_mdp,
                     soft_policy_evaluation, soft_policy_iteration,
                     tabular_policy_improvement, tabular_soft_backup)


def _resolved_config(args) -> dict:
    cfg = load_config(args.config)
    if args.scenario is not None:
        cfg["scenario"] = args.scenario
    if args.seed:
        cfg["seeds"] = list(args.seed)
    if args.desk_scale:
        cfg["desk_scale"] = True
    if getattr(args, "no_baseline", False):
        cfg["no_baseline"] = True
    return cfg


def _out_dir(args, cfg: dict, label: str) -> Path:
    if args.out is not None:
        return Path(args.out)
    return default_out_root() / label


def run_train(cfg: dict, out: Path,
              resume_from: str | None = None) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    produced: list[Path] = []
    for seed in cfg["seeds"]:
        seed_dir = out / f"seed_{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        sac_cfg = make_sac_config(cfg, seed)
        env = make_env(cfg)
        if resume_from is not None:
            # continues the gradient state; the replay refills from the
            # resumed policy's own rollouts, no fresh critic re-fit
            trainer = aio.load_trainer(resume_from, sac_cfg)
            bootstrap = False
        else:
            trainer = make_trainer(sac_cfg, k_max=int(cfg["k_max"]),
                                   d_d=env.scenario.d_d)
            bootstrap = not cfg["no_baseline"]
        ckpts: list[Path] = []

        def save(tag: str, tr) -> None:
            path = seed_dir / f"ckpt_{tag}.bin"
            aio.save_checkpoint(path, tr)
            ckpts.append(path)

        curve = train(env, trainer, checkpoint_fn=save, bootstrap=bootstrap)
        curve_path = seed_dir / "learning_curve.csv"
        aio.write_learning_curve(curve_path, curve)
        outputs = [curve_path] + ckpts
        aio.write_manifest(seed_dir / "manifest.json", {**cfg, "seed": seed},
                           outputs)
        produced.extend(outputs)
        print(f"seed {seed}: {len(curve)} episodes, "
              f"final return {curve[-1]['return']:.3f}")
    aio.emit_plot_scripts(out)
    return produced


def run_eval(cfg: dict, out: Path, checkpoint: str | None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    env = make_env(cfg, eval_profile=True)
    policy = aio.load_policy(checkpoint) if checkpoint else None
    result = deterministic_rollout(env, policy)
    label = "policy" if checkpoint else "baseline"
    traj_path = out / f"trajectory_{label}.csv"
    aio.write_csv(traj_path, aio.trajectory_header(result["n_obstacles"]),
                  result["rows"])
    metrics_path = out / f"metrics_{label}.json"
    metrics_path.write_text(
        json.dumps(result["metrics"], indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    aio.write_manifest(out / f"manifest_{label}.json", cfg,
                       [traj_path, metrics_path],
                       extra={"checkpoint": checkpoint})
    aio.emit_plot_scripts(out)
    print(json.dumps(result["metrics"], indent=2, sort_keys=True))
    return result["metrics"]


def run_sweep(cfg: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for c in cfg["sweep_c"]:
        sub = dict(cfg)
        sub["obstacle_c"] = float(c)
        sub["scenario"] = 4
        c_dir = out / f"c_{c:g}"
        run_train(sub, c_dir)
        clearances = []
        for seed in cfg["seeds"]:
            ckpt = c_dir / f"seed_{seed}" / "ckpt_final.bin"
            metrics = run_eval(sub, c_dir / f"eval_seed_{seed}", str(ckpt))
            clearances.append(metrics["min_clearance"])
        entries.append({"c": float(c), "clearances": clearances,
                        "median_clearance": float(np.median(clearances))})
        print(f"c={c:g}: median clearance {entries[-1]['median_clearance']:.3f}")
    summary = out / "sweep_summary.csv"
    aio.write_csv(summary, ["c", "median_clearance"],
                  [[e["c"], e["median_clearance"]] for e in entries])
    (out / "sweep_manifest.json").write_text(
        json.dumps({"entries": entries, "config_hash": aio.config_hash(cfg)},
                   indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_verify(cfg: dict) -> int:
    """Executable checks of the convergence/geometry claims; 0 on success."""
    failures = 0

    def report(name: str, ok: bool, detail: str) -> None:
        nonlocal failures
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        failures += 0 if ok else 1

    rng = np.random.default_rng(2024)
    gamma = 0.9
    worst_ratio = 0.0
    for _ in range(100):
        mdp = random_mdp(rng, rng.integers(2, 11), rng.integers(2, 5),
                         gamma=gamma)
        policy = tabular_policy_improvement(
            mdp, rng.standard_normal((mdp.n_states, mdp.n_actions)))
        q1 = rng.standard_normal((mdp.n_states, mdp.n_actions))
        q2 = rng.standard_normal((mdp.n_states, mdp.n_actions))
        num = np.max(np.abs(tabular_soft_backup(mdp, q1, policy)
                            - tabular_soft_backup(mdp, q2, policy)))
        den = np.max(np.abs(q1 - q2))
        worst_ratio = max(worst_ratio, num / den)
    report("soft backup is a gamma-contraction", worst_ratio <= gamma + 1e-12,
           f"max ratio {worst_ratio:.6f} vs gamma {gamma}")

    worst_gap = 0.0
    for _ in range(100):
        mdp = random_mdp(rng, rng.integers(2, 11), rng.integers(2, 5),
                         gamma=gamma)
        policy = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
        q_old = soft_policy_evaluation(mdp, policy)
        q_new = soft_policy_evaluation(mdp,
                                       tabular_policy_improvement(mdp, q_old))
        worst_gap = max(worst_gap, float(np.max(q_old - q_new)))
    report("policy improvement is monotone", worst_gap <= 1e-9,
           f"max decrease {worst_gap:.3e}")

    worst_geo = 0.0
    for _ in range(10_000):
        p_a = rng.uniform(-20, 20, 2)
        v_a = rng.uniform(-2, 2, 2)
        ob = Obstacle(p=rng.uniform(-20, 20, 2), v=rng.uniform(-1, 1, 2),
                      d_o=1.0, d_s=2.5)
        d_it, closing = closest_approach(p_a, v_a, ob)
        if not closing:
            continue
        worst_geo = max(worst_geo,
                        abs(d_it - brute_force_closest(p_a, v_a, ob)))
    report("closest approach matches brute force", worst_geo <= 1e-6,
           f"max |diff| {worst_geo:.3e}")

    x0 = rng.standard_normal(6)

    def quad(x):
        return float(0.5 * np.sum(np.arange(1.0, 7.0) * x * x))

    g_true = np.arange(1.0, 7.0) * x0
    g_fd = fd_gradient(quad, x0, h=1e-5)
    report("finite differences exact on quadratic",
           np.max(np.abs(g_fd - g_true)) < 1e-8,
           f"max err {np.max(np.abs(g_fd - g_true)):.3e}")

    return 1 if failures else 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="asvrl",
        description="Model-reference RL tracking control for a 3-DOF surface "
                    "vehicle: training, evaluation, verification, c-sweep.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", type=int, choices=(1, 2, 3, 4))
        p.add_argument("--seed", type=int, action="append", default=[])
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--desk-scale", action="store_true")

    p_train = sub.add_parser("train", help="train one or more seeds")
    common(p_train)
    p_train.add_argument("--no-baseline", action="store_true",
                         help="plain-RL ablation: baseline neither applied "
                              "nor observed, no warm start")
    p_train.add_argument("--checkpoint", type=str, default=None,
                         help="resume training from a saved checkpoint")

    p_eval = sub.add_parser("eval", help="deterministic evaluation rollout")
    common(p_eval)
    p_eval.add_argument("--checkpoint", type=str, default=None,
                        help="trained checkpoint; omit for baseline-only")
    p_eval.add_argument("--no-baseline", action="store_true")

    p_verify = sub.add_parser("verify", help="run the analysis oracles")
    common(p_verify)

    p_sweep = sub.add_parser("sweep", help="train/eval over sweep_c values")
    common(p_sweep)

    args = parser.parse_args(argv)
    try:
        cfg = _resolved_config(args)
        if args.command == "train":
            if not cfg["seeds"]:
                raise ConfigError("train requires at least one seed")
            run_train(cfg, _out_dir(args, cfg, f"scenario{cfg['scenario']}"),
                      resume_from=args.checkpoint)
            return 0
        if args.command == "eval":
            run_eval(cfg, _out_dir(args, cfg, f"eval{cfg['scenario']}"),
                     args.checkpoint)
            return 0
        if args.command == "verify":
            return run_verify(cfg)
        if args.command == "sweep":
            run_sweep(cfg, _out_dir(args, cfg, "sweep"))
            return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
