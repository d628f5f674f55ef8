"""Persistence: binary checkpoints, CSV emission, and run manifests.

Checkpoint layout (all little-endian): magic, format version, layer dimension
tables, feature-scale vector and action bounds, then row-major float64
matrices for the actor, both critics, both targets, the temperature, the
counters and the Adam accumulators.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from . import neural
from .sac import ActorPolicy, ObsScaler, SacConfig, Trainer, make_trainer

MAGIC = b"ASVRLCK1"
FORMAT_VERSION = 1


class CheckpointFormatError(RuntimeError):
    """Bad magic, version, or truncated data."""


class CheckpointShapeError(RuntimeError):
    """Stored matrix dimensions do not match the expected network."""


def _pack_dims(weights_dims: list[tuple[int, int]]) -> bytes:
    out = struct.pack("<I", len(weights_dims))
    for rows, cols in weights_dims:
        out += struct.pack("<II", rows, cols)
    return out


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise CheckpointFormatError("checkpoint truncated")
        chunk = self.data[self.off:self.off + n]
        self.off += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def array(self, shape: tuple[int, ...]) -> np.ndarray:
        n = int(np.prod(shape))
        raw = self.take(8 * n)
        return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()

    def dims(self) -> list[tuple[int, int]]:
        count = self.u32()
        return [(self.u32(), self.u32()) for _ in range(count)]


def _matrix_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def save_checkpoint(path: str | Path, trainer: Trainer) -> None:
    actor_dims = [(w.shape[0], w.shape[1]) for w in trainer.actor]
    critic_dims = [(w.shape[1], w.shape[2]) for w in trainer.critics]
    scale = trainer.scaler.as_vector()

    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", FORMAT_VERSION)
    blob += struct.pack("<I", trainer.scaler.k_max)
    blob += _pack_dims(actor_dims)
    blob += _pack_dims(critic_dims)
    blob += struct.pack("<I", scale.size) + _matrix_bytes(scale)
    blob += _matrix_bytes(trainer.tau_max)
    for w in trainer.actor:
        blob += _matrix_bytes(w)
    for j in range(2):
        for w in trainer.critics:
            blob += _matrix_bytes(w[j])
    for j in range(2):
        for w in trainer.targets:
            blob += _matrix_bytes(w[j])
    blob += struct.pack("<d", float(trainer.log_alpha))
    blob += struct.pack("<QQQ", trainer.total_env_steps,
                        trainer.total_updates, trainer.episodes_done)
    for state in (trainer.adam_actor, trainer.adam_critic,
                  trainer.adam_alpha):
        blob += struct.pack("<Q", state.step)
        for m in state.m:
            blob += _matrix_bytes(m)
        for v in state.v:
            blob += _matrix_bytes(v)
    Path(path).write_bytes(bytes(blob))


def _read_header(reader: _Reader):
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointFormatError("bad magic string")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"unsupported format version {version}")
    k_max = reader.u32()
    actor_dims = reader.dims()
    critic_dims = reader.dims()
    scale = reader.array((reader.u32(),))
    tau_max = reader.array((2,))
    return k_max, actor_dims, critic_dims, scale, tau_max


def load_policy(path: str | Path) -> ActorPolicy:
    """Actor-only load for evaluation; ignores critics and optimizer state."""
    reader = _Reader(Path(path).read_bytes())
    k_max, actor_dims, _, scale, tau_max = _read_header(reader)
    actor = [reader.array(d) for d in actor_dims]
    return ActorPolicy(actor=actor,
                       scaler=ObsScaler.from_vector(scale, k_max),
                       tau_max=tau_max)


def load_trainer(path: str | Path, config: SacConfig,
                 obs_dim: int | None = None) -> Trainer:
    """Full state load; raises if the file's shapes do not match config."""
    reader = _Reader(Path(path).read_bytes())
    k_max, actor_dims, critic_dims, scale, tau_max = _read_header(reader)
    trainer = make_trainer(config, obs_dim=obs_dim, k_max=k_max)

    def check(name: str, expected: tuple[int, int], got: tuple[int, int]):
        if expected != got:
            raise CheckpointShapeError(
                f"{name}: expected {expected}, checkpoint has {got}")

    if len(actor_dims) != len(trainer.actor) \
            or len(critic_dims) != len(trainer.critics):
        raise CheckpointShapeError("layer count mismatch")
    for i, w in enumerate(trainer.actor):
        check(f"actor layer {i}", w.shape, actor_dims[i])
    for i, w in enumerate(trainer.critics):
        check(f"critic layer {i}", w.shape[1:], critic_dims[i])

    trainer.scaler = ObsScaler.from_vector(scale, k_max)
    trainer.tau_max = tau_max
    trainer.actor = [reader.array(d) for d in actor_dims]
    c1 = [reader.array(d) for d in critic_dims]
    c2 = [reader.array(d) for d in critic_dims]
    trainer.critics = [np.stack([a, b]) for a, b in zip(c1, c2)]
    t1 = [reader.array(d) for d in critic_dims]
    t2 = [reader.array(d) for d in critic_dims]
    trainer.targets = [np.stack([a, b]) for a, b in zip(t1, t2)]
    trainer.log_alpha = np.array(reader.f64())
    trainer.total_env_steps = reader.u64()
    trainer.total_updates = reader.u64()
    trainer.episodes_done = reader.u64()
    for state, params in ((trainer.adam_actor, trainer.actor),
                          (trainer.adam_critic, trainer.critics),
                          (trainer.adam_alpha, [np.array(0.0)])):
        state.step = reader.u64()
        state.m = [reader.array(p.shape) for p in params]
        state.v = [reader.array(p.shape) for p in params]
    if reader.off != len(reader.data):
        raise CheckpointFormatError("trailing bytes in checkpoint")
    return trainer


def format_float(x: float) -> str:
    return f"{x:.17g}"


def write_csv(path: str | Path, header: list[str],
              rows: np.ndarray | list) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_float(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_learning_curve(path: str | Path, curve: list[dict]) -> None:
    header = ["episode", "return", "j_q", "j_pi", "alpha", "entropy"]
    rows = [[row[k] for k in header] for row in curve]
    write_csv(path, header, rows)


def trajectory_header(n_obstacles: int) -> list[str]:
    header = ["t",
              "x", "y", "psi", "u", "v", "r",
              "xm", "ym", "psim", "um", "vm", "rm",
              "xr", "yr", "psir", "ur", "vr", "rr",
              "ub_u", "ub_r", "ul_u", "ul_r", "r_track", "r_avoid"]
    for i in range(n_obstacles):
        header += [f"d_ao_{i}", f"d_it_{i}"]
    return header


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def write_manifest(path: str | Path, config: dict, outputs: list[Path],
                   extra: dict | None = None) -> None:
    root = Path(path).parent
    entry = {
        "config": config,
        "config_hash": config_hash(config),
        "outputs": {
            str(p.relative_to(root)): hashlib.sha256(
                p.read_bytes()).hexdigest()
            for p in outputs
        },
    }
    if extra:
        entry.update(extra)
    Path(path).write_text(json.dumps(entry, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


PLOT_CURVE_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Plot learning curves from learning_curve.csv files given as arguments.\"\"\"
import csv
import sys

import matplotlib.pyplot as plt


def load(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    eps = [float(r["episode"]) for r in rows]
    ret = [float(r["return"]) for r in rows]
    return eps, ret


fig, ax = plt.subplots()
for path in sys.argv[1:]:
    eps, ret = load(path)
    ax.plot(eps, ret, label=path)
ax.set_xlabel("episode")
ax.set_ylabel("return")
ax.legend()
fig.savefig("learning_curves.png", dpi=150)
print("wrote learning_curves.png")
"""

PLOT_TRAJECTORY_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Plot a trajectory CSV (plant, nominal, reference paths and obstacles).\"\"\"
import csv
import sys

import matplotlib.pyplot as plt


path = sys.argv[1]
with open(path) as fh:
    rows = list(csv.DictReader(fh))
cols = {k: [float(r[k]) for r in rows] for k in rows[0]}

fig, ax = plt.subplots(figsize=(6, 6))
ax.plot(cols["xr"], cols["yr"], "k--", label="reference")
ax.plot(cols["xm"], cols["ym"], "b-", label="nominal model")
ax.plot(cols["x"], cols["y"], "r-", label="plant")
ax.set_aspect("equal")
ax.set_xlabel("x [m]")
ax.set_ylabel("y [m]")
ax.legend()
fig.savefig("trajectory.png", dpi=150)
print("wrote trajectory.png")
"""


def emit_plot_scripts(out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    curve = out / "plot_learning_curve.py"
    traj = out / "plot_trajectory.py"
    curve.write_text(PLOT_CURVE_SCRIPT, encoding="utf-8")
    traj.write_text(PLOT_TRAJECTORY_SCRIPT, encoding="utf-8")
    return [curve, traj]
