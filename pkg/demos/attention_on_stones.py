"""Where does an untrained attention encoder look on stepping stones?

Builds the desk-scale policy, walks a single environment on grid_stones with
a random initialisation and writes head-averaged attention frames. Train a
checkpoint with ``attnloco train configs/desk.yaml`` and use ``attnloco attn``
for the same export from a trained policy.
"""

import os
from pathlib import Path

import numpy as np

from attnloco.config import load_config
from attnloco.evaluation import attention_frames, export_attention
from attnloco.sim.dynamics import RandomizationConfig
from attnloco.sim.env import CommandConfig, EnvConfig, LeggedEnv

root = Path(__file__).resolve().parents[1]
cfg = load_config(root / "configs" / "desk.yaml")
policy = cfg.build_policy(np.random.default_rng(0))
enc = cfg.encoder_config()
env_cfg = EnvConfig(num_envs=1, families=("grid_stones",), fixed_level=5, random_heading=False,
                    map_length=enc.map_length, map_width=enc.map_width,
                    commands=CommandConfig(lin_x=(0.6, 0.6), lin_y=(0, 0), yaw_rate=(0, 0)))
env = LeggedEnv(env_cfg, 0, stage=2, rand=RandomizationConfig.none())
frames = attention_frames(policy, env, 20, per_head=True)

out = Path(os.environ.get("ATTNLOCO_OUTPUT_DIR", "demos_out")) / "attention"
path = export_attention(frames, out)
for fr in frames[::5]:
    w = fr.weights
    peak = tuple(int(i) for i in np.unravel_index(np.argmax(w), w.shape))
    entropy = -(w * np.log(w + 1e-12)).sum() / np.log(w.size)
    print(f"step {fr.step:3d}: peak at map cell {peak}, weight {w.max():.3f}, normalised entropy {entropy:.3f}")
print(f"frames written to {path.parent}")
