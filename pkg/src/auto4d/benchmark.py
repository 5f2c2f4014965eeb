"""Fixed-seed reference dataset and training recipe for the reporting gate.

100 scenes split 60 train / 10 val / 30 test by disjoint seed ranges.  Scene
content is a pure function of (seed, SIM, NOISE), so stores built from these
constants reproduce byte-for-byte and the whole build fits a laptop-CPU
budget of roughly twenty minutes.
"""

import numpy as np

from auto4d.scene_store import save_scene
from auto4d.simulation import NoiseConfig, SimConfig, make_initial_labels, simulate_scene
from auto4d.training import TrainConfig, train_path_branch, train_size_branch

SIM = SimConfig(
    n_frames=24,
    n_vehicles_min=4,
    n_vehicles_max=7,
    angular_resolution=2 * np.pi / 1024,
    max_range=60.0,
)

# pose error grows with range so the refinement story differs by motion
# class: parked vehicles hug the ego corridor, movers use the outer lanes.
# the shrink error rides mostly on a per-object component; per-frame
# averaging alone cannot remove it, which is what the learned branch is for.
# corner bias above the 0.85 default keeps near-static anchors clean enough
# that pose smoothing pays off mainly on the movers
NOISE = NoiseConfig(
    pos_sigma_base=0.01,
    pos_sigma_range_coef=0.006,
    theta_sigma=0.01,
    size_shrink_mean=0.955,
    size_shrink_sigma=1.6,
    size_shrink_track_sigma=1.0,
    corner_bias_strength=0.93,
)

TRAIN_SEEDS = tuple(range(1000, 1060))
VAL_SEEDS = tuple(range(2000, 2010))
TEST_SEEDS = tuple(range(3000, 3030))

SIZE_CFG = TrainConfig(seed=0, lr=3e-3, steps=1200, batch=2,
                       frames_per_traj=6, world_static=True)
PATH_CFG = TrainConfig(seed=0, lr=3e-3, steps=600, batch=1, window=10)
WORLD_STATIC = True


def build_pairs(seeds, sim=SIM, noise=NOISE):
    """In-memory (scene, init labels) for each seed; scene id == seed."""
    out = []
    for s in seeds:
        scene = simulate_scene(sim, seed=s)
        out.append((scene, make_initial_labels(scene, noise, seed=s)))
    return out


def build_store(root, seeds, sim=SIM, noise=NOISE):
    """Write one scene directory per seed under root; returns the dirs."""
    dirs = []
    for s in seeds:
        scene = simulate_scene(sim, seed=s)
        inits = make_initial_labels(scene, noise, seed=s)
        dirs.append(save_scene(root, str(s), scene, init=inits, noise=noise))
    return dirs


def train_reference(pairs, size_cfg=SIZE_CFG, path_cfg=PATH_CFG):
    """Sequential two-branch training on the given pairs.

    Returns (size_model, path_model, loss curves).
    """
    size_model, size_losses = train_size_branch(pairs, size_cfg)
    path_model, path_losses = train_path_branch(pairs, path_cfg, size_model)
    return size_model, path_model, {"size": size_losses, "path": path_losses}
