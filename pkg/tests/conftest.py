"""Shared training rigs.

The overfit rigs are expensive (minutes), so they are session fixtures built
once and asserted on from several files.
"""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rigs import path_rig_scene, size_rig_scene

from auto4d.training import TrainConfig, train_path_branch, train_size_branch


@pytest.fixture(scope="session")
def size_overfit():
    scene, inits = size_rig_scene()
    cfg = TrainConfig(seed=0, lr=3e-3, steps=500, batch=1, frames_per_traj=4)
    model, losses = train_size_branch([(scene, inits)], cfg)
    return {"scene": scene, "inits": inits, "cfg": cfg, "model": model, "losses": losses}


@pytest.fixture(scope="session")
def bench():
    """Reference dataset + trained branches; built once, read-only for tests."""
    from auto4d import benchmark

    train_pairs = benchmark.build_pairs(benchmark.TRAIN_SEEDS)
    test_pairs = benchmark.build_pairs(benchmark.TEST_SEEDS)
    size_model, path_model, losses = benchmark.train_reference(train_pairs)
    return {
        "test_pairs": test_pairs,
        "size_model": size_model,
        "path_model": path_model,
        "losses": losses,
    }


@pytest.fixture(scope="session")
def path_overfit(tmp_path_factory):
    scene, inits_clean, inits_noisy = path_rig_scene()
    # the size prerequisite sees clean and blurred rasters of the same
    # objects so its predictions hold up on the pose-noised inputs
    size_cfg = TrainConfig(seed=0, lr=3e-3, steps=700, batch=1, frames_per_traj=4)
    size_model, _ = train_size_branch(
        [(scene, inits_clean), (scene, inits_noisy)], size_cfg
    )
    ckpt_dir = tmp_path_factory.mktemp("path_overfit")
    before = ckpt_dir / "size_before.a4dp"
    size_model.save(before)
    cfg = TrainConfig(seed=0, lr=3e-3, steps=500, batch=1, window=10)
    model, losses = train_path_branch([(scene, inits_noisy)], cfg, size_model)
    after = ckpt_dir / "size_after.a4dp"
    size_model.save(after)
    return {
        "scene": scene,
        "inits": inits_noisy,
        "cfg": cfg,
        "size_model": size_model,
        "model": model,
        "losses": losses,
        "size_ckpt_before": before.read_bytes(),
        "size_ckpt_after": after.read_bytes(),
    }
