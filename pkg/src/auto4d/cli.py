"""Command line front door.

Subcommands mirror the labeling workflow: simulate a scene store, re-track
raw detections, refine sizes then paths, train the two branches, score
variants into a report, and serve the annotator backend.
"""

import json
import sys
from pathlib import Path

import click

from auto4d import pipeline, tracking
from auto4d.evaluation import breakdown_static_moving, eval_labels
from auto4d.path_branch import PathModel, WINDOW_FRAMES
from auto4d.scene_store import load_scene, save_scene, scene_ids
from auto4d.simulation import NoiseConfig, SimConfig, make_initial_labels, simulate_scene
from auto4d.size_branch import SizeModel
from auto4d.training import TrainConfig, train_path_branch, train_size_branch
from auto4d.trajectory import load_trajectories, save_trajectories


def _load_json(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _parse_ids(spec):
    """Half-open integer range "a:b" or comma list "a,b,c"."""
    if ":" in spec:
        a, b = spec.split(":", 1)
        return [str(k) for k in range(int(a), int(b))]
    return [s.strip() for s in spec.split(",") if s.strip()]


def _store_dirs(store, spec):
    ids = _parse_ids(spec) if spec else scene_ids(store)
    if not ids:
        raise click.ClickException(f"no scenes selected under {store}")
    dirs = [Path(store) / f"scene_{i}" for i in ids]
    missing = [str(d) for d in dirs if not d.is_dir()]
    if missing:
        raise click.ClickException("missing scene dirs: " + ", ".join(missing))
    return dirs


def _size_model(ckpt):
    model = SizeModel()
    model.load(ckpt)
    return model


def _path_model(ckpt, window):
    model = PathModel(window=window)
    model.load(ckpt)
    return model


@click.group()
def main():
    """Offline 4D auto-labeling workbench."""


@main.command()
@click.option("--out", required=True, type=click.Path(), help="scene store root")
@click.option("--seeds", required=True, help="half-open range a:b or comma list")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help='JSON with optional "sim" and "noise" sections')
def simulate(out, seeds, config_path):
    """Generate scenes plus noisy initial labels into a store."""
    cfg = _load_json(config_path)
    sim = SimConfig.from_obj(cfg["sim"]) if cfg.get("sim") else SimConfig()
    noise = NoiseConfig.from_obj(cfg["noise"]) if cfg.get("noise") else NoiseConfig()
    for sid in _parse_ids(seeds):
        seed = int(sid)
        scene = simulate_scene(sim, seed=seed)
        init = make_initial_labels(scene, noise, seed=seed)
        path = save_scene(out, seed, scene, init=init, noise=noise)
        click.echo(str(path))


@main.command()
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True))
@click.option("--gate", default=2.0, show_default=True, help="association gate, meters")
@click.option("--out", "out_path", type=click.Path(), default=None)
def track(scene_dir, gate, out_path):
    """Re-associate stored detections frame by frame with the distance tracker."""
    scene, inits = load_scene(scene_dir)
    if inits is None:
        raise click.ClickException("scene has no initial labels")
    frames = [[] for _ in scene.sweeps]
    for tr in inits:
        for det in tr.detections:
            frames[det.frame_idx].append(det)
    tracks = tracking.track(frames, gate_distance=gate)
    out_path = out_path or str(Path(scene_dir) / "tracked.json")
    save_trajectories(out_path, tracks)
    click.echo(f"{len(tracks)} trajectories -> {out_path}")


@main.command("refine-size")
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True))
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--align", type=click.Choice(["corner", "center"]), default="corner",
              show_default=True)
@click.option("--world-static", type=click.Choice(["on", "off"]), default="off",
              show_default=True, help="aggregate static tracks in the world frame")
@click.option("--labels", "labels_path", type=click.Path(exists=True), default=None,
              help="trajectory JSON to refine; default init labels")
@click.option("--out", "out_path", type=click.Path(), default=None)
def refine_size(scene_dir, ckpt, align, world_static, labels_path, out_path):
    """Predict one size per trajectory and rewrite its boxes."""
    scene, inits = load_scene(scene_dir)
    trajs = load_trajectories(labels_path) if labels_path else inits
    if trajs is None:
        raise click.ClickException("no labels to refine")
    refined = pipeline.refine_scene_size(
        scene, trajs, _size_model(ckpt), align, world_static == "on")
    out_path = out_path or str(Path(scene_dir) / "refined_size.json")
    save_trajectories(out_path, refined)
    click.echo(out_path)


@main.command("refine-path")
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True))
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--window", default=WINDOW_FRAMES, show_default=True)
@click.option("--stride", default=5, show_default=True)
@click.option("--literal-eq7", is_flag=True,
              help="world-coordinate multiplicative offsets instead of box-normalized")
@click.option("--labels", "labels_path", type=click.Path(exists=True), default=None,
              help="trajectory JSON to refine; default refined_size.json, else init")
@click.option("--out", "out_path", type=click.Path(), default=None)
def refine_path(scene_dir, ckpt, window, stride, literal_eq7, labels_path, out_path):
    """Smooth each trajectory's motion with the windowed path branch."""
    scene, inits = load_scene(scene_dir)
    if labels_path is None:
        default = Path(scene_dir) / "refined_size.json"
        labels_path = str(default) if default.exists() else None
    trajs = load_trajectories(labels_path) if labels_path else inits
    if trajs is None:
        raise click.ClickException("no labels to refine")
    refined = pipeline.refine_scene_path(
        scene, trajs, _path_model(ckpt, window),
        window=window, stride=stride, literal_eq7=literal_eq7)
    out_path = out_path or str(Path(scene_dir) / "refined_path.json")
    save_trajectories(out_path, refined)
    click.echo(out_path)


@main.command()
@click.option("--store", required=True, type=click.Path(exists=True))
@click.option("--branch", type=click.Choice(["size", "path"]), required=True)
@click.option("--out", "out_ckpt", required=True, type=click.Path())
@click.option("--size-ckpt", type=click.Path(exists=True), default=None,
              help="frozen size checkpoint (required for --branch path)")
@click.option("--scenes", "scenes_spec", default=None,
              help="scene id range a:b or comma list; default all in store")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help='JSON with a "train" section of TrainConfig fields')
def train(store, branch, out_ckpt, size_ckpt, scenes_spec, config_path):
    """Train one branch on a scene store and write its checkpoint."""
    cfg = TrainConfig(**_load_json(config_path).get("train", {}))
    if not scenes_spec and cfg.train_scenes:
        scenes_spec = ",".join(str(s) for s in cfg.train_scenes)
    pairs = [load_scene(d) for d in _store_dirs(store, scenes_spec)]
    if branch == "size":
        model, losses = train_size_branch(pairs, cfg)
    else:
        if size_ckpt is None:
            raise click.ClickException("--branch path needs --size-ckpt")
        model, losses = train_path_branch(pairs, cfg, _size_model(size_ckpt))
    model.save(out_ckpt)
    click.echo(f"{branch}: {len(losses)} steps, loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    click.echo(out_ckpt)


@main.command("eval")
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", type=click.Path(exists=True), default=None,
              help="trajectory JSON to score; default init labels")
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_cmd(scene_dir, labels_path, out_path):
    """Score labels against the scene's ground truth."""
    scene, inits = load_scene(scene_dir)
    preds = load_trajectories(labels_path) if labels_path else inits
    if preds is None:
        raise click.ClickException("no labels to score")
    name = Path(labels_path).stem if labels_path else "init"
    table = eval_labels(preds, scene.gt_trajectories, name)
    static, moving = breakdown_static_moving(preds, scene.gt_trajectories)
    obj = {"table": table.to_obj(), "static": static.to_obj(), "moving": moving.to_obj()}
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(text + "\n")
    click.echo(text)


@main.command()
@click.option("--store", required=True, type=click.Path(exists=True))
@click.option("--scenes", "scenes_spec", default=None)
@click.option("--size-ckpt", type=click.Path(exists=True), default=None)
@click.option("--path-ckpt", type=click.Path(exists=True), default=None)
@click.option("--variants", default=",".join(pipeline.VARIANTS), show_default=True)
@click.option("--align", type=click.Choice(["corner", "center"]), default="corner")
@click.option("--world-static", type=click.Choice(["on", "off"]), default="off")
@click.option("--window", default=WINDOW_FRAMES, show_default=True)
@click.option("--stride", default=5, show_default=True)
@click.option("--literal-eq7", is_flag=True)
@click.option("--out-json", type=click.Path(), default=None)
@click.option("--out-md", type=click.Path(), default=None)
@click.option("--gate", is_flag=True, help="exit nonzero on acceptance-gate failures")
def report(store, scenes_spec, size_ckpt, path_ckpt, variants, align, world_static,
           window, stride, literal_eq7, out_json, out_md, gate):
    """Score every variant on the same scenes; write JSON/markdown reports."""
    dirs = _store_dirs(store, scenes_spec)
    smodel = _size_model(size_ckpt) if size_ckpt else None
    pmodel = _path_model(path_ckpt, window) if path_ckpt else None
    try:
        rep = pipeline.run_pipeline(
            dirs, smodel, pmodel,
            variants=tuple(v.strip() for v in variants.split(",") if v.strip()),
            align=align, world_static=world_static == "on",
            window=window, stride=stride, literal_eq7=literal_eq7)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    md = pipeline.render_markdown(rep)
    if out_json:
        Path(out_json).write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    if out_md:
        Path(out_md).write_text(md)
    click.echo(md)
    if gate:
        failures = pipeline.gate_failures(rep)
        for f in failures:
            click.echo(f"GATE FAIL: {f}", err=True)
        if failures:
            sys.exit(1)
        click.echo("gate: all checks passed", err=True)


@main.command()
@click.option("--port", default=8471, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--store", required=True, type=click.Path(exists=True))
@click.option("--size-ckpt", type=click.Path(exists=True), default=None)
@click.option("--path-ckpt", type=click.Path(exists=True), default=None)
@click.option("--window", default=WINDOW_FRAMES, show_default=True)
def serve(port, host, store, size_ckpt, path_ckpt, window):
    """Run the annotator backend over a scene store."""
    import uvicorn

    from auto4d.service import build_app

    app = build_app(store, size_ckpt=size_ckpt, path_ckpt=path_ckpt, window=window)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
