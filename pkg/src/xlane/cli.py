"""Command-line entry points.

    xlane gen-data   synthesize a labeled window dataset from the twin
    xlane simulate   record a frame stream
    xlane train      fit a model on a dataset directory
    xlane predict    classify one window JSON file
    xlane explain    relevance map for one window (LRP or IG)
    xlane perturb    faithfulness curves for several methods
    xlane bench      LRP vs IG timing
    xlane serve      live prediction service over sim or replay
"""

import json

import click
import numpy as np

from .explanation import aggregate_super, aggregate_time, top_k
from .features import CLASS_NAMES, ObservationWindow
from .ig import IgConfig, integrated_gradients
from .lrp import LrpConfig, explain
from .model import forward, load_model, save_model
from .training import Hyperparams, train


def _load_sim_config(path):
    """SimConfig fields from a .toml or .json file."""
    if path is None:
        return {}
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        with open(path, "rb") as f:
            return tomllib.load(f)
    with open(path) as f:
        return json.load(f)


@click.group()
def main():
    """Explainable lane-change prediction toolkit."""


@main.command("gen-data")
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="SimConfig as TOML or JSON")
@click.option("--n-per-class", type=int, default=700)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def gen_data(config_path, n_per_class, seed, out_dir):
    """Generate a balanced labeled dataset."""
    from .twin.dataset import generate_dataset, save_dataset
    from .twin.sim import SimConfig

    kw = _load_sim_config(config_path)
    kw.setdefault("seed", seed)
    kw.setdefault("spawn_rate", 0.6)
    cfg = SimConfig(**kw)
    data = generate_dataset(cfg, n_per_class=n_per_class)
    manifest = save_dataset(data, out_dir, seed=seed)
    click.echo(f"wrote {manifest['n']} windows to {out_dir} "
               f"(counts {manifest['class_counts']})")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="SimConfig as TOML or JSON")
@click.option("--seconds", type=float, default=120.0)
@click.option("--seed", type=int, default=0)
@click.option("--record", "out_path", type=click.Path(), required=True)
def simulate(config_path, seconds, seed, out_path):
    """Run the twin and record its frame stream."""
    from .twin.replay import write_frames
    from .twin.sim import Sim, SimConfig

    kw = _load_sim_config(config_path)
    kw.setdefault("seed", seed)
    kw.setdefault("spawn_rate", 0.6)
    sim = Sim(SimConfig(**kw))
    n = write_frames(out_path, sim.frames(seconds))
    click.echo(f"recorded {n} frames to {out_path}")


@main.command("train")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--epochs", type=int, default=64)
@click.option("--hidden", type=int, default=64)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", type=click.Path(), required=True)
def train_cmd(data_dir, epochs, hidden, seed, out_path):
    """Train the classifier and write the model container."""
    from .twin.dataset import load_dataset

    data, _ = load_dataset(data_dir)
    hp = Hyperparams(epochs=epochs, hidden=hidden, seed=seed, verbose=True,
                     log_every=8)
    result = train(data, hp)
    save_model(result.params, out_path)
    click.echo(f"train accuracy {result.train_accuracy:.3f}  "
               f"validation accuracy {result.val_accuracy:.3f}")
    click.echo(f"wrote model to {out_path}")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--window", "window_path", type=click.Path(exists=True), required=True)
def predict(model_path, window_path):
    """Classify one window JSON file."""
    params = load_model(model_path)
    window = ObservationWindow.load_json(window_path)
    out, _ = forward(window, params)
    click.echo(json.dumps(out.to_dict()))


@main.command("explain")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--window", "window_path", type=click.Path(exists=True), required=True)
@click.option("--class", "class_name",
              type=click.Choice(list(CLASS_NAMES) + ["predicted"]),
              default="predicted")
@click.option("--method", type=click.Choice(["lrp", "ig"]), default="lrp")
@click.option("--ln-rule", type=click.Choice(["omega", "identity"]),
              default="omega")
@click.option("--omega-variant",
              type=click.Choice(["literal", "full-decomposition"]),
              default="full-decomposition")
@click.option("--epsilon", type=float, default=1e-3)
@click.option("--steps", type=int, default=50, help="IG path steps")
@click.option("--out", "out_path", type=click.Path(), default=None)
def explain_cmd(model_path, window_path, class_name, method, ln_rule,
                omega_variant, epsilon, steps, out_path):
    """Write relevance.json for one window."""
    params = load_model(model_path)
    window = ObservationWindow.load_json(window_path)
    out, trace = forward(window, params)
    target = out.predicted_class if class_name == "predicted" else class_name
    if method == "lrp":
        cfg = LrpConfig(epsilon=epsilon, ln_rule=ln_rule,
                        omega_variant=omega_variant)
        rmap, _ = explain(window, params, trace, target, cfg)
    else:
        rmap = integrated_gradients(window, params, target, IgConfig(steps=steps))
    payload = rmap.to_dict(window_id=window.window_id)
    expl = aggregate_super(aggregate_time(rmap.values))
    payload["top3"] = [r.to_dict() for r in top_k(expl, k=3)]
    text = json.dumps(payload)
    if out_path:
        with open(out_path, "w") as f:
            f.write(text)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text)


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--methods", default="lrp-omega,lrp-identity,ig,random")
@click.option("--fill", type=click.Choice(["sentinel", "zero", "mean"]),
              default="sentinel")
@click.option("--one-shot", is_flag=True,
              help="rank once instead of recomputing per step")
@click.option("--ig-steps", type=int, default=50)
@click.option("--seed", type=int, default=0)
@click.option("--n", "n_limit", type=int, default=None,
              help="cap the instance count")
@click.option("--out", "out_path", type=click.Path(), required=True)
def perturb(model_path, data_dir, methods, fill, one_shot, ig_steps, seed,
            n_limit, out_path):
    """Occlusion faithfulness curves; writes curves.csv."""
    from .faithfulness import PerturbConfig, run_methods, save_curves
    from .twin.dataset import load_dataset

    params = load_model(model_path)
    data, _ = load_dataset(data_dir)
    if n_limit:
        data = data.subset(np.arange(min(n_limit, len(data))))
    means = data.windows.reshape(-1, data.windows.shape[-1]).mean(axis=0)
    cfg = PerturbConfig(fill=fill, recompute=not one_shot, seed=seed,
                        ig=IgConfig(steps=ig_steps), dataset_means=means)
    curves = run_methods(data, params, [m.strip() for m in methods.split(",")],
                         cfg)
    save_curves(curves, out_path)
    for m, c in curves.items():
        click.echo(f"{m}: mean accuracy steps 1-5 = {c.mean_over(range(1, 6)):.3f} "
                   f"(n={c.n})")
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--ig-steps", type=int, default=50)
@click.option("--n", "n_instances", type=int, default=1000)
def bench(model_path, data_dir, ig_steps, n_instances):
    """Mean per-instance wall time: LRP vs IG."""
    from .faithfulness import timing_benchmark
    from .twin.dataset import load_dataset

    params = load_model(model_path)
    data, _ = load_dataset(data_dir)
    report = timing_benchmark(data, params, n_instances=n_instances,
                              ig_steps=ig_steps)
    click.echo(json.dumps({
        "lrp_mean_ms": report.lrp_mean_s * 1e3,
        "ig_mean_ms": report.ig_mean_s * 1e3,
        "ratio": report.ratio,
        "n": report.n,
        "ig_steps": report.ig_steps,
    }))


@main.command("serve")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--source", default="sim", help="'sim' or 'replay:<path>'")
@click.option("--workers", type=int, default=2)
@click.option("--port", type=int, default=8700)
@click.option("--host", default="127.0.0.1")
@click.option("--speed", type=float, default=1.0,
              help="replay speed multiplier (1.0 = realtime)")
def serve_cmd(model_path, source, workers, port, host, speed):
    """Run the live prediction service."""
    from .service.serve import serve

    click.echo(f"serving {source} on {host}:{port} with {workers} workers")
    serve(model_path, source, workers=workers, port=port, host=host,
          speed=speed)


if __name__ == "__main__":
    main()
