"""Perturbation-test faithfulness curves and the LRP/IG timing contest.

Occludes the most relevant remaining super-feature step by step and tracks
accuracy; a faithful attribution collapses accuracy faster than random
occlusion. Writes curves.png next to the other artifacts.
"""

import pathlib

import numpy as np

from xlane.faithfulness import (PerturbConfig, run_methods, save_curves,
                                timing_benchmark)
from xlane.ig import IgConfig
from xlane.model import load_model
from xlane.twin.dataset import load_dataset

ART = pathlib.Path(__file__).parent / "_artifacts"
params = load_model(ART / "demo_model.xlm")
data, _ = load_dataset(ART / "demo_data")

print(f"perturbation test over {len(data)} instances "
      "(IG kept at 20 steps to keep the demo quick) ...")
cfg = PerturbConfig(seed=0, ig=IgConfig(steps=20))
curves = run_methods(data, params,
                     ("lrp-omega", "lrp-identity", "ig", "random"), cfg)
save_curves(curves, ART / "curves.csv")

print(f"{'method':14s} {'steps 1-5':>9s}  curve")
for method, curve in curves.items():
    head = " ".join(f"{a:.2f}" for a in curve.accuracy[:8])
    print(f"{method:14s} {curve.mean_over(range(1, 6)):9.3f}  {head} ...")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for method, curve in curves.items():
        ax.plot(range(len(curve.accuracy)), curve.accuracy, marker="o",
                markersize=3, label=method)
    ax.set_xlabel("occlusion step")
    ax.set_ylabel("accuracy on original labels")
    ax.set_title(f"Perturbation test, n={next(iter(curves.values())).n}")
    ax.axhline(1 / 3, color="grey", linestyle=":", linewidth=1)
    ax.legend()
    fig.tight_layout()
    fig.savefig(ART / "curves.png", dpi=120)
    print(f"wrote {ART / 'curves.png'}")
except ImportError:
    print("matplotlib not available; skipped the plot")

print("\ntiming: one explanation per instance, sequential ...")
report = timing_benchmark(data, params, n_instances=300, ig_steps=50)
print(f"LRP  mean {report.lrp_mean_s * 1e3:7.2f} ms/instance")
print(f"IG   mean {report.ig_mean_s * 1e3:7.2f} ms/instance ({report.ig_steps} steps)")
print(f"LRP is {report.ratio:.1f}x faster")
