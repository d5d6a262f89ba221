"""Explain single predictions: relevance maps, sink accounting, rule variants.

Requires demos/01_model_and_training.py to have run (it leaves a model and
a dataset under demos/_artifacts).
"""

import pathlib

import numpy as np

from xlane.explanation import aggregate_super, aggregate_time, top_k
from xlane.ig import IgConfig, completeness_gap, integrated_gradients
from xlane.lrp import LrpConfig, explain
from xlane.model import forward, load_model
from xlane.twin.dataset import load_dataset

ART = pathlib.Path(__file__).parent / "_artifacts"
params = load_model(ART / "demo_model.xlm")
data, _ = load_dataset(ART / "demo_data")

window = data.window(0)
out, trace = forward(window, params)
print(f"window {window.window_id}: predicted {out.predicted_class} "
      f"p={np.round(out.probabilities, 3).tolist()}")

print("\n--- relevance via the mean-aware normalization rule ---")
rmap, ledger = explain(window, params, trace, out.predicted_class, LrpConfig())
print(f"input relevance total {rmap.total:+.4f}")
for site, value in rmap.sinks.items():
    print(f"  sink {site:22s} {value:+.4f}")
f_c = out.logits[out.predicted_index]
print(f"identity check: input + sinks = {rmap.total + sum(rmap.sinks.values()):+.6f}"
      f" vs logit {f_c:+.6f}")

print("\n--- the three most relevant super-features ---")
expl = aggregate_super(aggregate_time(rmap.values))
for r in top_k(expl, k=3):
    print(f"  {r.slot_name:12s} {r.super_feature:8s} "
          f"{r.relevance:+.4f} [{r.bucket}]")

print("\n--- rule comparison on the same trace ---")
for label, cfg in [
        ("omega (full decomposition)", LrpConfig()),
        ("omega (literal formula)", LrpConfig(omega_variant="literal")),
        ("identity baseline", LrpConfig(ln_rule="identity"))]:
    r, _ = explain(window, params, trace, out.predicted_class, cfg)
    top = top_k(aggregate_super(aggregate_time(r.values)), k=1)[0]
    print(f"  {label:28s} total {r.total:+9.3f}  "
          f"top: {top.slot_name}/{top.super_feature}")

print("\n--- integrated gradients on the same window ---")
ig_map = integrated_gradients(window, params, out.predicted_class,
                              IgConfig(steps=50))
gap = completeness_gap(window, params, out.predicted_class, IgConfig(steps=200))
top = top_k(aggregate_super(aggregate_time(ig_map.values)), k=1)[0]
print(f"  attribution total {ig_map.values.sum():+.4f}, "
      f"completeness gap at 200 steps {gap:.2e}")
print(f"  top: {top.slot_name}/{top.super_feature} {top.relevance:+.4f}")
