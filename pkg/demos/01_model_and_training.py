"""Train the lane-change classifier on synthetic highway data.

Walks through the full data path: simulate traffic, extract balanced
labeled observation windows, fit the layer-normalized LSTM, and save the
model container that every other demo consumes.
"""

import pathlib

from xlane.model import save_model
from xlane.training import Hyperparams, train
from xlane.twin import SimConfig, generate_dataset
from xlane.twin.dataset import save_dataset

OUT = pathlib.Path(__file__).parent / "_artifacts"
OUT.mkdir(exist_ok=True)

# a 4-lane kilometre of highway at 2 Hz; lane changes are mostly context
# driven (overtaking pressure, keep-right returns)
cfg = SimConfig(seed=7, spawn_rate=0.6)
print("simulating and labeling windows ...")
data = generate_dataset(cfg, n_per_class=250, sim_seconds=400.0)
print(f"  {len(data)} windows, class counts {data.class_counts()}")
save_dataset(data, OUT / "demo_data", seed=7)

print("training (this is the small demo configuration) ...")
result = train(data, Hyperparams(epochs=48, hidden=64, seed=0,
                                 verbose=True, log_every=8))
print(f"train accuracy      {result.train_accuracy:.3f}")
print(f"validation accuracy {result.val_accuracy:.3f}")

model_path = OUT / "demo_model.xlm"
save_model(result.params, model_path)
print(f"saved model to {model_path}")
