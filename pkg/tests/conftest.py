import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

CACHE = Path(__file__).parent / "_cache"

TRAIN_SEED = 7
EVAL_SEED = 8
N_PER_CLASS = 700          # 2100 balanced windows
TRAIN_EPOCHS = 64
HIDDEN = 64


def _dataset(seed):
    from xlane.twin.dataset import generate_dataset, load_dataset, save_dataset
    from xlane.twin.sim import SimConfig

    path = CACHE / f"dataset_s{seed}_n{N_PER_CLASS}"
    if (path / "manifest.json").exists():
        data, _ = load_dataset(path)
        return data
    data = generate_dataset(SimConfig(seed=seed, spawn_rate=0.6),
                            n_per_class=N_PER_CLASS, sim_seconds=600.0)
    CACHE.mkdir(exist_ok=True)
    save_dataset(data, path, seed=seed)
    return data


@pytest.fixture(scope="session")
def train_data():
    return _dataset(TRAIN_SEED)


@pytest.fixture(scope="session")
def eval_data():
    return _dataset(EVAL_SEED)


@pytest.fixture(scope="session")
def trained(train_data):
    """(params, val_accuracy) of the desk-scale model; cached on disk."""
    import json

    from xlane.model import load_model, save_model
    from xlane.training import Hyperparams, train

    model_path = CACHE / f"model_s{TRAIN_SEED}_e{TRAIN_EPOCHS}_h{HIDDEN}.xlm"
    meta_path = CACHE / f"model_s{TRAIN_SEED}_e{TRAIN_EPOCHS}_h{HIDDEN}.json"
    if model_path.exists() and meta_path.exists():
        meta = json.loads(meta_path.read_text())
        return load_model(model_path), meta["val_accuracy"]
    result = train(train_data, Hyperparams(epochs=TRAIN_EPOCHS, hidden=HIDDEN,
                                           seed=0, log_every=1000))
    CACHE.mkdir(exist_ok=True)
    save_model(result.params, model_path)
    meta_path.write_text(json.dumps({"val_accuracy": result.val_accuracy}))
    return result.params, result.val_accuracy
