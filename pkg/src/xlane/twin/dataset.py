"""Labeled dataset generation from the simulation."""

from __future__ import annotations

import json
import uuid
import warnings
from pathlib import Path

import numpy as np

from ..errors import ValidationError, WindowNotReady
from ..features import CLASS_NAMES, PREDICTION_HORIZON, WindowDataset
from .neighbors import build_window
from .sim import Sim, SimConfig

DATASET_VERSION = 1


def label_window(frames_from_t, q_raw_id: int, t: float):
    """Label name from the query's lane indices over (t, t+2.5s].

    `frames_from_t` must start at (or just before) the frame at time t: the
    lane there is the reference, and the first lane-index change within the
    horizon wins (higher index = left). Returns None when the future does not
    cover the horizon or the vehicle disappears (skip the instance).
    """
    horizon_end = t + PREDICTION_HORIZON
    ref_lane = None
    covered = False
    for f in frames_from_t:
        if f.t < t - 1e-9 or f.t > horizon_end + 1e-9:
            continue
        try:
            v = f.vehicle(q_raw_id)
        except KeyError:
            return None
        if ref_lane is None:
            ref_lane = v.lane
        elif v.lane != ref_lane:
            return "left" if v.lane > ref_lane else "right"
        if f.t >= horizon_end - 0.26:
            covered = True
    if ref_lane is None or not covered:
        return None
    return "keep"


def generate_dataset(cfg: SimConfig, n_per_class: int,
                     sim_seconds: float = 400.0,
                     max_extensions: int = 6) -> WindowDataset:
    """Simulate until every class has n_per_class labeled windows, then
    sample a balanced, shuffled dataset. Deterministic under cfg.seed."""
    sim = Sim(cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    dt = 1.0 / cfg.frame_rate
    frames = []
    buckets = {name: [] for name in CLASS_NAMES}
    horizon_frames = int(round(PREDICTION_HORIZON * cfg.frame_rate))

    extensions = 0
    scanned = 0
    while True:
        n_steps = int(round(sim_seconds * cfg.frame_rate))
        for _ in range(n_steps):
            frames.append(sim.frame())
            sim.step(dt)
        lo = max(scanned, 3)
        hi = len(frames) - horizon_frames
        for i in range(lo, hi):
            t = frames[i].t
            for v in frames[i].vehicles:
                label = label_window(frames[i:i + 1 + horizon_frames],
                                     v.raw_id, t)
                if label is None:
                    continue
                try:
                    w = build_window(frames[max(0, i - 4):i + 1], v.raw_id, t)
                except WindowNotReady:
                    continue
                buckets[label].append(w)
        scanned = hi
        counts = {k: len(v) for k, v in buckets.items()}
        if all(c >= n_per_class for c in counts.values()):
            break
        extensions += 1
        if extensions > max_extensions:
            raise ValidationError(
                f"simulation produced too few lane changes: {counts} "
                f"(need {n_per_class} per class)")
        warnings.warn(f"extending simulation: class counts so far {counts}")

    chosen = []
    for name in CLASS_NAMES:
        idx = rng.choice(len(buckets[name]), size=n_per_class, replace=False)
        chosen.extend((buckets[name][j], CLASS_NAMES.index(name))
                      for j in sorted(idx))
    order = rng.permutation(len(chosen))
    windows = np.stack([chosen[i][0].frames for i in order])
    masks = np.stack([chosen[i][0].mask for i in order])
    labels = np.array([chosen[i][1] for i in order])
    stamps = np.stack([chosen[i][0].timestamps for i in order])
    ids = [chosen[i][0].window_id or str(uuid.UUID(bytes=rng.bytes(16), version=4))
           for i in order]
    return WindowDataset(windows=windows, masks=masks, labels=labels,
                         timestamps=stamps, window_ids=ids)


def save_dataset(data: WindowDataset, out_dir, seed: int = 0,
                 split=(0.7, 0.15, 0.15)) -> dict:
    """Columnar layout: windows.npz plus a JSON manifest with the split."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.savez(out / "windows.npz", windows=data.windows, masks=data.masks,
             labels=data.labels, timestamps=data.timestamps)
    rng = np.random.default_rng(seed)
    n = len(data)
    order = rng.permutation(n)
    n_train = int(round(split[0] * n))
    n_val = int(round(split[1] * n))
    manifest = {
        "version": DATASET_VERSION,
        "n": n,
        "class_names": list(CLASS_NAMES),
        "class_counts": data.class_counts(),
        "window_ids": data.window_ids,
        "split": {
            "train": order[:n_train].tolist(),
            "val": order[n_train:n_train + n_val].tolist(),
            "test": order[n_train + n_val:].tolist(),
        },
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f)
    return manifest


def load_dataset(in_dir):
    """Returns (WindowDataset, manifest dict)."""
    path = Path(in_dir)
    with open(path / "manifest.json") as f:
        manifest = json.load(f)
    if manifest.get("version") != DATASET_VERSION:
        raise ValidationError(
            f"unsupported dataset version {manifest.get('version')}")
    arrays = np.load(path / "windows.npz")
    data = WindowDataset(windows=arrays["windows"], masks=arrays["masks"],
                         labels=arrays["labels"],
                         timestamps=arrays["timestamps"],
                         window_ids=manifest.get("window_ids", []))
    return data, manifest
