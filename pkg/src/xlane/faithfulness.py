"""Perturbation-based faithfulness evaluation and the LRP/IG timing contest.

The perturbation test keeps the correctly-classified instances of a dataset
and repeatedly occludes each instance's most relevant remaining super-feature
(relevance recomputed on the perturbed instance by default), tracking
accuracy against the original labels after every step. All methods share the
instance set, the occlusion fill, and the anchoring: fills are always
computed from the ORIGINAL window, so the fully-occluded endpoint at step 14
is identical for every method regardless of occlusion order.

Accuracy is not asserted to fall monotonically; curves may fluctuate.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .explanation import N_SUPER
from .features import (CRUISE_SPEED, MOVEMENT_FEATURES, N_FEATURES,
                       N_SLOTS, N_STEPS, NEUTRAL_LANE_COUNT, POSITION_FEATURES,
                       QUERY_SLOT, SENTINEL_LANE_OFFSET, SENTINEL_RANGE,
                       ObservationWindow, WindowDataset, slot_columns)
from .ig import IgConfig, integrated_gradients_batch, sentinel_window
from .lrp import LrpConfig, explain_batch
from .model import LnLstmParams, forward_batch
from .twin.neighbors import _SLOT_REGION

FILLS = ("sentinel", "zero", "mean")
SUPER_KINDS = ("movement", "position")
METHODS = ("lrp-omega", "lrp-identity", "ig", "random")


def _feature_set(super_feature: str):
    if super_feature == "movement":
        return MOVEMENT_FEATURES
    if super_feature == "position":
        return POSITION_FEATURES
    raise ValidationError(f"super_feature must be one of {SUPER_KINDS}")


def _sentinel_fill_block(anchor: np.ndarray, slot: int) -> np.ndarray:
    """(T, 7) occlusion fill for one slot.

    Fills are anchored at the NEUTRAL query profile (cruise motion, position
    frozen at the anchor's first frame), never at the live query features:
    mirroring live velocities into the phantoms would leak the occluded
    signal back into the window.
    """
    T = anchor.shape[0]
    q0 = anchor[0, slot_columns(QUERY_SLOT)]
    block = np.empty((T, N_FEATURES))
    block[:, 0] = CRUISE_SPEED
    block[:, 1] = 0.0
    block[:, 2] = 0.0
    block[:, 3] = q0[3]
    block[:, 4] = q0[4]
    block[:, 5] = NEUTRAL_LANE_COUNT
    block[:, 6] = NEUTRAL_LANE_COUNT
    if slot != QUERY_SLOT:
        lane_off, ahead = _SLOT_REGION[slot]
        block[:, 3] += SENTINEL_RANGE if ahead else -SENTINEL_RANGE
        block[:, 4] += lane_off * SENTINEL_LANE_OFFSET
    return block


def _fill_block(fill: str, anchor: np.ndarray, slot: int,
                dataset_means: np.ndarray = None) -> np.ndarray:
    T = anchor.shape[0]
    if fill == "sentinel":
        return _sentinel_fill_block(anchor, slot)
    if fill == "zero":
        return np.zeros((T, N_FEATURES))
    if fill == "mean":
        if dataset_means is None:
            raise ValidationError("mean fill requires dataset means")
        return np.tile(dataset_means[slot_columns(slot)], (T, 1))
    raise ValidationError(f"fill must be one of {FILLS}")


def occlude(window: ObservationWindow, vehicle_slot: int, super_feature: str,
            fill: str = "sentinel", anchor: ObservationWindow = None,
            dataset_means: np.ndarray = None) -> ObservationWindow:
    """Replace one vehicle's movement or position features in all frames.

    The fill is computed from `anchor` (default: the window itself); passing
    the original unoccluded window keeps occlusion sequences order-independent.
    """
    if not 0 <= vehicle_slot < N_SLOTS:
        raise ValidationError(f"vehicle slot must be 0..{N_SLOTS - 1}")
    feats = _feature_set(super_feature)
    anchor_frames = (anchor or window).frames
    block = _fill_block(fill, anchor_frames, vehicle_slot, dataset_means)
    frames = window.frames.copy()
    for f in feats:
        frames[:, vehicle_slot * N_FEATURES + f] = block[:, f]
    return ObservationWindow(frames=frames, mask=window.mask.copy(),
                             timestamps=window.timestamps.copy(),
                             window_id=window.window_id)


def occlude_all(window: ObservationWindow, fill: str = "sentinel",
                anchor: ObservationWindow = None,
                dataset_means: np.ndarray = None) -> ObservationWindow:
    """Occlude every one of the 14 super-features."""
    anchor = anchor or window
    out = window
    for slot in range(N_SLOTS):
        for kind in SUPER_KINDS:
            out = occlude(out, slot, kind, fill, anchor, dataset_means)
    return out


def _apply_fill_batch(x: np.ndarray, anchors: np.ndarray, rows: np.ndarray,
                      slot: int, kind: str, fill: str,
                      dataset_means: np.ndarray = None) -> None:
    """In-place occlusion of one (slot, kind) for the selected instances."""
    if rows.size == 0:
        return
    feats = _feature_set(kind)
    q = anchors[rows][:, :, slot_columns(QUERY_SLOT)]   # (n, T, 7)
    n, T = q.shape[0], q.shape[1]
    block = np.empty((n, T, N_FEATURES))
    if fill == "zero":
        block[:] = 0.0
    elif fill == "mean":
        if dataset_means is None:
            raise ValidationError("mean fill requires dataset means")
        block[:] = dataset_means[slot_columns(slot)][None, None, :]
    else:
        block[:, :, 0] = CRUISE_SPEED
        block[:, :, 1] = 0.0
        block[:, :, 2] = 0.0
        block[:, :, 3] = q[:, 0, 3][:, None]
        block[:, :, 4] = q[:, 0, 4][:, None]
        block[:, :, 5] = NEUTRAL_LANE_COUNT
        block[:, :, 6] = NEUTRAL_LANE_COUNT
        if slot != QUERY_SLOT:
            lane_off, ahead = _SLOT_REGION[slot]
            block[:, :, 3] += SENTINEL_RANGE if ahead else -SENTINEL_RANGE
            block[:, :, 4] += lane_off * SENTINEL_LANE_OFFSET
    for f in feats:
        x[rows, :, slot * N_FEATURES + f] = block[:, :, f]


@dataclass
class PerturbConfig:
    fill: str = "sentinel"
    recompute: bool = True
    seed: int = 0
    lrp: LrpConfig = field(default_factory=LrpConfig)
    ig: IgConfig = field(default_factory=IgConfig)
    dataset_means: np.ndarray = None

    def __post_init__(self):
        if self.fill not in FILLS:
            raise ValidationError(f"fill must be one of {FILLS}")


@dataclass
class PerturbationCurve:
    method: str
    accuracy: list          # length 15: step 0 (unperturbed) .. step 14
    n: int
    seed: int

    def mean_over(self, steps) -> float:
        return float(np.mean([self.accuracy[s] for s in steps]))


@dataclass
class BenchmarkReport:
    lrp_mean_s: float
    ig_mean_s: float
    n: int
    ig_steps: int

    @property
    def ratio(self) -> float:
        return self.ig_mean_s / self.lrp_mean_s


def _super_relevance_batched(x, classes, params, method, cfg: PerturbConfig):
    """(B, 14) absolute-ranking super-feature relevances for one method."""
    if method in ("lrp-omega", "lrp-identity"):
        lcfg = LrpConfig(epsilon=cfg.lrp.epsilon,
                         ln_rule="omega" if method == "lrp-omega" else "identity",
                         omega_variant=cfg.lrp.omega_variant)
        trace = forward_batch(x, params)
        rel, _ = explain_batch(trace, params, classes, lcfg)
    elif method == "ig":
        baselines = np.stack([
            sentinel_window(ObservationWindow(
                frames=x[i], mask=np.ones((N_STEPS, N_SLOTS), bool),
                timestamps=np.arange(N_STEPS) * 0.5)).frames
            for i in range(x.shape[0])])
        rel = integrated_gradients_batch(x, baselines, params, classes,
                                         cfg.ig.steps)
    else:
        raise ValidationError(f"unknown attribution method {method!r}")
    r49 = rel.sum(axis=1)                         # time aggregation
    per_slot = r49.reshape(-1, N_SLOTS, N_FEATURES)
    out = np.empty((x.shape[0], N_SUPER))
    out[:, 0::2] = per_slot[:, :, list(MOVEMENT_FEATURES)].mean(axis=2)
    out[:, 1::2] = per_slot[:, :, list(POSITION_FEATURES)].mean(axis=2)
    return out


def perturbation_test(dataset: WindowDataset, params: LnLstmParams,
                      attribution: str, cfg: PerturbConfig = None,
                      random_order: np.ndarray = None) -> PerturbationCurve:
    """Run the occlusion curve for one attribution method.

    `attribution` is one of METHODS. For "random", a per-instance occlusion
    order is drawn from cfg.seed (or passed via random_order). Fills are
    anchored at each instance's original window.
    """
    cfg = cfg or PerturbConfig()
    trace = forward_batch(dataset.windows, params)
    pred0 = np.argmax(trace.logits, axis=1)
    keep = pred0 == dataset.labels
    if not np.any(keep):
        raise ValidationError("no correctly classified instances to perturb")
    x = dataset.windows[keep].copy()
    anchors = dataset.windows[keep]
    classes = dataset.labels[keep]
    n = int(keep.sum())

    occluded = np.zeros((n, N_SUPER), dtype=bool)
    accuracy = [1.0]
    ranking = None
    if attribution == "random":
        if random_order is None:
            rng = np.random.default_rng(cfg.seed)
            random_order = np.stack([rng.permutation(N_SUPER) for _ in range(n)])
        order = np.asarray(random_order)

    for step in range(1, N_SUPER + 1):
        if attribution == "random":
            pick = order[:, step - 1]
        else:
            if cfg.recompute or ranking is None:
                rel = _super_relevance_batched(x, classes, params,
                                               attribution, cfg)
                ranking = np.abs(rel)
            masked = np.where(occluded, -np.inf, ranking)
            pick = np.argmax(masked, axis=1)   # first max: slot asc, movement first
        for key in range(N_SUPER):
            rows = np.nonzero(pick == key)[0]
            slot, kind = key // 2, SUPER_KINDS[key % 2]
            _apply_fill_batch(x, anchors, rows, slot, kind, cfg.fill,
                              cfg.dataset_means)
        occluded[np.arange(n), pick] = True
        acc = float(np.mean(np.argmax(forward_batch(x, params).logits, axis=1)
                            == classes))
        accuracy.append(acc)

    return PerturbationCurve(method=attribution, accuracy=accuracy, n=n,
                             seed=cfg.seed)


def random_occlusion(dataset: WindowDataset, params: LnLstmParams,
                     cfg: PerturbConfig = None) -> PerturbationCurve:
    """Uniformly random occlusion order per instance; the floor baseline."""
    return perturbation_test(dataset, params, "random", cfg)


def run_methods(dataset: WindowDataset, params: LnLstmParams, methods,
                cfg: PerturbConfig = None) -> dict:
    """Curves for several methods over the identical instance set."""
    return {m: perturbation_test(dataset, params, m, cfg) for m in methods}


def save_curves(curves: dict, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["method", "step", "accuracy", "n"])
        for method, curve in curves.items():
            for step, acc in enumerate(curve.accuracy):
                writer.writerow([method, step, f"{acc:.6f}", curve.n])


def timing_benchmark(dataset: WindowDataset, params: LnLstmParams,
                     n_instances: int = 1000, ig_steps: int = 50,
                     lrp_cfg: LrpConfig = None, warmup: int = 10) -> BenchmarkReport:
    """Mean per-instance wall time of one LRP explanation vs one IG
    attribution, measured one instance at a time after warmup."""
    lrp_cfg = lrp_cfg or LrpConfig()
    idx = np.arange(len(dataset))
    idx = np.resize(idx, n_instances + warmup)
    windows = [dataset.window(int(i)) for i in idx]
    classes = dataset.labels[idx]

    def time_lrp(w, c):
        t0 = time.perf_counter()
        trace = forward_batch(w.frames[None], params)
        explain_batch(trace, params, np.array([c]), lrp_cfg)
        return time.perf_counter() - t0

    def time_ig(w, c):
        t0 = time.perf_counter()
        baseline = sentinel_window(w).frames
        integrated_gradients_batch(w.frames[None], baseline[None], params,
                                   np.array([c]), ig_steps)
        return time.perf_counter() - t0

    lrp_times, ig_times = [], []
    for k, (w, c) in enumerate(zip(windows, classes)):
        t_l = time_lrp(w, int(c))
        t_i = time_ig(w, int(c))
        if k >= warmup:
            lrp_times.append(t_l)
            ig_times.append(t_i)
    return BenchmarkReport(lrp_mean_s=float(np.mean(lrp_times)),
                           ig_mean_s=float(np.mean(ig_times)),
                           n=len(lrp_times), ig_steps=ig_steps)
