"""Collapse a 4x49 relevance map into the per-vehicle super-feature view.

Time steps are summed per input dimension first, then each vehicle's seven
feature relevances are averaged into two virtual super-features: movement
(vx, vy, psi) and position (x, y, n_left, n_right). The top ranked
super-features carry a color bucket describing their relative impact.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .features import (MOVEMENT_FEATURES, N_FEATURES, N_INPUT, N_SLOTS,
                       N_STEPS, POSITION_FEATURES, SLOT_NAMES, slot_columns)

SUPER_FEATURES = ("movement", "position")
N_SUPER = N_SLOTS * len(SUPER_FEATURES)   # 14
BUCKETS = ("low", "medium", "high")


def aggregate_time(r) -> np.ndarray:
    """Sum a (4, 49) relevance map over its time steps; exactly sum-preserving."""
    values = np.asarray(getattr(r, "values", r), dtype=np.float64)
    if values.shape != (N_STEPS, N_INPUT):
        raise ShapeError(f"expected ({N_STEPS}, {N_INPUT}) map, got {values.shape}")
    return values.sum(axis=0)


@dataclass
class RankedSuperFeature:
    slot: int
    slot_name: str
    super_feature: str
    relevance: float
    bucket: str = ""

    def to_dict(self, uuid: str = None) -> dict:
        d = {"vehicle_slot": self.slot, "slot_name": self.slot_name,
             "super_feature": self.super_feature,
             "relevance": self.relevance, "bucket": self.bucket}
        if uuid is not None:
            d["uuid"] = uuid
        return d


@dataclass
class SuperFeatureExplanation:
    """Per-slot movement/position relevances (7 each, slot order as SLOT_NAMES)."""

    movement: np.ndarray
    position: np.ndarray

    def value(self, slot: int, super_feature: str) -> float:
        arr = self.movement if super_feature == "movement" else self.position
        return float(arr[slot])

    def pairs(self):
        """All 14 (slot, super_feature, value) triples, movement before
        position within each slot."""
        out = []
        for slot in range(N_SLOTS):
            out.append((slot, "movement", float(self.movement[slot])))
            out.append((slot, "position", float(self.position[slot])))
        return out

    def to_dict(self) -> dict:
        return {SLOT_NAMES[s]: {"movement": float(self.movement[s]),
                                "position": float(self.position[s])}
                for s in range(N_SLOTS)}


def aggregate_super(r49, reduce: str = "mean") -> SuperFeatureExplanation:
    """Collapse each vehicle's kinematic and positional relevances.

    The default weighted means (movement over 3 features, position over 4)
    are deliberately non-conservative; reduce="sum" gives the conservation-
    compatible variant where the 14 super-features add up to the input total.
    """
    r49 = np.asarray(r49, dtype=np.float64)
    if r49.shape != (N_INPUT,):
        raise ShapeError(f"expected ({N_INPUT},) vector, got {r49.shape}")
    if reduce not in ("mean", "sum"):
        raise ShapeError(f"reduce must be 'mean' or 'sum', got {reduce!r}")
    per_slot = r49.reshape(N_SLOTS, N_FEATURES)
    op = np.mean if reduce == "mean" else np.sum
    movement = op(per_slot[:, list(MOVEMENT_FEATURES)], axis=1)
    position = op(per_slot[:, list(POSITION_FEATURES)], axis=1)
    return SuperFeatureExplanation(movement=movement, position=position)


def super_feature_matrix(r49) -> np.ndarray:
    """The 14 super-feature values in canonical order: slot-major, movement
    then position. Used by the ranking and the perturbation harness."""
    expl = aggregate_super(r49) if not isinstance(r49, SuperFeatureExplanation) else r49
    out = np.empty(N_SUPER)
    out[0::2] = expl.movement
    out[1::2] = expl.position
    return out


def _bucket_for(value: float, lo: float, hi: float) -> str:
    if hi - lo <= 0:
        return "high"
    frac = (value - lo) / (hi - lo)
    if frac >= 2.0 / 3.0:
        return "high"
    if frac >= 1.0 / 3.0:
        return "medium"
    return "low"


def top_k(expl: SuperFeatureExplanation, k: int = 3):
    """Rank super-features by |relevance| (deterministic tie-break: vehicle
    slot, then movement before position) and bucket each into thirds of the
    selected range."""
    if k > N_SUPER:
        warnings.warn(f"k={k} exceeds {N_SUPER} super-features; clamping")
        k = N_SUPER
    entries = expl.pairs()
    order_key = {"movement": 0, "position": 1}
    ranked = sorted(entries,
                    key=lambda e: (-abs(e[2]), e[0], order_key[e[1]]))[:k]
    mags = [abs(v) for _, _, v in ranked]
    lo, hi = min(mags), max(mags)
    return [RankedSuperFeature(slot=s, slot_name=SLOT_NAMES[s], super_feature=f,
                               relevance=v, bucket=_bucket_for(abs(v), lo, hi))
            for s, f, v in ranked]
