"""Input feature layout: vehicles, slots, observation windows, sentinel fills.

A model input is a window of ``N_STEPS`` frames spaced ``STEP_SPACING`` seconds
apart. Each frame is a 49-vector laid out slot-major: six neighbour slots in
fixed regional order followed by the query vehicle, 7 features per vehicle in
the order ``FEATURE_NAMES``. Absent neighbours are replaced by a sentinel
profile and flagged in the window mask.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

FEATURE_NAMES = ("vx", "vy", "psi", "x", "y", "n_left", "n_right")
N_FEATURES = len(FEATURE_NAMES)

SLOT_NAMES = ("left_front", "front", "right_front",
              "left_rear", "rear", "right_rear", "query")
N_SLOTS = len(SLOT_NAMES)
QUERY_SLOT = 6

N_INPUT = N_SLOTS * N_FEATURES          # 49
N_STEPS = 4
STEP_SPACING = 0.5                      # seconds between frames
WINDOW_SPAN = (N_STEPS - 1) * STEP_SPACING
PREDICTION_HORIZON = 2.5                # seconds ahead covered by the label

CLASS_NAMES = ("left", "keep", "right")
N_CLASSES = 3

MOVEMENT_FEATURES = (0, 1, 2)           # vx, vy, psi
POSITION_FEATURES = (3, 4, 5, 6)        # x, y, n_left, n_right

# Sentinel placement for absent neighbours: a phantom far down the road in the
# slot's lane, moving with the query.
SENTINEL_RANGE = 200.0                  # longitudinal offset, metres
SENTINEL_LANE_OFFSET = 3.5              # lateral offset per side column, metres

# (dx sign, dy sign) per neighbour slot; dy>0 means the left side.
_SLOT_GEOMETRY = {
    0: (+1.0, +1.0),   # left_front
    1: (+1.0, 0.0),    # front
    2: (+1.0, -1.0),   # right_front
    3: (-1.0, +1.0),   # left_rear
    4: (-1.0, 0.0),    # rear
    5: (-1.0, -1.0),   # right_rear
}

# Timestamps may jitter this much around the nominal 0.5 s grid.
SPACING_TOLERANCE = 0.1


def feature_index(slot: int, feature: int) -> int:
    """Column of (slot, feature) in the flat 49-vector."""
    return slot * N_FEATURES + feature


def slot_columns(slot: int) -> slice:
    """Columns of one vehicle slot in the flat 49-vector."""
    return slice(slot * N_FEATURES, (slot + 1) * N_FEATURES)


@dataclass
class VehicleFeatures:
    """Per-vehicle raw features: velocities (m/s), heading (rad), world-fixed
    position (m), and lane counts to either side."""

    vx: float
    vy: float
    psi: float
    x: float
    y: float
    n_left: float
    n_right: float

    def validate(self) -> None:
        arr = self.as_array()
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"non-finite vehicle features: {self}")
        if self.n_left < 0 or self.n_right < 0:
            raise ValidationError(
                f"negative lane counts: n_left={self.n_left}, n_right={self.n_right}")

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.psi, self.x, self.y,
                         self.n_left, self.n_right], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "VehicleFeatures":
        a = np.asarray(a, dtype=np.float64)
        return cls(*(float(v) for v in a))


def sentinel_features(query: VehicleFeatures, slot: int) -> VehicleFeatures:
    """Phantom profile standing in for an absent neighbour.

    Placed SENTINEL_RANGE metres ahead/behind in the slot's lane column,
    velocities and heading mirrored from the query, lane counts copied.
    """
    dx_sign, dy_sign = _SLOT_GEOMETRY[slot]
    return VehicleFeatures(
        vx=query.vx, vy=query.vy, psi=query.psi,
        x=query.x + dx_sign * SENTINEL_RANGE,
        y=query.y + dy_sign * SENTINEL_LANE_OFFSET,
        n_left=query.n_left, n_right=query.n_right,
    )


# Neutral stand-in for the query's own features when they are blanked out
# (occlusion, attribution baselines): nominal cruise, position frozen at the
# anchor's first frame, middle-lane counts.
CRUISE_SPEED = 30.0
NEUTRAL_LANE_COUNT = 1.0


def query_neutral_frames(anchor_frames: np.ndarray) -> np.ndarray:
    """(4, 7) neutral query features anchored at the first frame of `anchor_frames`."""
    q0 = anchor_frames[0, slot_columns(QUERY_SLOT)]
    row = np.array([CRUISE_SPEED, 0.0, 0.0, q0[3], q0[4],
                    NEUTRAL_LANE_COUNT, NEUTRAL_LANE_COUNT])
    return np.tile(row, (anchor_frames.shape[0], 1))


def neighbor_sentinel_frames(anchor_frames: np.ndarray, slot: int) -> np.ndarray:
    """(4, 7) per-frame sentinel features for one neighbour slot, anchored at
    the query trajectory recorded in `anchor_frames`."""
    out = np.empty((anchor_frames.shape[0], N_FEATURES))
    for k in range(anchor_frames.shape[0]):
        q = VehicleFeatures.from_array(anchor_frames[k, slot_columns(QUERY_SLOT)])
        out[k] = sentinel_features(q, slot).as_array()
    return out


def sentinel_window(window: ObservationWindow) -> ObservationWindow:
    """The "absent traffic" counterpart of a window: the query becomes the
    neutral cruise profile and every neighbour slot is the sentinel phantom
    anchored at that neutral profile. Carries no instance information beyond
    the first-frame position, so it doubles as the attribution baseline and
    the fully-occluded endpoint of the perturbation test."""
    frames = window.frames.copy()
    neutral = query_neutral_frames(window.frames)
    frames[:, slot_columns(QUERY_SLOT)] = neutral
    for slot in range(QUERY_SLOT):
        for k in range(frames.shape[0]):
            q = VehicleFeatures.from_array(neutral[k])
            frames[k, slot_columns(slot)] = sentinel_features(q, slot).as_array()
    mask = np.zeros_like(window.mask)
    mask[:, QUERY_SLOT] = True
    return ObservationWindow(frames=frames, mask=mask,
                             timestamps=window.timestamps.copy(),
                             window_id=window.window_id)


@dataclass
class ObservationWindow:
    """Four ordered frames of the query vehicle and its six neighbour slots.

    frames: (4, 49) float array, slot-major layout.
    mask:   (4, 7) booleans, True where the slot held a real vehicle.
    timestamps: (4,) seconds, nominally t - [1.5, 1.0, 0.5, 0].
    """

    frames: np.ndarray
    mask: np.ndarray
    timestamps: np.ndarray
    window_id: str = ""

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)

    @property
    def t(self) -> float:
        """Prediction time: timestamp of the newest frame."""
        return float(self.timestamps[-1])

    def validate(self) -> None:
        if self.frames.shape != (N_STEPS, N_INPUT):
            raise ValidationError(
                f"window frames must be {(N_STEPS, N_INPUT)}, got {self.frames.shape}")
        if self.mask.shape != (N_STEPS, N_SLOTS):
            raise ValidationError(
                f"window mask must be {(N_STEPS, N_SLOTS)}, got {self.mask.shape}")
        if self.timestamps.shape != (N_STEPS,):
            raise ValidationError(
                f"window needs {N_STEPS} timestamps, got {self.timestamps.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ValidationError("window contains non-finite features")
        if not np.all(self.mask[:, QUERY_SLOT]):
            raise ValidationError("query slot must be real in every frame")
        spacing = np.diff(self.timestamps)
        if np.any(np.abs(spacing - STEP_SPACING) > SPACING_TOLERANCE):
            raise ValidationError(
                f"frame spacing must be {STEP_SPACING}s +/- {SPACING_TOLERANCE}s, "
                f"got {spacing.tolist()}")

    def vehicle(self, step: int, slot: int) -> VehicleFeatures:
        return VehicleFeatures.from_array(self.frames[step, slot_columns(slot)])

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "window_id": self.window_id,
            "frames": self.frames.tolist(),
            "mask": self.mask.tolist(),
            "timestamps": self.timestamps.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObservationWindow":
        try:
            w = cls(frames=np.array(d["frames"], dtype=np.float64),
                    mask=np.array(d["mask"], dtype=bool),
                    timestamps=np.array(d["timestamps"], dtype=np.float64),
                    window_id=str(d.get("window_id", "")))
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed window payload: {e}") from e
        w.validate()
        return w

    def save_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load_json(cls, path) -> "ObservationWindow":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def default_timestamps(t: float = 0.0) -> np.ndarray:
    return t - STEP_SPACING * np.arange(N_STEPS - 1, -1, -1, dtype=np.float64)


def window_from_frames(frame_vectors, masks, t: float = 0.0,
                       window_id: str = "") -> ObservationWindow:
    """Assemble a window from per-frame 49-vectors and slot masks."""
    w = ObservationWindow(frames=np.stack(frame_vectors), mask=np.stack(masks),
                          timestamps=default_timestamps(t), window_id=window_id)
    w.validate()
    return w


@dataclass
class WindowDataset:
    """Columnar stack of labeled windows used by training and evaluation.

    windows: (N, 4, 49); masks: (N, 4, 7); labels: (N,) indices into CLASS_NAMES.
    """

    windows: np.ndarray
    masks: np.ndarray
    labels: np.ndarray
    timestamps: np.ndarray = None
    window_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float64)
        self.masks = np.asarray(self.masks, dtype=bool)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.timestamps is None:
            self.timestamps = np.tile(default_timestamps(), (len(self.labels), 1))

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def subset(self, idx) -> "WindowDataset":
        idx = np.asarray(idx)
        ids = [self.window_ids[i] for i in idx] if self.window_ids else []
        return WindowDataset(self.windows[idx], self.masks[idx], self.labels[idx],
                             self.timestamps[idx], ids)

    def window(self, i: int) -> ObservationWindow:
        wid = self.window_ids[i] if self.window_ids else ""
        return ObservationWindow(self.windows[i], self.masks[i],
                                 self.timestamps[i], window_id=wid)

    def class_counts(self) -> dict:
        return {name: int(np.sum(self.labels == k))
                for k, name in enumerate(CLASS_NAMES)}
