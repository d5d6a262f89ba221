"""Regional neighbour extraction and window assembly from frames."""

from __future__ import annotations

import numpy as np

from ..errors import WindowNotReady
from ..features import (N_INPUT, N_SLOTS, N_STEPS, QUERY_SLOT, STEP_SPACING,
                        ObservationWindow, sentinel_features, slot_columns)
from .sim import Frame

# slot -> (lane offset, ahead?) in the fixed regional order
_SLOT_REGION = {
    0: (+1, True),    # left_front
    1: (0, True),     # front
    2: (-1, True),    # right_front
    3: (+1, False),   # left_rear
    4: (0, False),    # rear
    5: (-1, False),   # right_rear
}


def lane_index(y: float, lane_width: float, lane_count: int) -> int:
    return int(np.clip(y // lane_width, 0, lane_count - 1))


def extract_neighbors(frame: Frame, q_raw_id: int):
    """Fill the 7 regional slots around the query vehicle.

    Returns (vec49, mask7, slot_ids): the flat feature vector in slot-major
    layout, booleans marking real slots, and the occupying raw ids (None for
    sentinel-filled slots). Raises KeyError if the query is absent.
    """
    q = frame.vehicle(q_raw_id)
    vec = np.zeros(N_INPUT)
    mask = np.zeros(N_SLOTS, dtype=bool)
    slot_ids = [None] * N_SLOTS

    vec[slot_columns(QUERY_SLOT)] = q.features.as_array()
    mask[QUERY_SLOT] = True
    slot_ids[QUERY_SLOT] = q.raw_id

    best = {}
    for v in frame.vehicles:
        if v.raw_id == q.raw_id:
            continue
        dlane = v.lane - q.lane
        if abs(dlane) > 1:
            continue
        dx = v.features.x - q.features.x
        ahead = dx >= 0
        for slot, (offset, is_front) in _SLOT_REGION.items():
            if offset == dlane and is_front == ahead:
                if slot not in best or abs(dx) < abs(best[slot][0]):
                    best[slot] = (dx, v)

    for slot in range(QUERY_SLOT):
        if slot in best:
            v = best[slot][1]
            vec[slot_columns(slot)] = v.features.as_array()
            mask[slot] = True
            slot_ids[slot] = v.raw_id
        else:
            vec[slot_columns(slot)] = sentinel_features(q.features, slot).as_array()
    return vec, mask, slot_ids


def build_window(history, q_raw_id: int, t: float,
                 tolerance: float = 0.1) -> ObservationWindow:
    """Assemble the 4-frame window ending at time t from a frame history.

    `history` is a time-ordered sequence of Frames. Raises WindowNotReady if
    any of the four required frames is missing, off-grid, or lacks the query.
    """
    frames = list(history)
    targets = [t - (N_STEPS - 1 - k) * STEP_SPACING for k in range(N_STEPS)]
    rows, masks, stamps = [], [], []
    for target in targets:
        candidates = [f for f in frames if abs(f.t - target) <= tolerance]
        if not candidates:
            raise WindowNotReady(
                f"no frame within {tolerance}s of t={target:.2f}")
        frame = min(candidates, key=lambda f: abs(f.t - target))
        try:
            vec, mask, _ = extract_neighbors(frame, q_raw_id)
        except KeyError as e:
            raise WindowNotReady(str(e)) from e
        rows.append(vec)
        masks.append(mask)
        stamps.append(frame.t)
    w = ObservationWindow(frames=np.stack(rows), mask=np.stack(masks),
                          timestamps=np.array(stamps),
                          window_id=f"{q_raw_id}@{t:.1f}")
    w.validate()
    return w
