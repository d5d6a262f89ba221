"""Shared test fixtures: plausible highway windows without running the twin."""

import numpy as np

from xlane.features import (ObservationWindow, VehicleFeatures,
                            default_timestamps, sentinel_features,
                            slot_columns)

LANE_WIDTH = 3.5


def realistic_window(rng, lanes=4, t=0.0):
    """A window with in-distribution feature scales: world positions of a few
    hundred metres, highway speeds, neighbours in their regional columns."""
    lane = int(rng.integers(0, lanes))
    xq = rng.uniform(100, 400)
    yq = (lane + 0.5) * LANE_WIDTH
    vxq = rng.uniform(22, 36)
    vyq = rng.normal(0, 0.4)
    frames = np.zeros((4, 49))
    mask = np.zeros((4, 7), dtype=bool)
    mask[:, 6] = True
    present = rng.random(6) < 0.7
    offsets = rng.uniform(8, 80, 6)
    dv = rng.normal(0, 3, 6)
    for k in range(4):
        dt = 0.5 * k
        q = VehicleFeatures(vxq, vyq, vyq / vxq, xq + vxq * dt, yq + vyq * dt,
                            lanes - 1 - lane, lane)
        frames[k, slot_columns(6)] = q.as_array()
        for s in range(6):
            if present[s]:
                dx = offsets[s] if s in (0, 1, 2) else -offsets[s]
                dy = LANE_WIDTH if s in (0, 3) else (-LANE_WIDTH if s in (2, 5) else 0.0)
                v = VehicleFeatures(vxq + dv[s], 0.0, 0.0,
                                    q.x + dx + dv[s] * dt, q.y + dy,
                                    q.n_left, q.n_right)
                mask[k, s] = True
            else:
                v = sentinel_features(q, s)
            frames[k, slot_columns(s)] = v.as_array()
    return ObservationWindow(frames=frames, mask=mask,
                             timestamps=default_timestamps(t))


def realistic_batch(rng, n, lanes=4):
    windows = [realistic_window(rng, lanes) for _ in range(n)]
    x = np.stack([w.frames for w in windows])
    masks = np.stack([w.mask for w in windows])
    return windows, x, masks
