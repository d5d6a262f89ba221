"""Live adaptor: decode, validate, uuid-stamp, and enrich raw frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..features import VehicleFeatures
from .identity import IdentityCache


@dataclass
class EnrichedVehicle:
    raw_id: int
    uuid: str
    lane: int
    features: VehicleFeatures


@dataclass
class EnrichedFrame:
    t: float
    lane_count: int
    vehicles: list

    def vehicle(self, raw_id: int) -> EnrichedVehicle:
        for v in self.vehicles:
            if v.raw_id == raw_id:
                return v
        raise KeyError(f"vehicle {raw_id} not in frame at t={self.t}")

    def by_uuid(self, uuid: str):
        for v in self.vehicles:
            if v.uuid == uuid:
                return v
        return None

    def ids(self):
        return [v.raw_id for v in self.vehicles]

    def to_dict(self) -> dict:
        return {
            "v": 1,
            "t": self.t,
            "lane_count": self.lane_count,
            "vehicles": [{"id": v.raw_id, "uuid": v.uuid, "lane": v.lane,
                          "f": v.features.as_array().tolist()}
                         for v in self.vehicles],
        }


class LiveAdaptor:
    """Stamps frames with stable uuids and derived lane counts.

    Malformed frames are dropped and counted; the stream continues. The
    identity cache is snapshotted every `snapshot_every` frames so uuids
    survive a restart.
    """

    def __init__(self, cache: IdentityCache = None, snapshot_every: int = 10):
        self.cache = cache or IdentityCache()
        self.snapshot_every = snapshot_every
        self.drop_count = 0
        self._since_snapshot = 0

    def enrich(self, frame):
        """EnrichedFrame for a good frame, None for a dropped one."""
        try:
            enriched = []
            seen = set()
            for v in frame.vehicles:
                if v.raw_id in seen:
                    raise ValueError(f"duplicate raw id {v.raw_id}")
                seen.add(v.raw_id)
                arr = v.features.as_array()
                if not np.all(np.isfinite(arr)):
                    raise ValueError(f"non-finite features for {v.raw_id}")
                if not 0 <= v.lane < frame.lane_count:
                    raise ValueError(f"lane {v.lane} out of range")
                fixed = VehicleFeatures(
                    vx=v.features.vx, vy=v.features.vy, psi=v.features.psi,
                    x=v.features.x, y=v.features.y,
                    n_left=frame.lane_count - 1 - v.lane, n_right=v.lane)
                enriched.append(EnrichedVehicle(
                    raw_id=v.raw_id,
                    uuid=self.cache.assign(v.raw_id, frame.t),
                    lane=v.lane, features=fixed))
        except (ValueError, TypeError, AttributeError, KeyError):
            self.drop_count += 1
            return None
        self._since_snapshot += 1
        if self._since_snapshot >= self.snapshot_every:
            self.cache.snapshot()
            self._since_snapshot = 0
        return EnrichedFrame(t=frame.t, lane_count=frame.lane_count,
                             vehicles=enriched)

    def adapt(self, frame_stream):
        """Generator of enriched frames; malformed inputs are skipped."""
        for frame in frame_stream:
            out = self.enrich(frame)
            if out is not None:
                yield out
