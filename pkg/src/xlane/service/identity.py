"""Stable vehicle identity over a cycling raw-id space.

The feed reuses raw ids 1..10000, so identity is a TTL heuristic: a raw id
seen again within the TTL is the same vehicle and keeps its UUID; after a
longer absence it is assumed to be a new vehicle and gets a fresh one. The
cache snapshots to a JSON file so identities survive restarts.
"""

from __future__ import annotations

import json
import os
import uuid as uuid_mod
from dataclasses import dataclass


@dataclass
class IdentityRecord:
    uuid: str
    last_seen: float


class IdentityCache:
    def __init__(self, ttl: float = 5.0, snapshot_path=None, uuid_factory=None):
        self.ttl = ttl
        self.snapshot_path = snapshot_path
        self.entries: dict[int, IdentityRecord] = {}
        self._mint = uuid_factory or (lambda: str(uuid_mod.uuid4()))

    def assign(self, raw_id: int, now: float) -> str:
        """Existing uuid if the raw id was seen within the TTL, else a new one."""
        rec = self.entries.get(raw_id)
        if rec is not None and now - rec.last_seen <= self.ttl:
            rec.last_seen = now
            return rec.uuid
        fresh = IdentityRecord(uuid=self._mint(), last_seen=now)
        self.entries[raw_id] = fresh
        return fresh.uuid

    def peek(self, raw_id: int):
        rec = self.entries.get(raw_id)
        return rec.uuid if rec else None

    def snapshot(self, path=None) -> None:
        path = path or self.snapshot_path
        if path is None:
            return
        payload = {
            "version": 1,
            "ttl": self.ttl,
            "entries": {str(k): {"uuid": r.uuid, "last_seen": r.last_seen}
                        for k, r in self.entries.items()},
        }
        tmp = f"{path}.tmp"
        with open(tmp, "w") as f:
            json.dump(payload, f)
        os.replace(tmp, path)

    @classmethod
    def restore(cls, path, ttl: float = None, uuid_factory=None) -> "IdentityCache":
        with open(path) as f:
            payload = json.load(f)
        cache = cls(ttl=ttl if ttl is not None else payload.get("ttl", 5.0),
                    snapshot_path=path, uuid_factory=uuid_factory)
        for k, r in payload.get("entries", {}).items():
            cache.entries[int(k)] = IdentityRecord(uuid=r["uuid"],
                                                   last_seen=r["last_seen"])
        return cache


def assign_uuid(raw_id: int, now: float, cache: IdentityCache) -> str:
    return cache.assign(raw_id, now)
