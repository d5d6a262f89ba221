"""Frame stream recording and replay.

Recorded streams are length-delimited JSON: each record is a 4-byte
little-endian length followed by the UTF-8 JSON frame. Replay paces frames
against their timestamps with an optional speed multiplier.
"""

from __future__ import annotations

import json
import struct
import time

from ..errors import FrameParseError
from ..features import VehicleFeatures
from .sim import Frame, FrameVehicle

RECORD_VERSION = 1


def frame_to_dict(frame: Frame) -> dict:
    return {
        "v": RECORD_VERSION,
        "t": frame.t,
        "lane_count": frame.lane_count,
        "vehicles": [{"id": v.raw_id, "lane": v.lane,
                      "f": v.features.as_array().tolist()}
                     for v in frame.vehicles],
    }


def frame_from_dict(d: dict) -> Frame:
    return Frame(
        t=float(d["t"]), lane_count=int(d["lane_count"]),
        vehicles=[FrameVehicle(raw_id=int(v["id"]), lane=int(v["lane"]),
                               features=VehicleFeatures.from_array(v["f"]))
                  for v in d["vehicles"]])


def write_frames(path, frames) -> int:
    """Record frames to a file; returns the number written."""
    n = 0
    with open(path, "wb") as f:
        for frame in frames:
            blob = json.dumps(frame_to_dict(frame)).encode("utf-8")
            f.write(struct.pack("<I", len(blob)))
            f.write(blob)
            n += 1
    return n


def read_frames(path):
    """Parse a recorded stream; raises FrameParseError with the byte offset."""
    out = []
    with open(path, "rb") as f:
        data = f.read()
    offset = 0
    while offset < len(data):
        if offset + 4 > len(data):
            raise FrameParseError("truncated length prefix", offset)
        (length,) = struct.unpack_from("<I", data, offset)
        start = offset + 4
        if start + length > len(data):
            raise FrameParseError("truncated record", offset)
        try:
            record = json.loads(data[start:start + length].decode("utf-8"))
            out.append(frame_from_dict(record))
        except (ValueError, KeyError, TypeError) as e:
            raise FrameParseError(f"bad frame record: {e}", offset) from e
        offset = start + length
    return out


def stream_replay(source, speed: float = None, clock=time.monotonic,
                  sleep=time.sleep):
    """Yield frames from a source, paced against their timestamps.

    source: an iterable of Frames, a recorded file path, or a Sim (which is
    stepped live at its frame rate; bound it with itertools beforehand if you
    need a finite stream). speed=None disables pacing (as fast as possible);
    speed=1.0 is realtime, 10.0 is ten times faster.
    """
    from .sim import Sim

    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        frames = iter(read_frames(source))
    elif isinstance(source, Sim):
        frames = _sim_frames(source)
    else:
        frames = iter(source)

    start_wall = None
    start_t = None
    for frame in frames:
        if speed is not None:
            if start_wall is None:
                start_wall = clock()
                start_t = frame.t
            else:
                due = start_wall + (frame.t - start_t) / speed
                delay = due - clock()
                if delay > 0:
                    sleep(delay)
        yield frame


def _sim_frames(sim):
    dt = 1.0 / sim.cfg.frame_rate
    while True:
        yield sim.frame()
        sim.step(dt)
