"""Microscopic multi-lane highway simulation.

Straight segment, discrete lanes (index 0 = rightmost, increasing leftward,
y grows to the left). Longitudinal motion is a bounded-acceleration
car-following rule that never lets a follower run into its leader. Lane
changes are scripted lateral maneuvers: a cosine easing of y over T_LC
seconds, so the heading angle ramps up over the first half and back down
over the second. Changes are triggered by overtaking pressure (slow leader
ahead, target lane free), by a keep-right return, or by a small random
propensity. Everything is driven by one seeded generator, so runs are
reproducible bit for bit.

Vehicle raw ids cycle through 1..10000 like the live feed this stands in
for; uniqueness across a long run is the identity cache's job, not ours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..features import VehicleFeatures

RAW_ID_CYCLE = 10_000


@dataclass
class SimConfig:
    lane_count: int = 4
    lane_width: float = 3.5
    segment_length: float = 1000.0
    spawn_rate: float = 0.5            # vehicles per second
    speed_min: float = 22.0            # m/s
    speed_max: float = 36.0
    lane_change_propensity: float = 0.01   # random changes, per vehicle-second
    frame_rate: float = 2.0            # Hz; matches the model's 0.5 s spacing
    seed: int = 0
    # car following
    accel_max: float = 1.5             # m/s^2
    brake_max: float = 4.0
    headway: float = 1.2               # s, desired time gap
    min_gap: float = 6.0               # m, bumper-to-bumper floor
    spawn_gap: float = 30.0
    # lane changes: the lateral easing spans lc_duration with the lane-index
    # crossing at its midpoint, so every window labeled within the 2.5 s
    # horizon already shows the maneuver building up
    lc_duration: float = 5.2           # s; heading ramps over half of it
    overtake_gap: float = 35.0         # trigger distance to a slower leader
    overtake_dv: float = 2.0           # leader this much slower triggers
    safe_lead: float = 20.0            # clearance needed in the target lane
    safe_trail: float = 15.0
    keep_right_prob: float = 0.15      # per second, when the right lane is free

    def __post_init__(self):
        if self.lane_count < 2:
            raise ValidationError("lane_count must be >= 2")
        if abs(1.0 / self.frame_rate - 0.5) > 0.25:
            raise ValidationError("frame rate must be near 2 Hz (0.5 s spacing)")

    def lane_center(self, lane: int) -> float:
        return (lane + 0.5) * self.lane_width


@dataclass
class SimVehicle:
    raw_id: int
    lane: int                 # lane the vehicle belongs to (target during a change)
    x: float
    v: float
    v_des: float
    lc_from: int = -1         # source lane while changing, -1 otherwise
    lc_progress: float = -1.0  # in [0, 1] while changing

    @property
    def changing(self) -> bool:
        return self.lc_progress >= 0.0


@dataclass
class FrameVehicle:
    raw_id: int
    lane: int
    features: VehicleFeatures


@dataclass
class Frame:
    t: float
    lane_count: int
    vehicles: list

    def vehicle(self, raw_id: int) -> FrameVehicle:
        for v in self.vehicles:
            if v.raw_id == raw_id:
                return v
        raise KeyError(f"vehicle {raw_id} not in frame at t={self.t}")

    def ids(self):
        return [v.raw_id for v in self.vehicles]


class Sim:
    """Mutable simulation state; step() advances it, frame() snapshots it."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.t = 0.0
        self.vehicles: list[SimVehicle] = []
        self.rng = np.random.default_rng(cfg.seed)
        self._next_raw = 1
        self.events: list[tuple] = []   # (t, raw_id, from_lane, to_lane)

    def _mint_raw_id(self) -> int:
        raw = self._next_raw
        self._next_raw = self._next_raw % RAW_ID_CYCLE + 1
        return raw

    # -- geometry -----------------------------------------------------------

    def _lateral(self, v: SimVehicle):
        """(y, vy) of a vehicle, accounting for an ongoing lane change."""
        cfg = self.cfg
        if not v.changing:
            return cfg.lane_center(v.lane), 0.0
        y0 = cfg.lane_center(v.lc_from)
        y1 = cfg.lane_center(v.lane)
        p = v.lc_progress
        y = y0 + (y1 - y0) * 0.5 * (1.0 - math.cos(math.pi * p))
        vy = (y1 - y0) * math.pi / (2.0 * cfg.lc_duration) * math.sin(math.pi * p)
        return y, vy

    def _occupies(self, v: SimVehicle, lane: int) -> bool:
        """A changing vehicle blocks both its source and target lane."""
        return v.lane == lane or (v.changing and v.lc_from == lane)

    def _leader(self, v: SimVehicle, lane: int):
        best = None
        for o in self.vehicles:
            if o is v or not self._occupies(o, lane):
                continue
            if o.x >= v.x and (best is None or o.x < best.x):
                best = o
        return best

    def _follower(self, v: SimVehicle, lane: int):
        best = None
        for o in self.vehicles:
            if o is v or not self._occupies(o, lane):
                continue
            if o.x < v.x and (best is None or o.x > best.x):
                best = o
        return best

    def _lane_change_safe(self, v: SimVehicle, target: int) -> bool:
        cfg = self.cfg
        lead = self._leader(v, target)
        if lead is not None and lead.x - v.x < cfg.safe_lead:
            return False
        trail = self._follower(v, target)
        if trail is not None and v.x - trail.x < cfg.safe_trail:
            return False
        return True

    # -- dynamics -----------------------------------------------------------

    def _acceleration(self, v: SimVehicle) -> float:
        cfg = self.cfg
        a = np.clip((v.v_des - v.v) / 4.0, -cfg.brake_max, cfg.accel_max)
        lead = self._leader(v, v.lane)
        if v.changing and v.lc_progress < 0.5:
            other = self._leader(v, v.lc_from)
            if other is not None and (lead is None or other.x < lead.x):
                lead = other
        if lead is not None:
            gap = lead.x - v.x - cfg.min_gap
            desired = cfg.headway * v.v
            if gap < desired:
                follow = (gap - desired) / 2.0 + (lead.v - v.v)
                a = min(a, np.clip(follow, -cfg.brake_max, cfg.accel_max))
        return float(a)

    def _maybe_start_change(self, v: SimVehicle, dt: float):
        cfg = self.cfg
        if v.changing:
            return
        lead = self._leader(v, v.lane)
        # overtake pressure: slow leader close ahead, room on the left
        if (lead is not None and v.lane < cfg.lane_count - 1
                and lead.x - v.x < cfg.overtake_gap
                and v.v_des - lead.v > cfg.overtake_dv
                and self._lane_change_safe(v, v.lane + 1)):
            if self.rng.random() < 0.7:
                self._start_change(v, v.lane + 1)
                return
        # keep-right return when the right lane has ample room
        if v.lane > 0 and self._lane_change_safe(v, v.lane - 1):
            right_lead = self._leader(v, v.lane - 1)
            if right_lead is None or right_lead.x - v.x > 2.5 * cfg.overtake_gap:
                if self.rng.random() < cfg.keep_right_prob * dt:
                    self._start_change(v, v.lane - 1)
                    return
        # small unconditioned propensity
        if self.rng.random() < cfg.lane_change_propensity * dt:
            options = [d for d in (-1, 1)
                       if 0 <= v.lane + d < cfg.lane_count
                       and self._lane_change_safe(v, v.lane + d)]
            if options:
                target = v.lane + options[int(self.rng.integers(len(options)))]
                self._start_change(v, target)

    def _start_change(self, v: SimVehicle, target: int):
        self.events.append((self.t, v.raw_id, v.lane, target))
        v.lc_from = v.lane
        v.lane = target
        v.lc_progress = 0.0

    def _spawn(self, dt: float):
        cfg = self.cfg
        n = self.rng.poisson(cfg.spawn_rate * dt)
        for _ in range(n):
            lane = int(self.rng.integers(cfg.lane_count))
            v_des = float(self.rng.uniform(cfg.speed_min, cfg.speed_max))
            blocked = any(self._occupies(o, lane) and o.x < cfg.spawn_gap
                          for o in self.vehicles)
            if blocked:
                continue
            self.vehicles.append(SimVehicle(
                raw_id=self._mint_raw_id(), lane=lane, x=0.0, v=v_des,
                v_des=v_des))

    def step(self, dt: float):
        if dt <= 0:
            raise ValidationError("dt must be positive")
        cfg = self.cfg
        self._spawn(dt)
        for v in self.vehicles:
            self._maybe_start_change(v, dt)
        accels = [self._acceleration(v) for v in self.vehicles]
        for v, a in zip(self.vehicles, accels):
            v.v = max(0.0, v.v + a * dt)
        # hard no-collision clamp per lane, front to back
        for lane in range(cfg.lane_count):
            column = sorted((v for v in self.vehicles if self._occupies(v, lane)),
                            key=lambda v: -v.x)
            for ahead, behind in zip(column, column[1:]):
                limit = ahead.x + ahead.v * dt - behind.x - cfg.min_gap
                if behind.v * dt > limit:
                    behind.v = max(0.0, limit / dt)
        for v in self.vehicles:
            v.x += v.v * dt
            if v.changing:
                v.lc_progress += dt / cfg.lc_duration
                if v.lc_progress >= 1.0:
                    v.lc_progress = -1.0
                    v.lc_from = -1
        self.vehicles = [v for v in self.vehicles if v.x <= cfg.segment_length]
        self.t += dt
        return self

    def frame(self) -> Frame:
        cfg = self.cfg
        out = []
        for v in self.vehicles:
            y, vy = self._lateral(v)
            lane_now = int(np.clip(y // cfg.lane_width, 0, cfg.lane_count - 1))
            psi = math.atan2(vy, max(v.v, 1e-6))
            out.append(FrameVehicle(
                raw_id=v.raw_id, lane=lane_now,
                features=VehicleFeatures(
                    vx=v.v, vy=vy, psi=psi, x=v.x, y=y,
                    n_left=cfg.lane_count - 1 - lane_now, n_right=lane_now)))
        return Frame(t=self.t, lane_count=cfg.lane_count, vehicles=out)

    def frames(self, duration: float):
        """Generate frames at the configured rate for `duration` seconds."""
        dt = 1.0 / self.cfg.frame_rate
        n = int(round(duration * self.cfg.frame_rate))
        for _ in range(n):
            yield self.frame()
            self.step(dt)


def step_sim(state: Sim, dt: float) -> Sim:
    """Advance the simulation by dt seconds (in place) and return it."""
    return state.step(dt)
