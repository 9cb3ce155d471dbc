"""Deterministic fixed-tick scenario runner binding all subsystems.

One run advances simulated time in 100 ms ticks.  Within a tick: due
vehicles enter, every active vehicle beacons once through the TDMA
channel (four 25 ms frames per tick, each vehicle keyed to one frame by
its identity), RSUs ingest what survives, vehicles at their decision
epoch pick lane-change targets from the frozen world state, changes
execute, and car-following advances everyone.  All randomness is either
drawn from per-purpose seeded streams or counter-based, so equal
configs produce byte-identical results.
"""

from __future__ import annotations

import csv
import io
import math
import random
from bisect import insort
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .beacon import Beacon
from .channel import (
    ChannelConfig,
    ChannelRng,
    assign_slot_array,
    delivery_probability,
    nearest_rsu,
)
from .mobility import (
    CellHistory,
    CorridorConfig,
    DriverParams,
    GapDescriptor,
    InsufficientHistory,
    LaneMap,
    VehicleMode,
    VehicleState,
    assisted_lane_decision,
    attractive_lanes,
    execute_lane_change,
    idm_step,
    sense_choices,
    st_baseline_decision,
)
from .rsu import OdaRequest, RsuConfig, RsuNode, UnknownDecider

BEACON_INTERVAL_MS = 100

# Key-space salts separating ODA request/response draws from beacon draws.
_ODA_REQ_SALT = 1 << 40
_ODA_RESP_SALT = 1 << 41

_BEACON_MAX_P_CDBM = -5000
_BEACON_MIN_P_CDBM = -9000
_BEACON_POW_U_CDBM = 2000


class InvalidConfig(ValueError):
    """Scenario configuration violates a declared constraint."""


class Density(Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


DENSITY_FRACTION = {Density.LOW: 0.25, Density.MEDIUM: 0.50, Density.HIGH: 0.75}


class SystemMode(Enum):
    OFF = "off"
    PROPOSED = "proposed"
    ST_BASELINE = "st_baseline"


_MODE_TO_VEHICLE = {
    SystemMode.OFF: VehicleMode.BASELINE,
    SystemMode.PROPOSED: VehicleMode.ASSISTED,
    SystemMode.ST_BASELINE: VehicleMode.ST_BASELINE,
}


@dataclass
class SpawnSpec:
    """Explicit vehicle placement for scripted scenarios."""

    elp: int
    lane_index: int
    entry_time_s: float
    desired_speed_mps: float
    start_pos_m: float | None = None
    start_speed_mps: float | None = None
    mode: VehicleMode | None = None


@dataclass
class ScenarioConfig:
    duration_s: float = 300.0
    max_vehicles: int = 200
    density: Density = Density.MEDIUM
    vehicle_count: int | None = None
    system_mode: SystemMode = SystemMode.OFF
    oda_budget: int = 50
    seed: int = 0
    tick_ms: int = 100
    entry_window_s: float = 30.0
    corridor: CorridorConfig = field(default_factory=CorridorConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    analytics: RsuConfig = field(default_factory=RsuConfig)
    driver: DriverParams = field(default_factory=DriverParams)
    scripted_vehicles: list[SpawnSpec] | None = None
    record_trajectories: bool = False


def validate_config(cfg: ScenarioConfig) -> None:
    """Raise :class:`InvalidConfig` naming the first violated field."""
    if cfg.duration_s <= 0:
        raise InvalidConfig("duration_s must be positive")
    if cfg.max_vehicles < 0:
        raise InvalidConfig("max_vehicles must be non-negative")
    if cfg.vehicle_count is not None and cfg.vehicle_count < 0:
        raise InvalidConfig("vehicle_count must be non-negative")
    if not 0 <= cfg.oda_budget <= 50:
        raise InvalidConfig("oda_budget must be within [0, 50]")
    if cfg.tick_ms != BEACON_INTERVAL_MS:
        raise InvalidConfig(f"tick_ms must equal {BEACON_INTERVAL_MS}")
    if cfg.entry_window_s < 0:
        raise InvalidConfig("entry_window_s must be non-negative")
    try:
        cfg.corridor.validate()
    except ValueError as exc:
        raise InvalidConfig(f"corridor.{exc}") from exc
    try:
        cfg.channel.validate()
    except ValueError as exc:
        raise InvalidConfig(f"channel.{exc}") from exc
    frames = cfg.tick_ms / cfg.channel.frame_ms
    if abs(frames - round(frames)) > 1e-9 or round(frames) < 1:
        raise InvalidConfig("channel.frame_ms must divide tick_ms")


def vehicle_count_for(cfg: ScenarioConfig) -> int:
    if cfg.vehicle_count is not None:
        return cfg.vehicle_count
    return round(DENSITY_FRACTION[cfg.density] * cfg.max_vehicles)


@dataclass
class Traversal:
    elp: int
    direction: int
    entry_s: float
    exit_s: float

    @property
    def travel_time_s(self) -> float:
        return self.exit_s - self.entry_s


@dataclass
class RunMetrics:
    traversals: list[Traversal]
    vehicle_count: int
    odas_issued: int
    odas_answered: int
    lane_changes_attempted: int
    lane_changes_aborted: int
    beacons_sent: int
    beacon_receptions: int
    beacon_potential: int
    audit_overlap_events: int
    audit_speed_violations: int
    delta_pct: float | None = None
    trajectories: list[tuple[float, int, int, float, float]] | None = None

    @property
    def mean_travel_time_s(self) -> float | None:
        if not self.traversals:
            return None
        return sum(t.travel_time_s for t in self.traversals) / len(self.traversals)

    @property
    def beacon_delivery_ratio(self) -> float:
        if self.beacon_potential == 0:
            return 0.0
        return self.beacon_receptions / self.beacon_potential


def spawn_vehicles(cfg: ScenarioConfig, rng: random.Random) -> list[VehicleState]:
    """Seeded spawn plan: even direction split, uniform lanes/speeds/entries."""
    if cfg.scripted_vehicles is not None:
        out = []
        for spec in cfg.scripted_vehicles:
            v = VehicleState(
                elp=spec.elp,
                lane_index=spec.lane_index,
                pos_m=spec.start_pos_m
                if spec.start_pos_m is not None
                else cfg.driver.vehicle_length_m,
                speed_mps=spec.start_speed_mps
                if spec.start_speed_mps is not None
                else spec.desired_speed_mps,
                desired_speed_mps=spec.desired_speed_mps,
                mode=spec.mode or _MODE_TO_VEHICLE[cfg.system_mode],
                oda_budget_remaining=cfg.oda_budget,
                entry_time_s=spec.entry_time_s,
            )
            out.append(v)
        return out
    half = cfg.corridor.lane_count // 2
    lo, hi = 15.0, 45.0
    vehicles = []
    for i in range(vehicle_count_for(cfg)):
        band = 0 if i % 2 == 0 else half
        lane = band + rng.randrange(half)
        desired = rng.uniform(lo, hi)
        entry = rng.uniform(0.0, cfg.entry_window_s)
        vehicles.append(
            VehicleState(
                elp=1001 + i,
                lane_index=lane,
                pos_m=cfg.driver.vehicle_length_m,
                speed_mps=desired,
                desired_speed_mps=desired,
                mode=_MODE_TO_VEHICLE[cfg.system_mode],
                oda_budget_remaining=cfg.oda_budget,
                entry_time_s=entry,
            )
        )
    return vehicles


def place_rsus(
    corridor: CorridorConfig, channel: ChannelConfig
) -> list[tuple[int, tuple[float, float]]]:
    """Evenly spaced median RSUs covering every corridor point.

    Uses the smallest count whose edge coverage holds and, for two or
    more units, whose spacing keeps a 50 m guard inside the range.
    """
    length, rng_m = corridor.length_m, channel.tx_range_m
    n = 1
    while True:
        covered = length / (2 * n) <= rng_m
        spaced = n == 1 or length / n <= 2 * (rng_m - 50.0)
        if covered and spaced:
            break
        n += 1
    y = corridor.median_y
    return [(i, ((2 * i + 1) * length / (2 * n), y)) for i in range(n)]


class _Sim:
    """One scenario run's working state."""

    def __init__(self, cfg: ScenarioConfig):
        validate_config(cfg)
        self.cfg = cfg
        self.corridor = cfg.corridor
        self.driver = cfg.driver
        self.channel = cfg.channel
        self.dt = cfg.tick_ms / 1000.0
        self.frames_per_tick = round(cfg.tick_ms / cfg.channel.frame_ms)
        self.epoch_ticks = max(
            1, round(cfg.driver.decision_period_s * 1000 / cfg.tick_ms)
        )
        self.st_snapshot_ticks = max(
            1, round(cfg.driver.st_snapshot_period_s * 1000 / cfg.tick_ms)
        )
        self.rsu_placements = place_rsus(cfg.corridor, cfg.channel)
        # 0.1 m coverage guard absorbs the cm rounding of beacon coordinates.
        self.rsus = [
            RsuNode(
                rsu_id, pos, cfg.channel.tx_range_m + 0.1, cfg.corridor, cfg.analytics
            )
            for rsu_id, pos in self.rsu_placements
        ]
        self.chan_rng = ChannelRng(cfg.seed)
        spawn_rng = random.Random(f"{cfg.seed}:spawn")
        self.pending: list[VehicleState] = sorted(
            spawn_vehicles(cfg, spawn_rng), key=lambda v: (v.entry_time_s, v.elp)
        )
        self.vehicle_count = len(self.pending)
        self.active: list[VehicleState] = []
        self.lanes: LaneMap = {
            lane: [] for lane in range(cfg.corridor.lane_count)
        }
        self.st_history = CellHistory(cfg.corridor, cfg.driver.st_cell_m)
        self._st_occupancy = [
            [0.0] * self.st_history.n_cells for _ in range(cfg.corridor.lane_count)
        ]
        self._st_occupancy_ticks = 0
        self.traversals: list[Traversal] = []
        self.odas_issued = 0
        self.odas_answered = 0
        self.changes_attempted = 0
        self.changes_aborted = 0
        self.beacons_sent = 0
        self.beacon_receptions = 0
        self.beacon_potential = 0
        self.audit_overlaps = 0
        self.audit_speed = 0
        self.trajectories: list[tuple[float, int, int, float, float]] | None = (
            [] if cfg.record_trajectories else None
        )

    # -- geometry helpers ------------------------------------------------

    def _world_pos(self, v: VehicleState) -> tuple[float, float]:
        direction = self.corridor.direction_of_lane(v.lane_index)
        return (
            self.corridor.world_x(v.pos_m, direction),
            self.corridor.y_of_lane(v.lane_index),
        )

    def _make_beacon(self, v: VehicleState, now_ms: int) -> Beacon:
        direction = self.corridor.direction_of_lane(v.lane_index)
        x, y = self._world_pos(v)
        return Beacon(
            seq=v.seq,
            interval_ms=BEACON_INTERVAL_MS,
            timestamp_ms=now_ms,
            elp=v.elp,
            pos_x_cm=round(x * 100),
            pos_y_cm=round(y * 100),
            speed_cms=direction * round(v.speed_mps * 100),
            dir_cdeg=9000 if direction > 0 else 27000,
            max_p_cdbm=_BEACON_MAX_P_CDBM,
            min_p_cdbm=_BEACON_MIN_P_CDBM,
            pow_u_cdbm=_BEACON_POW_U_CDBM,
        )

    # -- per-tick stages -------------------------------------------------

    def _admit(self, now_s: float) -> None:
        admitted = []
        for v in self.pending:
            if v.entry_time_s > now_s:
                break
            entries = self.lanes[v.lane_index]
            pos = v.pos_m
            leader = None
            follower = None
            for w in entries:
                if w.pos_m > pos:
                    leader = w
                    break
                follower = w
            if (
                leader is not None
                and leader.pos_m - self.driver.vehicle_length_m - pos
                < self.driver.min_gap_m
            ):
                continue
            if (
                follower is not None
                and pos - self.driver.vehicle_length_m - follower.pos_m
                < self.driver.min_gap_m
            ):
                continue
            if v.recent_speeds is None:
                if leader is not None and (
                    leader.pos_m - pos <= self.corridor.visual_range_m
                ):
                    v.speed_mps = min(v.speed_mps, leader.speed_mps)
                v.recent_speeds = deque(maxlen=self.cfg.analytics.window_capacity)
            v.traversal_start_s = max(now_s, v.entry_time_s)
            insort(entries, v, key=lambda w: w.pos_m)
            self.active.append(v)
            admitted.append(v)
        for v in admitted:
            self.pending.remove(v)

    def _beacon_stage(self, tick: int, now_ms: int) -> None:
        n = len(self.active)
        if n == 0 or not self.rsus:
            return
        self.beacons_sent += n
        xs = np.empty(n)
        ys = np.empty(n)
        elps = np.empty(n, dtype=np.uint64)
        for i, v in enumerate(self.active):
            x, y = self._world_pos(v)
            xs[i], ys[i], elps[i] = x, y, v.elp
            v.recent_speeds.append(v.speed_mps)
        offsets = (elps % np.uint64(self.frames_per_tick)).astype(np.int64)
        slots_per_frame = self.channel.slots_per_frame
        beacon_cache: dict[int, Beacon] = {}
        frame_members = [
            np.nonzero(offsets == k)[0] for k in range(self.frames_per_tick)
        ]
        frame_slots = [
            assign_slot_array(elps[idx], tick * self.frames_per_tick + k, self.channel)
            for k, idx in enumerate(frame_members)
        ]
        for rsu in self.rsus:
            rx, ry = rsu.position
            dist = np.hypot(xs - rx, ys - ry)
            in_range = dist <= self.channel.tx_range_m
            self.beacon_potential += int(in_range.sum())
            probs = delivery_probability(dist, self.channel)
            for k in range(self.frames_per_tick):
                idx = frame_members[k]
                if idx.size == 0:
                    continue
                frame_index = tick * self.frames_per_tick + k
                mask = in_range[idx]
                slots = frame_slots[k]
                counts = np.bincount(slots[mask], minlength=slots_per_frame)
                uniforms = self.chan_rng.uniform_array(
                    frame_index, rsu.rsu_id, last=elps[idx]
                )
                delivered = mask & (counts[slots] == 1) & (uniforms < probs[idx])
                for j in np.nonzero(delivered)[0]:
                    i = int(idx[j])
                    b = beacon_cache.get(i)
                    if b is None:
                        b = beacon_cache[i] = self._make_beacon(self.active[i], now_ms)
                    rsu.ingest_beacon(b, now_ms)
                    self.beacon_receptions += 1
        for v in self.active:
            v.seq += 1

    def _decide_target(self, v: VehicleState, now_ms: int, tick: int) -> int | None:
        """Lane-change target for one decider, by its policy.

        Assisted vehicles ask the RSU only about gaps they are already
        contemplating (lanes their own eyes rank above the current
        one), and the verdicts then select among or veto those wishes;
        with no contemplated move, no analysis is spent.  Any failure
        to obtain advice falls back to the visual decision.
        """
        choices = sense_choices(v, self.lanes, self.corridor, self.driver)
        if not choices:
            return None
        if v.mode is VehicleMode.ST_BASELINE:
            try:
                return st_baseline_decision(
                    v, self.st_history, self.corridor, self.driver
                )
            except InsufficientHistory:
                pass
        wanted = attractive_lanes(v, choices, self.lanes, self.corridor, self.driver)
        if not wanted:
            return None
        myopic = wanted[0]
        if v.mode is VehicleMode.ASSISTED and v.oda_budget_remaining > 0:
            candidates = [g for g in choices if g.lane_index in wanted]
            target = self._oda_flow(v, candidates, now_ms, tick)
            if target is not _NO_ADVICE:
                return target
        return myopic

    def _oda_flow(
        self, v: VehicleState, choices: list[GapDescriptor], now_ms: int, tick: int
    ):
        """Issue one ODA; returns the advised target or _NO_ADVICE on any loss."""
        pos = self._world_pos(v)
        rsu_id = nearest_rsu(pos, self.rsu_placements, self.channel)
        if rsu_id is None:
            return _NO_ADVICE
        node = self.rsus[rsu_id]
        v.oda_budget_remaining -= 1
        self.odas_issued += 1
        d = math.hypot(pos[0] - node.position[0], pos[1] - node.position[1])
        p = delivery_probability(d, self.channel)
        if self.chan_rng.uniform(tick, _ODA_REQ_SALT + rsu_id, v.elp) >= p:
            return _NO_ADVICE
        acs = sum(v.recent_speeds) / len(v.recent_speeds)
        req = OdaRequest(
            decider_elp=v.elp,
            decider_beacon=self._make_beacon(v, now_ms),
            decider_acs_mps=acs,
            candidate_gaps=choices,
        )
        try:
            resp = node.handle_oda(req, now_ms)
        except UnknownDecider:
            return _NO_ADVICE
        if self.chan_rng.uniform(tick, _ODA_RESP_SALT + rsu_id, v.elp) >= p:
            return _NO_ADVICE
        self.odas_answered += 1
        v.pending_advice = resp
        return assisted_lane_decision(v, resp, now_ms, self.driver)

    def _decision_stage(self, tick: int, now_ms: int) -> None:
        intents: list[tuple[VehicleState, int]] = []
        for v in self.active:
            if (tick + v.elp) % self.epoch_ticks:
                continue
            target = self._decide_target(v, now_ms, tick)
            if target is not None:
                intents.append((v, target))
        intents.sort(key=lambda iv: (-iv[0].pos_m, iv[0].elp))
        for v, target in intents:
            self.changes_attempted += 1
            old_lane = v.lane_index
            if execute_lane_change(v, target, self.lanes, self.corridor, self.driver):
                self.lanes[old_lane].remove(v)
                insort(self.lanes[target], v, key=lambda w: w.pos_m)
            else:
                self.changes_aborted += 1

    def _motion_stage(self, now_s: float) -> None:
        length = self.corridor.length_m
        min_gap = self.driver.min_gap_m
        veh_len = self.driver.vehicle_length_m
        for lane, entries in self.lanes.items():
            if not entries:
                continue
            snapshot = [(v.pos_m, v.speed_mps) for v in entries]
            for i, v in enumerate(entries):
                if i + 1 < len(entries):
                    leader_pos, leader_speed = snapshot[i + 1]
                else:
                    leader_pos = leader_speed = None
                v.speed_mps, v.pos_m = idm_step(
                    snapshot[i][1],
                    snapshot[i][0],
                    v.desired_speed_mps,
                    leader_speed,
                    leader_pos,
                    self.dt,
                    self.driver,
                )
            for i in range(len(entries) - 1):
                if entries[i + 1].pos_m - veh_len - entries[i].pos_m < min_gap - 1e-9:
                    self.audit_overlaps += 1
            for v in entries:
                if not -1e-9 <= v.speed_mps <= 45.0 + 1e-9:
                    self.audit_speed += 1
            while entries and entries[-1].pos_m >= length:
                v = entries.pop()
                prev_pos, prev_speed = v.pos_m, v.speed_mps
                advance = max(prev_speed * self.dt, 1e-9)
                overshoot = min(prev_pos - length, advance)
                exit_s = now_s + self.dt - self.dt * overshoot / advance
                direction = self.corridor.direction_of_lane(lane)
                self.traversals.append(
                    Traversal(v.elp, direction, v.traversal_start_s, exit_s)
                )
                self.active.remove(v)
                v.pos_m = veh_len
                v.speed_mps = v.desired_speed_mps
                v.entry_time_s = now_s + self.dt
                v.recent_speeds = None
                v.pending_advice = None
                self.pending.append(v)
        self.pending.sort(key=lambda v: (v.entry_time_s, v.elp))

    def _accumulate_st_occupancy(self) -> None:
        # Loop-detector-grade ground truth for the spatiotemporal comparator:
        # occupancy is integrated over the snapshot period, not sampled, so a
        # cell's density reflects all traffic that moved through it.
        cell_m = self.st_history.cell_m
        n_cells = self.st_history.n_cells
        acc = self._st_occupancy
        for v in self.active:
            direction = self.corridor.direction_of_lane(v.lane_index)
            x = self.corridor.world_x(v.pos_m, direction)
            cell = min(max(int(x / cell_m), 0), n_cells - 1)
            acc[v.lane_index][cell] += 1.0
        self._st_occupancy_ticks += 1

    def _record_st_density(self) -> None:
        ticks = max(self._st_occupancy_ticks, 1)
        cell_m = self.st_history.cell_m
        grid = [
            [count / (ticks * cell_m) for count in row] for row in self._st_occupancy
        ]
        self.st_history.record(grid)
        self._st_occupancy = [
            [0.0] * self.st_history.n_cells for _ in range(self.corridor.lane_count)
        ]
        self._st_occupancy_ticks = 0

    def run(self) -> RunMetrics:
        ticks = round(self.cfg.duration_s * 1000 / self.cfg.tick_ms)
        st_mode = self.cfg.system_mode is SystemMode.ST_BASELINE
        for tick in range(ticks):
            now_s = tick * self.dt
            now_ms = tick * self.cfg.tick_ms
            self._admit(now_s)
            self._beacon_stage(tick, now_ms)
            for rsu in self.rsus:
                rsu.expire_stale(now_ms)
            if st_mode:
                self._accumulate_st_occupancy()
                if (tick + 1) % self.st_snapshot_ticks == 0:
                    self._record_st_density()
            self._decision_stage(tick, now_ms)
            self._motion_stage(now_s)
            if self.trajectories is not None:
                for v in self.active:
                    self.trajectories.append(
                        (now_s + self.dt, v.elp, v.lane_index, v.pos_m, v.speed_mps)
                    )
        return RunMetrics(
            traversals=self.traversals,
            vehicle_count=self.vehicle_count,
            odas_issued=self.odas_issued,
            odas_answered=self.odas_answered,
            lane_changes_attempted=self.changes_attempted,
            lane_changes_aborted=self.changes_aborted,
            beacons_sent=self.beacons_sent,
            beacon_receptions=self.beacon_receptions,
            beacon_potential=self.beacon_potential,
            audit_overlap_events=self.audit_overlaps,
            audit_speed_violations=self.audit_speed,
            trajectories=self.trajectories,
        )


_NO_ADVICE = object()


def run_scenario(cfg: ScenarioConfig) -> RunMetrics:
    """Execute one seeded scenario; bit-identical for identical configs."""
    return _Sim(cfg).run()


def audit_trajectories(
    rows: list[tuple[float, int, int, float, float]],
    corridor: CorridorConfig,
    driver: DriverParams,
) -> tuple[int, int]:
    """Recount overlap and speed-bound violations from recorded trajectories."""
    overlaps = 0
    speeding = 0
    by_tick: dict[float, dict[int, list[tuple[float, int]]]] = {}
    for now_s, elp, lane, pos, speed in rows:
        by_tick.setdefault(now_s, {}).setdefault(lane, []).append((pos, elp))
        if not -1e-9 <= speed <= 45.0 + 1e-9:
            speeding += 1
    for lanes in by_tick.values():
        for positions in lanes.values():
            positions.sort()
            for (a, _), (b, _) in zip(positions, positions[1:]):
                if b - driver.vehicle_length_m - a < driver.min_gap_m - 1e-9:
                    overlaps += 1
    return overlaps, speeding


# -- serialization -----------------------------------------------------------

METRICS_CSV_COLUMNS = ["record", "elp", "direction", "entry_s", "exit_s", "travel_time_s"]


def metrics_to_csv(metrics: RunMetrics) -> str:
    """One row per traversal plus a trailing summary row.

    Leading ``#`` lines carry the run counters as key/value comments.
    """
    buf = io.StringIO()
    for key in (
        "vehicle_count",
        "odas_issued",
        "odas_answered",
        "lane_changes_attempted",
        "lane_changes_aborted",
        "beacons_sent",
        "beacon_receptions",
        "beacon_potential",
        "audit_overlap_events",
        "audit_speed_violations",
    ):
        buf.write(f"# {key} {getattr(metrics, key)}\n")
    buf.write(f"# beacon_delivery_ratio {metrics.beacon_delivery_ratio:.6f}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_CSV_COLUMNS)
    for t in metrics.traversals:
        writer.writerow(
            [
                "traversal",
                t.elp,
                t.direction,
                f"{t.entry_s:.6f}",
                f"{t.exit_s:.6f}",
                f"{t.travel_time_s:.6f}",
            ]
        )
    mean = metrics.mean_travel_time_s
    writer.writerow(
        [
            "summary",
            len(metrics.traversals),
            "",
            "",
            "",
            "" if mean is None else f"{mean:.6f}",
        ]
    )
    return buf.getvalue()


def write_metrics_csv(metrics: RunMetrics, path: str | Path) -> None:
    Path(path).write_text(metrics_to_csv(metrics))


_CONFIG_KEYS: dict[str, tuple[tuple[str, ...], object]] = {
    "duration_s": (("duration_s",), float),
    "max_vehicles": (("max_vehicles",), int),
    "density": (("density",), Density),
    "vehicle_count": (("vehicle_count",), int),
    "mode": (("system_mode",), SystemMode),
    "oda_budget": (("oda_budget",), int),
    "seed": (("seed",), int),
    "tick_ms": (("tick_ms",), int),
    "entry_window_s": (("entry_window_s",), float),
    "corridor.length_m": (("corridor", "length_m"), float),
    "corridor.lane_count": (("corridor", "lane_count"), int),
    "corridor.lane_width_m": (("corridor", "lane_width_m"), float),
    "corridor.visual_range_m": (("corridor", "visual_range_m"), float),
    "channel.tx_range_m": (("channel", "tx_range_m"), float),
    "channel.slots_per_frame": (("channel", "slots_per_frame"), int),
    "channel.slot_ms": (("channel", "slot_ms"), float),
    "channel.nakagami_m": (("channel", "nakagami_m"), float),
    "channel.path_loss_exponent": (("channel", "path_loss_exponent"), float),
    "channel.data_rate_mbps": (("channel", "data_rate_mbps"), float),
    "channel.delivery_at_range": (("channel", "delivery_at_range"), float),
    "analytics.avsud_threshold": (("analytics", "avsud_threshold"), float),
    "analytics.brake_decel_mps2": (("analytics", "sudden", "brake_decel_mps2"), float),
    "analytics.high_speed_mps": (("analytics", "sudden", "high_speed_mps"), float),
    "analytics.window_capacity": (("analytics", "window_capacity"), int),
    "analytics.window_stale_ms": (("analytics", "window_stale_ms"), int),
    "analytics.neighborhood_radius_m": (
        ("analytics", "neighborhood_radius_m"),
        float,
    ),
    "analytics.expiry_ms": (("analytics", "expiry_ms"), int),
    "driver.accel_max_mps2": (("driver", "accel_max_mps2"), float),
    "driver.decel_comfort_mps2": (("driver", "decel_comfort_mps2"), float),
    "driver.headway_s": (("driver", "headway_s"), float),
    "driver.min_gap_m": (("driver", "min_gap_m"), float),
    "driver.vehicle_length_m": (("driver", "vehicle_length_m"), float),
    "driver.decision_period_s": (("driver", "decision_period_s"), float),
    "driver.density_hysteresis": (("driver", "density_hysteresis"), float),
    "driver.advice_staleness_ms": (("driver", "advice_staleness_ms"), int),
    "driver.st_cell_m": (("driver", "st_cell_m"), float),
    "driver.st_horizon_m": (("driver", "st_horizon_m"), float),
}


def load_config(path: str | Path) -> ScenarioConfig:
    """Parse the plain-text ``key = value`` scenario file."""
    cfg = ScenarioConfig()
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise InvalidConfig(f"line {lineno}: unknown key {key!r}")
        attr_path, kind = _CONFIG_KEYS[key]
        target = cfg
        for attr in attr_path[:-1]:
            target = getattr(target, attr)
        try:
            if kind is Density:
                parsed: object = Density(value.lower())
            elif kind is SystemMode:
                parsed = SystemMode(value.lower())
            elif kind is int:
                parsed = int(value)
            else:
                parsed = float(value)
        except ValueError as exc:
            raise InvalidConfig(f"line {lineno}: bad value for {key}: {value!r}") from exc
        setattr(target, attr_path[-1], parsed)
    validate_config(cfg)
    return cfg


def save_config(cfg: ScenarioConfig, path: str | Path) -> None:
    lines = []
    for key, (attr_path, kind) in _CONFIG_KEYS.items():
        target = cfg
        for attr in attr_path:
            target = getattr(target, attr)
        if target is None:
            continue
        if isinstance(target, Enum):
            target = target.value
        lines.append(f"{key} = {target}")
    Path(path).write_text("\n".join(lines) + "\n")


def off_config(cfg: ScenarioConfig) -> ScenarioConfig:
    """The matched-seed control: same scenario with the system off."""
    return replace(cfg, system_mode=SystemMode.OFF)
