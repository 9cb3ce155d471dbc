"""Microscopic vehicle dynamics on a two-way six-lane corridor.

Longitudinal motion follows an IDM-style car-following law; lateral
motion is a choice among sensed adjacent-lane gaps, made by one of
three policies: the myopic visual baseline, the RSU-advised assisted
policy, and a cell-density extrapolation stand-in for spatiotemporal
prediction.

Coordinates: each vehicle tracks ``pos_m`` as progress along its own
direction of travel (0 at its entry portal, corridor length at exit).
Lanes 0..lane_count/2-1 run in +x, the rest in -x, so world x is
``pos_m`` or ``length - pos_m`` depending on the band.  Wire-facing
positions (beacons, gap descriptors) are always world coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .rsu import OdaResponse

SPEED_CAP_MPS = 45.0
DESIRED_SPEED_RANGE_MPS = (15.0, 45.0)
MAX_ODA_BUDGET = 50


class StaleAdvice(ValueError):
    """RSU advice is older than the staleness bound; fall back to eyes."""


class InsufficientHistory(ValueError):
    """Cell-density extrapolation needs at least two past epochs."""


class VehicleMode(Enum):
    BASELINE = "baseline"
    ASSISTED = "assisted"
    ST_BASELINE = "st_baseline"


@dataclass
class CorridorConfig:
    length_m: float = 1000.0
    lane_count: int = 6
    lane_width_m: float = 3.5
    visual_range_m: float = 60.0

    def validate(self) -> None:
        if self.length_m <= 0:
            raise ValueError("length_m must be positive")
        if self.lane_count < 2 or self.lane_count % 2:
            raise ValueError("lane_count must be even and >= 2")
        if self.lane_width_m <= 0:
            raise ValueError("lane_width_m must be positive")
        if self.visual_range_m <= 0:
            raise ValueError("visual_range_m must be positive")

    def direction_of_lane(self, lane: int) -> int:
        return 1 if lane < self.lane_count // 2 else -1

    def same_direction_lanes(self, lane: int) -> range:
        half = self.lane_count // 2
        return range(0, half) if lane < half else range(half, self.lane_count)

    def y_of_lane(self, lane: int) -> float:
        return (lane + 0.5) * self.lane_width_m

    def lane_of_y(self, y: float) -> int:
        return min(max(int(y / self.lane_width_m), 0), self.lane_count - 1)

    def world_x(self, progress_m: float, direction: int) -> float:
        return progress_m if direction > 0 else self.length_m - progress_m

    @property
    def median_y(self) -> float:
        return self.lane_count / 2 * self.lane_width_m


@dataclass
class DriverParams:
    """Car-following and lane-change behavior knobs."""

    accel_max_mps2: float = 1.5
    decel_comfort_mps2: float = 2.0
    headway_s: float = 1.2
    min_gap_m: float = 2.0
    vehicle_length_m: float = 4.0
    decision_period_s: float = 2.0
    density_hysteresis: float = 0.10
    advice_staleness_ms: int = 500
    merge_lead_gap_m: float = 2.0
    merge_lag_gap_m: float = 2.0
    st_cell_m: float = 100.0
    st_horizon_m: float = 200.0
    st_hysteresis: float = 0.30
    st_snapshot_period_s: float = 0.5

    @property
    def min_merge_space_m(self) -> float:
        return self.vehicle_length_m + self.merge_lead_gap_m + self.merge_lag_gap_m


@dataclass(slots=True)
class VehicleState:
    """One simulated vehicle.

    Fields below ``entry_time_s`` are run bookkeeping maintained by the
    simulation engine, not part of the kinematic state proper.
    """

    elp: int
    lane_index: int
    pos_m: float
    speed_mps: float
    desired_speed_mps: float
    mode: VehicleMode = VehicleMode.BASELINE
    oda_budget_remaining: int = MAX_ODA_BUDGET
    pending_advice: "OdaResponse | None" = None
    entry_time_s: float = 0.0
    seq: int = 0
    traversal_start_s: float = 0.0
    recent_speeds: object = None


@dataclass
class GapDescriptor:
    """A vacant stretch of an adjacent lane the decider could occupy.

    ``center_pos_m`` is the world-x coordinate of the free space's
    midpoint, so descriptors are meaningful to RSUs as-is.
    """

    choice_id: int
    lane_index: int
    center_pos_m: float
    length_m: float


LaneMap = dict[int, list[VehicleState]]


def build_lane_map(vehicles: list[VehicleState]) -> LaneMap:
    lanes: LaneMap = {}
    for v in vehicles:
        lanes.setdefault(v.lane_index, []).append(v)
    for entries in lanes.values():
        entries.sort(key=lambda v: v.pos_m)
    return lanes


def idm_accel(
    speed: float,
    desired: float,
    leader_speed: float | None,
    gap: float | None,
    p: DriverParams,
) -> float:
    """Car-following acceleration demand; ``gap`` is the bumper gap."""
    r = speed / desired
    r2 = r * r
    acc = p.accel_max_mps2 * (1.0 - r2 * r2)
    if gap is not None:
        dv = speed - leader_speed
        s_star = p.min_gap_m + max(
            0.0,
            speed * p.headway_s
            + speed * dv / (2.0 * math.sqrt(p.accel_max_mps2 * p.decel_comfort_mps2)),
        )
        ratio = s_star / max(gap, 0.01)
        acc -= p.accel_max_mps2 * ratio * ratio
    return acc


def idm_step(
    speed: float,
    pos: float,
    desired: float,
    leader_speed: float | None,
    leader_pos: float | None,
    dt_s: float,
    p: DriverParams,
) -> tuple[float, float]:
    """One car-following update; returns (new_speed, new_pos).

    Positions are front-bumper progress.  The advance is capped so the
    bumper gap to the leader's pre-step position never drops below
    ``min_gap_m``; since leaders never move backward this keeps lanes
    overlap-free under synchronous updates.
    """
    gap = None
    if leader_pos is not None:
        gap = leader_pos - p.vehicle_length_m - pos
    acc = idm_accel(speed, desired, leader_speed, gap, p)
    new_speed = speed + acc * dt_s
    if new_speed < 0.0:
        new_speed = 0.0
    elif new_speed > desired:
        new_speed = desired
    advance = (speed + new_speed) * 0.5 * dt_s
    if gap is not None:
        allowed = gap - p.min_gap_m
        if advance > allowed:
            advance = max(allowed, 0.0)
            new_speed = max(0.0, 2.0 * advance / dt_s - speed)
    return new_speed, pos + advance


def step_longitudinal(
    v: VehicleState,
    leader: VehicleState | None,
    dt_s: float,
    p: DriverParams | None = None,
) -> VehicleState:
    """Advance one vehicle, honoring its leader; returns a new state."""
    if dt_s <= 0:
        raise ValueError("dt_s must be positive")
    p = p or DriverParams()
    new_speed, new_pos = idm_step(
        v.speed_mps,
        v.pos_m,
        v.desired_speed_mps,
        leader.speed_mps if leader else None,
        leader.pos_m if leader else None,
        dt_s,
        p,
    )
    return VehicleState(
        elp=v.elp,
        lane_index=v.lane_index,
        pos_m=new_pos,
        speed_mps=new_speed,
        desired_speed_mps=v.desired_speed_mps,
        mode=v.mode,
        oda_budget_remaining=v.oda_budget_remaining,
        pending_advice=v.pending_advice,
        entry_time_s=v.entry_time_s,
        seq=v.seq,
        traversal_start_s=v.traversal_start_s,
        recent_speeds=v.recent_speeds,
    )


def idm_equilibrium_gap(speed: float, desired: float, p: DriverParams) -> float:
    """Steady-state bumper gap at a given follower speed (0 < speed < desired)."""
    s_star = p.min_gap_m + speed * p.headway_s
    r = speed / desired
    r2 = r * r
    return s_star / math.sqrt(1.0 - r2 * r2)


def _free_intervals(
    occupants: list[VehicleState], lo: float, hi: float, veh_len: float
) -> list[tuple[float, float]]:
    """Unoccupied sub-intervals of [lo, hi] given front-bumper positions."""
    spans = []
    cursor = lo
    for w in occupants:
        rear, front = w.pos_m - veh_len, w.pos_m
        if front <= lo or rear >= hi:
            continue
        if rear > cursor:
            spans.append((cursor, rear))
        cursor = max(cursor, front)
    if cursor < hi:
        spans.append((cursor, hi))
    return spans


def sense_choices(
    v: VehicleState,
    lanes: LaneMap,
    corridor: CorridorConfig,
    p: DriverParams,
) -> list[GapDescriptor]:
    """Free spaces in adjacent same-direction lanes within sight.

    A space qualifies when it could hold the vehicle with ``min_gap_m``
    clearance fore and aft.  Ordered by lane then position; choice ids
    number that ordering.
    """
    direction = corridor.direction_of_lane(v.lane_index)
    band = corridor.same_direction_lanes(v.lane_index)
    lo = max(v.pos_m - corridor.visual_range_m, 0.0)
    hi = min(v.pos_m + corridor.visual_range_m, corridor.length_m)
    gaps: list[GapDescriptor] = []
    for lane in (v.lane_index - 1, v.lane_index + 1):
        if lane not in band:
            continue
        for a, b in _free_intervals(lanes.get(lane, []), lo, hi, p.vehicle_length_m):
            if b - a >= p.min_merge_space_m:
                center = corridor.world_x((a + b) / 2.0, direction)
                gaps.append(
                    GapDescriptor(
                        choice_id=0,
                        lane_index=lane,
                        center_pos_m=center,
                        length_m=b - a,
                    )
                )
    gaps.sort(key=lambda g: (g.lane_index, g.center_pos_m))
    for i, g in enumerate(gaps):
        g.choice_id = i
    return gaps


def _visible_downstream_density(
    v: VehicleState, lane: int, lanes: LaneMap, corridor: CorridorConfig
) -> float:
    """Vehicles per meter ahead of ``v`` in ``lane``, within sight only."""
    hi = min(v.pos_m + corridor.visual_range_m, corridor.length_m)
    count = sum(
        1 for w in lanes.get(lane, []) if w is not v and v.pos_m < w.pos_m <= hi
    )
    return count / corridor.visual_range_m


def attractive_lanes(
    v: VehicleState,
    choices: list[GapDescriptor],
    lanes: LaneMap,
    corridor: CorridorConfig,
    p: DriverParams,
) -> list[int]:
    """Gap lanes whose visible downstream density beats the current lane.

    Candidates must clear the hysteresis margin; the result is ordered
    best-looking first (lowest density, then lower lane index).  This
    is what the driver's eyes alone would contemplate moving into.
    """
    current = _visible_downstream_density(v, v.lane_index, lanes, corridor)
    bar = current * (1.0 - p.density_hysteresis)
    scored = sorted(
        (_visible_downstream_density(v, lane, lanes, corridor), lane)
        for lane in {g.lane_index for g in choices}
    )
    return [lane for density, lane in scored if density < bar]


def baseline_lane_decision(
    v: VehicleState,
    choices: list[GapDescriptor],
    lanes: LaneMap,
    corridor: CorridorConfig,
    p: DriverParams,
) -> int | None:
    """Myopic driver: pick the sensed lane that looks emptiest ahead.

    Only traffic within visual range counts, which is exactly the
    failure mode the assisted policy is meant to correct.  Stays put
    unless the best candidate beats the current lane's visible density
    by the hysteresis margin.
    """
    if not choices:
        return None
    ranked = attractive_lanes(v, choices, lanes, corridor, p)
    return ranked[0] if ranked else None


def assisted_lane_decision(
    v: VehicleState,
    advice: "OdaResponse",
    now_ms: int,
    p: DriverParams,
) -> int | None:
    """Follow the RSU: move to the best Preferred gap, else stay put."""
    from .analytics import Decision

    if now_ms - advice.issued_at_ms > p.advice_staleness_ms:
        raise StaleAdvice(
            f"advice issued at {advice.issued_at_ms} ms is stale at {now_ms} ms"
        )
    for verdict in advice.verdicts:
        if verdict.decision is Decision.PREFERRED:
            return verdict.lane_index
    return None


class CellHistory:
    """Per-lane, per-cell vehicle density snapshots, newest last.

    Feeds the spatiotemporal stand-in policy: each lane is split into
    fixed cells and densities are linearly extrapolated one epoch ahead
    from the last two snapshots.
    """

    def __init__(self, corridor: CorridorConfig, cell_m: float = 100.0):
        self.cell_m = cell_m
        self.n_cells = max(1, math.ceil(corridor.length_m / cell_m))
        self.lane_count = corridor.lane_count
        self.snapshots: list[list[list[float]]] = []

    def record(self, densities: list[list[float]]) -> None:
        if len(densities) != self.lane_count or any(
            len(row) != self.n_cells for row in densities
        ):
            raise ValueError("density grid shape mismatch")
        self.snapshots.append(densities)
        del self.snapshots[:-2]

    @property
    def ready(self) -> bool:
        return len(self.snapshots) >= 2

    def predicted(self, lane: int, cell: int) -> float:
        prev, last = self.snapshots[-2][lane][cell], self.snapshots[-1][lane][cell]
        return max(0.0, 2.0 * last - prev)


def st_baseline_decision(
    v: VehicleState,
    history: CellHistory,
    corridor: CorridorConfig,
    p: DriverParams,
) -> int | None:
    """Cell-density extrapolation policy (simplified spatiotemporal baseline).

    Scores each same-direction lane (current and adjacent) by the mean
    predicted density of the cells covering the next ``st_horizon_m``
    downstream, then behaves like the baseline chooser on those scores:
    change only when the best adjacent lane beats the current one by
    the hysteresis margin; ties keep the current lane.  The decider's
    own contribution to its current cell is discounted so occupying a
    cell does not by itself make the lane look worth leaving.
    """
    if not history.ready:
        raise InsufficientHistory("need two density snapshots")
    direction = corridor.direction_of_lane(v.lane_index)
    band = corridor.same_direction_lanes(v.lane_index)
    x = corridor.world_x(v.pos_m, direction)
    lo_x, hi_x = sorted((x, x + direction * p.st_horizon_m))
    first = max(0, int(lo_x / history.cell_m))
    last = min(history.n_cells - 1, int(math.ceil(hi_x / history.cell_m)) - 1)
    cells = range(first, last + 1)
    own_cell = min(max(int(x / history.cell_m), 0), history.n_cells - 1)

    def score(lane: int) -> float:
        if not cells:
            return 0.0
        total = 0.0
        for c in cells:
            predicted = history.predicted(lane, c)
            if lane == v.lane_index and c == own_cell:
                predicted = max(0.0, predicted - 1.0 / history.cell_m)
            total += predicted
        return total / len(cells)

    current = score(v.lane_index)
    best: tuple[float, int] | None = None
    for lane in (v.lane_index - 1, v.lane_index + 1):
        if lane in band:
            s = score(lane)
            if best is None or (s, lane) < best:
                best = (s, lane)
    if best is None or best[0] >= current * (1.0 - p.st_hysteresis):
        return None
    return best[1]


def execute_lane_change(
    v: VehicleState,
    target_lane: int,
    lanes: LaneMap,
    corridor: CorridorConfig,
    p: DriverParams,
) -> bool:
    """Move ``v`` sideways if the target gap still accepts it.

    Mutates ``v.lane_index`` and returns True on success; returns False
    (state untouched) when the target is not an adjacent same-direction
    lane or the space has closed since the decision.  The caller owns
    the lane map and must reindex after a successful change.
    """
    if abs(target_lane - v.lane_index) != 1:
        return False
    if target_lane not in corridor.same_direction_lanes(v.lane_index):
        return False
    leader_pos = None
    follower_pos = None
    for w in lanes.get(target_lane, []):
        if w.pos_m > v.pos_m:
            if leader_pos is None or w.pos_m < leader_pos:
                leader_pos = w.pos_m
        elif follower_pos is None or w.pos_m > follower_pos:
            follower_pos = w.pos_m
    lead_need = max(p.min_gap_m, p.merge_lead_gap_m)
    lag_need = max(p.min_gap_m, p.merge_lag_gap_m)
    if leader_pos is not None and leader_pos - p.vehicle_length_m - v.pos_m < lead_need:
        return False
    if (
        follower_pos is not None
        and v.pos_m - p.vehicle_length_m - follower_pos < lag_need
    ):
        return False
    v.lane_index = target_lane
    return True
