"""Speed and driver-behavior analytics behind the lane-selection verdicts.

An RSU keeps, per connected vehicle, a short window of beaconed speeds
(ACS = its mean), aggregates those into a fleet average (AAVS), and
tallies sudden actions (hard brakes and high-speed lane changes) into a
normalized score (AvSud).  A candidate lane gap is then judged from two
bits: is the decider faster than the traffic around the gap, and is
that traffic calm or erratic.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum


class EmptyWindow(ValueError):
    """ACS requested from a window holding no samples."""


class EmptyFleet(ValueError):
    """AAVS requested for a fleet snapshot with no vehicles."""


class TooShort(ValueError):
    """Sudden-event detection needs at least two trajectory points."""


class ZeroObservations(ValueError):
    """AvSud requested with no observation intervals."""


class AvSudClass(Enum):
    LOW = "low"
    HIGH = "high"


class Decision(Enum):
    """Verdict for one candidate gap.

    A gap is preferred only for a decider faster than the traffic
    around it (slower deciders lose the spot to others) and only when
    that traffic shows no habit of sudden moves.
    """

    NOT_PREFERRED = "not_preferred"
    NOT_PREFERRED_DANGER = "not_preferred_danger"
    PREFERRED = "preferred"


# Sort rank used when ordering verdicts for the decider.
_DECISION_RANK = {
    Decision.PREFERRED: 0,
    Decision.NOT_PREFERRED: 1,
    Decision.NOT_PREFERRED_DANGER: 2,
}

#: Default High/Low split for AvSud: one sudden event per ten intervals.
DEFAULT_AVSUD_THRESHOLD = 0.1


@dataclass
class SuddenEventConfig:
    """Detection gates for sudden driver actions.

    An interval is a sudden brake when deceleration is at least
    ``brake_decel_mps2`` and the interval starts above the high-speed
    gate; a lane change counts only when started above the same gate.
    """

    brake_decel_mps2: float = 4.0
    high_speed_mps: float = 25.0


class SpeedWindow:
    """Recent beaconed speeds of one vehicle, newest last.

    Holds at most ``capacity`` samples; samples older than ``stale_ms``
    relative to the newest are evicted.  Timestamps must be strictly
    increasing and speeds within [0, 45] m/s.
    """

    __slots__ = ("samples", "capacity", "stale_ms")

    def __init__(self, capacity: int = 20, stale_ms: int = 5000):
        self.samples: deque[tuple[int, float]] = deque()
        self.capacity = capacity
        self.stale_ms = stale_ms

    def push(self, timestamp_ms: int, speed_mps: float) -> None:
        if self.samples and timestamp_ms <= self.samples[-1][0]:
            raise ValueError("window timestamps must be strictly increasing")
        if not 0.0 <= speed_mps <= 45.0:
            raise ValueError(f"speed {speed_mps} outside [0, 45] m/s")
        self.samples.append((timestamp_ms, speed_mps))
        while len(self.samples) > self.capacity:
            self.samples.popleft()
        cutoff = timestamp_ms - self.stale_ms
        while self.samples[0][0] < cutoff:
            self.samples.popleft()

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class FleetSnapshot:
    """Per-vehicle ACS values of the vehicles currently considered."""

    entries: list[tuple[int, float]] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.entries)


@dataclass
class SuddenEventCounts:
    """Sudden-action tallies over ``n`` observation intervals."""

    sud_brk: int = 0
    chg_loc: int = 0
    n: int = 0


@dataclass
class AvSudScore:
    value: float
    cls: AvSudClass


@dataclass
class ChoiceVerdict:
    """Judgement for one candidate gap, as returned to the decider."""

    choice_id: int
    lane_index: int
    decision: Decision
    aavs_mps: float | None
    avsud_class: AvSudClass | None


def compute_acs(w: SpeedWindow) -> float:
    """Average current speed: mean of the window's samples."""
    if not w.samples:
        raise EmptyWindow("no speed samples")
    return sum(s for _, s in w.samples) / len(w.samples)


def compute_aavs(f: FleetSnapshot) -> float:
    """Average of all vehicles' speed: mean of per-vehicle ACS."""
    if f.n == 0:
        raise EmptyFleet("no vehicles in snapshot")
    return sum(acs for _, acs in f.entries) / f.n


def analyse_speed(acs: float, aavs: float) -> bool:
    """True iff the decider is strictly faster than the fleet average."""
    return acs > aavs


def detect_sudden_events(
    traj: list[tuple[int, float, int]], cfg: SuddenEventConfig
) -> SuddenEventCounts:
    """Count sudden brakes and high-speed lane changes over a trajectory.

    ``traj`` is a list of (timestamp_ms, speed_mps, lane_index) with
    strictly increasing timestamps.  Both event kinds are gated on the
    speed at the start of the interval in which they occur.
    """
    if len(traj) < 2:
        raise TooShort("need at least two trajectory points")
    counts = SuddenEventCounts()
    prev_ts, prev_speed, prev_lane = traj[0]
    for ts, speed, lane in traj[1:]:
        if ts <= prev_ts:
            raise ValueError("trajectory timestamps must be strictly increasing")
        counts.n += 1
        if prev_speed > cfg.high_speed_mps:
            decel = (prev_speed - speed) * 1000.0 / (ts - prev_ts)
            if decel >= cfg.brake_decel_mps2:
                counts.sud_brk += 1
            if lane != prev_lane:
                counts.chg_loc += 1
        prev_ts, prev_speed, prev_lane = ts, speed, lane
    return counts


def compute_avsud(
    c: SuddenEventCounts, threshold: float = DEFAULT_AVSUD_THRESHOLD
) -> AvSudScore:
    """Normalized sudden-action score with its High/Low classification."""
    if c.n == 0:
        raise ZeroObservations("no observation intervals")
    value = c.sud_brk / c.n + c.chg_loc / c.n
    cls = AvSudClass.HIGH if value >= threshold else AvSudClass.LOW
    return AvSudScore(value=value, cls=cls)


def decide(faster: bool, avsud_class: AvSudClass) -> Decision:
    """The four-row decision matrix combining speed and behavior."""
    if not faster:
        return Decision.NOT_PREFERRED
    if avsud_class is AvSudClass.HIGH:
        return Decision.NOT_PREFERRED_DANGER
    return Decision.PREFERRED


def rank_choices(
    verdicts: list[ChoiceVerdict], decider_lane: int
) -> list[ChoiceVerdict]:
    """Order verdicts best-first for the decider.

    Preferred gaps come first, then merely not-preferred, then
    possible-danger ones; ties break on fewer lane crossings from the
    decider's lane, then on lower choice id.  Stable and deterministic.
    """
    if not verdicts:
        raise ValueError("verdicts must be nonempty")
    return sorted(
        verdicts,
        key=lambda v: (
            _DECISION_RANK[v.decision],
            abs(v.lane_index - decider_lane),
            v.choice_id,
        ),
    )
