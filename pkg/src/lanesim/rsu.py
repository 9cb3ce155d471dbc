"""Roadside unit: beacon ingestion, fleet analytics, on-demand analysis.

An RSU registers every vehicle it hears, maintains per-vehicle speed
windows and sudden-action tallies from the 10 Hz beacon stream, and
answers a decider's on-demand analysis (ODA) request with one ranked
verdict per candidate gap.

ODA messages travel as 512-byte non-safety messages reusing the beacon
header.  Request piggyback layout (big-endian):

  u8 type=1 | u16 acs_cms | u8 gap_count |
  gap_count * (u8 choice_id | u8 lane | i32 center_cm | u32 length_cm)

with the header carrying the decider's own beacon fields.  Response
piggyback layout, header carrying the RSU identity and issue time:

  u8 type=2 | u64 decider_elp | u8 verdict_count |
  verdict_count * (u8 choice_id | u8 lane | u8 decision | u8 avsud | i32 aavs_cms)

where avsud is 0=Low, 1=High, 2=not computed, and aavs_cms is -1 when
the gap's neighborhood was empty.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

from .analytics import (
    AvSudClass,
    ChoiceVerdict,
    Decision,
    FleetSnapshot,
    SpeedWindow,
    SuddenEventConfig,
    SuddenEventCounts,
    analyse_speed,
    compute_aavs,
    compute_acs,
    decide,
    rank_choices,
    DEFAULT_AVSUD_THRESHOLD,
)
from .beacon import (
    Beacon,
    InvalidField,
    MalformedBeacon,
    NON_SAFETY_MESSAGE_SIZE,
    decode_message,
    encode_message,
)
from .mobility import CorridorConfig, GapDescriptor


class OutOfRange(ValueError):
    """Beacon offered to an RSU from beyond its coverage radius."""


class UnknownDecider(KeyError):
    """ODA from a vehicle this RSU has no registration for."""


class NoCandidates(ValueError):
    """ODA carried an empty candidate-gap list."""


@dataclass
class RsuConfig:
    """Analytics knobs applied by an RSU."""

    avsud_threshold: float = DEFAULT_AVSUD_THRESHOLD
    sudden: SuddenEventConfig = field(default_factory=SuddenEventConfig)
    window_capacity: int = 20
    window_stale_ms: int = 5000
    neighborhood_radius_m: float = 100.0
    expiry_ms: int = 1000


@dataclass
class VehicleRecord:
    """What one RSU currently knows about one vehicle."""

    elp: int
    speed_window: SpeedWindow
    last_pos: tuple[float, float]
    last_lane: int
    event_counts: SuddenEventCounts
    last_seq: int
    last_ts_ms: int
    last_speed_mps: float

    def avsud_value(self) -> float:
        """Lifetime sudden-action rate; 0 until two beacons are seen."""
        c = self.event_counts
        if c.n == 0:
            return 0.0
        return c.sud_brk / c.n + c.chg_loc / c.n


@dataclass
class OdaRequest:
    decider_elp: int
    decider_beacon: Beacon
    decider_acs_mps: float
    candidate_gaps: list[GapDescriptor]


@dataclass
class OdaResponse:
    decider_elp: int
    verdicts: list[ChoiceVerdict]
    issued_at_ms: int


class RsuNode:
    """One roadside unit's mutable state and protocol handlers.

    Owned by a single execution context; nothing is shared between
    RSUs, so distinct nodes may be driven in parallel.
    """

    def __init__(
        self,
        rsu_id: int,
        position: tuple[float, float],
        coverage_radius_m: float,
        corridor: CorridorConfig,
        cfg: RsuConfig | None = None,
    ):
        self.rsu_id = rsu_id
        self.position = position
        self.coverage_radius_m = coverage_radius_m
        self.corridor = corridor
        self.cfg = cfg or RsuConfig()
        self.registry: dict[int, VehicleRecord] = {}
        self.clock_ms = 0

    def _distance_to(self, pos: tuple[float, float]) -> float:
        return math.hypot(pos[0] - self.position[0], pos[1] - self.position[1])

    def ingest_beacon(self, b: Beacon, now_ms: int) -> None:
        """Fold one delivered beacon into the registry.

        Out-of-order or duplicate beacons (non-increasing seq or
        timestamp) are dropped; event tallies update incrementally from
        the previous sample so they match a batch recount of the
        delivered trace.
        """
        pos = (b.pos_x_cm / 100.0, b.pos_y_cm / 100.0)
        if self._distance_to(pos) > self.coverage_radius_m:
            raise OutOfRange(
                f"beacon from {pos} beyond coverage {self.coverage_radius_m} m"
            )
        self.clock_ms = max(self.clock_ms, now_ms)
        speed = abs(b.speed_cms) / 100.0
        lane = self.corridor.lane_of_y(pos[1])
        rec = self.registry.get(b.elp)
        if rec is None:
            window = SpeedWindow(self.cfg.window_capacity, self.cfg.window_stale_ms)
            window.push(b.timestamp_ms, speed)
            self.registry[b.elp] = VehicleRecord(
                elp=b.elp,
                speed_window=window,
                last_pos=pos,
                last_lane=lane,
                event_counts=SuddenEventCounts(),
                last_seq=b.seq,
                last_ts_ms=b.timestamp_ms,
                last_speed_mps=speed,
            )
            return
        if b.seq <= rec.last_seq or b.timestamp_ms <= rec.last_ts_ms:
            return
        dt_ms = b.timestamp_ms - rec.last_ts_ms
        counts = rec.event_counts
        counts.n += 1
        if rec.last_speed_mps > self.cfg.sudden.high_speed_mps:
            decel = (rec.last_speed_mps - speed) * 1000.0 / dt_ms
            if decel >= self.cfg.sudden.brake_decel_mps2:
                counts.sud_brk += 1
            if lane != rec.last_lane:
                counts.chg_loc += 1
        rec.speed_window.push(b.timestamp_ms, speed)
        rec.last_pos = pos
        rec.last_lane = lane
        rec.last_seq = b.seq
        rec.last_ts_ms = b.timestamp_ms
        rec.last_speed_mps = speed

    def expire_stale(self, now_ms: int) -> None:
        """Drop vehicles not heard from within the expiry window."""
        self.clock_ms = max(self.clock_ms, now_ms)
        cutoff = now_ms - self.cfg.expiry_ms
        stale = [elp for elp, rec in self.registry.items() if rec.last_ts_ms < cutoff]
        for elp in stale:
            del self.registry[elp]

    def neighborhood(
        self,
        gap: GapDescriptor,
        radius_m: float | None = None,
        exclude_elp: int | None = None,
    ) -> FleetSnapshot:
        """Registered same-direction vehicles around a gap, with their ACS."""
        radius = self.cfg.neighborhood_radius_m if radius_m is None else radius_m
        gap_pos = (gap.center_pos_m, self.corridor.y_of_lane(gap.lane_index))
        direction = self.corridor.direction_of_lane(gap.lane_index)
        entries = []
        for elp in sorted(self.registry):
            rec = self.registry[elp]
            if elp == exclude_elp:
                continue
            if self.corridor.direction_of_lane(rec.last_lane) != direction:
                continue
            if (
                math.hypot(rec.last_pos[0] - gap_pos[0], rec.last_pos[1] - gap_pos[1])
                <= radius
            ):
                entries.append((elp, compute_acs(rec.speed_window)))
        return FleetSnapshot(entries=entries)

    def handle_oda(self, req: OdaRequest, now_ms: int) -> OdaResponse:
        """Judge every candidate gap and return ranked verdicts.

        Gaps with nobody registered nearby are preferred outright: the
        decision matrix encodes risk from surrounding traffic, and an
        empty downstream region is unobstructed.
        """
        if not req.candidate_gaps:
            raise NoCandidates("ODA carries no candidate gaps")
        if req.decider_elp not in self.registry:
            raise UnknownDecider(req.decider_elp)
        decider_lane = self.corridor.lane_of_y(req.decider_beacon.pos_y_cm / 100.0)
        decider_dir = self.corridor.direction_of_lane(decider_lane)
        verdicts = []
        for gap in req.candidate_gaps:
            if gap.length_m <= 0:
                raise ValueError(f"gap {gap.choice_id} has non-positive length")
            if not 0 <= gap.lane_index < self.corridor.lane_count:
                raise ValueError(f"gap {gap.choice_id} lane out of range")
            if self.corridor.direction_of_lane(gap.lane_index) != decider_dir:
                raise ValueError(f"gap {gap.choice_id} opposes decider direction")
            nbhd = self.neighborhood(gap, exclude_elp=req.decider_elp)
            if nbhd.n == 0:
                verdicts.append(
                    ChoiceVerdict(
                        choice_id=gap.choice_id,
                        lane_index=gap.lane_index,
                        decision=Decision.PREFERRED,
                        aavs_mps=None,
                        avsud_class=None,
                    )
                )
                continue
            aavs = compute_aavs(nbhd)
            mean_avsud = (
                sum(self.registry[elp].avsud_value() for elp, _ in nbhd.entries)
                / nbhd.n
            )
            cls = (
                AvSudClass.HIGH
                if mean_avsud >= self.cfg.avsud_threshold
                else AvSudClass.LOW
            )
            verdicts.append(
                ChoiceVerdict(
                    choice_id=gap.choice_id,
                    lane_index=gap.lane_index,
                    decision=decide(analyse_speed(req.decider_acs_mps, aavs), cls),
                    aavs_mps=aavs,
                    avsud_class=cls,
                )
            )
        return OdaResponse(
            decider_elp=req.decider_elp,
            verdicts=rank_choices(verdicts, decider_lane),
            issued_at_ms=now_ms,
        )


_REQ_HEAD = struct.Struct(">BHB")
_REQ_GAP = struct.Struct(">BBiI")
_RESP_HEAD = struct.Struct(">BQB")
_RESP_VERDICT = struct.Struct(">BBBBi")

_ODA_REQUEST = 1
_ODA_RESPONSE = 2

_DECISION_CODE = {
    Decision.NOT_PREFERRED: 0,
    Decision.NOT_PREFERRED_DANGER: 1,
    Decision.PREFERRED: 2,
}
_DECISION_FROM_CODE = {v: k for k, v in _DECISION_CODE.items()}


def encode_oda_request(req: OdaRequest) -> bytes:
    """Pack a request into one 512-byte non-safety message."""
    if bytes(req.decider_beacon.piggyback).rstrip(b"\x00"):
        raise InvalidField("decider beacon piggyback is not forwarded in ODA requests")
    if req.decider_beacon.elp != req.decider_elp:
        raise InvalidField("request beacon identity differs from decider_elp")
    if not 0 <= req.decider_acs_mps <= 45.0:
        raise InvalidField(f"decider_acs_mps={req.decider_acs_mps} outside [0, 45]")
    payload = bytearray(
        _REQ_HEAD.pack(
            _ODA_REQUEST, round(req.decider_acs_mps * 100), len(req.candidate_gaps)
        )
    )
    for gap in req.candidate_gaps:
        payload += _REQ_GAP.pack(
            gap.choice_id,
            gap.lane_index,
            round(gap.center_pos_m * 100),
            round(gap.length_m * 100),
        )
    carrier = Beacon(
        seq=req.decider_beacon.seq,
        interval_ms=req.decider_beacon.interval_ms,
        timestamp_ms=req.decider_beacon.timestamp_ms,
        elp=req.decider_beacon.elp,
        pos_x_cm=req.decider_beacon.pos_x_cm,
        pos_y_cm=req.decider_beacon.pos_y_cm,
        speed_cms=req.decider_beacon.speed_cms,
        dir_cdeg=req.decider_beacon.dir_cdeg,
        max_p_cdbm=req.decider_beacon.max_p_cdbm,
        min_p_cdbm=req.decider_beacon.min_p_cdbm,
        pow_u_cdbm=req.decider_beacon.pow_u_cdbm,
        piggyback=bytes(payload),
    )
    return encode_message(carrier, NON_SAFETY_MESSAGE_SIZE)


def decode_oda_request(data: bytes) -> OdaRequest:
    carrier = decode_message(data, NON_SAFETY_MESSAGE_SIZE)
    body = carrier.piggyback
    msg_type, acs_cms, gap_count = _REQ_HEAD.unpack_from(body, 0)
    if msg_type != _ODA_REQUEST:
        raise MalformedBeacon(f"not an ODA request (type {msg_type})")
    gaps = []
    offset = _REQ_HEAD.size
    for _ in range(gap_count):
        choice_id, lane, center_cm, length_cm = _REQ_GAP.unpack_from(body, offset)
        offset += _REQ_GAP.size
        gaps.append(
            GapDescriptor(
                choice_id=choice_id,
                lane_index=lane,
                center_pos_m=center_cm / 100.0,
                length_m=length_cm / 100.0,
            )
        )
    beacon = Beacon(
        seq=carrier.seq,
        interval_ms=carrier.interval_ms,
        timestamp_ms=carrier.timestamp_ms,
        elp=carrier.elp,
        pos_x_cm=carrier.pos_x_cm,
        pos_y_cm=carrier.pos_y_cm,
        speed_cms=carrier.speed_cms,
        dir_cdeg=carrier.dir_cdeg,
        max_p_cdbm=carrier.max_p_cdbm,
        min_p_cdbm=carrier.min_p_cdbm,
        pow_u_cdbm=carrier.pow_u_cdbm,
    )
    return OdaRequest(
        decider_elp=carrier.elp,
        decider_beacon=beacon,
        decider_acs_mps=acs_cms / 100.0,
        candidate_gaps=gaps,
    )


def encode_oda_response(
    resp: OdaResponse, rsu_id: int, rsu_pos: tuple[float, float]
) -> bytes:
    """Pack a response into one 512-byte non-safety message."""
    payload = bytearray(
        _RESP_HEAD.pack(_ODA_RESPONSE, resp.decider_elp, len(resp.verdicts))
    )
    for v in resp.verdicts:
        avsud = 2 if v.avsud_class is None else (v.avsud_class is AvSudClass.HIGH)
        aavs_cms = -1 if v.aavs_mps is None else round(v.aavs_mps * 100)
        payload += _RESP_VERDICT.pack(
            v.choice_id, v.lane_index, _DECISION_CODE[v.decision], avsud, aavs_cms
        )
    carrier = Beacon(
        seq=0,
        interval_ms=100,
        timestamp_ms=resp.issued_at_ms,
        elp=rsu_id,
        pos_x_cm=round(rsu_pos[0] * 100),
        pos_y_cm=round(rsu_pos[1] * 100),
        speed_cms=0,
        dir_cdeg=0,
        max_p_cdbm=0,
        min_p_cdbm=0,
        pow_u_cdbm=0,
        piggyback=bytes(payload),
    )
    return encode_message(carrier, NON_SAFETY_MESSAGE_SIZE)


def decode_oda_response(data: bytes) -> OdaResponse:
    carrier = decode_message(data, NON_SAFETY_MESSAGE_SIZE)
    body = carrier.piggyback
    msg_type, decider_elp, count = _RESP_HEAD.unpack_from(body, 0)
    if msg_type != _ODA_RESPONSE:
        raise MalformedBeacon(f"not an ODA response (type {msg_type})")
    verdicts = []
    offset = _RESP_HEAD.size
    for _ in range(count):
        choice_id, lane, decision, avsud, aavs_cms = _RESP_VERDICT.unpack_from(
            body, offset
        )
        offset += _RESP_VERDICT.size
        verdicts.append(
            ChoiceVerdict(
                choice_id=choice_id,
                lane_index=lane,
                decision=_DECISION_FROM_CODE[decision],
                aavs_mps=None if aavs_cms < 0 else aavs_cms / 100.0,
                avsud_class=(
                    None if avsud == 2 else (AvSudClass.HIGH if avsud else AvSudClass.LOW)
                ),
            )
        )
    return OdaResponse(
        decider_elp=decider_elp,
        verdicts=verdicts,
        issued_at_ms=carrier.timestamp_ms,
    )
