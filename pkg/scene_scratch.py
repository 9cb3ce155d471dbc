"""Scratch: iterate the hidden-congestion scripted scene until verdicts land."""
import lanesim.engine as eng
from lanesim.engine import ScenarioConfig, SystemMode, SpawnSpec, run_scenario
from lanesim.mobility import VehicleMode

DECIDER = 9004  # epochs at ticks == 16 (mod 20)
VERBOSE = True

orig_flow = eng._Sim._oda_flow


def spy_flow(self, v, choices, now_ms, tick):
    res = orig_flow(self, v, choices, now_ms, tick)
    if VERBOSE and v.elp == DECIDER:
        print(f'  t={now_ms/1000:.1f} decider pos={v.pos_m:.0f} speed={v.speed_mps:.1f} '
              f'acs={sum(v.recent_speeds)/len(v.recent_speeds):.1f}')
        print(f'    gaps: {[(g.choice_id, g.lane_index, round(g.center_pos_m), round(g.length_m)) for g in choices]}')
        if v.pending_advice:
            for vd in v.pending_advice.verdicts:
                print(f'    verdict lane={vd.lane_index} choice={vd.choice_id} {vd.decision.value} '
                      f'aavs={None if vd.aavs_mps is None else round(vd.aavs_mps,1)} cls={vd.avsud_class}')
        node = self.rsus[0]
        rows = [(elp, rec.last_lane, round(rec.last_pos[0]), round(rec.last_speed_mps, 1),
                 round(rec.avsud_value(), 3)) for elp, rec in sorted(node.registry.items())]
        print(f'    rsu0: {rows}')
    return res


eng._Sim._oda_flow = spy_flow


def scene(decider_mode):
    # hot queue members: epochs land just AFTER the decision tick 156
    # ticks == 17 (mod 20) -> elp % 20 == 3
    spawns = [
        # lane 0 crawling anchor (calm: never fast)
        SpawnSpec(elp=8000, lane_index=0, entry_time_s=0.0, desired_speed_mps=4.0,
                  start_pos_m=148.0, start_speed_mps=4.0),
        # lane 0 hot arrivals braking behind the anchor just before t=15.6
        SpawnSpec(elp=8003, lane_index=0, entry_time_s=12.6, desired_speed_mps=30.0,
                  start_pos_m=172.0, start_speed_mps=30.0),
        SpawnSpec(elp=8023, lane_index=0, entry_time_s=13.2, desired_speed_mps=30.0,
                  start_pos_m=158.0, start_speed_mps=30.0),
        SpawnSpec(elp=8043, lane_index=0, entry_time_s=13.8, desired_speed_mps=31.0,
                  start_pos_m=144.0, start_speed_mps=31.0),
        SpawnSpec(elp=8063, lane_index=0, entry_time_s=14.4, desired_speed_mps=31.0,
                  start_pos_m=130.0, start_speed_mps=31.0),
        SpawnSpec(elp=8083, lane_index=0, entry_time_s=15.0, desired_speed_mps=30.0,
                  start_pos_m=118.0, start_speed_mps=30.0),
        # lane 1: slow pair ahead of the decider
        SpawnSpec(elp=8101, lane_index=1, entry_time_s=10.0, desired_speed_mps=12.0,
                  start_pos_m=77.0, start_speed_mps=12.0),
        SpawnSpec(elp=8102, lane_index=1, entry_time_s=10.0, desired_speed_mps=13.0,
                  start_pos_m=102.0, start_speed_mps=13.0),
        # lane 2: steady vehicle slightly ahead of the decider at decision time
        SpawnSpec(elp=8201, lane_index=2, entry_time_s=10.0, desired_speed_mps=22.0,
                  start_pos_m=4.0, start_speed_mps=22.0),
        # the decider
        SpawnSpec(elp=DECIDER, lane_index=1, entry_time_s=12.0, desired_speed_mps=32.0,
                  start_pos_m=4.0, start_speed_mps=32.0, mode=decider_mode),
    ]
    cfg = ScenarioConfig(
        duration_s=80.0,
        system_mode=SystemMode.PROPOSED,
        vehicle_count=0,
        seed=5,
        scripted_vehicles=spawns,
        record_trajectories=True,
    )
    return run_scenario(cfg)


for mode in (VehicleMode.BASELINE, VehicleMode.ASSISTED):
    print(mode.value)
    m = scene(mode)
    lanes_seq = [(t, lane, round(pos, 1), round(speed, 1))
                 for (t, elp, lane, pos, speed) in m.trajectories if elp == DECIDER]
    changes = [(t, lane) for i, (t, lane, pos, s) in enumerate(lanes_seq)
               if i and lane != lanes_seq[i - 1][1]]
    trav = [t for t in m.traversals if t.elp == DECIDER]
    print('  changes:', changes[:5], 'traversals:', [round(t.travel_time_s, 2) for t in trav])
