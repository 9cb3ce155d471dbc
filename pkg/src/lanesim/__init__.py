"""V2V lane-selection assistance: protocol, analytics, and simulation."""

from .analytics import (
    AvSudClass,
    AvSudScore,
    ChoiceVerdict,
    Decision,
    FleetSnapshot,
    SpeedWindow,
    SuddenEventConfig,
    SuddenEventCounts,
    analyse_speed,
    compute_aavs,
    compute_acs,
    compute_avsud,
    decide,
    detect_sudden_events,
    rank_choices,
)
from .beacon import (
    Beacon,
    InvalidField,
    MalformedBeacon,
    decode_beacon,
    encode_beacon,
)
from .channel import (
    ChannelConfig,
    ChannelRng,
    TxEvent,
    assign_slot,
    delivery_probability,
    nearest_rsu,
    resolve_frame,
)
from .engine import (
    Density,
    InvalidConfig,
    RunMetrics,
    ScenarioConfig,
    SystemMode,
    place_rsus,
    run_scenario,
    spawn_vehicles,
)
from .experiments import (
    ExperimentSpec,
    ExperimentSummary,
    aggregate,
    run_experiment,
)
from .mobility import (
    CorridorConfig,
    DriverParams,
    GapDescriptor,
    VehicleMode,
    VehicleState,
    assisted_lane_decision,
    baseline_lane_decision,
    execute_lane_change,
    sense_choices,
    st_baseline_decision,
    step_longitudinal,
)
from .rsu import (
    OdaRequest,
    OdaResponse,
    RsuConfig,
    RsuNode,
    VehicleRecord,
)

__version__ = "0.1.0"
