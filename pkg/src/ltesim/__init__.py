"""Deterministic protocol-level simulator of idle-mode cell reselection,
the plain NAS attach/TAU exchange, and rogue-cell identity catching."""

from .attacker import (
    AttackPlan,
    DiscoveryFailed,
    RoguePair,
    deploy_imsi_catcher,
    deploy_roaming_catcher,
    phase1_discover,
)
from .codec import (
    AttachAccept,
    AttachReject,
    AttachRequest,
    EmmCause,
    Guti,
    IdentityRequest,
    IdentityResponse,
    Imsi,
    Plmn,
    TauAccept,
    TauReject,
    TauRequest,
    decode_emm,
    decode_mobile_identity,
    decode_plmn,
    encode_emm,
    encode_mobile_identity,
    encode_plmn,
)
from .engine import (
    Scenario,
    ScenarioError,
    Simulation,
    TraceRecord,
    UeSpec,
    load_scenario,
    load_scenario_file,
    run_scenario,
    write_report,
    write_trace,
)
from .nas import Collector, EmmState, HssDatabase, Mme
from .radio import (
    CellConfig,
    JammerConfig,
    RadioEnvironment,
    SibPayload,
    effective_power,
    evaluate_reselection,
    make_sib,
    select_plmn_and_cell,
    suitable_cells,
)
from .ue import UeContext, UsimProfile

__version__ = "0.1.0"
