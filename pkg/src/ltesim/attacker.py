"""The adversary: parameter discovery, catcher deployment, roaming variant.

The discovery phase is black box, exactly like doing it with a phone in hand:
register a probe UE, note its channel and tracking area code, jam that
channel, and read where the probe lands after reselection.  Deployment then
stands up the collector cell on the discovered channel with the tracking area
code bumped by one, plus a jammer on the original channel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, TYPE_CHECKING

from .codec import Plmn
from .nas import Collector, EmmState
from .radio import CellConfig, JammerConfig, SibPayload, make_sib

if TYPE_CHECKING:
    from .engine import Simulation
    from .ue import UeContext

DEFAULT_JAM_PENALTY_DB = 60.0
DEFAULT_COLLECTOR_CELL_ID = 900
ROGUE_JAMMER_NAME = "rogue_jammer"
PHASE1_JAMMER_NAME = "phase1_jammer"


class DiscoveryFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class AttackPlan:
    target_plmn: Plmn
    jam_earfcn: int
    collector_earfcn: int
    commercial_tac: int
    collector_tac: int

    def __post_init__(self):
        if self.jam_earfcn < 0 or self.collector_earfcn < 0:
            raise ValueError("earfcns must be non-negative")
        if self.collector_earfcn == self.jam_earfcn:
            raise ValueError("collector_earfcn must differ from jam_earfcn")
        if not 0 <= self.commercial_tac <= 0xFFFF:
            raise ValueError(f"commercial_tac out of range: {self.commercial_tac}")
        if self.collector_tac != (self.commercial_tac + 1) % 0x10000:
            raise ValueError("collector_tac must be commercial_tac + 1 (mod 65536)")

    @classmethod
    def for_commercial(cls, target_plmn: Plmn, jam_earfcn: int,
                       collector_earfcn: int, commercial_tac: int) -> "AttackPlan":
        return cls(target_plmn, jam_earfcn, collector_earfcn, commercial_tac,
                   (commercial_tac + 1) % 0x10000)


@dataclass
class RoguePair:
    collector_cell: CellConfig
    collector_sib: SibPayload
    collector: Collector
    jammer: Optional[JammerConfig]


def deploy_imsi_catcher(plan: AttackPlan, rx_power_dbm: float, *,
                        cell_id: int = DEFAULT_COLLECTOR_CELL_ID,
                        jam_penalty_db: float = DEFAULT_JAM_PENALTY_DB,
                        priority_map: Optional[dict[int, int]] = None,
                        q_rxlevmin_dbm: float = -110.0) -> RoguePair:
    """Build the collector cell and the jammer for a discovered plan.

    priority_map should be the area's commercial map so the collector ranks
    at its channel's advertised priority.
    """
    cell = CellConfig(
        cell_id=cell_id,
        plmn=plan.target_plmn,
        tac=plan.collector_tac,
        earfcn=plan.collector_earfcn,
        rx_power_dbm=rx_power_dbm,
        is_rogue=True,
    )
    sib = make_sib(cell, priority_map or {}, q_rxlevmin_dbm)
    jammer = JammerConfig(plan.jam_earfcn, jam_penalty_db, active=True)
    return RoguePair(cell, sib, Collector(sib), jammer)


def deploy_roaming_catcher(home_plmn: Plmn, earfcn: int, tac: int,
                           rx_power_dbm: float, *,
                           cell_id: int = DEFAULT_COLLECTOR_CELL_ID,
                           priority: int = 4,
                           q_rxlevmin_dbm: float = -110.0) -> RoguePair:
    """Single collector cell impersonating the home network; no jammer.

    Channel and priority are free choices here: a UE hunting for its home
    PLMN abroad will take the only matching cell it can find.
    """
    cell = CellConfig(
        cell_id=cell_id,
        plmn=home_plmn,
        tac=tac,
        earfcn=earfcn,
        rx_power_dbm=rx_power_dbm,
        is_rogue=True,
    )
    sib = make_sib(cell, {earfcn: priority}, q_rxlevmin_dbm)
    return RoguePair(cell, sib, Collector(sib), jammer=None)


class DiscoveryController:
    """Phase-1 orchestration, stepped by the engine.

    Watches a probe UE register, jams its serving channel, waits for the
    probe to land elsewhere, then removes the temporary jammer.  With
    deploy=True the full catcher is stood up the moment the plan is known.
    """

    def __init__(self, probe_ue_id: str, *, deploy: bool = True,
                 jam_penalty_db: float = DEFAULT_JAM_PENALTY_DB,
                 step_ms: int = 100,
                 register_timeout_ms: int = 5000,
                 reselect_timeout_ms: int = 5000):
        self.probe_ue_id = probe_ue_id
        self.deploy = deploy
        self.jam_penalty_db = jam_penalty_db
        self.step_ms = step_ms
        self.register_timeout_ms = register_timeout_ms
        self.reselect_timeout_ms = reselect_timeout_ms
        self.state = "wait_register"
        self.started_ms: Optional[int] = None
        self.jam_started_ms: Optional[int] = None
        self.jam_earfcn: Optional[int] = None
        self.commercial_tac: Optional[int] = None
        self.target_plmn: Optional[Plmn] = None
        self.plan: Optional[AttackPlan] = None
        self.failure: Optional[str] = None

    def step(self, sim: "Simulation", t_ms: int) -> None:
        if self.started_ms is None:
            self.started_ms = t_ms
        probe = sim.ues[self.probe_ue_id]
        if self.state == "wait_register":
            self._step_register(sim, probe, t_ms)
        elif self.state == "wait_reselect":
            self._step_reselect(sim, probe, t_ms)
        if self.state in ("wait_register", "wait_reselect"):
            sim.schedule_attacker_step(t_ms + self.step_ms)

    def _step_register(self, sim: "Simulation", probe: "UeContext", t_ms: int) -> None:
        if probe.emm is EmmState.REGISTERED and probe.camped_cell in sim.env.sites:
            site = sim.env.sites[probe.camped_cell]
            self.jam_earfcn = site.config.earfcn
            self.commercial_tac = probe.registered_tac
            self.target_plmn = site.config.plmn
            sim.env.add_jammer(
                PHASE1_JAMMER_NAME,
                JammerConfig(self.jam_earfcn, self.jam_penalty_db, active=True),
            )
            self.jam_started_ms = t_ms
            self.state = "wait_reselect"
        elif t_ms - self.started_ms >= self.register_timeout_ms:
            self._fail(f"probe did not register within {self.register_timeout_ms} ms")

    def _step_reselect(self, sim: "Simulation", probe: "UeContext", t_ms: int) -> None:
        if probe.camped_cell in sim.env.sites:
            earfcn = sim.env.sites[probe.camped_cell].config.earfcn
            if earfcn != self.jam_earfcn:
                sim.env.remove_jammer(PHASE1_JAMMER_NAME)
                self.plan = AttackPlan.for_commercial(
                    self.target_plmn, self.jam_earfcn, earfcn, self.commercial_tac
                )
                self.state = "done"
                if self.deploy:
                    sim.deploy_catcher(self.plan, t_ms)
                return
        if t_ms - self.jam_started_ms >= self.reselect_timeout_ms:
            sim.env.remove_jammer(PHASE1_JAMMER_NAME)
            self._fail(
                f"no reselection target within {self.reselect_timeout_ms} ms"
                " (single-frequency network?)"
            )

    def _fail(self, reason: str) -> None:
        self.state = "failed"
        self.failure = reason


def phase1_discover(env, probe: "UeContext", *,
                    jam_penalty_db: float = DEFAULT_JAM_PENALTY_DB,
                    register_timeout_ms: int = 5000,
                    reselect_timeout_ms: int = 5000,
                    step_ms: int = 100) -> AttackPlan:
    """Run parameter discovery against an environment in a sandboxed sim.

    The given environment is left untouched; the probe UE is registered
    inside a private copy, so discovery is non-destructive by construction.
    Raises DiscoveryFailed when the probe cannot register or nothing exists
    to reselect to.
    """
    from .engine import CatcherAttackSpec, Scenario, Simulation, UeSpec

    spec = UeSpec(
        ue_id=probe.ue_id,
        imsi=probe.usim.imsi,
        hplmn=probe.usim.hplmn,
        rplmn=probe.usim.rplmn,
        roaming_enabled=probe.usim.roaming_enabled,
        power_on_ms=0,
        reselection_period_ms=probe.reselection_period_ms,
    )
    attack = CatcherAttackSpec(
        auto_discover=True,
        probe_ue=probe.ue_id,
        deploy=False,
        jam_penalty_db=jam_penalty_db,
        register_timeout_ms=register_timeout_ms,
        reselect_timeout_ms=reselect_timeout_ms,
        step_ms=step_ms,
    )
    scenario = Scenario(
        cells=[site for site in env.sites.values()],
        ues=[spec],
        end_ms=register_timeout_ms + reselect_timeout_ms + 2000,
        jammers=dict(env.jammers),
        attack=attack,
        hysteresis_db=env.hysteresis_db,
    )
    sim = Simulation(scenario)
    sim.run()
    controller = sim.discovery
    if controller is None or controller.plan is None:
        reason = controller.failure if controller else "discovery never ran"
        raise DiscoveryFailed(reason or "discovery did not complete")
    return controller.plan
