"""Deterministic discrete-event engine, scenario loading and run reporting.

Scenarios are JSON documents with sections `cells`, `jammers`,
`priority_map`, `ues`, `attack`, `events`, `end_ms`, `seed` (plus optional
`q_rxlevmin_dbm`, `hysteresis_db`, `latency_ms` overrides).  A run processes
events in (t_ms, seq) order, records every air-interface message as a trace
record at its delivery instant, and produces a report with captures, denial
intervals and final UE states.  Identical scenario input yields byte-identical
output; time is integer milliseconds and built-in actors use no randomness.
"""

from __future__ import annotations

import heapq
import itertools
import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

from . import nas
from .attacker import (
    AttackPlan,
    DiscoveryController,
    ROGUE_JAMMER_NAME,
    deploy_imsi_catcher,
    deploy_roaming_catcher,
)
from .codec import EmmMessage, Imsi, Plmn, encode_emm, message_label
from .nas import Collector, EmmState, HssDatabase, Mme
from .radio import (
    CellConfig,
    CellSite,
    DEFAULT_HYSTERESIS_DB,
    DEFAULT_Q_RXLEVMIN_DBM,
    JammerConfig,
    RadioEnvironment,
    SibPayload,
)
from .ue import DEFAULT_RESELECTION_PERIOD_MS, UeContext, UsimProfile

log = logging.getLogger(__name__)

DEFAULT_LATENCY_MS = 50

EVENT_KINDS = (
    "power_on",
    "power_off",
    "reboot",
    "deliver_message",
    "jammer_toggle",
    "cell_add",
    "cell_remove",
    "ue_tick",
    "attacker_step",
    "set_rplmn",
)

# scenario timeline kinds a document may script directly
_SCRIPTABLE_KINDS = (
    "power_on",
    "power_off",
    "reboot",
    "jammer_toggle",
    "cell_add",
    "cell_remove",
    "set_rplmn",
)


class ScenarioError(Exception):
    """Configuration rejected; carries the offending field path."""

    def __init__(self, fieldpath: str, reason: str):
        self.fieldpath = fieldpath
        self.reason = reason
        super().__init__(f"{fieldpath}: {reason}")


@dataclass(frozen=True)
class UeSpec:
    ue_id: str
    imsi: Imsi
    hplmn: Plmn
    rplmn: Optional[Plmn] = None
    roaming_enabled: bool = True
    invalid_for_service: bool = False
    power_on_ms: Optional[int] = 0
    reselection_period_ms: int = DEFAULT_RESELECTION_PERIOD_MS


@dataclass(frozen=True)
class CatcherAttackSpec:
    deploy_at_ms: int = 0
    collector_cell_id: int = 900
    collector_power_dbm: float = -70.0
    jam_penalty_db: float = 60.0
    jammer_active: bool = True
    plan: Optional[AttackPlan] = None
    auto_discover: bool = False
    probe_ue: Optional[str] = None
    deploy: bool = True
    step_ms: int = 100
    register_timeout_ms: int = 5000
    reselect_timeout_ms: int = 5000


@dataclass(frozen=True)
class RoamingAttackSpec:
    home_plmn: Plmn
    earfcn: int
    tac: int
    power_dbm: float
    deploy_at_ms: int = 0
    collector_cell_id: int = 900
    priority: int = 4


AttackSpec = Union[CatcherAttackSpec, RoamingAttackSpec]


@dataclass(frozen=True)
class TimelineEvent:
    t_ms: int
    kind: str
    params: dict


@dataclass
class Scenario:
    cells: list[CellSite]
    ues: list[UeSpec]
    end_ms: int
    jammers: dict[str, JammerConfig] = field(default_factory=dict)
    priority_map: dict[int, int] = field(default_factory=dict)
    collector_cell_ids: frozenset = frozenset()
    attack: Optional[AttackSpec] = None
    events: list[TimelineEvent] = field(default_factory=list)
    seed: int = 0
    q_rxlevmin_dbm: float = DEFAULT_Q_RXLEVMIN_DBM
    hysteresis_db: float = DEFAULT_HYSTERESIS_DB
    latency_ms: int = DEFAULT_LATENCY_MS

    def settings(self) -> dict:
        return {
            "end_ms": self.end_ms,
            "seed": self.seed,
            "q_rxlevmin_dbm": self.q_rxlevmin_dbm,
            "hysteresis_db": self.hysteresis_db,
            "latency_ms": self.latency_ms,
        }


@dataclass
class TraceRecord:
    t_ms: int
    sender: str
    receiver: str
    earfcn: int
    hex: str
    decoded: str
    note: Optional[str] = None

    def as_dict(self) -> dict:
        return {
            "t_ms": self.t_ms,
            "sender": self.sender,
            "receiver": self.receiver,
            "earfcn": self.earfcn,
            "hex": self.hex,
            "decoded": self.decoded,
            "note": self.note,
        }


# ---------------------------------------------------------------------------
# scenario document parsing


def _join(path: str, key) -> str:
    return f"{path}.{key}" if path else str(key)


def _as_int(value, path: str, minimum=None, maximum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ScenarioError(path, f"{value} below minimum {minimum}")
    if maximum is not None and value > maximum:
        raise ScenarioError(path, f"{value} above maximum {maximum}")
    return value


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(path, f"expected a number, got {value!r}")
    result = float(value)
    if not math.isfinite(result):
        raise ScenarioError(path, f"must be finite, got {value!r}")
    return result


def _as_bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ScenarioError(path, f"expected a boolean, got {value!r}")
    return value


def _as_str(value, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise ScenarioError(path, f"expected a non-empty string, got {value!r}")
    return value


def _as_list(value, path: str) -> list:
    if not isinstance(value, list):
        raise ScenarioError(path, f"expected a list, got {value!r}")
    return value


def _as_dict(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ScenarioError(path, f"expected an object, got {value!r}")
    return value


def _check_keys(obj: dict, allowed: set, path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise ScenarioError(_join(path, key), "unknown field")


def _parse_plmn(value, path: str) -> Plmn:
    obj = _as_dict(value, path)
    _check_keys(obj, {"mcc", "mnc"}, path)
    mcc = _as_str(obj.get("mcc"), _join(path, "mcc"))
    mnc = _as_str(obj.get("mnc"), _join(path, "mnc"))
    try:
        return Plmn(mcc, mnc)
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from exc


def _parse_priority_map(value, path: str) -> dict[int, int]:
    obj = _as_dict(value, path)
    result: dict[int, int] = {}
    for key, raw in obj.items():
        entry_path = _join(path, key)
        try:
            earfcn = int(key)
        except ValueError:
            raise ScenarioError(entry_path, f"earfcn key must be numeric, got {key!r}") from None
        if earfcn < 0:
            raise ScenarioError(entry_path, "earfcn must be non-negative")
        prio = _as_int(raw, entry_path)
        if not 0 <= prio <= 7:
            raise ScenarioError(entry_path, f"priority {prio} out of range 0..7")
        result[earfcn] = prio
    return result


_CELL_KEYS = {"cell_id", "plmn", "tac", "earfcn", "rx_power_dbm", "is_rogue",
              "backend", "priority_map", "q_rxlevmin_dbm"}


def _parse_cell(value, path: str, global_map: dict[int, int],
                q_default: float) -> tuple[CellSite, str]:
    obj = _as_dict(value, path)
    _check_keys(obj, _CELL_KEYS, path)
    for key in ("cell_id", "plmn", "tac", "earfcn", "rx_power_dbm"):
        if key not in obj:
            raise ScenarioError(_join(path, key), "required field missing")
    plmn = _parse_plmn(obj["plmn"], _join(path, "plmn"))
    try:
        cell = CellConfig(
            cell_id=_as_int(obj["cell_id"], _join(path, "cell_id"), minimum=0),
            plmn=plmn,
            tac=_as_int(obj["tac"], _join(path, "tac"), minimum=0, maximum=0xFFFF),
            earfcn=_as_int(obj["earfcn"], _join(path, "earfcn"), minimum=0),
            rx_power_dbm=_as_number(obj["rx_power_dbm"], _join(path, "rx_power_dbm")),
            is_rogue=_as_bool(obj.get("is_rogue", False), _join(path, "is_rogue")),
        )
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from exc
    backend = obj.get("backend", "mme")
    if backend not in ("mme", "collector"):
        raise ScenarioError(_join(path, "backend"), f"must be 'mme' or 'collector', got {backend!r}")
    merged = dict(global_map)
    if "priority_map" in obj:
        merged.update(_parse_priority_map(obj["priority_map"], _join(path, "priority_map")))
    q_rxlevmin = q_default
    if "q_rxlevmin_dbm" in obj:
        q_rxlevmin = _as_number(obj["q_rxlevmin_dbm"], _join(path, "q_rxlevmin_dbm"))
    sib = SibPayload(plmn=plmn, tac=cell.tac, cell_id=cell.cell_id,
                     priority_map=merged, q_rxlevmin_dbm=q_rxlevmin)
    return CellSite(cell, sib), backend


_UE_KEYS = {"ue_id", "imsi", "hplmn", "rplmn", "roaming_enabled",
            "invalid_for_service", "power_on_ms", "reselection_period_ms"}


def _parse_ue(value, path: str) -> UeSpec:
    obj = _as_dict(value, path)
    _check_keys(obj, _UE_KEYS, path)
    for key in ("ue_id", "imsi", "hplmn"):
        if key not in obj:
            raise ScenarioError(_join(path, key), "required field missing")
    try:
        imsi = Imsi(_as_str(obj["imsi"], _join(path, "imsi")))
    except ValueError as exc:
        raise ScenarioError(_join(path, "imsi"), str(exc)) from exc
    hplmn = _parse_plmn(obj["hplmn"], _join(path, "hplmn"))
    if not imsi.digits.startswith(hplmn.mcc + hplmn.mnc):
        raise ScenarioError(_join(path, "imsi"),
                            f"does not begin with hplmn digits {hplmn.mcc}{hplmn.mnc}")
    rplmn = None
    if obj.get("rplmn") is not None:
        rplmn = _parse_plmn(obj["rplmn"], _join(path, "rplmn"))
    power_on_ms = obj.get("power_on_ms", 0)
    if power_on_ms is not None:
        power_on_ms = _as_int(power_on_ms, _join(path, "power_on_ms"), minimum=0)
    return UeSpec(
        ue_id=_as_str(obj["ue_id"], _join(path, "ue_id")),
        imsi=imsi,
        hplmn=hplmn,
        rplmn=rplmn,
        roaming_enabled=_as_bool(obj.get("roaming_enabled", True),
                                 _join(path, "roaming_enabled")),
        invalid_for_service=_as_bool(obj.get("invalid_for_service", False),
                                     _join(path, "invalid_for_service")),
        power_on_ms=power_on_ms,
        reselection_period_ms=_as_int(
            obj.get("reselection_period_ms", DEFAULT_RESELECTION_PERIOD_MS),
            _join(path, "reselection_period_ms"), minimum=1),
    )


_JAMMER_KEYS = {"name", "earfcn", "jam_penalty_db", "active"}


def _parse_jammer(value, path: str, index: int) -> tuple[str, JammerConfig]:
    obj = _as_dict(value, path)
    _check_keys(obj, _JAMMER_KEYS, path)
    name = obj.get("name", f"jammer{index}")
    name = _as_str(name, _join(path, "name"))
    if "earfcn" not in obj or "jam_penalty_db" not in obj:
        raise ScenarioError(path, "earfcn and jam_penalty_db are required")
    try:
        jammer = JammerConfig(
            earfcn=_as_int(obj["earfcn"], _join(path, "earfcn"), minimum=0),
            jam_penalty_db=_as_number(obj["jam_penalty_db"], _join(path, "jam_penalty_db")),
            active=_as_bool(obj.get("active", True), _join(path, "active")),
        )
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from exc
    return name, jammer


_CATCHER_KEYS = {"mode", "deploy_at_ms", "collector_cell_id", "collector_power_dbm",
                 "jam_penalty_db", "jammer_active", "plan", "auto_discover",
                 "probe_ue", "step_ms", "register_timeout_ms", "reselect_timeout_ms"}
_PLAN_KEYS = {"target_plmn", "jam_earfcn", "collector_earfcn", "commercial_tac"}
_ROAMING_KEYS = {"mode", "deploy_at_ms", "collector_cell_id", "home_plmn",
                 "earfcn", "tac", "power_dbm", "priority"}


def _parse_attack(value, path: str, ue_ids: set, cell_ids: set) -> AttackSpec:
    obj = _as_dict(value, path)
    mode = obj.get("mode")
    if mode == "imsi_catcher":
        _check_keys(obj, _CATCHER_KEYS, path)
        plan = None
        auto = _as_bool(obj.get("auto_discover", False), _join(path, "auto_discover"))
        if "plan" in obj:
            if auto:
                raise ScenarioError(path, "give either plan or auto_discover, not both")
            plan_obj = _as_dict(obj["plan"], _join(path, "plan"))
            _check_keys(plan_obj, _PLAN_KEYS, _join(path, "plan"))
            for key in _PLAN_KEYS:
                if key not in plan_obj:
                    raise ScenarioError(_join(_join(path, "plan"), key), "required field missing")
            try:
                plan = AttackPlan.for_commercial(
                    _parse_plmn(plan_obj["target_plmn"], _join(path, "plan.target_plmn")),
                    _as_int(plan_obj["jam_earfcn"], _join(path, "plan.jam_earfcn"), minimum=0),
                    _as_int(plan_obj["collector_earfcn"], _join(path, "plan.collector_earfcn"), minimum=0),
                    _as_int(plan_obj["commercial_tac"], _join(path, "plan.commercial_tac"),
                            minimum=0, maximum=0xFFFF),
                )
            except ValueError as exc:
                raise ScenarioError(_join(path, "plan"), str(exc)) from exc
        elif not auto:
            raise ScenarioError(path, "imsi_catcher attack needs a plan or auto_discover")
        probe = obj.get("probe_ue")
        if auto:
            probe = _as_str(probe, _join(path, "probe_ue"))
            if probe not in ue_ids:
                raise ScenarioError(_join(path, "probe_ue"), f"unknown ue {probe!r}")
        collector_cell_id = _as_int(obj.get("collector_cell_id", 900),
                                    _join(path, "collector_cell_id"), minimum=0)
        if collector_cell_id in cell_ids:
            raise ScenarioError(_join(path, "collector_cell_id"),
                                f"collides with configured cell {collector_cell_id}")
        try:
            return CatcherAttackSpec(
                deploy_at_ms=_as_int(obj.get("deploy_at_ms", 0), _join(path, "deploy_at_ms"), minimum=0),
                collector_cell_id=collector_cell_id,
                collector_power_dbm=_as_number(obj.get("collector_power_dbm", -70.0),
                                               _join(path, "collector_power_dbm")),
                jam_penalty_db=_as_number(obj.get("jam_penalty_db", 60.0),
                                          _join(path, "jam_penalty_db")),
                jammer_active=_as_bool(obj.get("jammer_active", True), _join(path, "jammer_active")),
                plan=plan,
                auto_discover=auto,
                probe_ue=probe,
                step_ms=_as_int(obj.get("step_ms", 100), _join(path, "step_ms"), minimum=1),
                register_timeout_ms=_as_int(obj.get("register_timeout_ms", 5000),
                                            _join(path, "register_timeout_ms"), minimum=1),
                reselect_timeout_ms=_as_int(obj.get("reselect_timeout_ms", 5000),
                                            _join(path, "reselect_timeout_ms"), minimum=1),
            )
        except ValueError as exc:
            raise ScenarioError(path, str(exc)) from exc
    if mode == "roaming_catcher":
        _check_keys(obj, _ROAMING_KEYS, path)
        for key in ("home_plmn", "earfcn", "tac", "power_dbm"):
            if key not in obj:
                raise ScenarioError(_join(path, key), "required field missing")
        collector_cell_id = _as_int(obj.get("collector_cell_id", 900),
                                    _join(path, "collector_cell_id"), minimum=0)
        if collector_cell_id in cell_ids:
            raise ScenarioError(_join(path, "collector_cell_id"),
                                f"collides with configured cell {collector_cell_id}")
        priority = _as_int(obj.get("priority", 4), _join(path, "priority"))
        if not 0 <= priority <= 7:
            raise ScenarioError(_join(path, "priority"), f"priority {priority} out of range 0..7")
        return RoamingAttackSpec(
            home_plmn=_parse_plmn(obj["home_plmn"], _join(path, "home_plmn")),
            earfcn=_as_int(obj["earfcn"], _join(path, "earfcn"), minimum=0),
            tac=_as_int(obj["tac"], _join(path, "tac"), minimum=0, maximum=0xFFFF),
            power_dbm=_as_number(obj["power_dbm"], _join(path, "power_dbm")),
            deploy_at_ms=_as_int(obj.get("deploy_at_ms", 0), _join(path, "deploy_at_ms"), minimum=0),
            collector_cell_id=collector_cell_id,
            priority=priority,
        )
    raise ScenarioError(_join(path, "mode"),
                        f"must be 'imsi_catcher' or 'roaming_catcher', got {mode!r}")


def _parse_events(value, path: str, ue_ids: set, jammer_names: set,
                  known_cell_ids: set, global_map: dict[int, int],
                  q_default: float) -> tuple[list[TimelineEvent], list[tuple[CellSite, str]]]:
    events: list[TimelineEvent] = []
    added_cells: list[tuple[CellSite, str]] = []
    entries = _as_list(value, path)
    # ids created by cell_add events are legal targets for later cell_remove
    for i, entry in enumerate(entries):
        obj = _as_dict(entry, f"{path}[{i}]")
        if obj.get("kind") == "cell_add" and isinstance(obj.get("cell"), dict):
            cid = obj["cell"].get("cell_id")
            if isinstance(cid, int):
                known_cell_ids = known_cell_ids | {cid}
    for i, entry in enumerate(entries):
        epath = f"{path}[{i}]"
        obj = _as_dict(entry, epath)
        kind = obj.get("kind")
        if kind not in _SCRIPTABLE_KINDS:
            raise ScenarioError(_join(epath, "kind"),
                                f"unknown event kind {kind!r}")
        t_ms = _as_int(obj.get("t_ms"), _join(epath, "t_ms"), minimum=0)
        params: dict = {}
        if kind in ("power_on", "power_off", "reboot", "set_rplmn"):
            ue = _as_str(obj.get("ue"), _join(epath, "ue"))
            if ue not in ue_ids:
                raise ScenarioError(_join(epath, "ue"), f"unknown ue {ue!r}")
            params["ue"] = ue
            if kind == "set_rplmn":
                params["plmn"] = _parse_plmn(obj.get("plmn"), _join(epath, "plmn"))
        elif kind == "jammer_toggle":
            name = _as_str(obj.get("jammer"), _join(epath, "jammer"))
            if name not in jammer_names:
                raise ScenarioError(_join(epath, "jammer"), f"unknown jammer {name!r}")
            params["jammer"] = name
            params["active"] = _as_bool(obj.get("active"), _join(epath, "active"))
        elif kind == "cell_add":
            site, backend = _parse_cell(obj.get("cell"), _join(epath, "cell"),
                                        global_map, q_default)
            params["site"] = site
            params["backend"] = backend
            added_cells.append((site, backend))
        elif kind == "cell_remove":
            cid = _as_int(obj.get("cell_id"), _join(epath, "cell_id"), minimum=0)
            if cid not in known_cell_ids:
                raise ScenarioError(_join(epath, "cell_id"), f"unknown cell {cid}")
            params["cell_id"] = cid
        events.append(TimelineEvent(t_ms, kind, params))
    return events, added_cells


_TOP_KEYS = {"cells", "jammers", "priority_map", "ues", "attack", "events",
             "end_ms", "seed", "q_rxlevmin_dbm", "hysteresis_db", "latency_ms"}


def load_scenario(doc: dict) -> Scenario:
    """Validate a scenario document and resolve every cross reference."""
    obj = _as_dict(doc, "<document>")
    _check_keys(obj, _TOP_KEYS, "")
    if "end_ms" not in obj:
        raise ScenarioError("end_ms", "required field missing")
    end_ms = _as_int(obj["end_ms"], "end_ms", minimum=1)
    seed = _as_int(obj.get("seed", 0), "seed")
    q_default = _as_number(obj.get("q_rxlevmin_dbm", DEFAULT_Q_RXLEVMIN_DBM), "q_rxlevmin_dbm")
    hysteresis = _as_number(obj.get("hysteresis_db", DEFAULT_HYSTERESIS_DB), "hysteresis_db")
    if hysteresis < 0:
        raise ScenarioError("hysteresis_db", "must be non-negative")
    latency = _as_int(obj.get("latency_ms", DEFAULT_LATENCY_MS), "latency_ms", minimum=1)
    global_map = _parse_priority_map(obj.get("priority_map", {}), "priority_map")

    cells: list[CellSite] = []
    collector_ids = set()
    seen_cells = set()
    for i, raw in enumerate(_as_list(obj.get("cells", []), "cells")):
        site, backend = _parse_cell(raw, f"cells[{i}]", global_map, q_default)
        if site.config.cell_id in seen_cells:
            raise ScenarioError(f"cells[{i}].cell_id",
                                f"duplicate cell_id {site.config.cell_id}")
        seen_cells.add(site.config.cell_id)
        if backend == "collector":
            collector_ids.add(site.config.cell_id)
        cells.append(site)

    jammers: dict[str, JammerConfig] = {}
    for i, raw in enumerate(_as_list(obj.get("jammers", []), "jammers")):
        name, jammer = _parse_jammer(raw, f"jammers[{i}]", i)
        if name in jammers:
            raise ScenarioError(f"jammers[{i}].name", f"duplicate jammer name {name!r}")
        jammers[name] = jammer

    ues: list[UeSpec] = []
    ue_ids = set()
    for i, raw in enumerate(_as_list(obj.get("ues", []), "ues")):
        spec = _parse_ue(raw, f"ues[{i}]")
        if spec.ue_id in ue_ids:
            raise ScenarioError(f"ues[{i}].ue_id", f"duplicate ue_id {spec.ue_id!r}")
        ue_ids.add(spec.ue_id)
        ues.append(spec)

    attack = None
    jammer_names = set(jammers)
    known_cell_ids = set(seen_cells)
    if "attack" in obj and obj["attack"] is not None:
        attack = _parse_attack(obj["attack"], "attack", ue_ids, seen_cells)
        known_cell_ids.add(attack.collector_cell_id)
        if isinstance(attack, CatcherAttackSpec):
            jammer_names.add(ROGUE_JAMMER_NAME)

    events, added = _parse_events(obj.get("events", []), "events", ue_ids,
                                  jammer_names, known_cell_ids, global_map, q_default)
    for site, backend in added:
        if backend == "collector":
            collector_ids.add(site.config.cell_id)

    return Scenario(
        cells=cells,
        ues=ues,
        end_ms=end_ms,
        jammers=jammers,
        priority_map=global_map,
        collector_cell_ids=frozenset(collector_ids),
        attack=attack,
        events=events,
        seed=seed,
        q_rxlevmin_dbm=q_default,
        hysteresis_db=hysteresis,
        latency_ms=latency,
    )


def load_scenario_file(path) -> Scenario:
    """Read and validate a scenario JSON file; I/O errors propagate."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("<document>", f"invalid JSON: {exc}") from exc
    return load_scenario(doc)


# ---------------------------------------------------------------------------
# the event loop


def _node_name(ref: tuple) -> str:
    kind, ident = ref
    return ident if kind == "ue" else f"cell:{ident}"


class Simulation:
    """One deterministic run of a scenario.

    The Scenario object is treated as an immutable template: everything a run
    mutates (UE contexts, jammer flags, backends) is built fresh here, so the
    same Scenario can be run repeatedly with identical results.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.rng = random.Random(scenario.seed)  # for scenario-author extensions
        self.env = RadioEnvironment(scenario.hysteresis_db)
        for site in scenario.cells:
            self.env.add_cell(site.config, site.sib)
        for name, jammer in scenario.jammers.items():
            self.env.add_jammer(name, replace(jammer))

        self.ues: dict[str, UeContext] = {}
        self._period: dict[str, int] = {}
        for spec in scenario.ues:
            usim = UsimProfile(
                imsi=spec.imsi,
                hplmn=spec.hplmn,
                rplmn=spec.rplmn,
                roaming_enabled=spec.roaming_enabled,
                invalid_for_service=spec.invalid_for_service,
            )
            self.ues[spec.ue_id] = UeContext(spec.ue_id, usim,
                                             spec.reselection_period_ms)
            self._period[spec.ue_id] = spec.reselection_period_ms

        self.mmes: dict[Plmn, Mme] = {}
        self.collectors: dict[int, Collector] = {}
        for site in scenario.cells:
            if site.config.cell_id in scenario.collector_cell_ids:
                self.collectors[site.config.cell_id] = Collector(site.sib)
            else:
                self._ensure_mme(site.config.plmn, site.config.tac)

        self.trace: list[TraceRecord] = []
        self.registrations: list[dict] = []
        self.denial_intervals: dict[str, list[list[int]]] = {u: [] for u in self.ues}
        self._denied_since: dict[str, Optional[int]] = {u: None for u in self.ues}
        self._tick_gen: dict[str, int] = {u: 0 for u in self.ues}
        self.discovery: Optional[DiscoveryController] = None
        self.attack_info: Optional[dict] = None
        self._queue: list = []
        self._seq = itertools.count()
        self._schedule_initial()

    # -- scheduling -------------------------------------------------------

    def schedule(self, t_ms: int, kind: str, **params) -> None:
        heapq.heappush(self._queue, (t_ms, next(self._seq), kind, params))

    def schedule_attacker_step(self, t_ms: int) -> None:
        self.schedule(t_ms, "attacker_step", op="discover")

    def _schedule_initial(self) -> None:
        attack = self.scenario.attack
        # same-instant ordering: attack machinery first, then UE power-ons,
        # then the scripted timeline
        if isinstance(attack, CatcherAttackSpec):
            self.attack_info = {"mode": "imsi_catcher", "status": "pending",
                                "plan": None, "deployed_at_ms": None,
                                "jammer_on_ms": None, "failure": None}
            if attack.auto_discover:
                self.discovery = DiscoveryController(
                    attack.probe_ue,
                    deploy=attack.deploy,
                    jam_penalty_db=attack.jam_penalty_db,
                    step_ms=attack.step_ms,
                    register_timeout_ms=attack.register_timeout_ms,
                    reselect_timeout_ms=attack.reselect_timeout_ms,
                )
                self.schedule_attacker_step(attack.deploy_at_ms)
            else:
                self.schedule(attack.deploy_at_ms, "attacker_step", op="deploy_catcher")
        elif isinstance(attack, RoamingAttackSpec):
            self.attack_info = {"mode": "roaming_catcher", "status": "pending",
                                "plan": None, "deployed_at_ms": None,
                                "jammer_on_ms": None, "failure": None}
            self.schedule(attack.deploy_at_ms, "attacker_step", op="deploy_roaming")
        for spec in self.scenario.ues:
            if spec.power_on_ms is not None:
                self.schedule(spec.power_on_ms, "power_on", ue=spec.ue_id)
        for event in self.scenario.events:
            self.schedule(event.t_ms, event.kind, **event.params)

    # -- backends ---------------------------------------------------------

    def _ensure_mme(self, plmn: Plmn, serving_tac: int) -> Mme:
        if plmn not in self.mmes:
            hss = HssDatabase({spec.imsi for spec in self.scenario.ues
                               if spec.hplmn == plmn})
            self.mmes[plmn] = Mme(plmn, hss, serving_tac)
        return self.mmes[plmn]

    def deploy_catcher(self, plan: AttackPlan, t_ms: int) -> None:
        """Stand up collector plus jammer; collector first."""
        attack = self.scenario.attack
        pair = deploy_imsi_catcher(
            plan,
            attack.collector_power_dbm,
            cell_id=attack.collector_cell_id,
            jam_penalty_db=attack.jam_penalty_db,
            priority_map=self.scenario.priority_map,
            q_rxlevmin_dbm=self.scenario.q_rxlevmin_dbm,
        )
        if pair.collector_cell.cell_id in self.env.sites:
            log.warning("collector cell id %d already present; not deployed",
                        pair.collector_cell.cell_id)
            return
        self.env.add_cell(pair.collector_cell, pair.collector_sib)
        self.collectors[pair.collector_cell.cell_id] = pair.collector
        pair.jammer.active = attack.jammer_active
        self.env.add_jammer(ROGUE_JAMMER_NAME, pair.jammer)
        self.attack_info.update(
            status="deployed",
            plan=_plan_dict(plan),
            deployed_at_ms=t_ms,
            jammer_on_ms=t_ms if attack.jammer_active else None,
        )

    def _deploy_roaming(self, t_ms: int) -> None:
        attack = self.scenario.attack
        pair = deploy_roaming_catcher(
            attack.home_plmn,
            attack.earfcn,
            attack.tac,
            attack.power_dbm,
            cell_id=attack.collector_cell_id,
            priority=attack.priority,
            q_rxlevmin_dbm=self.scenario.q_rxlevmin_dbm,
        )
        if pair.collector_cell.cell_id in self.env.sites:
            log.warning("collector cell id %d already present; not deployed",
                        pair.collector_cell.cell_id)
            return
        self.env.add_cell(pair.collector_cell, pair.collector_sib)
        self.collectors[pair.collector_cell.cell_id] = pair.collector
        self.attack_info.update(status="deployed", deployed_at_ms=t_ms)

    # -- state tracking ---------------------------------------------------

    def _track(self, ue: UeContext, prev: EmmState, t_ms: int) -> None:
        if prev is not EmmState.REGISTERED and ue.emm is EmmState.REGISTERED:
            self.registrations.append({
                "t_ms": t_ms,
                "ue": ue.ue_id,
                "cell_id": ue.camped_cell,
                "tac": ue.registered_tac,
            })
        since = self._denied_since[ue.ue_id]
        if ue.emm is EmmState.SERVICE_DENIED and since is None:
            self._denied_since[ue.ue_id] = t_ms
        elif ue.emm is not EmmState.SERVICE_DENIED and since is not None:
            self.denial_intervals[ue.ue_id].append([since, t_ms])
            self._denied_since[ue.ue_id] = None

    def _bump_ticks(self, ue: UeContext, t_ms: int) -> None:
        self._tick_gen[ue.ue_id] += 1
        if ue.powered and ue.emm is not EmmState.SERVICE_DENIED:
            period = self._period[ue.ue_id]
            if t_ms + period <= self.scenario.end_ms:
                self.schedule(t_ms + period, "ue_tick", ue=ue.ue_id,
                              gen=self._tick_gen[ue.ue_id])

    def _send_from_ue(self, ue: UeContext, messages: list[EmmMessage], t_ms: int) -> None:
        for msg in messages:
            if ue.camped_cell is None or ue.camped_cell not in self.env.sites:
                log.warning("ue %s has a message but no cell; dropped", ue.ue_id)
                continue
            earfcn = self.env.sites[ue.camped_cell].config.earfcn
            self.schedule(t_ms + self.scenario.latency_ms, "deliver_message",
                          src=("ue", ue.ue_id), dst=("cell", ue.camped_cell),
                          msg=msg, earfcn=earfcn)

    # -- event handlers ---------------------------------------------------

    def _ev_power_on(self, t_ms: int, ue_id: str) -> None:
        ue = self.ues[ue_id]
        if ue.powered:
            log.warning("power_on for already powered ue %s ignored", ue_id)
            return
        prev = ue.emm
        outgoing = ue.power_on(self.env, t_ms)
        self._send_from_ue(ue, outgoing, t_ms)
        self._bump_ticks(ue, t_ms)
        self._track(ue, prev, t_ms)

    def _ev_power_off(self, t_ms: int, ue_id: str) -> None:
        ue = self.ues[ue_id]
        prev = ue.emm
        ue.power_off()
        self._tick_gen[ue_id] += 1
        self._track(ue, prev, t_ms)

    def _ev_reboot(self, t_ms: int, ue_id: str) -> None:
        ue = self.ues[ue_id]
        prev = ue.emm
        outgoing = ue.reboot(self.env, t_ms)
        self._send_from_ue(ue, outgoing, t_ms)
        self._bump_ticks(ue, t_ms)
        self._track(ue, prev, t_ms)

    def _ev_tick(self, t_ms: int, ue_id: str, gen: int) -> None:
        if gen != self._tick_gen[ue_id]:
            return  # superseded by a power event
        ue = self.ues[ue_id]
        if not ue.powered or ue.emm is EmmState.SERVICE_DENIED:
            return
        prev = ue.emm
        outgoing = ue.tick(self.env, t_ms)
        self._send_from_ue(ue, outgoing, t_ms)
        self._track(ue, prev, t_ms)
        period = self._period[ue_id]
        if t_ms + period <= self.scenario.end_ms:
            self.schedule(t_ms + period, "ue_tick", ue=ue_id, gen=gen)

    def _ev_deliver(self, t_ms: int, src: tuple, dst: tuple,
                    msg: EmmMessage, earfcn: int) -> None:
        note = None
        if dst[0] == "cell":
            site = self.env.sites.get(dst[1])
            if site is None:
                note = "cell gone; dropped"
            else:
                backend = self.collectors.get(dst[1])
                if backend is not None:
                    reply = backend.handle(msg, t_ms)
                else:
                    mme = self.mmes.get(site.config.plmn)
                    if mme is None:
                        reply = None
                        note = "no network behind cell; dropped"
                    else:
                        # the MME serves the tracking area the message came through
                        mme.serving_tac = site.config.tac
                        reply = mme.handle(msg)
                if reply is not None and src[0] == "ue":
                    self.schedule(t_ms + self.scenario.latency_ms, "deliver_message",
                                  src=("cell", dst[1]), dst=src, msg=reply,
                                  earfcn=site.config.earfcn)
                elif reply is None and note is None:
                    note = "unhandled; dropped"
        else:
            ue = self.ues[dst[1]]
            if not ue.powered or ue.camped_cell != src[1]:
                note = "ue not camped on sender; dropped"
            elif src[1] not in self.env.sites:
                note = "cell gone; dropped"
            else:
                prev = ue.emm
                serving = self.env.sites[src[1]].config
                outgoing, note = nas.ue_handle_reply(ue, msg, serving)
                self._send_from_ue(ue, outgoing, t_ms)
                self._track(ue, prev, t_ms)
        self.trace.append(TraceRecord(
            t_ms=t_ms,
            sender=_node_name(src),
            receiver=_node_name(dst),
            earfcn=earfcn,
            hex=encode_emm(msg).hex(),
            decoded=message_label(msg),
            note=note,
        ))

    def _ev_jammer_toggle(self, t_ms: int, jammer: str, active: bool) -> None:
        if jammer not in self.env.jammers:
            log.warning("jammer_toggle for unknown jammer %r ignored", jammer)
            return
        self.env.set_jammer_active(jammer, active)
        if (active and jammer == ROGUE_JAMMER_NAME and self.attack_info
                and self.attack_info.get("jammer_on_ms") is None):
            self.attack_info["jammer_on_ms"] = t_ms

    def _ev_cell_add(self, t_ms: int, site: CellSite, backend: str) -> None:
        if site.config.cell_id in self.env.sites:
            log.warning("cell_add for existing cell %d ignored", site.config.cell_id)
            return
        self.env.add_cell(site.config, site.sib)
        if backend == "collector":
            self.collectors[site.config.cell_id] = Collector(site.sib)
        else:
            self._ensure_mme(site.config.plmn, site.config.tac)

    def _ev_attacker_step(self, t_ms: int, op: str) -> None:
        if op == "discover":
            if self.discovery is not None:
                self.discovery.step(self, t_ms)
        elif op == "deploy_catcher":
            self.deploy_catcher(self.scenario.attack.plan, t_ms)
        elif op == "deploy_roaming":
            self._deploy_roaming(t_ms)

    def _dispatch(self, t_ms: int, kind: str, params: dict) -> None:
        if kind == "power_on":
            self._ev_power_on(t_ms, params["ue"])
        elif kind == "power_off":
            self._ev_power_off(t_ms, params["ue"])
        elif kind == "reboot":
            self._ev_reboot(t_ms, params["ue"])
        elif kind == "ue_tick":
            self._ev_tick(t_ms, params["ue"], params["gen"])
        elif kind == "deliver_message":
            self._ev_deliver(t_ms, params["src"], params["dst"],
                             params["msg"], params["earfcn"])
        elif kind == "jammer_toggle":
            self._ev_jammer_toggle(t_ms, params["jammer"], params["active"])
        elif kind == "cell_add":
            self._ev_cell_add(t_ms, params["site"], params["backend"])
        elif kind == "cell_remove":
            self.env.remove_cell(params["cell_id"])
        elif kind == "set_rplmn":
            self.ues[params["ue"]].usim.rplmn = params["plmn"]
        elif kind == "attacker_step":
            self._ev_attacker_step(t_ms, params["op"])
        else:
            log.warning("unknown event kind %r ignored", kind)

    # -- run and report ---------------------------------------------------

    def run(self) -> tuple[list[TraceRecord], dict]:
        while self._queue and self._queue[0][0] <= self.scenario.end_ms:
            t_ms, _seq, kind, params = heapq.heappop(self._queue)
            self._dispatch(t_ms, kind, params)
        return self.trace, self._build_report()

    def _build_report(self) -> dict:
        end = self.scenario.end_ms
        for ue_id, since in self._denied_since.items():
            if since is not None:
                self.denial_intervals[ue_id].append([since, end])
                self._denied_since[ue_id] = None
        if self.discovery is not None and self.attack_info is not None:
            if self.discovery.state == "failed":
                self.attack_info["status"] = "discovery_failed"
                self.attack_info["failure"] = self.discovery.failure
            elif self.discovery.plan is not None:
                self.attack_info["plan"] = _plan_dict(self.discovery.plan)
                if self.attack_info["status"] == "pending":
                    self.attack_info["status"] = "discovered"
        captures = {}
        for cell_id in sorted(self.collectors):
            captures[str(cell_id)] = [
                {"t_ms": cap.t_ms, "imsi": cap.imsi.digits, "cell_id": cap.cell_id}
                for cap in self.collectors[cell_id].captures
            ]
        final_states = {}
        for ue_id in sorted(self.ues):
            ue = self.ues[ue_id]
            final_states[ue_id] = {
                "emm": ue.emm.value,
                "powered": ue.powered,
                "camped_cell": ue.camped_cell,
                "registered_tac": ue.registered_tac,
                "rplmn": str(ue.usim.rplmn) if ue.usim.rplmn else None,
                "has_guti": ue.guti is not None,
            }
        return {
            "settings": self.scenario.settings(),
            "final_states": final_states,
            "captures": captures,
            "denial_intervals": {u: self.denial_intervals[u] for u in sorted(self.denial_intervals)},
            "registrations": self.registrations,
            "attack": self.attack_info,
            "trace_records": len(self.trace),
        }


def _plan_dict(plan: AttackPlan) -> dict:
    return {
        "target_plmn": str(plan.target_plmn),
        "jam_earfcn": plan.jam_earfcn,
        "collector_earfcn": plan.collector_earfcn,
        "commercial_tac": plan.commercial_tac,
        "collector_tac": plan.collector_tac,
    }


def run_scenario(scenario: Scenario) -> tuple[list[TraceRecord], dict]:
    return Simulation(scenario).run()


def write_trace(trace: list[TraceRecord], destination) -> None:
    """One JSON object per line; field names and order are fixed."""
    with open(destination, "w", encoding="utf-8") as fh:
        for record in trace:
            fh.write(json.dumps(record.as_dict()))
            fh.write("\n")


def write_report(report: dict, destination) -> None:
    with open(destination, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
