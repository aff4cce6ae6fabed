"""Cells, jammers and the idle-mode cell selection / reselection rules.

Received power per cell is scenario-specified directly; a jammer subtracts a
fixed penalty from every cell on its channel.  Ranking is by the absolute
priority a cell advertises for its own channel (7 highest, 0 lowest), then by
effective power, then by cell id.  Propagation realism is out of scope: the
behaviors under test depend only on ordering and thresholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, TYPE_CHECKING

from .codec import Plmn

if TYPE_CHECKING:
    from .ue import UsimProfile

Earfcn = int

DEFAULT_Q_RXLEVMIN_DBM = -110.0
DEFAULT_HYSTERESIS_DB = 3.0


@dataclass(frozen=True)
class CellConfig:
    cell_id: int
    plmn: Plmn
    tac: int
    earfcn: Earfcn
    rx_power_dbm: float
    is_rogue: bool = False

    def __post_init__(self):
        if self.cell_id < 0:
            raise ValueError(f"cell_id must be non-negative: {self.cell_id}")
        if not 0 <= self.tac <= 0xFFFF:
            raise ValueError(f"tac out of range: {self.tac}")
        if self.earfcn < 0:
            raise ValueError(f"earfcn must be non-negative: {self.earfcn}")
        if not math.isfinite(self.rx_power_dbm):
            raise ValueError(f"rx_power_dbm must be finite: {self.rx_power_dbm}")


@dataclass
class SibPayload:
    """Broadcast content a camping UE reads from a cell."""

    plmn: Plmn
    tac: int
    cell_id: int
    priority_map: dict[Earfcn, int]
    q_rxlevmin_dbm: float = DEFAULT_Q_RXLEVMIN_DBM

    def __post_init__(self):
        for earfcn, prio in self.priority_map.items():
            if earfcn < 0:
                raise ValueError(f"earfcn must be non-negative: {earfcn}")
            if not 0 <= prio <= 7:
                raise ValueError(f"priority {prio} for earfcn {earfcn} out of range 0..7")


@dataclass
class JammerConfig:
    earfcn: Earfcn
    jam_penalty_db: float
    active: bool = True

    def __post_init__(self):
        if self.earfcn < 0:
            raise ValueError(f"earfcn must be non-negative: {self.earfcn}")
        if not (self.jam_penalty_db > 0):
            raise ValueError(f"jam_penalty_db must be positive: {self.jam_penalty_db}")


@dataclass
class RadioSnapshot:
    effective_dbm: dict[int, float]
    timestamp_ms: int


@dataclass
class CellSite:
    config: CellConfig
    sib: SibPayload


def make_sib(cell: CellConfig, priority_map: dict[Earfcn, int],
             q_rxlevmin_dbm: float = DEFAULT_Q_RXLEVMIN_DBM) -> SibPayload:
    """Build a cell's broadcast payload from its config and a priority map."""
    return SibPayload(
        plmn=cell.plmn,
        tac=cell.tac,
        cell_id=cell.cell_id,
        priority_map=dict(priority_map),
        q_rxlevmin_dbm=q_rxlevmin_dbm,
    )


def effective_power(cell: CellConfig, jammers: Iterable[JammerConfig]) -> float:
    """Received power after subtracting active jammers on the cell's channel."""
    power = cell.rx_power_dbm
    for jammer in jammers:
        if jammer.active and jammer.earfcn == cell.earfcn:
            power -= jammer.jam_penalty_db
    return power


class RadioEnvironment:
    """All cells and jammers visible at the UE position."""

    def __init__(self, hysteresis_db: float = DEFAULT_HYSTERESIS_DB):
        self.sites: dict[int, CellSite] = {}
        self.jammers: dict[str, JammerConfig] = {}
        self.hysteresis_db = hysteresis_db

    def add_cell(self, cell: CellConfig, sib: SibPayload) -> None:
        if cell.cell_id in self.sites:
            raise ValueError(f"duplicate cell_id {cell.cell_id}")
        self.sites[cell.cell_id] = CellSite(cell, sib)

    def remove_cell(self, cell_id: int) -> None:
        self.sites.pop(cell_id, None)

    def add_jammer(self, name: str, jammer: JammerConfig) -> None:
        self.jammers[name] = jammer

    def remove_jammer(self, name: str) -> None:
        self.jammers.pop(name, None)

    def set_jammer_active(self, name: str, active: bool) -> None:
        self.jammers[name].active = active

    def effective_power(self, cell: CellConfig) -> float:
        return effective_power(cell, self.jammers.values())

    def priority_of(self, site: CellSite) -> int:
        # a channel missing from the advertised map ranks lowest
        return site.sib.priority_map.get(site.config.earfcn, 0)

    def plmns(self) -> list[Plmn]:
        seen: list[Plmn] = []
        for site in self.sites.values():
            if site.config.plmn not in seen:
                seen.append(site.config.plmn)
        return seen

    def snapshot(self, timestamp_ms: int) -> RadioSnapshot:
        return RadioSnapshot(
            effective_dbm={
                cid: self.effective_power(site.config)
                for cid, site in sorted(self.sites.items())
            },
            timestamp_ms=timestamp_ms,
        )


def suitable_cells(env: RadioEnvironment, plmn: Plmn) -> list[tuple[CellConfig, float]]:
    """Cells of the given PLMN above their own threshold, best first.

    Order: advertised priority descending, effective power descending,
    cell id ascending (the stable tie break).
    """
    rows = []
    for site in env.sites.values():
        if site.config.plmn != plmn:
            continue
        power = env.effective_power(site.config)
        if power >= site.sib.q_rxlevmin_dbm:
            rows.append((env.priority_of(site), site.config, power))
    rows.sort(key=lambda row: (-row[0], -row[2], row[1].cell_id))
    return [(cell, power) for _prio, cell, power in rows]


def select_plmn_and_cell(usim: "UsimProfile",
                         env: RadioEnvironment) -> Optional[tuple[Plmn, CellConfig]]:
    """Pick the PLMN and cell to camp on at power-on.

    Candidate order: last-registered PLMN first, then the home PLMN, then any
    other visible PLMN by the power of its best suitable cell.  With roaming
    disabled, non-home PLMNs are never candidates.
    """
    if usim.invalid_for_service:
        return None
    candidates: list[Plmn] = []
    if usim.rplmn is not None and (usim.roaming_enabled or usim.rplmn == usim.hplmn):
        candidates.append(usim.rplmn)
    if usim.hplmn not in candidates:
        candidates.append(usim.hplmn)
    if usim.roaming_enabled:
        others = []
        for plmn in env.plmns():
            if plmn in candidates:
                continue
            ranked = suitable_cells(env, plmn)
            if ranked:
                others.append((ranked[0][1], plmn))
        others.sort(key=lambda row: (-row[0], row[1].mcc, row[1].mnc))
        candidates.extend(plmn for _power, plmn in others)
    for plmn in candidates:
        ranked = suitable_cells(env, plmn)
        if ranked:
            return plmn, ranked[0][0]
    return None


def evaluate_reselection(serving: CellConfig,
                         env: RadioEnvironment) -> Optional[CellConfig]:
    """Re-rank the serving PLMN's cells and decide whether to move.

    Returns the serving cell itself to keep camping, another cell to reselect
    to, or None when nothing (serving included) is suitable any more.  A move
    within the same priority level additionally requires the candidate to beat
    the serving cell's effective power by the hysteresis margin.
    """
    ranked = suitable_cells(env, serving.plmn)
    if not ranked:
        return None
    head, head_power = ranked[0]
    if head.cell_id == serving.cell_id:
        return serving
    by_id = {cell.cell_id: (cell, power) for cell, power in ranked}
    if serving.cell_id not in by_id:
        return head
    serving_site = env.sites[serving.cell_id]
    head_site = env.sites[head.cell_id]
    if env.priority_of(head_site) > env.priority_of(serving_site):
        return head
    serving_power = by_id[serving.cell_id][1]
    if head_power > serving_power + env.hysteresis_db:
        return head
    return serving
