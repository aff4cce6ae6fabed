"""NAS mobility-management exchange logic.

Three actors speak the EMM subset: the UE, the operator's MME backed by its
subscriber database, and the rogue collector that harvests identities and
rejects everyone with cause 3 (Illegal UE).  The engine serializes all
delivery; actors never share mutable state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, TYPE_CHECKING

from .codec import (
    AttachAccept,
    AttachReject,
    AttachRequest,
    EmmMessage,
    Guti,
    IdentityRequest,
    IdentityResponse,
    ILLEGAL_UE,
    Imsi,
    Plmn,
    TauAccept,
    TauReject,
    TauRequest,
    message_label,
)
from .radio import CellConfig, SibPayload

if TYPE_CHECKING:
    from .ue import UeContext

log = logging.getLogger(__name__)


class EmmState(Enum):
    DEREGISTERED = "DEREGISTERED"
    ATTACHING = "ATTACHING"
    REGISTERED = "REGISTERED"
    TAU_PENDING = "TAU_PENDING"
    SERVICE_DENIED = "SERVICE_DENIED"


PENDING_STATES = (EmmState.ATTACHING, EmmState.TAU_PENDING)


@dataclass
class HssDatabase:
    subscribers: set[Imsi] = field(default_factory=set)

    def knows(self, imsi: Imsi) -> bool:
        return imsi in self.subscribers


@dataclass
class Capture:
    """One harvested identity: when, who, via which rogue cell."""

    t_ms: int
    imsi: Imsi
    cell_id: int


class Mme:
    """The operator's mobility management entity plus its HSS."""

    def __init__(self, plmn: Plmn, hss: HssDatabase, serving_tac: int,
                 mme_group: int = 1, mme_code: int = 1):
        self.plmn = plmn
        self.hss = hss
        self.serving_tac = serving_tac
        self.mme_group = mme_group
        self.mme_code = mme_code
        self.guti_table: dict[Guti, Imsi] = {}
        self.next_m_tmsi = 0xC0000001

    def _allocate_guti(self, imsi: Imsi) -> Guti:
        guti = Guti(self.plmn, self.mme_group, self.mme_code,
                    self.next_m_tmsi & 0xFFFFFFFF)
        self.next_m_tmsi += 1
        self.guti_table[guti] = imsi
        return guti

    def handle(self, msg: EmmMessage) -> Optional[EmmMessage]:
        if isinstance(msg, AttachRequest):
            if isinstance(msg.identity, Imsi):
                if self.hss.knows(msg.identity):
                    return AttachAccept(self._allocate_guti(msg.identity), self.serving_tac)
                return AttachReject(ILLEGAL_UE)
            if msg.identity in self.guti_table:
                return AttachAccept(msg.identity, self.serving_tac)
            return IdentityRequest()
        if isinstance(msg, TauRequest):
            if msg.guti in self.guti_table:
                return TauAccept()
            return IdentityRequest()
        if isinstance(msg, IdentityResponse):
            if self.hss.knows(msg.imsi):
                return AttachAccept(self._allocate_guti(msg.imsi), self.serving_tac)
            return AttachReject(ILLEGAL_UE)
        log.debug("mme ignoring %s", message_label(msg))
        return None


class Collector:
    """Rogue cell backend: coax an identity out, log it, deny service."""

    def __init__(self, sib: SibPayload):
        self.broadcast = sib
        self.captures: list[Capture] = []

    @property
    def cell_id(self) -> int:
        return self.broadcast.cell_id

    def _capture(self, imsi: Imsi, t_ms: int) -> None:
        self.captures.append(Capture(t_ms, imsi, self.cell_id))

    def handle(self, msg: EmmMessage, t_ms: int) -> Optional[EmmMessage]:
        if isinstance(msg, AttachRequest):
            if isinstance(msg.identity, Imsi):
                self._capture(msg.identity, t_ms)
                return AttachReject(ILLEGAL_UE)
            return IdentityRequest()
        if isinstance(msg, TauRequest):
            return IdentityRequest()
        if isinstance(msg, IdentityResponse):
            self._capture(msg.imsi, t_ms)
            return AttachReject(ILLEGAL_UE)
        log.debug("collector ignoring %s", message_label(msg))
        return None


def ue_initial_message(ue: "UeContext", new_cell: CellConfig) -> Optional[EmmMessage]:
    """First message a UE owes the network after camping on new_cell.

    A registered UE whose tracking area changed updates it; one that still
    holds a temporary identity re-attaches with it; only a UE with no
    temporary identity at all exposes the permanent one.  A registered UE
    staying in the same tracking area owes nothing.
    """
    if ue.guti is not None and ue.emm is EmmState.REGISTERED:
        if new_cell.tac != ue.registered_tac:
            return TauRequest(ue.guti, ue.registered_tac)
        return None
    if ue.guti is not None:
        return AttachRequest(ue.guti)
    return AttachRequest(ue.usim.imsi)


def ue_handle_reply(ue: "UeContext", msg: EmmMessage,
                    serving_cell: CellConfig) -> tuple[list[EmmMessage], Optional[str]]:
    """Apply a network reply to the UE; returns (messages to send, note).

    Replies arriving outside a pending exchange are dropped with a note.
    """
    pending = ue.emm in PENDING_STATES
    if isinstance(msg, AttachAccept):
        if not pending:
            return _unexpected(ue, msg)
        ue.guti = msg.guti
        ue.registered_tac = msg.tac
        ue.emm = EmmState.REGISTERED
        ue.usim.rplmn = serving_cell.plmn
        return [], None
    if isinstance(msg, TauAccept):
        if ue.emm is not EmmState.TAU_PENDING:
            return _unexpected(ue, msg)
        ue.emm = EmmState.REGISTERED
        ue.registered_tac = serving_cell.tac
        ue.usim.rplmn = serving_cell.plmn
        return [], None
    if isinstance(msg, IdentityRequest):
        if not pending:
            return _unexpected(ue, msg)
        return [IdentityResponse(ue.usim.imsi)], None
    if isinstance(msg, (AttachReject, TauReject)):
        if not pending:
            return _unexpected(ue, msg)
        if msg.cause == ILLEGAL_UE:
            ue.emm = EmmState.SERVICE_DENIED
            ue.usim.invalid_for_service = True
            ue.camped_cell = None
            ue.selected_plmn = None
        else:
            ue.emm = EmmState.DEREGISTERED
        return [], None
    return _unexpected(ue, msg)


def _unexpected(ue: "UeContext", msg: EmmMessage) -> tuple[list[EmmMessage], str]:
    note = f"unexpected {message_label(msg)} in {ue.emm.value}; dropped"
    log.debug("ue %s: %s", ue.ue_id, note)
    return [], note
