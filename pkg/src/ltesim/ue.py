"""UE lifecycle: power state, USIM contents, camping and periodic reselection.

The UE is a single actor stepped by the engine.  Its methods return the NAS
messages it wants sent on its camped cell; the engine handles delivery and
timing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .codec import AttachRequest, EmmMessage, Guti, Imsi, Plmn, TauRequest
from .nas import EmmState, ue_initial_message
from .radio import RadioEnvironment, evaluate_reselection, select_plmn_and_cell

DEFAULT_RESELECTION_PERIOD_MS = 200


@dataclass
class UsimProfile:
    imsi: Imsi
    hplmn: Plmn
    rplmn: Optional[Plmn] = None
    roaming_enabled: bool = True
    invalid_for_service: bool = False

    def __post_init__(self):
        prefix = self.hplmn.mcc + self.hplmn.mnc
        if not self.imsi.digits.startswith(prefix):
            raise ValueError(
                f"imsi {self.imsi} does not begin with home plmn digits {prefix}"
            )


@dataclass
class UeContext:
    ue_id: str
    usim: UsimProfile
    reselection_period_ms: int = DEFAULT_RESELECTION_PERIOD_MS
    powered: bool = False
    emm: EmmState = EmmState.DEREGISTERED
    camped_cell: Optional[int] = None
    selected_plmn: Optional[Plmn] = None
    guti: Optional[Guti] = None
    registered_tac: Optional[int] = None
    # set by power_off so a later power_on behaves like a reboot
    _power_cycled: bool = field(default=False, repr=False)

    def power_on(self, env: RadioEnvironment, t_ms: int) -> list[EmmMessage]:
        """Switch on, pick a PLMN and cell, and start the attach/TAU exchange."""
        if self.powered:
            return []
        self.powered = True
        if self._power_cycled:
            # an off/on cycle clears the denial flag just like a reboot does
            self.usim.invalid_for_service = False
        if self.usim.invalid_for_service:
            self.emm = EmmState.SERVICE_DENIED
            return []
        self.emm = EmmState.DEREGISTERED
        return self._camp_and_greet(env)

    def power_off(self) -> None:
        """Drop camping and any pending exchange; USIM and GUTI survive."""
        self.powered = False
        self.camped_cell = None
        self.selected_plmn = None
        self.emm = EmmState.DEREGISTERED
        self._power_cycled = True

    def reboot(self, env: RadioEnvironment, t_ms: int) -> list[EmmMessage]:
        self.usim.invalid_for_service = False
        if self.powered:
            self.power_off()
        return self.power_on(env, t_ms)

    def tick(self, env: RadioEnvironment, t_ms: int) -> list[EmmMessage]:
        """Periodic reselection pass; may trigger an attach or TAU."""
        if not self.powered or self.emm is EmmState.SERVICE_DENIED:
            return []
        if self.camped_cell is None or self.camped_cell not in env.sites:
            self.camped_cell = None
            self.selected_plmn = None
            self._abort_pending()
            return self._camp_and_greet(env)
        serving = env.sites[self.camped_cell].config
        target = evaluate_reselection(serving, env)
        if target is None:
            self.camped_cell = None
            self.selected_plmn = None
            self._abort_pending()
            return []
        if target.cell_id == self.camped_cell:
            return []
        self.camped_cell = target.cell_id
        self._abort_pending()
        return self._greet(target)

    def _camp_and_greet(self, env: RadioEnvironment) -> list[EmmMessage]:
        selected = select_plmn_and_cell(self.usim, env)
        if selected is None:
            return []
        plmn, cell = selected
        self.selected_plmn = plmn
        self.camped_cell = cell.cell_id
        return self._greet(cell)

    def _greet(self, cell) -> list[EmmMessage]:
        msg = ue_initial_message(self, cell)
        if msg is None:
            return []
        if isinstance(msg, TauRequest):
            self.emm = EmmState.TAU_PENDING
        elif isinstance(msg, AttachRequest):
            self.emm = EmmState.ATTACHING
        return [msg]

    def _abort_pending(self) -> None:
        # an interrupted TAU leaves the UE registered; an interrupted attach does not
        if self.emm is EmmState.ATTACHING:
            self.emm = EmmState.DEREGISTERED
        elif self.emm is EmmState.TAU_PENDING:
            self.emm = EmmState.REGISTERED
