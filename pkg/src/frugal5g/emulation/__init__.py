"""Wi-Fi emulation over LTE bearers: pure state machines and their drivers."""

from .drivers import EmulatedAp, EmulatedUe
from .state import (
    EnbEmuContext,
    EnbPhase,
    Mode,
    UeEmuState,
    UePhase,
    decapsulate,
    detect_mode,
    encapsulate,
    enb_emu_step,
    page_via_tim,
    ue_emu_start,
    ue_emu_step,
)

__all__ = [
    "EmulatedAp",
    "EmulatedUe",
    "EnbEmuContext",
    "EnbPhase",
    "Mode",
    "UeEmuState",
    "UePhase",
    "decapsulate",
    "detect_mode",
    "encapsulate",
    "enb_emu_step",
    "page_via_tim",
    "ue_emu_start",
    "ue_emu_step",
]
