"""Heralded, tunable entanglement between atomic ensembles and its CHSH test."""
from .chsh import ChshSettings, PneState, SReport
from .fock import MixedState, ModeRegister, StateVector
from .protocol import Outcome, ProtocolParams

__all__ = [
    "ChshSettings",
    "MixedState",
    "ModeRegister",
    "Outcome",
    "PneState",
    "ProtocolParams",
    "SReport",
    "StateVector",
]
