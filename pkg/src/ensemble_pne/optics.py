"""Linear-optics elements and the two circuits used by the protocol.

Mode matrices act on creation operators: ``a_k^+ -> sum_j M[j, k] a_j^+``.
For a single photon this is just ``amplitudes -> M @ amplitudes``, so a
wave plate's mode matrix is its Jones matrix in the (H, V) basis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import fock
from .fock import MixedState, StateVector

QWP = math.pi / 2
HWP = math.pi

# The symmetric beam splitter puts an extra i on the reflected arm.  Shifting
# the channel phase by -pi/2 makes a D1 click herald
# alpha s1^+ + e^{i phi12} beta s2^+ exactly.
CHANNEL_PHASE_OFFSET = -math.pi / 2

GENERATION_ARMS = ("E1.stokes", "E2.stokes")
GENERATION_DETECTORS = ("D1.H", "D2.V", "D3.H", "D4.V")


def polarization_modes(path: str) -> tuple[str, str]:
    return f"{path}.H", f"{path}.V"


@dataclass(frozen=True)
class BeamSplitter:
    mode_a: str
    mode_b: str
    transmissivity: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.transmissivity <= 1.0:
            raise ValueError(f"transmissivity must lie in [0, 1], got {self.transmissivity}")

    @property
    def modes(self) -> tuple[str, ...]:
        return (self.mode_a, self.mode_b)

    def matrix(self) -> np.ndarray:
        t = math.sqrt(self.transmissivity)
        r = 1j * math.sqrt(1.0 - self.transmissivity)
        return np.array([[t, r], [r, t]], dtype=complex)

    def describe(self) -> str:
        return f"BS {self.mode_a} {self.mode_b} T={self.transmissivity:.12g}"


@dataclass(frozen=True)
class WavePlate:
    path: str
    theta: float
    retardance: float = HWP

    @property
    def modes(self) -> tuple[str, ...]:
        return polarization_modes(self.path)

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        rot = np.array([[c, s], [-s, c]])
        return rot.T @ np.diag([1.0, np.exp(1j * self.retardance)]) @ rot

    def describe(self) -> str:
        kind = {QWP: "QWP", HWP: "HWP"}.get(self.retardance, "WP")
        return f"{kind} {self.path} theta={self.theta:.12g} retardance={self.retardance:.12g}"


@dataclass(frozen=True)
class PhaseShifter:
    mode: str
    phi: float

    @property
    def modes(self) -> tuple[str, ...]:
        return (self.mode,)

    def matrix(self) -> np.ndarray:
        return np.array([[np.exp(1j * self.phi)]])

    def describe(self) -> str:
        return f"PS {self.mode} phi={self.phi:.12g}"


@dataclass(frozen=True)
class PolarizingBeamSplitter:
    """Routes ``in_path.H`` to ``out_h.H`` and ``in_path.V`` to ``out_v.V``.

    With ``combine=True`` the element runs backwards, merging the two output
    arms into ``in_path``.
    """

    in_path: str
    out_h: str
    out_v: str
    combine: bool = False

    @property
    def mapping(self) -> dict[str, str]:
        h_in, v_in = polarization_modes(self.in_path)
        forward = {h_in: f"{self.out_h}.H", v_in: f"{self.out_v}.V"}
        if self.combine:
            return {v: k for k, v in forward.items()}
        return forward

    @property
    def modes(self) -> tuple[str, ...]:
        return tuple(self.mapping)

    def matrix(self) -> np.ndarray:
        return np.eye(2, dtype=complex)

    def inverse(self) -> "PolarizingBeamSplitter":
        return PolarizingBeamSplitter(self.in_path, self.out_h, self.out_v, not self.combine)

    def describe(self) -> str:
        arrow = "<=" if self.combine else "=>"
        return f"PBS {self.in_path} {arrow} {self.out_h}.H {self.out_v}.V"


Element = Union[BeamSplitter, WavePlate, PhaseShifter, PolarizingBeamSplitter]


@dataclass(frozen=True)
class Circuit:
    elements: tuple[Element, ...]
    detectors: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "detectors", tuple(self.detectors))

    def __iter__(self):
        return iter(self.elements)

    def __len__(self) -> int:
        return len(self.elements)

    def apply(self, state: StateVector | MixedState):
        if isinstance(state, MixedState):
            return state.map(self.apply)
        for element in self.elements:
            state = apply_element(state, element)
        return state

    def dump(self) -> str:
        return "\n".join(e.describe() for e in self.elements)


def mode_matrix(element: Element) -> np.ndarray:
    return element.matrix()


def apply_element(state: StateVector, element: Element) -> StateVector:
    if isinstance(element, PolarizingBeamSplitter):
        return fock.relabel(state, element.mapping)
    if isinstance(element, PhaseShifter):
        return fock.apply_phase(state, element.mode, element.phi)
    return fock.apply_mode_transform(state, element.modes, element.matrix())


def mixing_amplitudes(theta1: float) -> tuple[float, float]:
    """(alpha, beta) = (sin 2 theta1, cos 2 theta1)."""
    return math.sin(2 * theta1), math.cos(2 * theta1)


def build_generation_circuit(theta1: float, phi12: float) -> Circuit:
    """Wave plates, channel phase, 50/50 combination and polarization analysis.

    Each Stokes photon enters as vertically polarized in ``E{i}.stokes.V``.
    The quarter-wave plates sit at zero inclination (they only fix the linear
    polarization) and the half-wave plates are set to ``theta1`` and
    ``pi/4 - theta1``.  Detectors D1/D2 watch the H/V ports of the first
    beam-splitter output, D3/D4 those of the second.
    """
    if not -1e-12 <= theta1 <= math.pi / 4 + 1e-12:
        raise ValueError(f"theta1 must lie in [0, pi/4], got {theta1}")
    arm1, arm2 = GENERATION_ARMS
    h1, v1 = polarization_modes(arm1)
    h2, v2 = polarization_modes(arm2)
    shift = phi12 + CHANNEL_PHASE_OFFSET
    elements = [
        WavePlate(arm1, 0.0, QWP),
        WavePlate(arm1, theta1, HWP),
        WavePlate(arm2, 0.0, QWP),
        WavePlate(arm2, math.pi / 4 - theta1, HWP),
        PhaseShifter(h2, shift),
        PhaseShifter(v2, shift),
        BeamSplitter(h1, h2),
        BeamSplitter(v1, v2),
        PolarizingBeamSplitter(arm1, "D1", "D2"),
        PolarizingBeamSplitter(arm2, "D3", "D4"),
    ]
    return Circuit(tuple(elements), GENERATION_DETECTORS)


def build_measurement_circuit(phi: float, side_paths: Sequence[str]) -> Circuit:
    """Single-qubit rotation on a dual-rail pair: phase on the second rail, then a 50/50 BS.

    The detectors sit on the two beam-splitter outputs, which keep the input labels.
    """
    if len(side_paths) != 2:
        raise ValueError(f"a measurement side needs exactly two modes, got {side_paths}")
    first, second = side_paths
    return Circuit((PhaseShifter(second, phi), BeamSplitter(first, second)), tuple(side_paths))
