"""Heralded generation of tunable entanglement between two atomic ensembles.

One attempt: both ensembles emit (Stokes photon paired with a collective
excitation), each Stokes arm loses its photon with probability ``eta``, the
arms go through the generation circuit, and the four detectors are read out.
The joint outcome distribution is computed exactly and then sampled once.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence, TextIO

import numpy as np

from . import fock
from .fock import MixedState, ModeRegister, StateVector
from .optics import (
    BeamSplitter,
    GENERATION_ARMS,
    build_generation_circuit,
    mixing_amplitudes,
    polarization_modes,
)
from .seeding import trial_rng

ATOMS = ("E1.atom", "E2.atom")


class Outcome(str, enum.Enum):
    NO_CLICK = "NoClick"
    D1 = "D1"
    D2 = "D2"
    D3 = "D3"
    D4 = "D4"
    MULTI_CLICK = "MultiClick"

    @property
    def is_herald(self) -> bool:
        return self in HERALDS


HERALDS = (Outcome.D1, Outcome.D2, Outcome.D3, Outcome.D4)
OUTCOMES = (Outcome.NO_CLICK,) + HERALDS + (Outcome.MULTI_CLICK,)


class ExhaustedError(RuntimeError):
    def __init__(self, attempts: int):
        super().__init__(f"no heralding click after {attempts} attempts")
        self.attempts = attempts


@dataclass(frozen=True)
class ProtocolParams:
    p_c: float = 0.01
    eta: float = 0.0
    c_vacuum: float = 0.0
    t0: float = 1e-6
    theta1: float = math.pi / 8
    phi12: float = 0.0
    include_double_excitation: bool = False
    truncation: int = 2

    def __post_init__(self):
        if not 0.0 <= self.p_c < 1.0:
            raise ValueError(f"p_c must lie in [0, 1), got {self.p_c}")
        if not 0.0 <= self.eta < 1.0:
            raise ValueError(f"eta must lie in [0, 1), got {self.eta}")
        if self.c_vacuum < 0.0:
            raise ValueError(f"c_vacuum must be >= 0, got {self.c_vacuum}")
        if self.t0 <= 0.0:
            raise ValueError(f"t0 must be > 0, got {self.t0}")
        if not 0.0 <= self.theta1 <= math.pi / 4:
            raise ValueError(f"theta1 must lie in [0, pi/4], got {self.theta1}")
        if self.truncation < 1:
            raise ValueError(f"truncation must be >= 1, got {self.truncation}")

    @property
    def alpha(self) -> float:
        return mixing_amplitudes(self.theta1)[0]

    @property
    def beta(self) -> float:
        return mixing_amplitudes(self.theta1)[1]

    @property
    def working_truncation(self) -> int:
        # two photons per arm can bunch into four at the beam splitter
        return max(self.truncation, 4 if self.include_double_excitation else 2)


@dataclass(frozen=True)
class GenerationResult:
    outcome: Outcome
    state: MixedState
    attempts: int
    elapsed: float
    history: tuple[Outcome, ...] = field(default=(), repr=False)


def emit(p_c: float, atom_mode: str, stokes_mode: str, include_double: bool = False,
         truncation: int = 2) -> StateVector:
    """Normalized ensemble + Stokes-mode state after one write pulse.

    First order: ``|vac> + sqrt(p_c) s^+ a^+ |vac>``.  With ``include_double``
    the two-pair term of a two-mode squeezed source, ``p_c |2,2>``, is added.
    """
    if not 0.0 <= p_c < 1.0:
        raise ValueError(f"p_c must lie in [0, 1), got {p_c}")
    register = ModeRegister((atom_mode, stokes_mode), truncation)
    vac = StateVector.vacuum(register)
    pair = fock.create(fock.create(vac, atom_mode), stokes_mode)
    state = vac + math.sqrt(p_c) * pair
    if include_double:
        double = fock.create(fock.create(pair, atom_mode), stokes_mode)
        state = state + (p_c / 2) * double
    return fock.normalize(state)


def apply_loss(state: StateVector | MixedState, mode: str, eta: float) -> MixedState:
    """Photon loss on ``mode``: a beam splitter of transmissivity ``1 - eta`` into
    a fresh environment mode, which is then measured and discarded."""
    if not 0.0 <= eta < 1.0:
        raise ValueError(f"eta must lie in [0, 1), got {eta}")
    if isinstance(state, MixedState):
        parts = []
        for w, s in state.components:
            parts.extend((w * pw, ps) for pw, ps in apply_loss(s, mode, eta).components)
        return MixedState(tuple(parts))
    state.register.index(mode)
    if eta == 0.0:
        return MixedState.pure(state)
    env = f"{mode}#env"
    coupled = fock.apply_mode_transform(
        fock.extend(state, [env]), (mode, env), BeamSplitter(mode, env, 1.0 - eta).matrix()
    )
    branches = fock.measure_modes(coupled, [env])
    return MixedState(tuple((p, branches[k][1]) for k, p in
                            sorted((k, branches[k][0]) for k in branches)))


def _classify(pattern: Sequence[int]) -> Outcome:
    total = sum(pattern)
    if total == 0:
        return Outcome.NO_CLICK
    if total >= 2:
        return Outcome.MULTI_CLICK
    return HERALDS[list(pattern).index(1)]


def _vacuum_admixture(mixture: MixedState, c: float) -> MixedState:
    if c == 0.0:
        return mixture
    vac = StateVector.vacuum(mixture.register)
    comps = [(c / (c + 1.0), vac)] + [(w / (c + 1.0), s) for w, s in mixture.components]
    return MixedState(tuple(comps))


def prepared_light_state(params: ProtocolParams) -> MixedState:
    """Both ensembles' emission after per-arm loss, before the generation circuit."""
    d = params.working_truncation
    state = None
    for atom, arm in zip(ATOMS, GENERATION_ARMS):
        h, v = polarization_modes(arm)
        pair = fock.extend(emit(params.p_c, atom, v, params.include_double_excitation, d), [h])
        state = pair if state is None else fock.tensor(state, pair)
    mixture = MixedState.pure(state)
    for arm in GENERATION_ARMS:
        mixture = apply_loss(mixture, polarization_modes(arm)[1], params.eta)
    return mixture


@dataclass(frozen=True)
class AttemptTable:
    """Exact outcome distribution of one attempt and the atomic state each outcome leaves."""

    outcomes: tuple[Outcome, ...]
    probabilities: np.ndarray
    states: tuple[MixedState, ...]
    leakage: float

    def probability(self, outcome: Outcome) -> float:
        return float(self.probabilities[self.outcomes.index(outcome)])

    def state(self, outcome: Outcome) -> MixedState:
        return self.states[self.outcomes.index(outcome)]

    @property
    def success_probability(self) -> float:
        return sum(self.probability(o) for o in HERALDS)


@lru_cache(maxsize=256)
def attempt_table(params: ProtocolParams) -> AttemptTable:
    circuit = build_generation_circuit(params.theta1, params.phi12)
    light = circuit.apply(prepared_light_state(params))
    buckets: dict[Outcome, list[tuple[float, StateVector]]] = {o: [] for o in OUTCOMES}
    leakage = 0.0
    for w, comp in light.components:
        leakage += w * comp.leakage
        nonatom = [m for m in comp.register.modes if m not in ATOMS]
        for pattern, (p, post) in fock.measure_modes(comp, circuit.detectors + tuple(
                m for m in nonatom if m not in circuit.detectors)).items():
            det = pattern[: len(circuit.detectors)]
            buckets[_classify(det)].append((w * p, fock.reorder(post, ATOMS)))
    probs = np.array([sum(w for w, _ in buckets[o]) for o in OUTCOMES])
    atom_register = ModeRegister(ATOMS, params.working_truncation)
    states = []
    for o in OUTCOMES:
        if probs[OUTCOMES.index(o)] == 0.0:
            states.append(MixedState.pure(StateVector.vacuum(atom_register)))
            continue
        mix = MixedState(tuple(buckets[o])).normalize()
        if o in (Outcome.D3, Outcome.D4):
            # the second output port heralds the same state up to a known sign on ensemble 2
            mix = mix.map(lambda s: fock.apply_phase(s, ATOMS[1], math.pi))
        if o.is_herald:
            mix = _vacuum_admixture(mix, params.c_vacuum)
        states.append(mix)
    return AttemptTable(OUTCOMES, probs, tuple(states), leakage)


def attempt(params: ProtocolParams, rng: np.random.Generator) -> tuple[Outcome, MixedState]:
    table = attempt_table(params)
    cdf = np.cumsum(table.probabilities)
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    i = min(i, len(table.outcomes) - 1)
    return table.outcomes[i], table.states[i]


def entangled_state(params: ProtocolParams, outcome: Outcome) -> StateVector:
    """Ideal heralded state of the two ensembles for a single-detector click."""
    if not outcome.is_herald:
        raise ValueError(f"no conditional state is defined for {outcome.value}")
    a, b = params.alpha, params.beta
    if outcome in (Outcome.D2, Outcome.D4):
        a, b = b, a
    register = ModeRegister(ATOMS, params.working_truncation)
    vac = StateVector.vacuum(register)
    return (a * fock.create(vac, ATOMS[0])
            + (b * np.exp(1j * params.phi12)) * fock.create(vac, ATOMS[1]))


def conditional_state(params: ProtocolParams, outcome: Outcome) -> MixedState:
    """Analytic heralded mixture: vacuum with weight c/(c+1), entangled state with 1/(c+1)."""
    pure = MixedState.pure(entangled_state(params, outcome))
    return _vacuum_admixture(pure, params.c_vacuum)


def run_until_success(params: ProtocolParams, rng: np.random.Generator,
                      max_attempts: int = 10**6) -> GenerationResult:
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    table = attempt_table(params)
    cdf = np.cumsum(table.probabilities)
    cdf /= cdf[-1]
    history = []
    for n in range(1, max_attempts + 1):
        i = min(int(np.searchsorted(cdf, rng.random(), side="right")), len(cdf) - 1)
        outcome = table.outcomes[i]
        history.append(outcome)
        if outcome.is_herald:
            return GenerationResult(outcome, table.states[i], n, n * params.t0, tuple(history))
    raise ExhaustedError(max_attempts)


def expected_generation_time(params: ProtocolParams) -> float:
    """Scaling estimate t0 / ((1 - eta) p_c)."""
    if params.p_c <= 0.0:
        raise ValueError("expected generation time needs p_c > 0")
    return params.t0 / ((1.0 - params.eta) * params.p_c)


def simulate_generation(params: ProtocolParams, runs: int, seed: int,
                        max_attempts: int = 10**6, stream: tuple[int, ...] = ()) -> list[GenerationResult]:
    """Independent repeat-until-success runs; run ``i`` draws from stream ``(*stream, i)``."""
    return [run_until_success(params, trial_rng(seed, *stream, i), max_attempts) for i in range(runs)]


@dataclass(frozen=True)
class SweepPoint:
    p_c: float
    eta: float
    paper_estimate: float
    mean_elapsed: float
    mean_attempts: float
    exact_mean_attempts: float


def generation_time_sweep(p_c_values: Iterable[float], eta_values: Iterable[float], runs: int,
                          seed: int, base: ProtocolParams = ProtocolParams()) -> list[SweepPoint]:
    points = []
    etas = list(eta_values)
    for i, p_c in enumerate(p_c_values):
        for j, eta in enumerate(etas):
            params = ProtocolParams(**{**base.__dict__, "p_c": p_c, "eta": eta})
            results = simulate_generation(params, runs, seed, stream=(i, j))
            attempts = np.array([r.attempts for r in results], dtype=float)
            points.append(SweepPoint(
                p_c, eta, expected_generation_time(params),
                float(attempts.mean() * params.t0), float(attempts.mean()),
                1.0 / attempt_table(params).success_probability,
            ))
    return points


def write_attempt_log(results: Sequence[GenerationResult], out: TextIO, t0: float) -> None:
    """CSV, one row per attempt: trial, attempt, outcome, elapsed."""
    from .report import fmt

    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["trial", "attempt", "outcome", "elapsed"])
    for trial, result in enumerate(results):
        for n, outcome in enumerate(result.history, start=1):
            writer.writerow([trial, n, outcome.value, fmt(n * t0)])
