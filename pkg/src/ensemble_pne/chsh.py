"""CHSH test on two heralded links sharing one effective nonmaximally entangled state.

Link L1-R1 holds the maximally entangled single excitation, link L2-R2 the
tunable one.  Keeping only events with one click per side reduces the pair
to ``alpha |L2 R1> + beta |L1 R2>``.  Each side is read out through a phase
shift and a 50/50 beam splitter; D1/D2 sit on side L, D3/D4 on side R.

Two correlation models are carried side by side: the closed form
``4 alpha^2 beta^2 cos(phi_L - phi_R)`` (``correlation_paper``) and the exact
conditioned correlation of the simulated optics (oracle and Monte Carlo),
which comes out as ``2 alpha beta cos(phi_L - phi_R)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, TextIO

import numpy as np
from scipy.optimize import bisect

from . import fock, oracle
from .fock import MixedState, ModeRegister, StateVector
from .optics import build_measurement_circuit
from .report import fmt
from .seeding import trial_rng

PNE_MODES = ("L1", "L2", "R1", "R2")
SIDE_L = ("L1", "L2")
SIDE_R = ("R1", "R2")
PAIRS = ("D1D3", "D2D4", "D1D4", "D2D3")
Z95 = 1.959963984540054


class NoDataError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChshSettings:
    phi_L: tuple[float, float, float] = (0.0, math.pi / 2, math.pi / 4)
    phi_R: tuple[float, float, float] = (0.0, -math.pi / 4, math.pi / 4)

    def __post_init__(self):
        object.__setattr__(self, "phi_L", tuple(float(x) for x in self.phi_L))
        object.__setattr__(self, "phi_R", tuple(float(x) for x in self.phi_R))
        if len(self.phi_L) != 3 or len(self.phi_R) != 3:
            raise ValueError("each side needs three analysis phases")
        if not all(math.isfinite(x) for x in self.phi_L + self.phi_R):
            raise ValueError("analysis phases must be finite")

    def terms(self) -> list[tuple[float, float, int]]:
        """(phi_L, phi_R, sign) for E(L1,R3) + E(L1,R2) + E(L2,R3) - E(L2,R2)."""
        l, r = self.phi_L, self.phi_R
        return [(l[0], r[2], 1), (l[0], r[1], 1), (l[1], r[2], 1), (l[1], r[1], -1)]


@dataclass(frozen=True)
class PneState:
    alpha: float
    c_vacuum: float = 0.0
    phi12: float = 0.0

    def __post_init__(self):
        if not abs(self.alpha) <= 1.0:
            raise ValueError(f"|alpha| must be <= 1, got {self.alpha}")
        if self.c_vacuum < 0:
            raise ValueError(f"c_vacuum must be >= 0, got {self.c_vacuum}")

    @property
    def beta(self) -> float:
        return math.sqrt(max(0.0, 1.0 - self.alpha ** 2))


@dataclass(frozen=True)
class CorrelationEstimate:
    phi_L: float
    phi_R: float
    value: float
    counts: tuple[int, int, int, int]
    trials: int
    stderr: float

    @property
    def coincidences(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class SReport:
    alpha: float
    s_paper: float
    s_oracle: float
    s_mc: float
    s_mc_ci95: float
    violation_paper: bool
    violation_mc: bool
    correlations: tuple[CorrelationEstimate, ...] = field(default=(), repr=False)


def compose_pne(alpha: float, phi12: float = 0.0, c: float = 0.0, truncation: int = 2) -> MixedState:
    """Four-mode mixture rho_{L1R1} (x) rho_{L2R2}, each link c/(c+1) vacuum."""
    if not abs(alpha) <= 1.0:
        raise ValueError(f"|alpha| must be <= 1, got {alpha}")
    beta = math.sqrt(max(0.0, 1.0 - alpha ** 2))
    phase = np.exp(1j * phi12)

    def link(a: str, b: str, amp_a: complex, amp_b: complex) -> MixedState:
        register = ModeRegister((a, b), truncation)
        vac = StateVector.vacuum(register)
        ent = amp_a * fock.create(vac, a) + amp_b * fock.create(vac, b)
        return MixedState(((c / (c + 1), vac), (1 / (c + 1), ent)))

    first = link("L1", "R1", 1 / math.sqrt(2), phase / math.sqrt(2))
    second = link("L2", "R2", alpha, phase * beta)
    comps = []
    for w1, s1 in first.components:
        for w2, s2 in second.components:
            if w1 * w2 > 0:
                comps.append((w1 * w2, fock.reorder(fock.tensor(s1, s2), PNE_MODES)))
    return MixedState(tuple(comps))


def pne_vector(alpha: float, truncation: int = 2) -> StateVector:
    """Post-selected pure state alpha s_L2^+ s_R1^+ + beta s_L1^+ s_R2^+ |vac>."""
    beta = math.sqrt(max(0.0, 1.0 - alpha ** 2))
    register = ModeRegister(PNE_MODES, truncation)
    return StateVector(register, {(0, 1, 1, 0): alpha, (1, 0, 0, 1): beta})


def post_select_one_per_side(mixture: MixedState) -> MixedState:
    """Keep the components with exactly one excitation on each side."""
    parts = []
    for w, s in mixture.components:
        kept = {k: a for k, a in s.amplitudes.items() if k[0] + k[1] == 1 and k[2] + k[3] == 1}
        mass = sum(abs(a) ** 2 for a in kept.values())
        if mass > 0:
            parts.append((w * mass, fock.normalize(StateVector(s.register, kept))))
    if not parts:
        raise NoDataError("no one-excitation-per-side component")
    return MixedState(tuple(parts)).normalize()


def projection_success_probability(c: float) -> float:
    if c < 0:
        raise ValueError(f"c must be >= 0, got {c}")
    return 1.0 / (4.0 * (c + 1.0) ** 2)


def correlation_paper(alpha: float, phi_l: float, phi_r: float) -> float:
    return 4 * alpha ** 2 * (1 - alpha ** 2) * math.cos(phi_l - phi_r)


def s_paper(alpha: float) -> float:
    return 8 * math.sqrt(2) * alpha ** 2 * (1 - alpha ** 2)


def s_from(correlation, settings: ChshSettings) -> float:
    return sum(sign * correlation(pl, pr) for pl, pr, sign in settings.terms())


@lru_cache(maxsize=1024)
def coincidence_distribution(pne: PneState, phi_l: float, phi_r: float) -> dict[str, float]:
    """Exact probabilities of D1D3, D2D4, D1D4, D2D3 and ``none`` (sparse engine)."""
    mixture = compose_pne(pne.alpha, pne.phi12, pne.c_vacuum)
    left = build_measurement_circuit(phi_l, SIDE_L)
    right = build_measurement_circuit(phi_r, SIDE_R)
    out = dict.fromkeys(PAIRS + ("none",), 0.0)
    names = {"L1": "D1", "L2": "D2", "R1": "D3", "R2": "D4"}
    for w, s in mixture.components:
        s = right.apply(left.apply(s))
        for pattern, (p, _) in fock.measure_modes(s, PNE_MODES).items():
            l_click = [names[m] for m, n in zip(SIDE_L, pattern[:2]) if n > 0]
            r_click = [names[m] for m, n in zip(SIDE_R, pattern[2:]) if n > 0]
            key = l_click[0] + r_click[0] if len(l_click) == 1 and len(r_click) == 1 else "none"
            out[key] += w * p
    return out


def correlation_simulated(pne: PneState, phi_l: float, phi_r: float, trials: int,
                          rng: np.random.Generator, conditioned: bool = True) -> CorrelationEstimate:
    """Monte Carlo estimate of E from ``trials`` independent four-ensemble readouts.

    Conditioned (default): E over registered coincidences only, with
    stderr sqrt((1 - E^2) / N_coinc).  Unconditioned: the same signed count
    divided by all trials.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    dist = coincidence_distribution(pne, float(phi_l), float(phi_r))
    probs = np.array([dist[k] for k in PAIRS + ("none",)])
    counts = rng.multinomial(trials, probs / probs.sum())
    n13, n24, n14, n23 = (int(x) for x in counts[:4])
    coinc = n13 + n24 + n14 + n23
    signed = n13 + n24 - n14 - n23
    if coinc == 0:
        raise NoDataError(f"no coincidences in {trials} trials at phi_L={phi_l}, phi_R={phi_r}")
    if conditioned:
        value = signed / coinc
        stderr = math.sqrt(max(0.0, 1 - value ** 2) / coinc)
    else:
        value = signed / trials
        stderr = math.sqrt(max(0.0, coinc / trials - value ** 2) / trials)
    return CorrelationEstimate(phi_l, phi_r, value, (n13, n24, n14, n23), trials, stderr)


def coincidence_fraction(pne: PneState, trials: int, rng: np.random.Generator,
                         phi_l: float = 0.0, phi_r: float = 0.0) -> tuple[float, float]:
    """Simulated fraction of trials with one click per side, and its standard error."""
    est = correlation_simulated(pne, phi_l, phi_r, trials, rng)
    frac = est.coincidences / trials
    return frac, math.sqrt(frac * (1 - frac) / trials)


def s_simulated(pne: PneState, settings: ChshSettings, trials: int, rng: np.random.Generator,
                conditioned: bool = True) -> SReport:
    estimates = []
    s_mc = 0.0
    var = 0.0
    for pl, pr, sign in settings.terms():
        est = correlation_simulated(pne, pl, pr, trials, rng, conditioned)
        estimates.append(est)
        s_mc += sign * est.value
        var += est.stderr ** 2
    ci = Z95 * math.sqrt(var)
    sp = s_from(lambda a, b: correlation_paper(pne.alpha, a, b), settings)
    if conditioned:
        so = s_from(lambda a, b: oracle.exact_conditioned_correlation(pne, a, b), settings)
    else:
        so = s_from(lambda a, b: _unconditioned_exact(pne, a, b), settings)
    return SReport(pne.alpha, sp, so, s_mc, ci, sp > 2.0, s_mc - ci > 2.0, tuple(estimates))


def _unconditioned_exact(pne: PneState, phi_l: float, phi_r: float) -> float:
    p = oracle.coincidence_probabilities(pne, phi_l, phi_r)
    return p["D1D3"] + p["D2D4"] - p["D1D4"] - p["D2D3"]


def violation_window_paper(tolerance: float = 1e-13) -> tuple[float, float]:
    """Both roots of s_paper(alpha) = 2, one either side of the maximum at 1/sqrt(2)."""
    if tolerance <= 0:
        raise ValueError("tolerance must be > 0")
    f = lambda a: s_paper(a) - 2.0  # noqa: E731
    peak = 1 / math.sqrt(2)
    return bisect(f, 0.0, peak, xtol=tolerance), bisect(f, peak, 1.0, xtol=tolerance)


def scan_alpha(grid: Sequence[float], settings: ChshSettings, trials: int, seed: int,
               c_vacuum: float = 0.0, phi12: float = 0.0, conditioned: bool = True) -> list[SReport]:
    """One SReport per alpha; point ``i`` samples from its own stream of ``seed``."""
    if len(grid) == 0:
        raise ValueError("alpha grid is empty")
    reports = []
    for i, alpha in enumerate(grid):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha grid values must lie in [0, 1], got {alpha}")
        pne = PneState(alpha, c_vacuum, phi12)
        reports.append(s_simulated(pne, settings, trials, trial_rng(seed, i), conditioned))
    return reports


SCAN_COLUMNS = ["alpha", "s_paper", "s_oracle", "s_mc", "s_mc_ci95", "violation_paper", "violation_mc"]
CORRELATION_COLUMNS = ["phiL", "phiR", "n13", "n24", "n14", "n23", "E", "stderr"]


def write_scan_csv(reports: Sequence[SReport], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SCAN_COLUMNS)
    for r in reports:
        writer.writerow([fmt(r.alpha), fmt(r.s_paper), fmt(r.s_oracle), fmt(r.s_mc),
                         fmt(r.s_mc_ci95), fmt(r.violation_paper), fmt(r.violation_mc)])


def write_correlation_csv(estimates: Sequence[CorrelationEstimate], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CORRELATION_COLUMNS)
    for e in estimates:
        writer.writerow([fmt(e.phi_L), fmt(e.phi_R), *e.counts, fmt(e.value), fmt(e.stderr)])
