"""Sparse truncated Fock-space states over a register of labelled bosonic modes.

A state is a map from occupation tuples to complex amplitudes.  Every mode is
truncated at ``d`` quanta; whatever an operation pushes above ``d`` is dropped
and its probability is accumulated in ``StateVector.leakage`` so that
truncation errors stay visible.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

PRUNE = 1e-14
NORM_SLACK = 1e-9

Ket = tuple[int, ...]


class FockError(ValueError):
    pass


class UnknownModeError(FockError, KeyError):
    def __init__(self, label: str):
        super().__init__(f"unknown mode {label!r}")
        self.label = label

    def __str__(self) -> str:
        return self.args[0]


class RegisterMismatchError(FockError):
    pass


@dataclass(frozen=True)
class ModeRegister:
    modes: tuple[str, ...]
    truncation: int = 2

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if self.truncation < 1:
            raise FockError(f"truncation must be >= 1, got {self.truncation}")
        if len(set(self.modes)) != len(self.modes):
            raise FockError(f"duplicate mode labels in {self.modes}")

    def __len__(self) -> int:
        return len(self.modes)

    def __contains__(self, label: str) -> bool:
        return label in self.modes

    def index(self, label: str) -> int:
        try:
            return self.modes.index(label)
        except ValueError:
            raise UnknownModeError(label) from None

    @property
    def dimension(self) -> int:
        return (self.truncation + 1) ** len(self.modes)


@dataclass(frozen=True)
class StateVector:
    """Immutable sparse superposition of Fock kets.

    ``amplitudes`` is pruned of entries below ``PRUNE`` in magnitude on
    construction; ``leakage`` is the probability lost to truncation so far.
    """

    register: ModeRegister
    amplitudes: Mapping[Ket, complex] = field(default_factory=dict)
    leakage: float = 0.0

    def __post_init__(self):
        n, d = len(self.register), self.register.truncation
        clean = {}
        for ket, amp in self.amplitudes.items():
            ket = tuple(int(x) for x in ket)
            if len(ket) != n:
                raise FockError(f"ket {ket} does not match register of {n} modes")
            if any(x < 0 or x > d for x in ket):
                raise FockError(f"ket {ket} outside truncation {d}")
            amp = complex(amp)
            if abs(amp) >= PRUNE:
                clean[ket] = amp
        object.__setattr__(self, "amplitudes", MappingProxyType(clean))
        object.__setattr__(self, "leakage", float(self.leakage))

    @classmethod
    def vacuum(cls, register: ModeRegister) -> "StateVector":
        return cls(register, {(0,) * len(register): 1.0})

    @classmethod
    def basis(cls, register: ModeRegister, occupations: Mapping[str, int] | Sequence[int],
              amplitude: complex = 1.0) -> "StateVector":
        """Single ket, given either a full occupation tuple or ``{label: n}``."""
        if isinstance(occupations, Mapping):
            ket = [0] * len(register)
            for label, n in occupations.items():
                ket[register.index(label)] = n
        else:
            ket = list(occupations)
        return cls(register, {tuple(ket): amplitude})

    def __len__(self) -> int:
        return len(self.amplitudes)

    def __add__(self, other: "StateVector") -> "StateVector":
        _same_register(self, other)
        out = defaultdict(complex, self.amplitudes)
        for ket, amp in other.amplitudes.items():
            out[ket] += amp
        return StateVector(self.register, out, self.leakage + other.leakage)

    def __mul__(self, scalar: complex) -> "StateVector":
        return StateVector(
            self.register,
            {k: a * scalar for k, a in self.amplitudes.items()},
            self.leakage * abs(scalar) ** 2,
        )

    __rmul__ = __mul__

    def amplitude(self, occupations: Mapping[str, int] | Sequence[int]) -> complex:
        if isinstance(occupations, Mapping):
            ket = [0] * len(self.register)
            for label, n in occupations.items():
                ket[self.register.index(label)] = n
            occupations = ket
        return self.amplitudes.get(tuple(occupations), 0j)

    def to_text(self) -> str:
        lines = []
        for ket in sorted(self.amplitudes):
            amp = self.amplitudes[ket]
            lines.append(f"{' '.join(map(str, ket))} : {amp.real:.12g} {amp.imag:.12g}")
        return "\n".join(lines)


@dataclass(frozen=True)
class MixedState:
    """Weighted ensemble of state vectors sharing one register."""

    components: tuple[tuple[float, StateVector], ...]

    def __post_init__(self):
        comps = tuple((float(w), s) for w, s in self.components)
        if not comps:
            raise FockError("mixed state needs at least one component")
        register = comps[0][1].register
        for w, s in comps:
            if w < 0:
                raise FockError(f"negative mixture weight {w}")
            if s.register.modes != register.modes:
                raise RegisterMismatchError("mixture components live on different registers")
        object.__setattr__(self, "components", comps)

    @classmethod
    def pure(cls, state: StateVector) -> "MixedState":
        return cls(((1.0, state),))

    @property
    def register(self) -> ModeRegister:
        return self.components[0][1].register

    @property
    def total_weight(self) -> float:
        return sum(w for w, _ in self.components)

    def normalize(self) -> "MixedState":
        total = self.total_weight
        if total <= 0:
            raise FockError("cannot normalize a mixture of zero weight")
        return MixedState(tuple((w / total, normalize(s)) for w, s in self.components if w > 0))

    def map(self, fn) -> "MixedState":
        return MixedState(tuple((w, fn(s)) for w, s in self.components))


def _same_register(a: StateVector, b: StateVector) -> None:
    if a.register != b.register:
        raise RegisterMismatchError(f"register mismatch: {a.register.modes} vs {b.register.modes}")


def _ladder(state: StateVector, mode: str, step: int) -> StateVector:
    i = state.register.index(mode)
    d = state.register.truncation
    out = {}
    dropped = 0.0
    for ket, amp in state.amplitudes.items():
        n = ket[i]
        m = n + step
        if m < 0:
            continue
        factor = math.sqrt(m) if step > 0 else math.sqrt(n)
        new_amp = amp * factor
        if m > d:
            dropped += abs(new_amp) ** 2
            continue
        out[ket[:i] + (m,) + ket[i + 1:]] = new_amp
    return StateVector(state.register, out, state.leakage + dropped)


def create(state: StateVector, mode: str) -> StateVector:
    """Apply a creation operator; mass pushed past the truncation goes to leakage."""
    return _ladder(state, mode, +1)


def annihilate(state: StateVector, mode: str) -> StateVector:
    return _ladder(state, mode, -1)


def tensor(a: StateVector, b: StateVector) -> StateVector:
    overlap = set(a.register.modes) & set(b.register.modes)
    if overlap:
        raise FockError(f"tensor product of overlapping modes {sorted(overlap)}")
    if a.register.truncation != b.register.truncation:
        raise FockError("tensor product of registers with different truncation")
    register = ModeRegister(a.register.modes + b.register.modes, a.register.truncation)
    amps = {ka + kb: xa * xb for ka, xa in a.amplitudes.items() for kb, xb in b.amplitudes.items()}
    na, nb = norm(a) ** 2, norm(b) ** 2
    # leakage of a product: whatever is missing from (norm^2 + leakage) of either factor
    total = (na + a.leakage) * (nb + b.leakage)
    return StateVector(register, amps, max(total - na * nb, 0.0))


def inner(a: StateVector, b: StateVector) -> complex:
    _same_register(a, b)
    small, large = (a, b) if len(a) <= len(b) else (b, a)
    acc = 0j
    for ket in small.amplitudes:
        if ket in large.amplitudes:
            acc += a.amplitudes[ket].conjugate() * b.amplitudes[ket]
    return acc


def norm(state: StateVector) -> float:
    return math.sqrt(sum(abs(x) ** 2 for x in state.amplitudes.values()))


def normalize(state: StateVector) -> StateVector:
    nrm = norm(state)
    if nrm == 0.0:
        raise FockError("cannot normalize the zero vector")
    return StateVector(
        state.register,
        {k: a / nrm for k, a in state.amplitudes.items()},
        state.leakage / nrm ** 2,
    )


def number_expectation(state: StateVector, mode: str) -> float:
    i = state.register.index(mode)
    weight = norm(state) ** 2
    if weight == 0.0:
        raise FockError("number expectation of the zero vector")
    return sum(ket[i] * abs(a) ** 2 for ket, a in state.amplitudes.items()) / weight


def project_occupation(state: StateVector, mode: str, n: int) -> tuple[float, StateVector]:
    """Project ``mode`` onto occupation ``n``; returns (probability, renormalized post-state).

    A zero-probability projection yields ``(0.0, zero vector)``.  The post-state
    carries no leakage.
    """
    i = state.register.index(mode)
    if not 0 <= n <= state.register.truncation:
        raise FockError(f"occupation {n} outside truncation {state.register.truncation}")
    kept = {k: a for k, a in state.amplitudes.items() if k[i] == n}
    prob = sum(abs(a) ** 2 for a in kept.values())
    if prob == 0.0:
        return 0.0, StateVector(state.register)
    scale = 1.0 / math.sqrt(prob)
    return prob, StateVector(state.register, {k: a * scale for k, a in kept.items()})


def measure_modes(state: StateVector, modes: Sequence[str]) -> dict[Ket, tuple[float, StateVector]]:
    """Joint occupation measurement of ``modes``, which are then discarded.

    Returns ``{pattern: (probability, post-state on the remaining modes)}`` for
    every pattern with nonzero probability; post-states are normalized.
    """
    idx = [state.register.index(m) for m in modes]
    rest = [i for i in range(len(state.register)) if i not in idx]
    register = ModeRegister(tuple(state.register.modes[i] for i in rest), state.register.truncation)
    groups: dict[Ket, dict[Ket, complex]] = defaultdict(dict)
    for ket, amp in state.amplitudes.items():
        groups[tuple(ket[i] for i in idx)][tuple(ket[i] for i in rest)] = amp
    out = {}
    for pattern, amps in groups.items():
        prob = sum(abs(a) ** 2 for a in amps.values())
        scale = 1.0 / math.sqrt(prob)
        out[pattern] = (prob, StateVector(register, {k: a * scale for k, a in amps.items()}))
    return out


def apply_mode_transform(state: StateVector, modes: Sequence[str], matrix) -> StateVector:
    """Linear mode transformation ``a_k^+ -> sum_j matrix[j, k] a_j^+`` over ``modes``.

    On the single-excitation subspace this multiplies the amplitude vector of
    ``modes`` by ``matrix``.  Output kets above the truncation are dropped and
    their coherent probability is added to leakage.
    """
    mat = np.asarray(matrix, dtype=complex)
    idx = [state.register.index(m) for m in modes]
    k = len(idx)
    if mat.shape != (k, k):
        raise FockError(f"matrix shape {mat.shape} does not match {k} modes")
    d = state.register.truncation
    out: dict[Ket, complex] = defaultdict(complex)
    dropped: dict[Ket, complex] = defaultdict(complex)
    for ket, amp in state.amplitudes.items():
        counts = [ket[i] for i in idx]
        # expand prod_k (sum_j M[j,k] a_j^+)^{n_k} / sqrt(n_k!) as a polynomial in the a_j^+
        poly: dict[Ket, complex] = {(0,) * k: amp / math.sqrt(math.prod(math.factorial(n) for n in counts))}
        for col, n in enumerate(counts):
            for _ in range(n):
                nxt: dict[Ket, complex] = defaultdict(complex)
                for mono, coeff in poly.items():
                    for row in range(k):
                        if mat[row, col] != 0:
                            bumped = mono[:row] + (mono[row] + 1,) + mono[row + 1:]
                            nxt[bumped] += coeff * mat[row, col]
                poly = nxt
        for mono, coeff in poly.items():
            new = list(ket)
            for i, m in zip(idx, mono):
                new[i] = m
            value = coeff * math.sqrt(math.prod(math.factorial(m) for m in mono))
            target = dropped if max(mono) > d else out
            target[tuple(new)] += value
    lost = sum(abs(a) ** 2 for a in dropped.values())
    return StateVector(state.register, out, state.leakage + lost)


def apply_phase(state: StateVector, mode: str, phi: float) -> StateVector:
    i = state.register.index(mode)
    return StateVector(
        state.register,
        {k: a * np.exp(1j * phi * k[i]) for k, a in state.amplitudes.items()},
        state.leakage,
    )


def relabel(state: StateVector, mapping: Mapping[str, str]) -> StateVector:
    for label in mapping:
        state.register.index(label)
    register = ModeRegister(tuple(mapping.get(m, m) for m in state.register.modes), state.register.truncation)
    return StateVector(register, state.amplitudes, state.leakage)


def extend(state: StateVector, modes: Iterable[str]) -> StateVector:
    """Append vacuum modes to the register."""
    register = ModeRegister(tuple(modes), state.register.truncation)
    return tensor(state, StateVector.vacuum(register))


def reorder(state: StateVector, modes: Sequence[str]) -> StateVector:
    """Permute the register into the order given by ``modes`` (same label set)."""
    if sorted(modes) != sorted(state.register.modes):
        raise RegisterMismatchError(f"cannot reorder {state.register.modes} into {tuple(modes)}")
    perm = [state.register.index(m) for m in modes]
    register = ModeRegister(tuple(modes), state.register.truncation)
    return StateVector(register, {tuple(k[i] for i in perm): a for k, a in state.amplitudes.items()},
                       state.leakage)


def _factor(mixture: MixedState, modes: Sequence[str], basis: dict[Ket, int]) -> np.ndarray:
    # columns sqrt(w_i) psi_i, so that rho = F F^dagger
    cols = []
    for w, s in mixture.components:
        s = reorder(s, modes)
        col = np.zeros(len(basis), dtype=complex)
        for ket, amp in s.amplitudes.items():
            col[basis[ket]] = amp
        cols.append(math.sqrt(w) * col)
    return np.column_stack(cols)


def _common_basis(*mixtures: MixedState) -> tuple[tuple[str, ...], dict[Ket, int]]:
    modes = mixtures[0].register.modes
    kets = set()
    for mix in mixtures:
        for _, s in mix.components:
            kets.update(reorder(s, modes).amplitudes)
    return modes, {k: i for i, k in enumerate(sorted(kets))}


def density_matrix(mixture: MixedState) -> tuple[list[Ket], np.ndarray]:
    """Density matrix over the kets that actually appear; returns (kets, rho)."""
    modes, basis = _common_basis(mixture)
    f = _factor(mixture, modes, basis)
    return list(basis), f @ f.conj().T


def mixture_fidelity(a: MixedState | StateVector, b: MixedState | StateVector) -> float:
    """Uhlmann fidelity ``(tr|sqrt(rho) sqrt(sigma)|)^2`` of two mixtures on the same modes.

    Evaluated as the squared nuclear norm of ``A^+ B`` with ``rho = A A^+`` and
    ``sigma = B B^+``, which avoids matrix square roots.
    """
    a = MixedState.pure(a) if isinstance(a, StateVector) else a
    b = MixedState.pure(b) if isinstance(b, StateVector) else b
    modes, basis = _common_basis(a, b)
    fa, fb = _factor(a, modes, basis), _factor(b, modes, basis)
    sv = np.linalg.svd(fa.conj().T @ fb, compute_uv=False)
    return float(sv.sum() ** 2)


def trace_distance(a: MixedState, b: MixedState) -> float:
    modes, basis = _common_basis(a, b)
    fa, fb = _factor(a, modes, basis), _factor(b, modes, basis)
    diff = fa @ fa.conj().T - fb @ fb.conj().T
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())
