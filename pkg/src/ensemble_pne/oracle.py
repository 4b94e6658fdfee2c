"""Dense brute-force reference engine for small registers.

Everything here works on full state vectors of length ``(d+1)**modes`` and is
built from truncated ladder matrices, without touching the sparse engine's
arithmetic.  It exists to check that engine and the exact distributions used
for sampling.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .fock import ModeRegister, StateVector
from .optics import (
    Circuit,
    Element,
    PolarizingBeamSplitter,
    build_generation_circuit,
    build_measurement_circuit,
)

MAX_STATES = 729
UNITARY_TOL = 1e-12


class OracleError(RuntimeError):
    pass


class RegisterTooLarge(OracleError):
    pass


class NoCoincidences(OracleError):
    pass


def _check_size(register: ModeRegister) -> None:
    if register.dimension > MAX_STATES:
        raise RegisterTooLarge(
            f"{len(register)} modes at d={register.truncation} need {register.dimension} states"
            f" (limit {MAX_STATES})"
        )


def basis_kets(register: ModeRegister) -> list[tuple[int, ...]]:
    return list(itertools.product(range(register.truncation + 1), repeat=len(register)))


def ket_index(register: ModeRegister, ket: Sequence[int]) -> int:
    idx = 0
    for n in ket:
        idx = idx * (register.truncation + 1) + n
    return idx


@dataclass(frozen=True)
class DenseState:
    register: ModeRegister
    amplitudes: np.ndarray

    def __post_init__(self):
        _check_size(self.register)
        vec = np.asarray(self.amplitudes, dtype=complex)
        if vec.shape != (self.register.dimension,):
            raise OracleError(f"vector length {vec.shape} != {self.register.dimension}")
        object.__setattr__(self, "amplitudes", vec)


@dataclass(frozen=True)
class DenseOperator:
    register: ModeRegister
    matrix: np.ndarray

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        m = self.matrix
        return bool(np.abs(m @ m.conj().T - np.eye(len(m))).max() < tol)


def lift(state: StateVector) -> DenseState:
    _check_size(state.register)
    vec = np.zeros(state.register.dimension, dtype=complex)
    for ket, amp in state.amplitudes.items():
        vec[ket_index(state.register, ket)] = amp
    return DenseState(state.register, vec)


def lower(dense: DenseState) -> StateVector:
    kets = basis_kets(dense.register)
    return StateVector(dense.register, {kets[i]: a for i, a in enumerate(dense.amplitudes) if a != 0})


def creation_matrix(register: ModeRegister, mode: str) -> np.ndarray:
    """Truncated a^+ on ``mode`` as a full matrix: a^+|n> = sqrt(n+1)|n+1>, zero at n = d."""
    one = np.diag(np.sqrt(np.arange(1, register.truncation + 1)), k=-1).astype(complex)
    k = register.index(mode)
    eye = np.eye(register.truncation + 1)
    out = np.ones((1, 1), dtype=complex)
    for i in range(len(register)):
        out = np.kron(out, one if i == k else eye)
    return out


def number_matrix(register: ModeRegister, mode: str) -> np.ndarray:
    k = register.index(mode)
    return np.diag([float(ket[k]) for ket in basis_kets(register)]).astype(complex)


def vacuum(register: ModeRegister) -> np.ndarray:
    vec = np.zeros(register.dimension, dtype=complex)
    vec[0] = 1.0
    return vec


def local_operator(element: Element, truncation: int) -> np.ndarray:
    """Matrix of a linear element on its own modes only.

    Column for ``|n>`` is ``prod_k (sum_j M[j,k] A_j^+)^{n_k} / sqrt(n_k!) |vac>``
    evaluated with truncated dense ladder matrices.  Unitarity is enforced on
    the columns whose photons fit under the truncation; columns above that
    lose mass to truncation by construction.
    """
    modes = element.modes
    mat = element.matrix()
    local = ModeRegister(tuple(modes), truncation)
    raises = [creation_matrix(local, m) for m in modes]
    op = np.zeros((local.dimension, local.dimension), dtype=complex)
    for col, ket in enumerate(basis_kets(local)):
        vec = vacuum(local)
        for k, n in enumerate(ket):
            mixed = sum(mat[j, k] * raises[j] for j in range(len(modes)))
            for _ in range(n):
                vec = mixed @ vec
            vec = vec / math.sqrt(math.factorial(n))
        op[:, col] = vec
    fits = [i for i, ket in enumerate(basis_kets(local)) if sum(ket) <= truncation]
    block = op[:, fits]
    if np.abs(block.conj().T @ block - np.eye(len(fits))).max() > UNITARY_TOL:
        raise OracleError(f"non-unitary operator for {element}")
    return op


def _act_locally(local_op: np.ndarray, register: ModeRegister, idx: Sequence[int], block: np.ndarray) -> np.ndarray:
    # block has the register's basis on axis 0; any trailing columns ride along
    d1 = register.truncation + 1
    n, k = len(register), len(idx)
    t = block.reshape((d1,) * n + block.shape[1:])
    out = np.tensordot(local_op.reshape((d1,) * (2 * k)), t, axes=(list(range(k, 2 * k)), list(idx)))
    out = np.moveaxis(out, list(range(k)), list(idx))
    return out.reshape(block.shape)


def _renamed(register: ModeRegister, element: Element) -> ModeRegister:
    if isinstance(element, PolarizingBeamSplitter):
        return ModeRegister(tuple(element.mapping.get(m, m) for m in register.modes), register.truncation)
    return register


def element_operator(element: Element, register: ModeRegister) -> DenseOperator:
    """Full-register matrix of a linear-optics element (local operator (x) identity).

    A polarizing beam splitter only renames modes, so its operator is the identity.
    """
    _check_size(register)
    idx = [register.index(m) for m in element.modes]
    if isinstance(element, PolarizingBeamSplitter):
        return DenseOperator(register, np.eye(register.dimension, dtype=complex))
    full = _act_locally(local_operator(element, register.truncation), register, idx,
                        np.eye(register.dimension, dtype=complex))
    return DenseOperator(register, full)


def apply_circuit(dense: DenseState, circuit: Circuit) -> DenseState:
    register = dense.register
    vec = dense.amplitudes
    for element in circuit:
        idx = [register.index(m) for m in element.modes]
        if not isinstance(element, PolarizingBeamSplitter):
            vec = _act_locally(local_operator(element, register.truncation), register, idx, vec)
        register = _renamed(register, element)
    return DenseState(register, vec)


def _conjugate_locally(local_op: np.ndarray, register: ModeRegister, idx: Sequence[int],
                       rho: np.ndarray) -> np.ndarray:
    half = _act_locally(local_op, register, idx, rho)
    return _act_locally(local_op, register, idx, half.conj().T).conj().T


def apply_circuit_density(register: ModeRegister, rho: np.ndarray, circuit: Circuit):
    """U rho U^+ for every element in order; returns (renamed register, rho)."""
    for element in circuit:
        if not isinstance(element, PolarizingBeamSplitter):
            idx = [register.index(m) for m in element.modes]
            rho = _conjugate_locally(local_operator(element, register.truncation), register, idx, rho)
        register = _renamed(register, element)
    return register, rho


def loss_kraus(truncation: int, eta: float) -> list[np.ndarray]:
    """Single-mode Kraus operators of pure loss: K_k|n> = sqrt(C(n,k) eta^k (1-eta)^(n-k)) |n-k>."""
    ops = []
    for k in range(truncation + 1):
        op = np.zeros((truncation + 1, truncation + 1), dtype=complex)
        for n in range(k, truncation + 1):
            op[n - k, n] = math.sqrt(math.comb(n, k) * eta ** k * (1 - eta) ** (n - k))
        ops.append(op)
    return ops


def apply_loss_density(register: ModeRegister, rho: np.ndarray, mode: str, eta: float) -> np.ndarray:
    idx = [register.index(mode)]
    return sum(_conjugate_locally(k, register, idx, rho) for k in loss_kraus(register.truncation, eta))


def emission_vector(register: ModeRegister, pairs: Sequence[tuple[str, str]], p_c: float,
                    include_double: bool = False) -> np.ndarray:
    """Product over (atom, stokes) pairs of the normalized single-ensemble emission."""
    vec = vacuum(register)
    for atom, stokes in pairs:
        s_up, a_up = creation_matrix(register, atom), creation_matrix(register, stokes)
        once = s_up @ (a_up @ vec)
        nxt = vec + math.sqrt(p_c) * once
        if include_double:
            nxt = nxt + (p_c / 2) * (s_up @ (a_up @ once))
        vec = nxt
    return vec / np.linalg.norm(vec)


def _outcome(pattern: Sequence[int], labels: Sequence[str]) -> str:
    total = sum(pattern)
    if total == 0:
        return "NoClick"
    if total >= 2:
        return "MultiClick"
    return labels[list(pattern).index(1)]


def _click_distribution(register: ModeRegister, probs: np.ndarray, detector_modes: Sequence[str],
                        labels: Sequence[str] | None) -> dict[str, float]:
    if len(set(detector_modes)) != len(detector_modes):
        raise OracleError("detector modes must be distinct")
    labels = list(labels or detector_modes)
    idx = [register.index(m) for m in detector_modes]
    dist: dict[str, float] = {}
    for p, ket in zip(probs, basis_kets(register)):
        key = _outcome([ket[i] for i in idx], labels)
        dist[key] = dist.get(key, 0.0) + float(p)
    return dist


def exact_click_distribution(dense: DenseState, detector_modes: Sequence[str],
                             labels: Sequence[str] | None = None) -> dict[str, float]:
    """Outcome probabilities by exhaustive enumeration of the basis.

    Single photon in detector ``i`` is labelled ``labels[i]`` (default: the
    detector's mode label); zero photons is ``NoClick``, two or more ``MultiClick``.
    """
    probs = np.abs(dense.amplitudes) ** 2
    return _click_distribution(dense.register, probs, detector_modes, labels)


def exact_click_distribution_density(register: ModeRegister, rho: np.ndarray, detector_modes: Sequence[str],
                                     labels: Sequence[str] | None = None) -> dict[str, float]:
    return _click_distribution(register, np.real(np.diag(rho)), detector_modes, labels)


def reduced_density(register: ModeRegister, rho: np.ndarray, pattern: Mapping[str, int],
                    keep: Sequence[str]) -> np.ndarray:
    """Unnormalized state of ``keep`` after projecting modes onto ``pattern`` and tracing the rest."""
    d1 = register.truncation + 1
    n = len(register)
    t = rho.reshape((d1,) * (2 * n))
    for mode, occ in pattern.items():
        i = register.index(mode)
        sel = [slice(None)] * (2 * n)
        sel[i] = slice(occ, occ + 1)
        sel[n + i] = slice(occ, occ + 1)
        t = t[tuple(sel)]
    keep_idx = [register.index(m) for m in keep]
    traced = [i for i in range(n) if i not in keep_idx and register.modes[i] not in pattern]
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = [letters[i] for i in range(n)]
    col = [letters[i].upper() for i in range(n)]
    for i in traced + [register.index(m) for m in pattern]:
        col[i] = row[i]
    out_row = "".join(row[i] for i in keep_idx)
    out_col = "".join(col[i] for i in keep_idx)
    reduced = np.einsum(f"{''.join(row)}{''.join(col)}->{out_row}{out_col}", t)
    dim = d1 ** len(keep)
    return reduced.reshape(dim, dim)


GENERATION_MODES = ("E1.atom", "E1.stokes.H", "E1.stokes.V", "E2.atom", "E2.stokes.H", "E2.stokes.V")


def generation_density(params):
    """Dense density matrix of atoms + detector modes after one generation attempt."""
    register = ModeRegister(GENERATION_MODES, params.working_truncation)
    _check_size(register)
    vec = emission_vector(register, [("E1.atom", "E1.stokes.V"), ("E2.atom", "E2.stokes.V")],
                          params.p_c, params.include_double_excitation)
    rho = np.outer(vec, vec.conj())
    for mode in ("E1.stokes.V", "E2.stokes.V"):
        rho = apply_loss_density(register, rho, mode, params.eta)
    return apply_circuit_density(register, rho, build_generation_circuit(params.theta1, params.phi12))


def generation_click_distribution(params) -> dict[str, float]:
    register, rho = generation_density(params)
    return exact_click_distribution_density(register, rho, ("D1.H", "D2.V", "D3.H", "D4.V"),
                                            ("D1", "D2", "D3", "D4"))


def heralded_atom_density(params, detector: str) -> np.ndarray:
    """Normalized atomic state after exactly one photon in ``detector`` (no feed-forward, no c)."""
    register, rho = generation_density(params)
    pattern = {m: int(m.startswith(detector + ".")) for m in ("D1.H", "D2.V", "D3.H", "D4.V")}
    red = reduced_density(register, rho, pattern, ("E1.atom", "E2.atom"))
    return red / np.trace(red).real


# --- CHSH stage --------------------------------------------------------------

PNE_MODES = ("L1", "L2", "R1", "R2")


def pne_density(alpha: float, phi12: float, c_vacuum: float, truncation: int = 2):
    """Dense rho_{L1R1} (x) rho_{L2R2}: each link is vacuum with weight c/(c+1)."""
    register = ModeRegister(PNE_MODES, truncation)
    beta = math.sqrt(max(0.0, 1.0 - alpha ** 2))
    raise_ = {m: creation_matrix(register, m) for m in PNE_MODES}
    vac = vacuum(register)
    epr = (raise_["L1"] + np.exp(1j * phi12) * raise_["R1"]) / math.sqrt(2)
    pne = alpha * raise_["L2"] + np.exp(1j * phi12) * beta * raise_["R2"]
    vac_w, ent_w = c_vacuum / (c_vacuum + 1), 1 / (c_vacuum + 1)
    one = np.eye(register.dimension)
    rho = np.zeros((register.dimension, register.dimension), dtype=complex)
    for w1, a in ((vac_w, one), (ent_w, epr)):
        for w2, b in ((vac_w, one), (ent_w, pne)):
            v = a @ b @ vac
            rho += w1 * w2 * np.outer(v, v.conj())
    return register, rho


def coincidence_probabilities(pne, phi_l: float, phi_r: float) -> dict[str, float]:
    """Exact probabilities of the four two-side detector pairs, plus ``none``.

    D1/D2 are the outputs of side L's beam splitter, D3/D4 those of side R.
    A coincidence needs exactly one clicking detector on each side.
    """
    register, rho = pne_density(pne.alpha, pne.phi12, pne.c_vacuum)
    circuit = Circuit(
        build_measurement_circuit(phi_l, ("L1", "L2")).elements
        + build_measurement_circuit(phi_r, ("R1", "R2")).elements
    )
    register, rho = apply_circuit_density(register, rho, circuit)
    probs = np.real(np.diag(rho))
    det = {"L1": "D1", "L2": "D2", "R1": "D3", "R2": "D4"}
    out = {"D1D3": 0.0, "D2D4": 0.0, "D1D4": 0.0, "D2D3": 0.0, "none": 0.0}
    for p, ket in zip(probs, basis_kets(register)):
        left = [det[m] for m in ("L1", "L2") if ket[register.index(m)] > 0]
        right = [det[m] for m in ("R1", "R2") if ket[register.index(m)] > 0]
        key = left[0] + right[0] if len(left) == 1 and len(right) == 1 else "none"
        out[key] += float(p)
    return out


def exact_conditioned_correlation(pne, phi_l: float, phi_r: float) -> float:
    p = coincidence_probabilities(pne, phi_l, phi_r)
    total = p["D1D3"] + p["D2D4"] + p["D1D4"] + p["D2D3"]
    if total <= 1e-15:
        raise NoCoincidences("no coincidence probability for this state")
    return (p["D1D3"] + p["D2D4"] - p["D1D4"] - p["D2D3"]) / total


# --- equivalence suite -------------------------------------------------------

def max_amplitude_error(sparse: StateVector, dense: DenseState) -> float:
    if sparse.register.modes != dense.register.modes:
        raise OracleError(f"register mismatch {sparse.register.modes} vs {dense.register.modes}")
    return float(np.abs(lift(sparse).amplitudes - dense.amplitudes).max())


def _generation_case(rng: np.random.Generator):
    from . import fock, protocol

    theta1 = rng.uniform(0, math.pi / 4)
    phi12 = rng.uniform(-math.pi, math.pi)
    p_c = rng.uniform(0.0, 0.5)
    double = bool(rng.integers(2))
    register = ModeRegister(("E1.atom", "E1.stokes.H", "E1.stokes.V", "E2.atom", "E2.stokes.H", "E2.stokes.V"), 2)
    sparse = fock.tensor(
        fock.extend(protocol.emit(p_c, "E1.atom", "E1.stokes.V", double, 2), ["E1.stokes.H"]),
        fock.extend(protocol.emit(p_c, "E2.atom", "E2.stokes.V", double, 2), ["E2.stokes.H"]),
    )
    sparse = fock.reorder(sparse, register.modes)
    dense = DenseState(register, emission_vector(register, [("E1.atom", "E1.stokes.V"),
                                                            ("E2.atom", "E2.stokes.V")], p_c, double))
    return build_generation_circuit(theta1, phi12), sparse, dense


def _measurement_case(rng: np.random.Generator):
    register = ModeRegister(PNE_MODES, 2)
    vec = rng.normal(size=register.dimension) + 1j * rng.normal(size=register.dimension)
    # keep at most two photons per side so nothing is lost to truncation
    for i, ket in enumerate(basis_kets(register)):
        if ket[0] + ket[1] > 2 or ket[2] + ket[3] > 2:
            vec[i] = 0.0
    vec /= np.linalg.norm(vec)
    dense = DenseState(register, vec)
    circuit = Circuit(
        build_measurement_circuit(rng.uniform(-math.pi, math.pi), ("L1", "L2")).elements
        + build_measurement_circuit(rng.uniform(-math.pi, math.pi), ("R1", "R2")).elements
    )
    return circuit, lower(dense), dense


def run_validation(draws: int = 100, seed: int = 2024, tol: float = 1e-10) -> list[str]:
    """Sparse-vs-dense equivalence over seeded random generation and measurement circuits.

    Returns a list of failure descriptions; empty means everything agreed.
    """
    from .seeding import trial_rng

    failures = []
    for kind, build in (("generation", _generation_case), ("measurement", _measurement_case)):
        for i in range(draws):
            circuit, sparse, dense = build(trial_rng(seed, len(kind), i))
            err = max_amplitude_error(sparse, dense)
            if err > tol:
                failures.append(f"{kind} draw {i}: input mismatch {err:.3e}")
                continue
            out_sparse = circuit.apply(sparse)
            out_dense = apply_circuit(dense, circuit)
            err = max_amplitude_error(out_sparse, out_dense)
            if err > tol:
                failures.append(f"{kind} draw {i}: amplitude mismatch {err:.3e}")
            lost = 1.0 - float(np.linalg.norm(out_dense.amplitudes) ** 2)
            if abs(out_sparse.leakage - lost) > tol:
                failures.append(f"{kind} draw {i}: leakage {out_sparse.leakage:.3e} vs {lost:.3e}")
    return failures
