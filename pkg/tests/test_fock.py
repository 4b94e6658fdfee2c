import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ensemble_pne import fock, oracle
from ensemble_pne.fock import FockError, MixedState, ModeRegister, StateVector, UnknownModeError

from conftest import random_state

ONE = ModeRegister(("x",), 2)


def ket(n, register=ONE):
    return StateVector.basis(register, [n])


def test_create_on_vacuum():
    out = fock.create(ket(0), "x")
    assert out.amplitudes == {(1,): 1}


def test_create_ladder_factor():
    out = fock.create(ket(1), "x")
    assert out.amplitude([2]) == pytest.approx(math.sqrt(2))


def test_create_past_truncation_goes_to_leakage():
    amp = 0.6 + 0.3j
    out = fock.create(StateVector(ONE, {(2,): amp}), "x")
    assert len(out) == 0
    # dense oracle: untruncated a^+ at d=3 vs truncated at d=2
    big = ModeRegister(("x",), 3)
    full = oracle.creation_matrix(big, "x") @ oracle.lift(StateVector(big, {(2,): amp})).amplitudes
    small = oracle.creation_matrix(ONE, "x") @ oracle.lift(StateVector(ONE, {(2,): amp})).amplitudes
    dropped = np.linalg.norm(full) ** 2 - np.linalg.norm(small) ** 2
    assert out.leakage == pytest.approx(dropped, abs=1e-14)
    assert out.leakage == pytest.approx(3 * abs(amp) ** 2)


def test_unknown_mode_named_in_error():
    with pytest.raises(UnknownModeError, match="nope"):
        fock.create(ket(0), "nope")
    with pytest.raises(UnknownModeError):
        fock.annihilate(ket(0), "nope")


def test_annihilate_examples():
    assert fock.annihilate(ket(1), "x").amplitudes == {(0,): 1}
    assert len(fock.annihilate(ket(0), "x")) == 0


def test_annihilate_create_is_number_plus_one(rng):
    reg = ModeRegister(("a", "b"), 3)
    psi = random_state(rng, reg, max_total=2)
    lhs = fock.annihilate(fock.create(psi, "a"), "a")
    n_plus = oracle.number_matrix(reg, "a") + np.eye(reg.dimension)
    expected = n_plus @ oracle.lift(psi).amplitudes
    assert np.abs(oracle.lift(lhs).amplitudes - expected).max() < 1e-12


def test_tensor_examples():
    x = ket(1)
    y = StateVector.basis(ModeRegister(("y",), 2), [0])
    out = fock.tensor(x, y)
    assert out.register.modes == ("x", "y")
    assert out.amplitudes == {(1, 0): 1}


def test_tensor_matches_kron(rng):
    a = StateVector(ONE, {(1,): 0.6, (0,): 0.8j})
    b = random_state(rng, ModeRegister(("y",), 2))
    out = oracle.lift(fock.tensor(a, b)).amplitudes
    expected = np.kron(oracle.lift(a).amplitudes, oracle.lift(b).amplitudes)
    assert np.abs(out - expected).max() < 1e-14


def test_tensor_norm_multiplies(rng):
    a = 2.0 * random_state(rng, ONE)
    b = 0.5j * random_state(rng, ModeRegister(("y", "z"), 2))
    assert fock.norm(fock.tensor(a, b)) == pytest.approx(fock.norm(a) * fock.norm(b))


def test_tensor_rejects_overlap():
    with pytest.raises(FockError, match="overlapping"):
        fock.tensor(ket(0), ket(1))


def test_project_examples():
    prob, post = fock.project_occupation(ket(1), "x", 1)
    assert prob == 1.0 and post.amplitudes == {(1,): 1}
    plus = StateVector(ONE, {(0,): 1 / math.sqrt(2), (1,): 1 / math.sqrt(2)})
    prob, post = fock.project_occupation(plus, "x", 1)
    assert prob == pytest.approx(0.5)
    assert post.amplitude([1]) == pytest.approx(1.0)


def test_project_zero_probability():
    prob, post = fock.project_occupation(ket(0), "x", 2)
    assert prob == 0.0 and len(post) == 0


def test_project_out_of_range():
    with pytest.raises(FockError):
        fock.project_occupation(ket(0), "x", 3)


def test_sequential_projections_match_enumeration(rng):
    reg = ModeRegister(("a", "b", "c"), 2)
    psi = random_state(rng, reg)
    dense = np.abs(oracle.lift(psi).amplitudes) ** 2
    for idx, k in enumerate(oracle.basis_kets(reg)):
        prob, state = 1.0, psi
        for mode, n in zip(reg.modes, k):
            p, state = fock.project_occupation(state, mode, n)
            prob *= p
            if p == 0:
                break
        assert prob == pytest.approx(dense[idx], abs=1e-12)


def test_measure_modes_matches_projection(rng):
    reg = ModeRegister(("a", "b", "c"), 2)
    psi = random_state(rng, reg)
    groups = fock.measure_modes(psi, ["b"])
    assert sum(p for p, _ in groups.values()) == pytest.approx(1.0)
    for (n,), (p, post) in groups.items():
        p_ref, ref = fock.project_occupation(psi, "b", n)
        assert p == pytest.approx(p_ref)
        assert post.register.modes == ("a", "c")
        for k, amp in post.amplitudes.items():
            assert amp == pytest.approx(ref.amplitude((k[0], n, k[1])))


def test_inner_norm_normalize():
    assert fock.inner(ket(1), ket(1)) == 1
    assert fock.inner(ket(1), ket(0)) == 0
    s = 3.0 * ket(2)
    assert fock.norm(s) == pytest.approx(3.0)
    assert fock.norm(fock.normalize(s)) == pytest.approx(1.0)
    with pytest.raises(FockError):
        fock.normalize(StateVector(ONE))
    with pytest.raises(fock.RegisterMismatchError):
        fock.inner(ket(0), StateVector.vacuum(ModeRegister(("y",), 2)))


def _first_order_emission(p_c):
    reg = ModeRegister(("s", "a"), 2)
    vac = StateVector.vacuum(reg)
    return vac + math.sqrt(p_c) * fock.create(fock.create(vac, "s"), "a")


def test_unnormalized_emission_norm():
    p_c = 0.01
    psi = _first_order_emission(p_c)
    reg = psi.register
    dense = oracle.vacuum(reg) + math.sqrt(p_c) * (
        oracle.creation_matrix(reg, "s") @ oracle.creation_matrix(reg, "a") @ oracle.vacuum(reg))
    assert fock.norm(psi) == pytest.approx(np.linalg.norm(dense), abs=1e-15)
    assert fock.norm(psi) == pytest.approx(math.sqrt(1 + p_c), abs=1e-15)


@pytest.mark.parametrize("p_c", [0.0, 0.01, 0.3])
def test_number_expectation_of_emission(p_c):
    psi = _first_order_emission(p_c)
    rho_vec = oracle.lift(fock.normalize(psi)).amplitudes
    n_op = oracle.number_matrix(psi.register, "a")
    expected = float(np.real(rho_vec.conj() @ n_op @ rho_vec))
    assert fock.number_expectation(psi, "a") == pytest.approx(expected, abs=1e-14)
    assert fock.number_expectation(psi, "a") == pytest.approx(p_c / (1 + p_c), abs=1e-14)


def test_pruning_and_validation():
    s = StateVector(ONE, {(0,): 1e-15, (1,): 1.0})
    assert list(s.amplitudes) == [(1,)]
    with pytest.raises(FockError):
        StateVector(ONE, {(3,): 1.0})
    with pytest.raises(FockError):
        StateVector(ONE, {(0, 0): 1.0})
    with pytest.raises(FockError):
        ModeRegister(("a", "a"))
    with pytest.raises(FockError):
        ModeRegister(("a",), 0)


def test_to_text_sorted():
    reg = ModeRegister(("a", "b"), 2)
    s = StateVector(reg, {(1, 0): 0.5j, (0, 1): -0.25})
    assert s.to_text() == "0 1 : -0.25 0\n1 0 : 0 0.5"


def test_mixture_fidelity_and_distance():
    reg = ModeRegister(("a", "b"), 2)
    h = StateVector.basis(reg, [1, 0])
    v = StateVector.basis(reg, [0, 1])
    plus = fock.normalize(h + v)
    mix = MixedState(((0.5, h), (0.5, v)))
    assert fock.mixture_fidelity(plus, plus) == pytest.approx(1.0, abs=1e-14)
    assert fock.mixture_fidelity(h, v) == pytest.approx(0.0, abs=1e-14)
    assert fock.mixture_fidelity(mix, plus) == pytest.approx(0.5)
    assert fock.trace_distance(mix, MixedState.pure(h)) == pytest.approx(0.5)
    kets, rho = fock.density_matrix(mix)
    assert np.trace(rho).real == pytest.approx(1.0)


# --- properties -------------------------------------------------------------

seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=40, deadline=None)
@given(seed=seeds, mode=st.integers(0, 2))
def test_commutator(seed, mode):
    rng = np.random.default_rng(seed)
    reg = ModeRegister(("a", "b", "c"), 2)
    psi = random_state(rng, reg)
    label = reg.modes[mode]
    # keep occupation of the probed mode below d so no truncation is involved
    psi = StateVector(reg, {k: a for k, a in psi.amplitudes.items() if k[mode] < 2})
    aad = fock.annihilate(fock.create(psi, label), label)
    ada = fock.create(fock.annihilate(psi, label), label)
    lhs = fock.inner(psi, aad) - fock.inner(psi, ada)
    assert abs(lhs - fock.inner(psi, psi)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=seeds, n_modes=st.integers(1, 4))
def test_sparse_matches_dense_on_small_registers(seed, n_modes):
    rng = np.random.default_rng(seed)
    reg = ModeRegister(tuple(f"m{i}" for i in range(n_modes)), 2)
    psi = random_state(rng, reg)
    label = reg.modes[int(rng.integers(n_modes))]
    for op, mat in ((fock.create, oracle.creation_matrix(reg, label)),
                    (fock.annihilate, oracle.creation_matrix(reg, label).conj().T)):
        out = op(psi, label)
        assert np.abs(oracle.lift(out).amplitudes - mat @ oracle.lift(psi).amplitudes).max() < 1e-10
    if n_modes >= 2:
        u, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        from ensemble_pne.optics import BeamSplitter
        modes = reg.modes[:2]
        out = fock.apply_mode_transform(psi, modes, u)

        class Custom(BeamSplitter):
            def matrix(self):
                return u

        dense = oracle.apply_circuit(oracle.lift(psi), [Custom(*modes)])
        assert np.abs(oracle.lift(out).amplitudes - dense.amplitudes).max() < 1e-10
        lost = 1 - np.linalg.norm(dense.amplitudes) ** 2
        assert out.leakage == pytest.approx(lost, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=seeds)
def test_norm_plus_leakage_conserved_under_unitaries(seed):
    rng = np.random.default_rng(seed)
    reg = ModeRegister(("a", "b", "c"), 2)
    psi = random_state(rng, reg)
    for _ in range(4):
        i, j = rng.choice(3, size=2, replace=False)
        u, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        before = fock.norm(psi) ** 2 + psi.leakage
        psi = fock.apply_mode_transform(psi, (reg.modes[i], reg.modes[j]), u)
        after = fock.norm(psi) ** 2 + psi.leakage
        assert after <= before + 1e-12
        assert after == pytest.approx(1.0, abs=1e-9)
