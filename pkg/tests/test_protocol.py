import io
import math

import numpy as np
import pytest
from scipy import stats

from ensemble_pne import fock, oracle, protocol
from ensemble_pne.fock import MixedState, ModeRegister, StateVector
from ensemble_pne.protocol import (
    HERALDS,
    OUTCOMES,
    ExhaustedError,
    Outcome,
    ProtocolParams,
    apply_loss,
    attempt,
    attempt_table,
    conditional_state,
    emit,
    entangled_state,
    expected_generation_time,
    run_until_success,
)


def test_emit_zero_is_vacuum():
    s = emit(0.0, "s", "a")
    assert s.amplitudes == {(0, 0): 1}


def test_emit_amplitude_ratio():
    s = emit(0.04, "s", "a")
    assert (s.amplitude([1, 1]) / s.amplitude([0, 0])).real == pytest.approx(0.2)
    assert fock.norm(s) == pytest.approx(1.0)


@pytest.mark.parametrize("p_c", [0.01, 0.2])
def test_emit_number_expectation(p_c):
    s = emit(p_c, "s", "a")
    reg = s.register
    vec = oracle.emission_vector(reg, [("s", "a")], p_c)
    expected = float(np.real(vec.conj() @ oracle.number_matrix(reg, "a") @ vec))
    assert fock.number_expectation(s, "a") == pytest.approx(expected, abs=1e-14)
    assert fock.number_expectation(s, "a") == pytest.approx(p_c / (1 + p_c), abs=1e-14)


def test_emit_double_excitation():
    s = emit(0.1, "s", "a", include_double=True)
    vec = oracle.emission_vector(s.register, [("s", "a")], 0.1, include_double=True)
    assert np.abs(oracle.lift(s).amplitudes - vec).max() < 1e-14
    # two-mode squeezed ratios: |1,1>/|0,0> = sqrt(p), |2,2>/|0,0> = p
    assert (s.amplitude([2, 2]) / s.amplitude([0, 0])).real == pytest.approx(0.1)


def test_emit_range():
    with pytest.raises(ValueError):
        emit(1.0, "s", "a")
    with pytest.raises(ValueError):
        emit(-0.1, "s", "a")


def test_loss_zero_eta():
    s = StateVector.basis(ModeRegister(("a",), 2), [1])
    mix = apply_loss(s, "a", 0.0)
    assert len(mix.components) == 1 and mix.components[0][1] == s


def test_loss_single_photon():
    s = StateVector.basis(ModeRegister(("a",), 2), [1])
    mix = apply_loss(s, "a", 0.25)
    got = {tuple(st.amplitudes): w for w, st in mix.components}
    assert got[((1,),)] == pytest.approx(0.75)
    assert got[((0,),)] == pytest.approx(0.25)


@pytest.mark.parametrize("eta", [0.0, 0.3, 0.9])
def test_loss_matches_kraus_oracle(eta, rng):
    reg = ModeRegister(("a", "b"), 2)
    plus = StateVector(reg, {(0, 0): 1 / math.sqrt(2), (1, 0): 1 / math.sqrt(2)})
    for psi in (plus, fock.normalize(StateVector(reg, {(2, 1): 1.0, (1, 0): 0.5j, (0, 2): -0.3}))):
        mix = apply_loss(psi, "a", eta)
        assert mix.total_weight == pytest.approx(1.0, abs=1e-12)
        rho = sum(w * np.outer(oracle.lift(s).amplitudes, oracle.lift(s).amplitudes.conj())
                  for w, s in mix.components)
        vec = oracle.lift(psi).amplitudes
        expected = oracle.apply_loss_density(reg, np.outer(vec, vec.conj()), "a", eta)
        assert np.abs(rho - expected).max() < 1e-12
    rho = sum(w * np.outer(oracle.lift(s).amplitudes, oracle.lift(s).amplitudes.conj())
              for w, s in apply_loss(plus, "a", eta).components)
    i0 = oracle.ket_index(reg, (0, 0))
    i1 = oracle.ket_index(reg, (1, 0))
    assert abs(rho[i0, i1]) == pytest.approx(0.5 * math.sqrt(1 - eta), abs=1e-12)


def test_params_validation():
    for bad in ({"p_c": 1.0}, {"eta": 1.0}, {"c_vacuum": -1}, {"t0": 0}, {"theta1": 1.0}):
        with pytest.raises(ValueError):
            ProtocolParams(**bad)
    p = ProtocolParams(theta1=0.3)
    assert p.alpha ** 2 + p.beta ** 2 == pytest.approx(1.0, abs=1e-15)


def test_no_emission_never_clicks(rng):
    p = ProtocolParams(p_c=0.0)
    for _ in range(20):
        outcome, state = attempt(p, rng)
        assert outcome is Outcome.NO_CLICK
        assert fock.mixture_fidelity(state, StateVector.vacuum(state.register)) == pytest.approx(1.0)


GRID = [
    ProtocolParams(p_c=0.05, theta1=0.1, phi12=0.0),
    ProtocolParams(p_c=0.2, theta1=math.pi / 8, phi12=1.3),
    ProtocolParams(p_c=0.1, eta=0.4, theta1=0.6, phi12=-2.0, c_vacuum=0.3),
    ProtocolParams(p_c=0.3, eta=0.2, theta1=0.25, include_double_excitation=True),
]


@pytest.mark.parametrize("params", GRID)
def test_distribution_sums_to_one(params):
    assert attempt_table(params).probabilities.sum() == pytest.approx(1.0, abs=1e-10)
    assert attempt_table(params).leakage == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("params", [p for p in GRID if not p.include_double_excitation])
def test_distribution_matches_oracle(params):
    dense = oracle.generation_click_distribution(params)
    table = attempt_table(params)
    for outcome in OUTCOMES:
        assert table.probability(outcome) == pytest.approx(dense.get(outcome.value, 0.0), abs=1e-10)


@pytest.mark.parametrize("params", [GRID[1], GRID[2]])
@pytest.mark.parametrize("outcome", [Outcome.D1, Outcome.D2])
def test_heralded_state_matches_oracle(params, outcome):
    # oracle has no feed-forward and no vacuum admixture; compare against the raw herald
    raw = ProtocolParams(**{**params.__dict__, "c_vacuum": 0.0})
    dense = oracle.heralded_atom_density(raw, outcome.value)
    kets, rho = fock.density_matrix(attempt_table(raw).state(outcome))
    reg = ModeRegister(protocol.ATOMS, raw.working_truncation)
    full = np.zeros_like(dense)
    idx = [oracle.ket_index(reg, k) for k in kets]
    full[np.ix_(idx, idx)] = rho
    assert np.abs(full - dense).max() < 1e-10


def test_single_click_total_probability():
    p_c = 0.07
    table = attempt_table(ProtocolParams(p_c=p_c, theta1=0.3))
    assert table.success_probability == pytest.approx(2 * p_c / (1 + p_c) ** 2, abs=1e-10)
    dense = oracle.generation_click_distribution(ProtocolParams(p_c=p_c, theta1=0.3))
    assert sum(dense[d] for d in ("D1", "D2", "D3", "D4")) == pytest.approx(table.success_probability, abs=1e-10)


@pytest.mark.parametrize("theta1,phi12", [(0.1, 0.0), (math.pi / 8, 1.0), (0.7, -2.5)])
def test_ideal_herald_states(theta1, phi12):
    p = ProtocolParams(p_c=0.05, theta1=theta1, phi12=phi12)
    alpha, beta = p.alpha, p.beta
    reg = ModeRegister(protocol.ATOMS, 2)
    eq5 = StateVector(reg, {(1, 0): alpha, (0, 1): np.exp(1j * phi12) * beta})
    eq6 = StateVector(reg, {(1, 0): beta, (0, 1): np.exp(1j * phi12) * alpha})
    table = attempt_table(p)
    for o, target in ((Outcome.D1, eq5), (Outcome.D3, eq5), (Outcome.D2, eq6), (Outcome.D4, eq6)):
        assert fock.mixture_fidelity(table.state(o), target) > 1 - 1e-10


def test_d1_d3_and_d2_d4_identical():
    table = attempt_table(ProtocolParams(p_c=0.1, eta=0.2, theta1=0.3, phi12=0.9, c_vacuum=0.4))
    assert fock.mixture_fidelity(table.state(Outcome.D1), table.state(Outcome.D3)) > 1 - 1e-10
    assert fock.mixture_fidelity(table.state(Outcome.D2), table.state(Outcome.D4)) > 1 - 1e-10


def test_theta_swap_exchanges_heralds():
    a = attempt_table(ProtocolParams(p_c=0.05, theta1=0.2, phi12=0.4))
    b = attempt_table(ProtocolParams(p_c=0.05, theta1=math.pi / 4 - 0.2, phi12=0.4))
    assert fock.mixture_fidelity(a.state(Outcome.D1), b.state(Outcome.D2)) > 1 - 1e-10
    assert fock.mixture_fidelity(a.state(Outcome.D2), b.state(Outcome.D1)) > 1 - 1e-10


def test_conditional_state_limits():
    p0 = ProtocolParams(theta1=0.3, phi12=0.5)
    assert fock.mixture_fidelity(conditional_state(p0, Outcome.D1), entangled_state(p0, Outcome.D1)) \
        == pytest.approx(1.0, abs=1e-14)
    p1 = ProtocolParams(theta1=0.3, phi12=0.5, c_vacuum=1.0)
    mix = conditional_state(p1, Outcome.D1)
    weights = sorted(w for w, _ in mix.components)
    assert weights == pytest.approx([0.5, 0.5])
    for bad in (Outcome.NO_CLICK, Outcome.MULTI_CLICK):
        with pytest.raises(ValueError):
            conditional_state(p1, bad)


@pytest.mark.parametrize("c", [0.0, 0.5, 2.0])
def test_conditional_state_matches_simulated(c):
    p = ProtocolParams(p_c=0.02, theta1=0.35, phi12=-0.8, c_vacuum=c)
    table = attempt_table(p)
    for o in HERALDS:
        assert fock.trace_distance(table.state(o), conditional_state(p, o)) < 1e-10


def test_run_until_success_exhaustion(rng):
    with pytest.raises(ExhaustedError) as err:
        run_until_success(ProtocolParams(p_c=0.0), rng, max_attempts=10)
    assert err.value.attempts == 10


def test_run_until_success_records(rng):
    p = ProtocolParams(p_c=0.2, t0=2.0)
    result = run_until_success(p, rng)
    assert result.outcome.is_herald
    assert result.elapsed == result.attempts * 2.0
    assert len(result.history) == result.attempts
    assert all(not o.is_herald for o in result.history[:-1])


def test_mean_attempts_first_order():
    p_c, eta = 0.01, 0.3
    table = attempt_table(ProtocolParams(p_c=p_c, eta=eta))
    assert 1 / table.success_probability == pytest.approx(1 / (2 * p_c * (1 - eta)), rel=0.03)


def test_attempts_are_geometric():
    p = ProtocolParams(p_c=0.1, eta=0.2)
    q = attempt_table(p).success_probability
    results = protocol.simulate_generation(p, 10_000, seed=99)
    attempts = np.array([r.attempts for r in results])
    edges = list(range(1, 16))
    observed = [int((attempts == k).sum()) for k in edges] + [int((attempts > edges[-1]).sum())]
    probs = [q * (1 - q) ** (k - 1) for k in edges] + [(1 - q) ** edges[-1]]
    expected = np.array(probs) * len(attempts)
    _, pvalue = stats.chisquare(observed, expected)
    assert pvalue > 0.01


def test_expected_generation_time():
    assert expected_generation_time(ProtocolParams(t0=1, eta=0, p_c=0.01)) == pytest.approx(100)
    assert expected_generation_time(ProtocolParams(t0=2, eta=0.5, p_c=0.01)) == pytest.approx(400)
    with pytest.raises(ValueError):
        expected_generation_time(ProtocolParams(p_c=0.0))


def test_attempt_log_csv_deterministic():
    p = ProtocolParams(p_c=0.3)
    logs = []
    for _ in range(2):
        out = io.StringIO()
        protocol.write_attempt_log(protocol.simulate_generation(p, 20, seed=5), out, p.t0)
        logs.append(out.getvalue())
    assert logs[0] == logs[1]
    rows = logs[0].splitlines()
    assert rows[0] == "trial,attempt,outcome,elapsed"
    last_trial = rows[-1].split(",")
    assert last_trial[0] == "19" and last_trial[2] in {"D1", "D2", "D3", "D4"}
