import numpy as np
import pytest

from ensemble_pne.fock import ModeRegister, StateVector


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_state(rng, register: ModeRegister, max_total: int | None = None) -> StateVector:
    """Normalized random state; optionally restricted to total occupation <= max_total."""
    import itertools

    amps = {}
    for ket in itertools.product(range(register.truncation + 1), repeat=len(register)):
        if max_total is not None and sum(ket) > max_total:
            continue
        amps[ket] = complex(rng.normal(), rng.normal())
    nrm = np.sqrt(sum(abs(a) ** 2 for a in amps.values()))
    return StateVector(register, {k: a / nrm for k, a in amps.items()})
