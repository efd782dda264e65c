import numpy as np
import pytest

from qutrit_readout.sim import DeviceConfig, QubitConfig


def quiet_qubit(index=0, if_freq=50e6, response=(1 + 0j, -1 + 0j, 1j), **kw):
    """Qubit with no excitation and no prepared-state leakage unless asked."""
    params = dict(p_excite_01=0.0, p_excite_02=0.0, p_excite_12=0.0, p_leak_prep=0.0)
    params.update(kw)
    return QubitConfig(index=index, if_freq=if_freq, level_response=response, **params)


def quiet_device(n=1, noise_std=0.0, seed=1, **qubit_kw):
    qubits = [quiet_qubit(q, 50e6 + 30e6 * q, **qubit_kw) for q in range(n)]
    return DeviceConfig(qubits=tuple(qubits), noise_std=noise_std, seed=seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the summary hook prints them all."""

    def record(number, title, ok, detail):
        ACCEPTANCE_LINES.append((number, f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
