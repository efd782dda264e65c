import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qutrit_readout.datafile import dataset_bytes
from qutrit_readout.rng import stream
from qutrit_readout.sim import (
    DeviceConfig,
    QubitConfig,
    _history,
    all_states,
    baseband_signal,
    computational_states,
    default_device,
    generate_dataset,
    sample_trace,
)

from conftest import quiet_device, quiet_qubit


def test_noiseless_dc_steady_state():
    dev = DeviceConfig(qubits=(quiet_qubit(if_freq=0.0, ring_tau=0.0),), noise_std=0.0)
    shot = sample_trace(dev, [0], stream(1))
    assert np.all(shot.i_samples == 1.0)
    assert np.all(shot.q_samples == 0.0)


def _relaxed_fraction(t1, shots):
    dev = quiet_device(t1=t1)
    ds = generate_dataset(dev, [(1,)], shots)
    return np.mean([any(e[1:] == (1, 0) for e in t.events[0]) for t in ds.truths])


@pytest.mark.parametrize("ratio", [10.0, 1.0])
def test_relaxation_fraction_matches_exponential_cdf(ratio):
    # duration / t1 = ratio; P(event before end) = 1 - exp(-ratio)
    n = 10_000
    p = 1 - math.exp(-ratio)
    frac = _relaxed_fraction(1e-6 / ratio, n)
    assert abs(frac - p) <= 3 * math.sqrt(p * (1 - p) / n) + 1e-12 + (1 / n if p > 0.999 else 0)


def test_forced_leakage():
    dev = quiet_device(p_leak_prep=1.0)
    ds = generate_dataset(dev, [(0,)], 50)
    assert all(t.effective_initial_level == (2,) for t in ds.truths)
    assert all(t.prepared_level == (0,) for t in ds.truths)


def test_ring_up_matches_direct_formula():
    q = quiet_qubit(ring_tau=40e-9, response=(0.3 + 1j, -2 + 0.5j, 1.5 - 1j))
    times = np.arange(500) / 500e6
    events = ((2e-7, 2, 1), (6e-7, 1, 0))
    got = baseband_signal(q, 2, events, times)
    # independent piecewise evaluation, sample by sample
    tau, resp = q.ring_tau, q.level_response
    for k, t in enumerate(times):
        c_prev, t0, level = 0j, 0.0, 2
        for te, _, dst in events:
            if te > t:
                break
            c_prev = c_prev + (resp[level] - c_prev) * (1 - math.exp(-(te - t0) / tau))
            t0, level = te, dst
        want = c_prev + (resp[level] - c_prev) * (1 - math.exp(-(t - t0) / tau))
        assert abs(got[k] - want) < 1e-12


def test_crosstalk_and_upconversion_noiseless():
    qubits = (quiet_qubit(0, 50e6, ring_tau=0.0), quiet_qubit(1, 80e6, ring_tau=0.0, response=(2j, 1, -1)))
    dev = DeviceConfig(qubits=qubits, noise_std=0.0, crosstalk=((1.0, 0.1), (-0.05, 1.0)))
    shot = sample_trace(dev, [1, 0], stream(3))
    t = np.arange(500) / 500e6
    s0, s1 = qubits[0].level_response[1], qubits[1].level_response[0]
    m0, m1 = s0 + 0.1 * s1, -0.05 * s0 + s1
    x = m0 * np.exp(2j * np.pi * 50e6 * t) + m1 * np.exp(2j * np.pi * 80e6 * t)
    assert np.allclose(shot.i_samples, x.real, atol=1e-12)
    assert np.allclose(shot.q_samples, x.imag, atol=1e-12)


def test_sample_trace_rejects_bad_prep():
    dev = quiet_device(n=2)
    with pytest.raises(ValueError):
        sample_trace(dev, [0], stream(0))
    with pytest.raises(ValueError):
        sample_trace(dev, [0, 3], stream(0))


@pytest.mark.parametrize(
    "kw",
    [{"t1": math.nan}, {"if_freq": math.inf}, {"p_leak_prep": 1.5}, {"t1": -1.0}, {"level_response": (1, 1, 2)}],
)
def test_qubit_config_rejects_bad_values(kw):
    params = dict(index=0, if_freq=50e6, level_response=(1, -1, 1j))
    params.update(kw)
    with pytest.raises(ValueError):
        QubitConfig(**params)


def test_device_config_invariants():
    q0, q1 = quiet_qubit(0, 50e6), quiet_qubit(1, 50e6)
    with pytest.raises(ValueError):
        DeviceConfig(qubits=(q0, q1))  # duplicate IF
    with pytest.raises(ValueError):
        DeviceConfig(qubits=(quiet_qubit(0, 260e6),))  # above Nyquist
    with pytest.raises(ValueError):
        DeviceConfig(qubits=(q0,), duration=1.001e-9 * 3)  # non-integer N
    q1 = quiet_qubit(1, 80e6)
    with pytest.raises(ValueError):
        DeviceConfig(qubits=(q0, q1), crosstalk=((1, 0.25), (0, 1)))
    assert DeviceConfig(qubits=(q0,)).n_samples == 500


def test_default_device_t1_range_and_ifs():
    dev = default_device()
    assert all(7e-6 <= q.t1 <= 40e-6 for q in dev.qubits)
    assert [q.if_freq for q in dev.qubits] == [50e6, 80e6, 110e6, 140e6, 170e6]
    assert DeviceConfig.from_dict(dev.to_dict()) == dev


def test_dataset_sizes_and_splits():
    dev = default_device(seed=3)
    ds = generate_dataset(dev, computational_states(5), 4)
    assert len(ds) == 32 * 4
    counts = np.bincount(ds.prep @ (2 ** np.arange(5)), minlength=32)
    assert np.all(counts == 4)


def test_split_fractions_per_state():
    dev = quiet_device(noise_std=1.0)
    ds = generate_dataset(dev, [(0,), (1,)], 500)
    for j in range(2):
        tags = ds.split[j * 500 : (j + 1) * 500]
        # 30% train of which 15% (rounded) is validation
        assert np.count_nonzero(tags == 1) == 23
        assert np.count_nonzero(tags == 0) == 150 - 23
        assert np.count_nonzero(tags == 2) == 350


def test_all_states_gives_243_labels():
    ds = generate_dataset(default_device(), all_states(5), 1)
    assert len({tuple(p) for p in ds.prep}) == 243


def test_duplicate_states_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        generate_dataset(quiet_device(), [(0,), (0,)], 2)


def test_parallel_generation_is_bit_identical():
    dev = default_device(n_qubits=2, seed=11)
    serial = generate_dataset(dev, all_states(2), 7, workers=1)
    parallel = generate_dataset(dev, all_states(2), 7, workers=3)
    assert serial == parallel
    assert dataset_bytes(serial) == dataset_bytes(parallel)


def test_event_log_consistency_many_random_configs():
    gen = np.random.default_rng(0)
    for k in range(10_000):
        q = QubitConfig(
            index=0,
            if_freq=0.0,
            level_response=(0, 1, 1j),
            t1=10 ** gen.uniform(-8, -4),
            t1_level2=10 ** gen.uniform(-8, -4),
            p_excite_01=gen.uniform(0, 0.5),
            p_excite_02=gen.uniform(0, 0.5),
            p_excite_12=gen.uniform(0, 1),
            p_leak_prep=gen.uniform(0, 1),
        )
        initial, events = _history(q, int(gen.integers(3)), stream(k), 1e-6)
        last, level = -1.0, initial
        for t, src, dst in events:
            assert last < t <= 1e-6 and src == level and src != dst
            last, level = t, dst


@settings(max_examples=60, deadline=None)
@given(
    st.integers(0, 2**64 - 1),
    st.lists(st.integers(0, 2), min_size=1, max_size=3),
    st.floats(1e-8, 1e-4),
    st.floats(0, 0.3),
)
def test_generated_truth_is_consistent(seed, prep, t1, p_exc):
    dev = DeviceConfig(
        qubits=tuple(
            QubitConfig(q, 50e6 + 30e6 * q, (1, -1, 1j), t1=t1, p_excite_01=p_exc, p_excite_12=p_exc)
            for q in range(len(prep))
        ),
        seed=seed,
    )
    shot = sample_trace(dev, prep, stream(seed))
    assert shot.truth.is_consistent(dev.duration)
    assert len(shot.i_samples) == len(shot.q_samples) == 500
