"""Synthetic frequency-multiplexed dispersive readout traces.

The generative model per qubit is a three-level relaxation cascade
(2 -> 1 -> 0 with exponential dwell times), an optional single excitation
event, and a resonator response that rings up exponentially towards the
centroid of the current level.  Qubit signals are mixed by a linear
crosstalk matrix, up-converted to their intermediate frequencies, summed
on one feedline and sampled with additive white Gaussian noise.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import rng as rngmod

TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "val", "test")
TRAIN_FRACTION = 0.30
VAL_FRACTION = 0.15


def _finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class QubitConfig:
    """Readout parameters of one qubit.

    ``level_response`` holds the steady-state baseband centroid for levels
    0, 1 and 2.  ``t1_level2`` defaults to ``t1 / 2``.  ``ring_tau = 0`` is
    accepted as the instantaneous-step limit.
    """

    index: int
    if_freq: float
    level_response: tuple[complex, complex, complex]
    ring_tau: float = 60e-9
    t1: float = 20e-6
    t1_level2: float | None = None
    p_excite_01: float = 2e-3
    p_excite_02: float = 5e-4
    p_excite_12: float = 2e-3
    p_leak_prep: float = 5e-3

    def __post_init__(self):
        resp = tuple(complex(c) for c in self.level_response)
        if len(resp) != 3:
            raise ValueError("level_response needs one centroid per level (3)")
        object.__setattr__(self, "level_response", resp)
        if self.t1_level2 is None:
            object.__setattr__(self, "t1_level2", self.t1 / 2)
        for c in resp:
            _finite("level_response", c.real, c.imag)
        _finite("qubit parameters", self.if_freq, self.ring_tau, self.t1, self.t1_level2)
        if min(abs(a - b) for a, b in itertools.combinations(resp, 2)) <= 0:
            raise ValueError("level_response centroids must be pairwise distinct")
        if self.t1 <= 0 or self.t1_level2 <= 0:
            raise ValueError("relaxation times must be positive")
        if self.ring_tau < 0:
            raise ValueError("ring_tau must be non-negative")
        probs = (self.p_excite_01, self.p_excite_02, self.p_excite_12, self.p_leak_prep)
        _finite("probabilities", *probs)
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.p_excite_01 + self.p_excite_02 > 1.0:
            raise ValueError("p_excite_01 + p_excite_02 must not exceed 1")

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "if_freq": self.if_freq,
            "level_response": [[c.real, c.imag] for c in self.level_response],
            "ring_tau": self.ring_tau,
            "t1": self.t1,
            "t1_level2": self.t1_level2,
            "p_excite_01": self.p_excite_01,
            "p_excite_02": self.p_excite_02,
            "p_excite_12": self.p_excite_12,
            "p_leak_prep": self.p_leak_prep,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QubitConfig":
        d = dict(d)
        d["level_response"] = tuple(complex(re, im) for re, im in d["level_response"])
        return cls(**d)


@dataclass(frozen=True)
class DeviceConfig:
    qubits: tuple[QubitConfig, ...]
    sample_rate: float = 500e6
    duration: float = 1e-6
    noise_std: float = 4.0
    crosstalk: tuple[tuple[float, ...], ...] | None = None
    seed: int = 0

    def __post_init__(self):
        qubits = tuple(self.qubits)
        object.__setattr__(self, "qubits", qubits)
        n = len(qubits)
        if n < 1:
            raise ValueError("device needs at least one qubit")
        _finite("device parameters", self.sample_rate, self.duration, self.noise_std)
        if self.sample_rate <= 0 or self.duration <= 0 or self.noise_std < 0:
            raise ValueError("sample_rate, duration must be positive and noise_std non-negative")
        n_samples = self.sample_rate * self.duration
        if abs(n_samples - round(n_samples)) > 1e-6 or round(n_samples) < 1:
            raise ValueError(f"sample_rate * duration must be a positive integer, got {n_samples}")
        freqs = [q.if_freq for q in qubits]
        if len(set(freqs)) != n:
            raise ValueError("intermediate frequencies must be distinct")
        if any(abs(f) >= self.sample_rate / 2 for f in freqs):
            raise ValueError("intermediate frequencies must lie below Nyquist")
        x = np.eye(n) if self.crosstalk is None else np.asarray(self.crosstalk, dtype=float)
        if x.shape != (n, n):
            raise ValueError(f"crosstalk must be {n}x{n}")
        if not np.all(np.isfinite(x)):
            raise ValueError("crosstalk must be finite")
        if not np.all(np.diag(x) == 1.0):
            raise ValueError("crosstalk diagonal must be 1.0")
        if np.any(np.abs(x[~np.eye(n, dtype=bool)]) >= 0.2):
            raise ValueError("crosstalk off-diagonal magnitudes must be < 0.2")
        object.__setattr__(self, "crosstalk", tuple(tuple(float(v) for v in row) for row in x))
        object.__setattr__(self, "seed", int(self.seed) & ((1 << 64) - 1))

    @property
    def n_qubits(self) -> int:
        return len(self.qubits)

    @property
    def n_samples(self) -> int:
        return int(round(self.sample_rate * self.duration))

    @property
    def mixing(self) -> np.ndarray:
        return np.array(self.crosstalk, dtype=float)

    def times(self, n_keep: int | None = None) -> np.ndarray:
        n = self.n_samples if n_keep is None else n_keep
        return np.arange(n) / self.sample_rate

    def to_dict(self) -> dict:
        return {
            "qubits": [q.to_dict() for q in self.qubits],
            "sample_rate": self.sample_rate,
            "duration": self.duration,
            "noise_std": self.noise_std,
            "crosstalk": [list(row) for row in self.crosstalk],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceConfig":
        d = dict(d)
        d["qubits"] = tuple(QubitConfig.from_dict(q) for q in d["qubits"])
        if d.get("crosstalk") is not None:
            d["crosstalk"] = tuple(tuple(row) for row in d["crosstalk"])
        return cls(**d)


def default_device(
    n_qubits: int = 5,
    seed: int = 2024,
    noise_std: float = 4.0,
    p_leak_prep: float = 5e-3,
    crosstalk_strength: float = 0.1,
    weak_qubit: int | None = None,
    **qubit_overrides,
) -> DeviceConfig:
    """Five-qubit-like feedline used as the default testbed.

    IFs are 50 MHz + 30 MHz * q.  T1 is drawn uniformly from 7-40 us using a
    stream derived from ``seed``.  Nearest neighbours on the feedline couple
    with ``crosstalk_strength``.  ``weak_qubit`` shrinks that qubit's
    centroid separation by half to emulate a poorly distinguishable qubit.
    """
    draw = rngmod.stream(rngmod.derive_seed(seed, "device"))
    t1s = draw.uniform(7e-6, 40e-6, size=n_qubits)
    base = np.array([-1.0 + 0.0j, 1.0 + 0.0j, 0.6 + 1.6j])
    qubits = []
    for q in range(n_qubits):
        resp = base * np.exp(1j * 0.7 * q)
        if q == weak_qubit:
            resp = resp.mean() + 0.5 * (resp - resp.mean())
        params = dict(
            index=q,
            if_freq=50e6 + 30e6 * q,
            level_response=tuple(complex(c) for c in resp),
            t1=float(t1s[q]),
            p_leak_prep=p_leak_prep,
        )
        params.update(qubit_overrides)
        qubits.append(QubitConfig(**params))
    x = np.eye(n_qubits)
    for q in range(n_qubits - 1):
        x[q, q + 1] = x[q + 1, q] = crosstalk_strength
    return DeviceConfig(qubits=tuple(qubits), noise_std=noise_std, crosstalk=tuple(map(tuple, x)), seed=seed)


@dataclass(frozen=True)
class GroundTruth:
    """What actually happened to each qubit during one shot.

    ``events[q]`` is an ordered tuple of ``(time_s, from_level, to_level)``.
    A 2 -> 0 decay appears as 2 -> 1 followed by 1 -> 0.
    """

    prepared_level: tuple[int, ...]
    effective_initial_level: tuple[int, ...]
    events: tuple[tuple[tuple[float, int, int], ...], ...]

    def level_at(self, qubit: int, t: float) -> int:
        level = self.effective_initial_level[qubit]
        for time, _, dst in self.events[qubit]:
            if time > t:
                break
            level = dst
        return level

    def is_consistent(self, duration: float) -> bool:
        for q, evs in enumerate(self.events):
            level, last = self.effective_initial_level[q], -1.0
            for time, src, dst in evs:
                if not (last < time <= duration) or src != level or src == dst:
                    return False
                level, last = dst, time
        return True

    def to_dict(self) -> dict:
        return {
            "prep": list(self.prepared_level),
            "initial": list(self.effective_initial_level),
            "events": [[[t, s, d] for t, s, d in evs] for evs in self.events],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            prepared_level=tuple(d["prep"]),
            effective_initial_level=tuple(d["initial"]),
            events=tuple(tuple((float(t), int(s), int(e)) for t, s, e in evs) for evs in d["events"]),
        )


@dataclass
class RawShot:
    i_samples: np.ndarray
    q_samples: np.ndarray
    truth: GroundTruth

    @property
    def prep_label(self) -> tuple[int, ...]:
        return self.truth.prepared_level

    @property
    def complex_samples(self) -> np.ndarray:
        return self.i_samples.astype(np.float64) + 1j * self.q_samples.astype(np.float64)


def _relax(level: int, t: float, qubit: QubitConfig, gen: np.random.Generator, duration: float):
    events = []
    while level > 0:
        t = t + gen.exponential(qubit.t1 if level == 1 else qubit.t1_level2)
        if t > duration:
            break
        events.append((float(t), level, level - 1))
        level -= 1
    return events


def _history(qubit: QubitConfig, prep: int, gen: np.random.Generator, duration: float):
    initial = prep
    if gen.random() < qubit.p_leak_prep and prep in (0, 1):
        initial = 2
    events = _relax(initial, 0.0, qubit, gen, duration)

    t_x = gen.random() * duration
    r = gen.random()
    level = initial
    for t, _, dst in events:
        if t > t_x:
            break
        level = dst
    target = None
    if level == 0:
        if r < qubit.p_excite_01:
            target = 1
        elif r < qubit.p_excite_01 + qubit.p_excite_02:
            target = 2
    elif level == 1 and r < qubit.p_excite_12:
        target = 2
    if target is not None and t_x > 0.0:
        events = [e for e in events if e[0] < t_x]
        events.append((float(t_x), level, target))
        events += _relax(target, t_x, qubit, gen, duration)
    return initial, tuple(events)


def baseband_signal(qubit: QubitConfig, initial: int, events, times: np.ndarray) -> np.ndarray:
    """Piecewise ring-up trajectory of one qubit's resonator response."""
    resp = qubit.level_response
    tau = qubit.ring_tau
    starts = [0.0] + [e[0] for e in events]
    levels = [initial] + [e[2] for e in events]
    out = np.empty(times.shape, dtype=complex)
    c_prev = 0.0 + 0.0j
    seg = np.searchsorted(np.asarray(starts), times, side="right") - 1
    for k, (t0, level) in enumerate(zip(starts, levels)):
        target = resp[level]
        mask = seg == k
        if tau == 0:
            out[mask] = target
        else:
            out[mask] = c_prev + (target - c_prev) * (1.0 - np.exp(-(times[mask] - t0) / tau))
        if k + 1 < len(starts):
            dt = starts[k + 1] - t0
            c_prev = target if tau == 0 else c_prev + (target - c_prev) * (1.0 - math.exp(-dt / tau))
    return out


def sample_trace(device: DeviceConfig, prep: Sequence[int], gen: np.random.Generator) -> RawShot:
    """Simulate one multiplexed acquisition for preparation ``prep``."""
    prep = tuple(int(p) for p in prep)
    if len(prep) != device.n_qubits:
        raise ValueError(f"prep has {len(prep)} levels, device has {device.n_qubits} qubits")
    if any(p not in (0, 1, 2) for p in prep):
        raise ValueError("prep levels must be 0, 1 or 2")
    times = device.times()
    initial, events, signals = [], [], []
    for qubit, p in zip(device.qubits, prep):
        lvl, evs = _history(qubit, p, gen, device.duration)
        initial.append(lvl)
        events.append(evs)
        signals.append(baseband_signal(qubit, lvl, evs, times))
    mixed = device.mixing @ np.array(signals)
    carriers = np.exp(2j * np.pi * np.outer([q.if_freq for q in device.qubits], times))
    x = (mixed * carriers).sum(axis=0)
    noise = gen.normal(0.0, 1.0, size=(2, times.size)) * device.noise_std
    truth = GroundTruth(prep, tuple(initial), tuple(events))
    return RawShot(x.real + noise[0], x.imag + noise[1], truth)


def computational_states(n: int) -> list[tuple[int, ...]]:
    return list(itertools.product((0, 1), repeat=n))


def all_states(n: int) -> list[tuple[int, ...]]:
    return list(itertools.product((0, 1, 2), repeat=n))


@dataclass
class TraceDataset:
    """Shots stored as dense ``(n_shots, N)`` float32 I/Q arrays.

    Shot ``k`` belongs to ``states[k // shots_per_state]``.
    """

    device: DeviceConfig
    states: list[tuple[int, ...]]
    shots_per_state: int
    i_samples: np.ndarray
    q_samples: np.ndarray
    truths: list[GroundTruth]
    split: np.ndarray
    rng_name: str = rngmod.GENERATOR_NAME
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.truths)

    def shot(self, k: int) -> RawShot:
        return RawShot(self.i_samples[k], self.q_samples[k], self.truths[k])

    @property
    def seed(self) -> int:
        return self.device.seed

    @property
    def prep(self) -> np.ndarray:
        return np.array([t.prepared_level for t in self.truths], dtype=np.int64).reshape(len(self), -1)

    @property
    def initial_levels(self) -> np.ndarray:
        return np.array([t.effective_initial_level for t in self.truths], dtype=np.int64).reshape(len(self), -1)

    def indices(self, *splits: str) -> np.ndarray:
        codes = [SPLIT_NAMES.index(s) for s in splits]
        return np.flatnonzero(np.isin(self.split, codes))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TraceDataset):
            return NotImplemented
        return (
            self.device == other.device
            and [tuple(s) for s in self.states] == [tuple(s) for s in other.states]
            and self.shots_per_state == other.shots_per_state
            and self.rng_name == other.rng_name
            and np.array_equal(self.i_samples, other.i_samples)
            and np.array_equal(self.q_samples, other.q_samples)
            and np.array_equal(self.split, other.split)
            and self.truths == other.truths
        )


def assign_split(n_states: int, shots_per_state: int, seed: int) -> np.ndarray:
    """30/70 train/test per state, 15% of train held out as validation."""
    split_seed = rngmod.derive_seed(seed, "split")
    n_train = _round_half_up(TRAIN_FRACTION * shots_per_state)
    n_val = _round_half_up(VAL_FRACTION * n_train)
    split = np.full(n_states * shots_per_state, TEST, dtype=np.uint8)
    for j in range(n_states):
        order = rngmod.stream(split_seed, j).permutation(shots_per_state) + j * shots_per_state
        split[order[:n_train]] = TRAIN
        split[order[:n_val]] = VAL
    return split


def generate_dataset(
    device: DeviceConfig,
    states: Iterable[Sequence[int]],
    shots_per_state: int,
    workers: int = 1,
) -> TraceDataset:
    """Simulate ``shots_per_state`` shots for every state in ``states``.

    Shot ``k`` draws from substream ``k`` of the device's simulation seed,
    so the result does not depend on ``workers``.
    """
    states = [tuple(int(v) for v in s) for s in states]
    if shots_per_state < 1:
        raise ValueError("shots_per_state must be >= 1")
    if not states:
        raise ValueError("no states requested")
    if len(set(states)) != len(states):
        raise ValueError("duplicate states requested")
    for s in states:
        if len(s) != device.n_qubits:
            raise ValueError(f"state {s} does not match {device.n_qubits} qubits")
    n_total = len(states) * shots_per_state
    n = device.n_samples
    i_samples = np.empty((n_total, n), dtype=np.float32)
    q_samples = np.empty((n_total, n), dtype=np.float32)
    truths: list[GroundTruth | None] = [None] * n_total
    sim_seed = rngmod.derive_seed(device.seed, "shots")

    def work(chunk):
        for k in chunk:
            shot = sample_trace(device, states[k // shots_per_state], rngmod.stream(sim_seed, k))
            i_samples[k] = shot.i_samples
            q_samples[k] = shot.q_samples
            truths[k] = shot.truth

    if workers <= 1:
        work(range(n_total))
    else:
        chunks = np.array_split(np.arange(n_total), workers * 4)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, chunks))

    return TraceDataset(
        device=device,
        states=states,
        shots_per_state=shots_per_state,
        i_samples=i_samples,
        q_samples=q_samples,
        truths=truths,
        split=assign_split(len(states), shots_per_state, device.seed),
    )
