"""Run configuration for the batch pipeline.

Precedence, lowest first: built-in defaults, the JSON config file,
command-line flags.  ``seed`` has no default and must come from the file or
``--seed``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .mlp import TrainConfig
from .rng import derive_seed
from .sim import DeviceConfig, all_states, computational_states, default_device


class ConfigError(ValueError):
    pass


DEFAULT_SWEEP = (100, 200, 300, 400, 500)


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run depends on.

    device : inline device dict (``DeviceConfig.to_dict`` layout), a path to
        a JSON file holding one, or ``None`` for the default device built
        from ``device_options`` and ``seed``.
    states : "computational", "all", or an explicit list of level tuples.
    dataset : optional path of an existing dataset file; when set the
        simulate step is skipped.
    """

    seed: int
    device: dict | str | None = None
    device_options: dict = field(default_factory=dict)
    shots_per_state: int = 500
    states: str | list = "computational"
    dataset: str | None = None
    labels: str = "cluster"
    cluster: dict = field(default_factory=lambda: {"m": 500, "restarts": 100})
    train: dict = field(default_factory=dict)
    min_error_traces: int = 20
    denominator: str = "sum"
    sweep: tuple = DEFAULT_SWEEP
    scaling_n: tuple = tuple(range(1, 11))
    scaling_k: tuple = (2, 3, 4)
    exclude_qubits: tuple = ()
    threads: int = 1
    base_dir: str = "."

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.shots_per_state < 1:
            raise ConfigError("shots_per_state must be positive")
        if self.labels not in ("cluster", "truth"):
            raise ConfigError("labels must be 'cluster' or 'truth'")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if list(self.sweep) != sorted(self.sweep) or any(n < 1 for n in self.sweep):
            raise ConfigError("sweep must be ascending positive sample counts")
        if isinstance(self.states, str) and self.states not in ("computational", "all"):
            raise ConfigError("states must be 'computational', 'all' or an explicit list")

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def device_config(self) -> DeviceConfig:
        try:
            if self.device is None:
                return default_device(seed=self.seed, **self.device_options)
            d = self.device
            if isinstance(d, str):
                p = self.resolve(d)
                if not p.is_file():
                    raise ConfigError(f"device file {p} not found")
                d = json.loads(p.read_text())
            d = dict(d)
            d.setdefault("seed", self.seed)
            return DeviceConfig.from_dict(d)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid device configuration: {exc}") from exc

    def state_list(self, n_qubits: int) -> list:
        if self.states == "computational":
            return computational_states(n_qubits)
        if self.states == "all":
            return all_states(n_qubits)
        states = [tuple(int(v) for v in s) for s in self.states]
        if any(len(s) != n_qubits or not set(s) <= {0, 1, 2} for s in states):
            raise ConfigError("explicit states must list one level in {0,1,2} per qubit")
        return states

    def train_config(self) -> TrainConfig:
        opts = {"seed": derive_seed(self.seed, "train"), **self.train}
        try:
            return TrainConfig(**opts)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid train configuration: {exc}") from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d


def build_config(file_path=None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults, an optional JSON file and flag overrides."""
    data: dict = {}
    base = "."
    if file_path is not None:
        p = Path(file_path)
        if not p.is_file():
            raise ConfigError(f"config file {p} not found")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        base = str(p.parent)
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name for f in fields(RunConfig)} - {"base_dir"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config fields: {unknown}")
    if "seed" not in data:
        raise ConfigError("no seed given (set 'seed' in the config or pass --seed)")
    for key in ("sweep", "scaling_n", "scaling_k", "exclude_qubits"):
        if key in data:
            data[key] = tuple(data[key])
    if "cluster" in data:
        data["cluster"] = {"m": 500, "restarts": 100, **data["cluster"]}
    try:
        return RunConfig(base_dir=base, **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
