"""Scalable three-level readout: simulator, matched-filter bank, leakage
clustering, per-qubit discriminators and evaluation."""

from .cluster import ClusterModel, fit_cluster_model, spectral_cluster
from .config import ConfigError, RunConfig, build_config
from .datafile import read_dataset, write_dataset
from .discriminant import DiscriminantModel, train_discriminant
from .dsp import MatchedFilterBank, build_filter_bank, build_kernel, dataset_features, demodulate, mtv
from .evaluation import EvalReport, confusion, fidelity, geomean_fidelity, leakage_metrics, scaling_report
from .mlp import MLPModel, TrainConfig, infer, parameter_count, train_mlp
from .pipeline import run_pipeline
from .sim import DeviceConfig, QubitConfig, TraceDataset, default_device, generate_dataset

__version__ = "0.1.0"
