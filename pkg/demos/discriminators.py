"""
Matched filters plus small networks versus discriminant analysis
================================================================

Runs the whole batch pipeline on a two-qubit device with every three-level
state prepared, then compares the per-qubit network with LDA, QDA and a
threshold vote on the filter outputs.
"""

import tempfile

from qutrit_readout import build_config, run_pipeline

cfg = build_config(
    None,
    {
        "seed": 7,
        "device_options": {"n_qubits": 2, "t1": 8e-6},
        "states": "all",
        "shots_per_state": 400,
        "cluster": {"m": 300, "restarts": 20},
    },
)

with tempfile.TemporaryDirectory() as out:
    result = run_pipeline(cfg, out)

report = result.report
print(f"features per shot: {result.features.shape[1]}")
for name in ("lda", "qda", "qmf", "mlp"):
    fids = " ".join(f"{f:.4f}" for f in report.fidelities(name))
    print(f"{name:4s} mean {report.mean_fidelity(name):.4f}  per qubit [{fids}]")

# rows are the true level, columns the predicted one
print("MLP confusion, qubit 0:")
print(report.methods["mlp"][0])
