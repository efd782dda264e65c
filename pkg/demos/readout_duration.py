"""
How short can the readout be?
=============================

Trains once on full-length traces, then evaluates the same networks with
both the traces and the filter kernels cut short.  Also prints the
parameter-count table against the k**n outputs a joint classifier needs.
"""

import tempfile

from qutrit_readout import build_config, run_pipeline
from qutrit_readout.evaluation import scaling_report

cfg = build_config(
    None,
    {
        "seed": 3,
        "device_options": {"n_qubits": 2},
        "shots_per_state": 1000,
        "cluster": {"m": 300, "restarts": 20},
        "sweep": [50, 100, 150, 200, 300, 400, 500],
    },
)

with tempfile.TemporaryDirectory() as out:
    result = run_pipeline(cfg, out)

for row in result.report.sweep:
    print(f"{row['duration_ns']:6.0f} ns  mean fidelity {row['mean_fidelity']:.4f}")

print()
print(" n  features  params  joint outputs")
for r in scaling_report([1, 2, 5, 10, 20], [3]):
    print(f"{r['n']:2d}  {r['features']:8d}  {r['params_total']:6d}  {r['output_states']}")
