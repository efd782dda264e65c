"""
Finding leaked shots without a level-2 calibration
==================================================

Only |0> and |1> are prepared.  A small fraction of shots start in |2>
anyway, and spectral clustering of the mean trace values separates them
into a third cluster.
"""

import numpy as np

from qutrit_readout import default_device, fit_cluster_model, generate_dataset
from qutrit_readout.dsp import dataset_mtvs
from qutrit_readout.evaluation import cluster_leakage
from qutrit_readout.sim import computational_states

# one qubit with a generous leak rate so the third cluster is easy to see
device = default_device(n_qubits=1, seed=5, p_leak_prep=0.01)
data = generate_dataset(device, computational_states(1), 2500)
print(f"{len(data)} shots, {np.sum(data.initial_levels == 2)} started in |2>")

# each shot reduces to one complex number per qubit
mtvs = dataset_mtvs(data)
model = fit_cluster_model(mtvs, data.prep, m=500, seed=0, restarts=20)
qc = model.qubits[0]
print("cluster sizes:", qc.sizes, "-> levels", qc.label_map)
for level, c in enumerate(model.level_centroids[0]):
    print(f"  level {level} centroid {c.real:+.3f}{c.imag:+.3f}j")

labels = model.predict(mtvs)[:, 0]
purity, recall = cluster_leakage(labels, data.truths, 0)
print(f"leak cluster purity {purity:.3f}, recall {recall:.3f}")
