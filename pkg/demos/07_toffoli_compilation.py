"""Compile the Toffoli gate onto the 3-qubit 10-layer template.

Runs refinement from several random starting points.  Some starts converge
to machine precision; others stall in a characteristic local minimum around
error 0.146 -- exactly the failure mode that makes a learned starting point
valuable (see models/ for the trained suggester and the synthesis CLI).
"""

import numpy as np

from czsynth import qmat, synth, templates

t = templates.layered_template(3, 10)
toffoli = qmat.standard_gate("TOFFOLI")
print(f"10-layer template: {templates.param_count(t)} angles, "
      f"CZ sequence {t.cz_sequence}")

rng = np.random.default_rng(0)
cfg = synth.RefineConfig(max_iters=3000, target_error=1e-8, log_interval=500)
for k in range(3):
    p0 = templates.sample_params(t, rng)
    _, fid, trace = synth.refine(t, p0, toffoli, cfg)
    path = " -> ".join(f"{err:.2e}" for _, err in trace)
    status = "converged" if 1 - fid <= 1e-6 else "stalled in local minimum"
    print(f"start {k}: {status}  (error {path})")
