"""Gradient-descent refinement and the minimal-CZ optimization ladder.

Refinement is Adam ascent on the gate fidelity with analytic gradients and
best-iterate reporting.  Running it with restarts over templates of
increasing CZ count labels the minimal entangler cost of a unitary: the
oracle used to ground-truth the experiments.
"""

import numpy as np

from czsynth import qmat, synth, templates

rng = np.random.default_rng(0)

# --- refine random angles onto a representable target ------------------------
t = templates.enumerate_templates(2, 3)[1]
target = templates.assemble(t, templates.sample_params(t, rng))
p0 = templates.sample_params(t, rng)
params, fid, trace = synth.refine(t, p0, target,
                                  synth.RefineConfig(max_iters=2000, log_interval=250))
print(f"refining template {t.id} onto a representable target:")
for it, err in trace:
    print(f"  iter {it:5d}  error {err:.3e}")
print(f"final fidelity {fid:.10f}")

# --- minimal CZ count -------------------------------------------------------
cx = qmat.standard_gate("CX")
zz = cx @ np.kron(np.eye(2), qmat.rz(0.3 * np.pi)) @ cx
print("\nminimal CZ count by optimization ladder (threshold 1 - 1e-6):")
for name, u in [("identity", np.eye(4)), ("CX", cx),
                ("ZZ(0.3 pi)", zz), ("SWAP", qmat.standard_gate("SWAP"))]:
    print(f"  {name:12s} -> {synth.oracle_min_cz(u, 2)}")
