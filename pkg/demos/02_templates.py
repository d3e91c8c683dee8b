"""Template families: enumeration, parameter counts, assembly, ZSX bridge.

A template is a fixed CZ skeleton plus adjustable single-qubit rotation
slots in the RZ/SX basis.  This demo enumerates the families used in the
experiments and shows how angle vectors turn into unitaries and back.
"""

import numpy as np

from czsynth import qmat, templates

for n_qubits, max_cz in [(2, 3), (3, 3), (3, 5)]:
    fam = templates.enumerate_templates(n_qubits, max_cz)
    print(f"{n_qubits} qubits, up to {max_cz} CZ: {len(fam)} templates")

fam2 = templates.enumerate_templates(2, 3)
print("\n2-qubit parameter counts:", [templates.param_count(t) for t in fam2])
for layers in (6, 10):
    t = templates.layered_template(3, layers)
    print(f"3-qubit {layers}-layer template: {templates.param_count(t)} parameters, "
          f"CZ sequence {t.cz_sequence}")

# --- assembling a random instance -------------------------------------------
rng = np.random.default_rng(0)
t = fam2[2]  # 2 CZ gates
p = templates.sample_params(t, rng)
v = templates.assemble(t, p)
print(f"\nrandom instance of template {t.id} is unitary:", qmat.is_unitary(v, 1e-10))

# --- single-qubit ZSX decomposition ------------------------------------------
h = qmat.standard_gate("H")
t0, t1, t2, phase = templates.su2_to_zsx(h)
rebuilt = np.exp(1j * phase) * (qmat.rz(t2) @ qmat.SX @ qmat.rz(t1) @ qmat.SX @ qmat.rz(t0))
print(f"\nH as RZ({t2:.3f}) SX RZ({t1:.3f}) SX RZ({t0:.3f}) times a phase:")
print("max entry error:", np.max(np.abs(rebuilt - h)))

# --- serialized family document ----------------------------------------------
doc = templates.family_document(fam2, 2, 3)
print("\nfamily hash (pins template ids in model files):", templates.family_hash(doc))
