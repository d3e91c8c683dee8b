"""Gates, embeddings, and the Hilbert-Schmidt gate fidelity.

Walks through the building blocks everything else uses: standard gate
matrices, lifting gates onto a register, and the global-phase-invariant
fidelity between unitaries.
"""

import numpy as np

from czsynth import qmat

# --- standard gates --------------------------------------------------------
sx = qmat.standard_gate("SX")
print("SX =\n", np.round(sx, 3))
print("SX is unitary:", qmat.is_unitary(sx, 1e-12))
print("SX @ SX == X:", np.allclose(sx @ sx, qmat.standard_gate("X")))

rz = qmat.rz(np.pi / 2)
print("\nRZ(pi/2) diagonal:", np.round(np.diag(rz), 4))

# --- embedding gates on a register -----------------------------------------
# qubit 0 is the most significant bit: a gate on qubit 0 sits on the left
# factor of the Kronecker product
z = np.diag([1, -1]).astype(complex)
print("\nembed(Z, [0], 2) == kron(Z, I):",
      np.allclose(qmat.embed(z, [0], 2), np.kron(z, np.eye(2))))
print("embed(CZ, [1, 2], 3) acts on the low pair:",
      np.allclose(qmat.embed(qmat.CZ, [1, 2], 3), np.kron(np.eye(2), qmat.CZ)))

# --- fidelity ---------------------------------------------------------------
print("\nfidelity(CZ, CZ) =", qmat.fidelity(qmat.CZ, qmat.CZ))
print("fidelity(I4, CZ)  =", qmat.fidelity(np.eye(4), qmat.CZ), "(= |Tr CZ|^2/16 = 0.25)")

u = qmat.standard_gate("SWAP")
print("fidelity is phase invariant:",
      qmat.fidelity(u, np.exp(1j * 0.73) * u))
