"""Dense complex linear algebra, standard gates, and the gate fidelity metric.

Conventions used throughout the package:

* Matrices are square ``numpy.complex128`` arrays of shape ``(d, d)``.
* Qubit 0 is the *most significant* bit of the state index, so a gate on
  qubit 0 of a 2-qubit register is ``kron(gate, I2)``.
* ``RZ(theta) = diag(exp(-i*theta/2), exp(+i*theta/2))`` (half-angle
  convention).
* ``CX`` and ``CZ`` have the control on the first (higher-order) qubit.
* Fidelity between two d-dimensional unitaries is the global-phase-invariant
  Hilbert-Schmidt overlap ``|Tr(U^dag V)|^2 / d^2``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "I2",
    "SX",
    "CZ",
    "adjoint",
    "embed",
    "fidelity",
    "is_unitary",
    "kron",
    "matmul",
    "standard_gate",
]

_SQ2 = 1.0 / np.sqrt(2.0)

I2 = np.eye(2, dtype=np.complex128)
SX = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=np.complex128)
CZ = np.diag([1, 1, 1, -1]).astype(np.complex128)

_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_H = _SQ2 * np.array([[1, 1], [1, -1]], dtype=np.complex128)
_CX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
)
_SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=np.complex128
)
_ISWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=np.complex128
)


def rz(theta: float) -> np.ndarray:
    """RZ rotation, diag(e^{-i theta/2}, e^{+i theta/2})."""
    half = 0.5 * theta
    return np.diag([np.exp(-1j * half), np.exp(1j * half)])


def _toffoli() -> np.ndarray:
    m = np.eye(8, dtype=np.complex128)
    m[6, 6] = m[7, 7] = 0.0
    m[6, 7] = m[7, 6] = 1.0
    return m


_FIXED = {
    "SX": SX,
    "X": _X,
    "H": _H,
    "CZ": CZ,
    "CX": _CX,
    "SWAP": _SWAP,
    "ISWAP": _ISWAP,
    "TOFFOLI": _toffoli(),
}


def standard_gate(name: str, angle: float | None = None, dim: int = 2) -> np.ndarray:
    """Return the matrix of a named gate.

    ``name`` is one of RZ, SX, X, H, CZ, CX, SWAP, ISWAP, TOFFOLI, IDENTITY.
    RZ takes exactly one ``angle``; IDENTITY takes ``dim``; everything else
    is parameter-free.
    """
    name = name.upper()
    if name == "RZ":
        if angle is None:
            raise ValueError("RZ requires an angle")
        return rz(angle)
    if angle is not None:
        raise ValueError(f"{name} takes no angle")
    if name == "IDENTITY":
        return np.eye(dim, dtype=np.complex128)
    try:
        return _FIXED[name].copy()
    except KeyError:
        raise ValueError(f"unknown gate {name!r}") from None


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product a @ b with a dimension check."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with ``a`` on the higher-order factor."""
    return np.kron(np.asarray(a, dtype=np.complex128), np.asarray(b, dtype=np.complex128))


def adjoint(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return np.asarray(a, dtype=np.complex128).conj().T


def is_unitary(a: np.ndarray, tol: float = 1e-10) -> bool:
    """True iff max-entry deviation of a^dag a from the identity is <= tol."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    dev = a.conj().T @ a - np.eye(a.shape[0])
    return float(np.max(np.abs(dev))) <= tol


def fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """Hilbert-Schmidt gate fidelity |Tr(u^dag v)|^2 / d^2.

    Invariant under a global phase of either argument; 1 iff v equals u up
    to a phase.
    """
    u = np.asarray(u, dtype=np.complex128)
    v = np.asarray(v, dtype=np.complex128)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    d = u.shape[0]
    overlap = np.trace(u.conj().T @ v)
    return float((overlap.real**2 + overlap.imag**2) / (d * d))


def embed(gate: np.ndarray, qubits: list[int], n_qubits: int) -> np.ndarray:
    """Lift ``gate`` acting on ``qubits`` to the full 2^n register.

    ``qubits[k]`` is the register qubit carrying the k-th qubit of ``gate``.
    Qubit 0 is the most significant bit of the register index.
    """
    gate = np.asarray(gate, dtype=np.complex128)
    k = len(qubits)
    if gate.shape != (2**k, 2**k):
        raise ValueError(f"gate shape {gate.shape} does not match {k} qubit(s)")
    if len(set(qubits)) != k:
        raise ValueError(f"duplicate qubit indices: {qubits}")
    if any(q < 0 or q >= n_qubits for q in qubits):
        raise ValueError(f"qubit index out of range for n_qubits={n_qubits}: {qubits}")

    d = 2**n_qubits
    out = np.zeros((d, d), dtype=np.complex128)
    rest = [q for q in range(n_qubits) if q not in qubits]

    def index_of(gate_bits: int, rest_bits: int) -> int:
        idx = 0
        for pos, q in enumerate(qubits):
            bit = (gate_bits >> (k - 1 - pos)) & 1
            idx |= bit << (n_qubits - 1 - q)
        for pos, q in enumerate(rest):
            bit = (rest_bits >> (len(rest) - 1 - pos)) & 1
            idx |= bit << (n_qubits - 1 - q)
        return idx

    for r in range(2**k):
        for c in range(2**k):
            g = gate[r, c]
            if g == 0:
                continue
            for other in range(2 ** len(rest)):
                out[index_of(r, other), index_of(c, other)] = g
    return out
