"""Differentiable template evaluation: fidelity values and analytic gradients.

Two differentiation paths, both computed by forward/backward accumulation of
prefix and suffix products over the circuit's element list:

* angle path -- d(fidelity)/d(angle) for every rotation angle, used by the
  refinement optimizer.  Uses dRZ(t)/dt = (-i/2) Z RZ(t).
* slot path -- d(fidelity)/d(Re, Im) of every slot-matrix entry, used to
  train the parameter-suggestion encoder through the fixed decoder.

Complex variables are treated as independent (Re, Im) pairs; a "complex
gradient" g packs them as g = dF/dRe + i * dF/dIm.

All public entry points have batched counterparts (leading batch axis) that
the training and multi-restart code relies on; the scalar forms delegate to
them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qmat
from .templates import FULL, TemplateSpec, param_count, param_slices

__all__ = [
    "GradResult",
    "assemble_batch",
    "fidelity_grad_angles",
    "fidelity_grad_angles_batch",
    "fidelity_grad_slots",
    "fidelity_grad_slots_batch",
    "finite_diff_grad",
    "slot_matrices_batch",
]


@dataclass
class GradResult:
    fidelity: float
    grad: np.ndarray
    value_unitary: np.ndarray


def finite_diff_grad(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a real-valued function of a real vector."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for k in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[k] += step
        xm[k] -= step
        grad[k] = (f(xp) - f(xm)) / (2 * step)
    return grad


class _Compiled:
    """Per-template constants and element lists, cached by template."""

    def __init__(self, t: TemplateSpec):
        n, d = t.n_qubits, t.dim
        self.t = t
        self.d = d
        self.n_slots = len(t.slots)
        self.n_params = param_count(t)
        self.slices = param_slices(t)

        # embed basis: basis[q][r, c] = embed(E_rc, [q], n)
        self.basis = {}
        self.sx_emb = {}
        self.bitsign = {}
        for q in range(n):
            b = np.zeros((2, 2, d, d), dtype=np.complex128)
            for r in range(2):
                for c in range(2):
                    e = np.zeros((2, 2), dtype=np.complex128)
                    e[r, c] = 1.0
                    b[r, c] = qmat.embed(e, [q], n)
            self.basis[q] = b
            self.sx_emb[q] = qmat.embed(qmat.SX, [q], n)
            bits = (np.arange(d) >> (n - 1 - q)) & 1
            self.bitsign[q] = (1.0 - 2.0 * bits).astype(np.float64)  # +1 bit=0, -1 bit=1
        self.cz_diag = {}
        for pair in set(t.cz_sequence):
            self.cz_diag[pair] = np.diag(qmat.embed(qmat.CZ, list(pair), n)).copy()

        # element lists in time order
        self.slot_ops: list[tuple] = []   # ("slot", slot_index, qubit) | ("cz", pair)
        self.angle_ops: list[tuple] = []  # ("rz", qubit, param_index) | ("sx", qubit) | ("cz", pair)
        by_layer: dict[int, list[int]] = {}
        for i, s in enumerate(t.slots):
            by_layer.setdefault(s.layer, []).append(i)

        def emit_layer(layer: int):
            for i in by_layer.get(layer, []):
                s = t.slots[i]
                self.slot_ops.append(("slot", i, s.qubit))
                p = self.slices[i].start
                if s.kind == FULL:
                    self.angle_ops += [
                        ("rz", s.qubit, p),
                        ("sx", s.qubit),
                        ("rz", s.qubit, p + 1),
                        ("sx", s.qubit),
                        ("rz", s.qubit, p + 2),
                    ]
                else:
                    self.angle_ops += [
                        ("sx", s.qubit),
                        ("rz", s.qubit, p),
                        ("sx", s.qubit),
                        ("rz", s.qubit, p + 1),
                    ]

        emit_layer(0)
        for i, pair in enumerate(t.cz_sequence):
            self.slot_ops.append(("cz", pair))
            self.angle_ops.append(("cz", pair))
            emit_layer(i + 1)


_CACHE: dict[TemplateSpec, _Compiled] = {}


def _compiled(t: TemplateSpec) -> _Compiled:
    c = _CACHE.get(t)
    if c is None:
        c = _Compiled(t)
        _CACHE[t] = c
    return c


def slot_matrices_batch(t: TemplateSpec, params: np.ndarray) -> np.ndarray:
    """Slot unitaries for a batch of parameter vectors, shape (B, n_slots, 2, 2)."""
    params = np.atleast_2d(np.asarray(params, dtype=np.float64))
    bsz = params.shape[0]
    out = np.empty((bsz, len(t.slots), 2, 2), dtype=np.complex128)
    for i, (s, sl) in enumerate(zip(t.slots, param_slices(t))):
        angles = params[:, sl]
        if s.kind == FULL:
            # RZ(t2) SX RZ(t1) SX RZ(t0)
            m = np.matmul(qmat.SX, _rz_batch(angles[:, 0]))
            m = _rz_diag(angles[:, 1])[:, :, None] * m
            m = np.matmul(qmat.SX, m)
            m = _rz_diag(angles[:, 2])[:, :, None] * m
        else:
            # RZ(b) SX RZ(a) SX
            m = _rz_diag(angles[:, 0])[:, :, None] * np.broadcast_to(
                qmat.SX, (bsz, 2, 2))
            m = np.matmul(qmat.SX, m)
            m = _rz_diag(angles[:, 1])[:, :, None] * m
        out[:, i] = m
    return out


def _rz_diag(theta: np.ndarray) -> np.ndarray:
    half = 0.5 * theta[:, None]
    return np.exp(1j * half * np.array([-1.0, 1.0]))


def _rz_batch(theta: np.ndarray) -> np.ndarray:
    d = _rz_diag(theta)
    out = np.zeros((theta.shape[0], 2, 2), dtype=np.complex128)
    out[:, 0, 0] = d[:, 0]
    out[:, 1, 1] = d[:, 1]
    return out


def _forward_slots(c: _Compiled, slot_mats: np.ndarray, keep_prefixes: bool):
    bsz = slot_mats.shape[0]
    d = c.d
    v = np.broadcast_to(np.eye(d, dtype=np.complex128), (bsz, d, d)).copy()
    prefixes = [v.copy()] if keep_prefixes else None
    for op in c.slot_ops:
        if op[0] == "slot":
            _, i, q = op
            emb = np.einsum("brc,rcij->bij", slot_mats[:, i], c.basis[q])
            v = np.matmul(emb, v)
        else:
            v = c.cz_diag[op[1]][None, :, None] * v
        if keep_prefixes:
            prefixes.append(v.copy())
    return v, prefixes


def assemble_batch(t: TemplateSpec, params: np.ndarray) -> np.ndarray:
    """Circuit unitaries for a batch of parameter vectors, shape (B, d, d)."""
    c = _compiled(t)
    mats = slot_matrices_batch(t, params)
    v, _ = _forward_slots(c, mats, keep_prefixes=False)
    return v


def _overlaps(wd: np.ndarray, v: np.ndarray) -> np.ndarray:
    # Tr(W^dag V) per batch row; wd is W^dag with shape (d,d) or (B,d,d)
    if wd.ndim == 2:
        return np.einsum("ij,bji->b", wd, v)
    return np.einsum("bij,bji->b", wd, v)


def _check_target(t: TemplateSpec, target: np.ndarray) -> np.ndarray:
    target = np.asarray(target, dtype=np.complex128)
    if target.shape[-2:] != (t.dim, t.dim):
        raise ValueError(f"target dimension {target.shape} does not match template dim {t.dim}")
    return target


def fidelity_grad_angles_batch(t: TemplateSpec, params: np.ndarray, target: np.ndarray):
    """Batched fidelity and angle gradient.

    ``params`` has shape (B, n_params); ``target`` is one (d, d) matrix shared
    by all rows or a (B, d, d) stack.  Returns (fids (B,), grads (B, n_params),
    unitaries (B, d, d)).
    """
    c = _compiled(t)
    target = _check_target(t, target)
    params = np.atleast_2d(np.asarray(params, dtype=np.float64))
    bsz = params.shape[0]
    d = c.d
    wd = target.conj().swapaxes(-1, -2)

    # forward pass, storing prefix products after every element
    v = np.broadcast_to(np.eye(d, dtype=np.complex128), (bsz, d, d)).copy()
    prefixes = [v.copy()]
    for op in c.angle_ops:
        if op[0] == "rz":
            _, q, k = op
            diag = np.exp(-0.5j * params[:, k, None] * c.bitsign[q])
            v = diag[:, :, None] * v
        elif op[0] == "sx":
            v = np.matmul(c.sx_emb[op[1]], v)
        else:
            v = c.cz_diag[op[1]][None, :, None] * v
        prefixes.append(v.copy())

    tr = _overlaps(wd, v)
    fids = (tr.real**2 + tr.imag**2) / (d * d)

    # backward pass: suffix products, gradient per rz element
    grads = np.zeros((bsz, c.n_params), dtype=np.float64)
    suf = np.broadcast_to(np.eye(d, dtype=np.complex128), (bsz, d, d)).copy()
    tconj = tr.conj()
    for j in range(len(c.angle_ops) - 1, -1, -1):
        op = c.angle_ops[j]
        if op[0] == "rz":
            _, q, k = op
            # Tr(W^dag dV/dtheta) = (-i/2) Tr(pre[j+1] W^dag suf Z_q)
            m = np.matmul(wd, suf)
            diagvals = np.einsum("bij,bji->bi", prefixes[j + 1], m)
            dtr = diagvals @ c.bitsign[q].astype(np.complex128)
            grads[:, k] = np.imag(tconj * dtr) / (d * d)
            diag = np.exp(-0.5j * params[:, k, None] * c.bitsign[q])
            suf = suf * diag[:, None, :]
        elif op[0] == "sx":
            suf = np.matmul(suf, c.sx_emb[op[1]])
        else:
            suf = suf * c.cz_diag[op[1]][None, None, :]
    return fids, grads, v


def fidelity_grad_slots_batch(t: TemplateSpec, slot_mats: np.ndarray, target: np.ndarray):
    """Batched fidelity and complex slot-entry gradient.

    ``slot_mats`` has shape (B, n_slots, 2, 2); ``target`` is (d, d) or
    (B, d, d).  Returns (fids (B,), grads (B, n_slots, 2, 2) with
    g = dF/dRe + i dF/dIm per entry, unitaries (B, d, d)).
    """
    c = _compiled(t)
    target = _check_target(t, target)
    slot_mats = np.asarray(slot_mats, dtype=np.complex128)
    if slot_mats.ndim == 3:
        slot_mats = slot_mats[None]
    bsz = slot_mats.shape[0]
    d = c.d
    wd = target.conj().swapaxes(-1, -2)

    v, prefixes = _forward_slots(c, slot_mats, keep_prefixes=True)
    tr = _overlaps(wd, v)
    fids = (tr.real**2 + tr.imag**2) / (d * d)

    grads = np.zeros((bsz, c.n_slots, 2, 2), dtype=np.complex128)
    suf = np.broadcast_to(np.eye(d, dtype=np.complex128), (bsz, d, d)).copy()
    scale = (2.0 / (d * d)) * tr
    for j in range(len(c.slot_ops) - 1, -1, -1):
        op = c.slot_ops[j]
        if op[0] == "slot":
            _, i, q = op
            # K = pre[j] W^dag suf;  dTr/du_rc = Tr(K embed(E_rc))
            k = np.matmul(prefixes[j], np.matmul(wd, suf))
            g = np.einsum("bij,rcji->brc", k, c.basis[q])
            grads[:, i] = scale[:, None, None] * g.conj()
            emb = np.einsum("brc,rcij->bij", slot_mats[:, i], c.basis[q])
            suf = np.matmul(suf, emb)
        else:
            suf = suf * c.cz_diag[op[1]][None, None, :]
    return fids, grads, v


def fidelity_grad_angles(t: TemplateSpec, params: np.ndarray, target: np.ndarray) -> GradResult:
    """Fidelity of the assembled template against ``target`` plus its angle gradient."""
    fids, grads, v = fidelity_grad_angles_batch(t, np.asarray(params)[None, :], target)
    return GradResult(float(fids[0]), grads[0], v[0])


def fidelity_grad_slots(t: TemplateSpec, slot_mats, target: np.ndarray) -> GradResult:
    """Fidelity with explicit slot matrices plus the gradient with respect to
    the real and imaginary parts of every slot entry.

    The gradient is a real vector of length 8 * n_slots ordered slot by slot,
    entries row-major, (Re, Im) interleaved.
    """
    mats = np.asarray(slot_mats, dtype=np.complex128)
    if mats.shape != (len(t.slots), 2, 2):
        raise ValueError(f"expected {(len(t.slots), 2, 2)} slot matrices, got {mats.shape}")
    fids, grads, v = fidelity_grad_slots_batch(t, mats[None], target)
    g = grads[0]
    flat = np.empty(8 * len(t.slots), dtype=np.float64)
    flat[0::2] = g.real.reshape(-1)
    flat[1::2] = g.imag.reshape(-1)
    return GradResult(float(fids[0]), flat, v[0])
