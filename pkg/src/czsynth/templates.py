"""Circuit templates: fixed CZ skeletons with adjustable single-qubit slots.

A template is a sequence of CZ gates on adjacent qubit pairs (linear
connectivity) interleaved with layers of single-qubit rotation slots.
Slots come in two kinds:

* ``FULL``  -- 3 angles, ``RZ(t2) . SX . RZ(t1) . SX . RZ(t0)`` with ``t0``
  applied first.  Covers any single-qubit unitary up to a global phase.
* ``PARTIAL`` -- 2 angles, ``RZ(b) . SX . RZ(a) . SX`` (a FULL slot with the
  first rotation pinned to zero).  Used between consecutive CZ gates, where
  a leading RZ would be redundant: RZ commutes with CZ and merges into the
  previous layer's trailing rotation.

Layouts:

* 3 qubits: a FULL slot on every qubit before the first CZ, then two FULL
  slots (on the touched pair) after each CZ.  Parameter count
  ``9 + 6 * n_cz``.
* 2 qubits: a FULL layer on both qubits first, a PARTIAL layer on both
  qubits after each non-final CZ, and a FULL layer on both qubits after the
  last CZ.  Parameter counts 6 / 12 / 16 / 20 for 0 / 1 / 2 / 3 CZ.

The parameter vector concatenates slot angles in (layer, qubit) order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np
from scipy.optimize import minimize

from .qmat import SX, CZ, fidelity, is_unitary, rz

__all__ = [
    "FULL",
    "PARTIAL",
    "Slot",
    "TemplateSpec",
    "assemble",
    "assemble_from_slots",
    "enumerate_templates",
    "family_document",
    "family_hash",
    "layered_template",
    "param_count",
    "project_to_partial",
    "sample_params",
    "slot_matrix",
    "slots_to_params",
    "su2_to_zsx",
]

FULL = "full"
PARTIAL = "partial"

_SLOT_PARAMS = {FULL: 3, PARTIAL: 2}

FAMILY_FORMAT_VERSION = 1


class Slot(NamedTuple):
    qubit: int
    kind: str
    layer: int


@dataclass(frozen=True)
class TemplateSpec:
    """A fixed circuit skeleton: CZ placements plus single-qubit slots."""

    n_qubits: int
    cz_sequence: tuple[tuple[int, int], ...]
    slots: tuple[Slot, ...]
    id: int

    @property
    def n_cz(self) -> int:
        return len(self.cz_sequence)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits


def _adjacent_pairs(n_qubits: int) -> list[tuple[int, int]]:
    if n_qubits not in (2, 3):
        raise ValueError(f"unsupported qubit count {n_qubits}, expected 2 or 3")
    return [(q, q + 1) for q in range(n_qubits - 1)]


def _slots_for(n_qubits: int, cz_sequence: tuple[tuple[int, int], ...]) -> tuple[Slot, ...]:
    n_cz = len(cz_sequence)
    slots: list[Slot] = []
    if n_qubits == 3:
        slots.extend(Slot(q, FULL, 0) for q in range(3))
        for i, pair in enumerate(cz_sequence):
            slots.extend(Slot(q, FULL, i + 1) for q in sorted(pair))
    else:
        slots.extend(Slot(q, FULL, 0) for q in range(2))
        for i in range(1, n_cz):
            slots.extend(Slot(q, PARTIAL, i) for q in range(2))
        if n_cz >= 1:
            slots.extend(Slot(q, FULL, n_cz) for q in range(2))
    return tuple(slots)


def _make_template(n_qubits: int, cz_sequence: Iterable[tuple[int, int]], tid: int) -> TemplateSpec:
    seq = tuple((int(a), int(b)) for a, b in cz_sequence)
    pairs = set(_adjacent_pairs(n_qubits))
    for pair in seq:
        if pair not in pairs:
            raise ValueError(f"CZ pair {pair} not adjacent under linear connectivity")
    return TemplateSpec(n_qubits, seq, _slots_for(n_qubits, seq), tid)


def enumerate_templates(n_qubits: int, max_cz: int) -> list[TemplateSpec]:
    """All templates with 0..max_cz CZ gates over adjacent pairs.

    Ordered by CZ count, then lexicographically over pair indices; template
    ids follow that order, so the enumeration is stable across runs.
    """
    if max_cz < 0:
        raise ValueError("max_cz must be >= 0")
    pairs = _adjacent_pairs(n_qubits)
    out: list[TemplateSpec] = []
    for length in range(max_cz + 1):
        seqs: list[tuple[int, ...]] = [()]
        for _ in range(length):
            seqs = [s + (i,) for s in seqs for i in range(len(pairs))]
        for s in sorted(seqs):
            out.append(_make_template(n_qubits, [pairs[i] for i in s], len(out)))
    return out


def layered_template(n_qubits: int, n_cz: int, tid: int = 0) -> TemplateSpec:
    """Brick-pattern template: CZ layer i acts on pair ``i % (n_qubits - 1)``."""
    pairs = _adjacent_pairs(n_qubits)
    seq = [pairs[i % len(pairs)] for i in range(n_cz)]
    return _make_template(n_qubits, seq, tid)


def param_count(t: TemplateSpec) -> int:
    return sum(_SLOT_PARAMS[s.kind] for s in t.slots)


def param_slices(t: TemplateSpec) -> list[slice]:
    """Per-slot slices into the flat parameter vector, in slot order."""
    out = []
    start = 0
    for s in t.slots:
        n = _SLOT_PARAMS[s.kind]
        out.append(slice(start, start + n))
        start += n
    return out


def slot_matrix(kind: str, angles: np.ndarray) -> np.ndarray:
    """2x2 unitary of one slot from its angle group."""
    if kind == FULL:
        t0, t1, t2 = angles
        return rz(t2) @ SX @ rz(t1) @ SX @ rz(t0)
    if kind == PARTIAL:
        a, b = angles
        return rz(b) @ SX @ rz(a) @ SX
    raise ValueError(f"unknown slot kind {kind!r}")


def _embed_1q(u: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    left = np.eye(2**qubit, dtype=np.complex128)
    right = np.eye(2 ** (n_qubits - 1 - qubit), dtype=np.complex128)
    return np.kron(left, np.kron(u, right))


def _embed_cz(pair: tuple[int, int], n_qubits: int) -> np.ndarray:
    a = min(pair)
    left = np.eye(2**a, dtype=np.complex128)
    right = np.eye(2 ** (n_qubits - 2 - a), dtype=np.complex128)
    return np.kron(left, np.kron(CZ, right))


def assemble_from_slots(t: TemplateSpec, slot_mats: list[np.ndarray]) -> np.ndarray:
    """Circuit unitary with explicit 2x2 matrices substituted into the slots."""
    if len(slot_mats) != len(t.slots):
        raise ValueError(f"expected {len(t.slots)} slot matrices, got {len(slot_mats)}")
    mats = [np.asarray(m, dtype=np.complex128) for m in slot_mats]
    for m in mats:
        if m.shape != (2, 2):
            raise ValueError(f"slot matrices must be 2x2, got {m.shape}")

    by_layer: dict[int, list[tuple[Slot, np.ndarray]]] = {}
    for slot, m in zip(t.slots, mats):
        by_layer.setdefault(slot.layer, []).append((slot, m))

    v = np.eye(t.dim, dtype=np.complex128)
    for slot, m in by_layer.get(0, []):
        v = _embed_1q(m, slot.qubit, t.n_qubits) @ v
    for i, pair in enumerate(t.cz_sequence):
        v = _embed_cz(pair, t.n_qubits) @ v
        for slot, m in by_layer.get(i + 1, []):
            v = _embed_1q(m, slot.qubit, t.n_qubits) @ v
    return v


def assemble(t: TemplateSpec, params: np.ndarray) -> np.ndarray:
    """Circuit unitary for a template and its flat angle vector."""
    params = np.asarray(params, dtype=np.float64)
    expected = param_count(t)
    if params.shape != (expected,):
        raise ValueError(f"expected {expected} parameters, got shape {params.shape}")
    mats = [slot_matrix(s.kind, params[sl]) for s, sl in zip(t.slots, param_slices(t))]
    return assemble_from_slots(t, mats)


def sample_params(t: TemplateSpec, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. uniform angles in [-pi, pi], one vector per call."""
    return rng.uniform(-np.pi, np.pi, size=param_count(t))


def _wrap_angle(x: float) -> float:
    return float(np.remainder(x + np.pi, 2 * np.pi) - np.pi)


def su2_to_zsx(u: np.ndarray) -> tuple[float, float, float, float]:
    """Angles (t0, t1, t2) and a phase with u = e^{i phase} RZ(t2) SX RZ(t1) SX RZ(t0).

    Uses u = e^{i a} [[cos(h), -e^{i l} sin(h)], [e^{i f} sin(h), e^{i(f+l)} cos(h)]]
    with h = theta/2, then t0 = l, t1 = theta + pi, t2 = f + pi.
    """
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got {u.shape}")
    if not is_unitary(u, 1e-8):
        raise ValueError("input is not unitary within 1e-8")

    c = abs(u[0, 0])
    s = abs(u[1, 0])
    theta = 2.0 * np.arctan2(s, c)
    if s < 1e-12:
        alpha = np.angle(u[0, 0])
        f = np.angle(u[1, 1]) - alpha
        l = 0.0
    elif c < 1e-12:
        l = 0.0
        alpha = np.angle(-u[0, 1])
        f = np.angle(u[1, 0]) - alpha
    else:
        alpha = np.angle(u[0, 0])
        f = np.angle(u[1, 0]) - alpha
        l = np.angle(-u[0, 1]) - alpha

    t0 = _wrap_angle(l)
    t1 = _wrap_angle(theta + np.pi)
    t2 = _wrap_angle(f + np.pi)

    m = rz(t2) @ SX @ rz(t1) @ SX @ rz(t0)
    r, cc = np.unravel_index(np.argmax(np.abs(m)), m.shape)
    phase = float(np.angle(u[r, cc] * np.conj(m[r, cc])))
    return t0, t1, t2, phase


def project_to_partial(u: np.ndarray) -> tuple[float, float]:
    """Angles (a, b) maximizing fidelity of RZ(b) SX RZ(a) SX with ``u``.

    A PARTIAL slot is a FULL slot with t0 = 0, so when the ZSX extraction of
    a unitary input yields t0 = 0 the angles read off directly.  Otherwise
    (or for non-unitary input) falls back to a grid search plus local
    polish, returning the best least-squares fit.
    """
    u = np.asarray(u, dtype=np.complex128)
    if is_unitary(u, 1e-8):
        t0, t1, t2, _ = su2_to_zsx(u)
        if abs(t0) < 1e-9:
            return t1, t2

    def neg_fid(ab):
        return -fidelity(u, slot_matrix(PARTIAL, ab))

    grid = np.linspace(-np.pi, np.pi, 32, endpoint=False)
    best = min(((a, b) for a in grid for b in grid), key=neg_fid)
    res = minimize(neg_fid, np.array(best), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14})
    a, b = res.x
    return _wrap_angle(a), _wrap_angle(b)


def slots_to_params(t: TemplateSpec, slot_mats: list[np.ndarray]) -> np.ndarray:
    """Project slot matrices onto the template's angle parameterization.

    FULL slots round-trip exactly (up to global phase); PARTIAL slots are
    fit by ``project_to_partial`` and may carry projection error that a
    downstream refinement step absorbs.
    """
    if len(slot_mats) != len(t.slots):
        raise ValueError(f"expected {len(t.slots)} slot matrices, got {len(slot_mats)}")
    parts = []
    for slot, m in zip(t.slots, slot_mats):
        if slot.kind == FULL:
            t0, t1, t2, _ = su2_to_zsx(m)
            parts.append([t0, t1, t2])
        else:
            a, b = project_to_partial(m)
            parts.append([a, b])
    return np.concatenate([np.asarray(p) for p in parts])


def family_document(templates: list[TemplateSpec], n_qubits: int, max_cz: int) -> dict:
    """Versioned JSON-serializable description of a template family."""
    return {
        "version": FAMILY_FORMAT_VERSION,
        "n_qubits": n_qubits,
        "max_cz": max_cz,
        "templates": [
            {
                "id": t.id,
                "cz_sequence": [list(p) for p in t.cz_sequence],
                "slots": [[s.qubit, s.kind, s.layer] for s in t.slots],
            }
            for t in templates
        ],
    }


def family_from_document(doc: dict) -> list[TemplateSpec]:
    if doc.get("version") != FAMILY_FORMAT_VERSION:
        raise ValueError(f"unsupported template family version {doc.get('version')!r}")
    out = []
    for entry in doc["templates"]:
        slots = tuple(Slot(int(q), str(k), int(layer)) for q, k, layer in entry["slots"])
        seq = tuple((int(a), int(b)) for a, b in entry["cz_sequence"])
        out.append(TemplateSpec(int(doc["n_qubits"]), seq, slots, int(entry["id"])))
    return out


def family_hash(doc: dict) -> str:
    """Stable 16-hex-digit digest pinning a template family."""
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
