"""Minimal trainable networks: a real softmax classifier over templates and a
complex-valued encoder that emits SU(2) slot matrices.

Both are plain dense stacks trained with Adam.  Complex layers use
split activation (ReLU applied to real and imaginary parts independently),
and complex parameters are optimized as independent (Re, Im) real pairs.
Complex gradients follow the package-wide convention
``g = dL/dRe + i * dL/dIm``.

The classifier input is the flattened d x d unitary, row-major, all real
parts followed by all imaginary parts (length 2 * d^2).  The encoder input
is the flattened complex matrix itself (length d^2).

Model files are versioned JSON; see ``save_model`` / ``load_model``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AdamState",
    "ClassifierNet",
    "EncoderModel",
    "ModelFileError",
    "ModelKindError",
    "FamilyHashError",
    "classifier_forward",
    "classifier_train_step",
    "encoder_forward",
    "encoder_train_step",
    "flatten_unitary",
    "unflatten_features",
    "load_model",
    "save_model",
]

MODEL_FORMAT_VERSION = 1
HEAD_NORM_EPS = 1e-12  # on |a|^2 + |b|^2


class ModelFileError(ValueError):
    """Corrupt model file or unsupported format version."""


class ModelKindError(TypeError):
    """Model file holds a different kind of model than requested."""


class FamilyHashError(ValueError):
    """Model was trained against a different template family."""


def flatten_unitary(u: np.ndarray, canonical_phase: bool = False) -> np.ndarray:
    """Classifier feature vector: row-major Re entries then Im entries.

    With ``canonical_phase`` the matrix is first rotated so its
    largest-magnitude entry lies on the positive real axis, removing the
    global phase.
    """
    u = np.asarray(u, dtype=np.complex128)
    if canonical_phase:
        k = np.argmax(np.abs(u))
        u = u * np.exp(-1j * np.angle(u.flat[k]))
    return np.concatenate([u.real.reshape(-1), u.imag.reshape(-1)])


def unflatten_features(x: np.ndarray) -> np.ndarray:
    """Inverse of ``flatten_unitary`` (without phase canonicalization)."""
    x = np.asarray(x, dtype=np.float64)
    d2 = x.size // 2
    d = int(round(np.sqrt(d2)))
    if 2 * d * d != x.size:
        raise ValueError(f"feature length {x.size} is not 2*d^2")
    return (x[:d2] + 1j * x[d2:]).reshape(d, d)


class AdamState:
    """Adam accumulators for a list of parameter arrays.

    Complex parameters are updated through their (Re, Im) float views, so a
    single state handles both real and complex stacks.
    """

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(self._view(p)) for p in params]
        self.v = [np.zeros_like(self._view(p)) for p in params]

    @staticmethod
    def _view(a: np.ndarray) -> np.ndarray:
        return a.view(np.float64) if np.iscomplexobj(a) else a

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """One in-place Adam update; ``grads`` aligns with ``params``."""
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(params, grads, self.m, self.v):
            gv = self._view(np.ascontiguousarray(g))
            pv = self._view(p)
            m += (1 - b1) * (gv - m)
            v += (1 - b2) * (gv * gv - v)
            mhat = m / (1 - b1**t)
            vhat = v / (1 - b2**t)
            pv -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int,
                    complex_valued: bool) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    w = rng.uniform(-s, s, size=(fan_out, fan_in))
    if complex_valued:
        return w + 1j * rng.uniform(-s, s, size=(fan_out, fan_in))
    return w


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class ClassifierNet:
    """Fully connected ReLU net with a softmax output over template ids."""

    n_qubits: int
    family_hash: str
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    metadata: dict = field(default_factory=dict)

    kind = "classifier"

    @classmethod
    def create(cls, n_qubits: int, n_templates: int, hidden: tuple[int, ...],
               family_hash: str, rng: np.random.Generator) -> "ClassifierNet":
        sizes = [2 * 4**n_qubits, *hidden, n_templates]
        weights = [_glorot_uniform(rng, sizes[i + 1], sizes[i], False)
                   for i in range(len(sizes) - 1)]
        biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]
        return cls(n_qubits, family_hash, sizes, weights, biases)

    @property
    def n_templates(self) -> int:
        return self.layer_sizes[-1]

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def forward_batch(self, x: np.ndarray, keep_cache: bool = False):
        """Probabilities (B, K); optionally also the per-layer activations."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.layer_sizes[0]:
            raise ValueError(
                f"feature length {x.shape[1]} does not match input size {self.layer_sizes[0]}")
        acts = [x]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ w.T + b
            if i < len(self.weights) - 1:
                x = np.maximum(x, 0.0)
            acts.append(x)
        probs = _softmax(x)
        return (probs, acts) if keep_cache else probs


def classifier_forward(net: ClassifierNet, features: np.ndarray) -> np.ndarray:
    """Probability distribution over template ids for one feature vector."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1:
        raise ValueError("expected a single flat feature vector")
    return net.forward_batch(features[None])[0]


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    p = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(p, 1e-300))))


def classifier_train_step(net: ClassifierNet, batch_features: np.ndarray,
                          batch_labels: np.ndarray, adam: AdamState) -> float:
    """One Adam update on the mean cross-entropy; returns the pre-update loss."""
    x = np.atleast_2d(np.asarray(batch_features, dtype=np.float64))
    labels = np.asarray(batch_labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if labels.min() < 0 or labels.max() >= net.n_templates:
        raise ValueError(f"label out of range [0, {net.n_templates})")

    probs, acts = net.forward_batch(x, keep_cache=True)
    loss = cross_entropy(probs, labels)

    bsz = x.shape[0]
    dz = probs.copy()
    dz[np.arange(bsz), labels] -= 1.0
    dz /= bsz

    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    for i in range(len(net.weights) - 1, -1, -1):
        grads_w[i] = dz.T @ acts[i]
        grads_b[i] = dz.sum(axis=0)
        if i > 0:
            dz = (dz @ net.weights[i]) * (acts[i] > 0)
    adam.step(net.params(), [*grads_w, *grads_b])
    return loss


_SX2 = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=np.complex128)


def _partial_matrices(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """RZ(beta) SX RZ(alpha) SX for arrays of angles (broadcast over shape)."""
    core = np.empty(alpha.shape + (2, 2), dtype=np.complex128)
    # SX RZ(alpha) SX = [[sin(a/2), cos(a/2)], [cos(a/2), -sin(a/2)]]
    s, c = np.sin(alpha / 2), np.cos(alpha / 2)
    core[..., 0, 0] = s
    core[..., 0, 1] = c
    core[..., 1, 0] = c
    core[..., 1, 1] = -s
    phase = np.exp(-0.5j * beta)
    core[..., 0, :] *= phase[..., None]
    core[..., 1, :] *= np.conj(phase)[..., None]
    return core


@dataclass
class EncoderModel:
    """Complex dense net mapping a unitary to one 2x2 unitary per slot.

    The head consumes one complex pair (a, b) per slot.  FULL slots use the
    normalized SU(2) form ``[[a, -conj(b)], [b, conj(a)]] / sqrt(|a|^2+|b|^2)``.
    PARTIAL slots are constrained to their reduced parameterization: the head
    reads off angles ``alpha = arg(a)``, ``beta = arg(b)`` and builds
    ``RZ(beta) SX RZ(alpha) SX`` directly, so suggested slots are exactly
    representable by the template's angle vector.

    With ``conj_augment`` the input vector is [u, conj(u)] instead of u: the
    complex-linear first layer cannot form antilinear combinations of the
    entries on its own, and the fidelity target Tr(U^dag V) is antilinear in
    the input.
    """

    n_qubits: int
    family_hash: str
    template_id: int
    slot_kinds: list[str]
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    conj_augment: bool = False
    metadata: dict = field(default_factory=dict)

    kind = "encoder"

    @classmethod
    def create(cls, template, hidden: tuple[int, ...], family_hash: str,
               rng: np.random.Generator, conj_augment: bool = False) -> "EncoderModel":
        kinds = [s.kind for s in template.slots]
        n_in = 4**template.n_qubits * (2 if conj_augment else 1)
        sizes = [n_in, *hidden, 2 * len(kinds)]
        weights = [_glorot_uniform(rng, sizes[i + 1], sizes[i], True)
                   for i in range(len(sizes) - 1)]
        biases = [np.zeros(sizes[i + 1], dtype=np.complex128)
                  for i in range(len(sizes) - 1)]
        return cls(template.n_qubits, family_hash, template.id, kinds,
                   sizes, weights, biases, conj_augment)

    @property
    def n_slots(self) -> int:
        return len(self.slot_kinds)

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def forward_batch(self, unitaries: np.ndarray, keep_cache: bool = False):
        """Slot matrices (B, n_slots, 2, 2) plus degenerate-head flags (B, n_slots)."""
        u = np.asarray(unitaries, dtype=np.complex128)
        if u.ndim == 2:
            u = u[None]
        d = 2**self.n_qubits
        if u.shape[1:] != (d, d):
            raise ValueError(f"unitary shape {u.shape[1:]} does not match dim {d}")
        x = u.reshape(u.shape[0], -1)
        if self.conj_augment:
            x = np.concatenate([x, x.conj()], axis=1)
        acts = [x]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ w.T + b
            if i < len(self.weights) - 1:
                x = np.maximum(x.real, 0.0) + 1j * np.maximum(x.imag, 0.0)
            acts.append(x)

        a = x[:, 0::2]
        b = x[:, 1::2]
        partial = np.array([k == "partial" for k in self.slot_kinds])
        mats = np.empty((x.shape[0], self.n_slots, 2, 2), dtype=np.complex128)

        norm2 = np.abs(a) ** 2 + np.abs(b) ** 2
        degenerate = np.where(partial[None, :],
                              (np.abs(a) ** 2 < HEAD_NORM_EPS) | (np.abs(b) ** 2 < HEAD_NORM_EPS),
                              norm2 < HEAD_NORM_EPS)

        safe = np.sqrt(np.where(degenerate | partial[None, :], 1.0, norm2))
        a_n = np.where(degenerate, 1.0, a / safe)
        b_n = np.where(degenerate, 0.0, b / safe)
        mats[:, :, 0, 0] = a_n
        mats[:, :, 0, 1] = -np.conj(b_n)
        mats[:, :, 1, 0] = b_n
        mats[:, :, 1, 1] = np.conj(a_n)

        alpha = beta = None
        if partial.any():
            alpha = np.where(degenerate[:, partial], 0.0, np.angle(a[:, partial]))
            beta = np.where(degenerate[:, partial], 0.0, np.angle(b[:, partial]))
            mats[:, partial] = _partial_matrices(alpha, beta)
        if keep_cache:
            cache = {"acts": acts, "a": a, "b": b, "norm": safe, "partial": partial,
                     "alpha": alpha, "beta": beta, "degenerate": degenerate, "mats": mats}
            return mats, degenerate, cache
        return mats, degenerate


def encoder_forward(enc: EncoderModel, u: np.ndarray, return_flags: bool = False):
    """Slot matrices for one unitary; optionally the degenerate-head flags."""
    mats, flags = enc.forward_batch(np.asarray(u))
    if return_flags:
        return list(mats[0]), flags[0]
    return list(mats[0])


def _head_backward(cache: dict, g_mats: np.ndarray) -> np.ndarray:
    """Gradient through the slot heads back to the raw (a, b) outputs."""
    a, b = cache["a"], cache["b"]
    n = cache["norm"]
    mats = cache["mats"]
    degenerate = cache["degenerate"]
    partial = cache["partial"]

    g00 = g_mats[:, :, 0, 0]
    g01 = g_mats[:, :, 0, 1]
    g10 = g_mats[:, :, 1, 0]
    g11 = g_mats[:, :, 1, 1]
    inner = np.sum((g_mats.conj() * mats).real, axis=(2, 3))

    g_a = (g00 + np.conj(g11)) / n - inner * a / n**2
    g_b = (g10 - np.conj(g01)) / n - inner * b / n**2

    if partial.any():
        alpha, beta = cache["alpha"], cache["beta"]
        gp = g_mats[:, partial]
        p = mats[:, partial]
        # dP/dalpha = RZ(beta) SX (-i/2 Z RZ(alpha)) SX; entries from the core form
        s, c = np.sin(alpha / 2), np.cos(alpha / 2)
        dcore = np.empty(p.shape, dtype=np.complex128)
        dcore[..., 0, 0] = 0.5 * c
        dcore[..., 0, 1] = -0.5 * s
        dcore[..., 1, 0] = -0.5 * s
        dcore[..., 1, 1] = -0.5 * c
        phase = np.exp(-0.5j * beta)
        dcore[..., 0, :] *= phase[..., None]
        dcore[..., 1, :] *= np.conj(phase)[..., None]
        d_alpha = np.sum((gp.conj() * dcore).real, axis=(2, 3))
        # dP/dbeta = (-i/2) Z P
        dbeta_mat = np.empty_like(p)
        dbeta_mat[..., 0, :] = -0.5j * p[..., 0, :]
        dbeta_mat[..., 1, :] = 0.5j * p[..., 1, :]
        d_beta = np.sum((gp.conj() * dbeta_mat).real, axis=(2, 3))
        # arg backward: g_z = dL/dtheta * i z / |z|^2
        ap = a[:, partial]
        bp = b[:, partial]
        g_a[:, partial] = d_alpha * 1j * ap / np.maximum(np.abs(ap) ** 2, HEAD_NORM_EPS)
        g_b[:, partial] = d_beta * 1j * bp / np.maximum(np.abs(bp) ** 2, HEAD_NORM_EPS)

    g_a = np.where(degenerate, 0.0, g_a)
    g_b = np.where(degenerate, 0.0, g_b)

    g_out = np.empty((a.shape[0], 2 * a.shape[1]), dtype=np.complex128)
    g_out[:, 0::2] = g_a
    g_out[:, 1::2] = g_b
    return g_out


def encoder_backward(enc: EncoderModel, cache: dict, g_mats: np.ndarray) -> list[np.ndarray]:
    """Backprop a slot-matrix gradient to all encoder parameters."""
    acts = cache["acts"]
    gz = _head_backward(cache, g_mats)
    grads_w = [None] * len(enc.weights)
    grads_b = [None] * len(enc.biases)
    for i in range(len(enc.weights) - 1, -1, -1):
        grads_w[i] = gz.T @ np.conj(acts[i])
        grads_b[i] = gz.sum(axis=0)
        if i > 0:
            gz = gz @ np.conj(enc.weights[i])
            z = acts[i]
            gz = (z.real > 0) * gz.real + 1j * ((z.imag > 0) * gz.imag)
    return [*grads_w, *grads_b]


def encoder_train_step(enc: EncoderModel, batch_unitaries: np.ndarray,
                       template, adam: AdamState) -> float:
    """One Adam ascent step on the mean reconstruction fidelity.

    Gradients flow through the fixed decoder (the differentiable template
    simulation), the SU(2) head, and the complex dense layers.  Returns the
    pre-update mean fidelity.
    """
    from .gradsim import fidelity_grad_slots_batch

    u = np.asarray(batch_unitaries, dtype=np.complex128)
    if u.ndim == 2:
        u = u[None]
    if u.shape[0] == 0:
        raise ValueError("empty batch")
    mats, _, cache = enc.forward_batch(u, keep_cache=True)
    fids, g_mats, _ = fidelity_grad_slots_batch(template, mats, u)
    # descend on 1 - mean(F)
    grads = encoder_backward(enc, cache, -g_mats / u.shape[0])
    adam.step(enc.params(), grads)
    return float(np.mean(fids))


def _pack_array(a: np.ndarray) -> list[float]:
    if np.iscomplexobj(a):
        flat = np.empty(2 * a.size, dtype=np.float64)
        flat[0::2] = a.real.reshape(-1)
        flat[1::2] = a.imag.reshape(-1)
        return flat.tolist()
    return a.reshape(-1).tolist()


def _unpack_array(values: list[float], shape: tuple[int, ...], complex_valued: bool) -> np.ndarray:
    flat = np.asarray(values, dtype=np.float64)
    if complex_valued:
        return (flat[0::2] + 1j * flat[1::2]).reshape(shape)
    return flat.reshape(shape)


def save_model(model, path: str) -> None:
    """Write a model as versioned JSON (lossless round trip)."""
    complex_valued = model.kind == "encoder"
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "n_qubits": model.n_qubits,
        "template_family_hash": model.family_hash,
        "layer_sizes": list(model.layer_sizes),
        "activation": "split_relu" if complex_valued else "relu",
        "weights": [_pack_array(w) for w in model.weights],
        "biases": [_pack_array(b) for b in model.biases],
        "training_metadata": model.metadata,
    }
    if model.kind == "encoder":
        doc["template_id"] = model.template_id
        doc["slot_kinds"] = list(model.slot_kinds)
        doc["conj_augment"] = model.conj_augment
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))


def load_model(path: str, expect_kind: str | None = None,
               expect_family_hash: str | None = None):
    """Load a model file, optionally enforcing its kind and template family."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelFileError(f"corrupt model file {path}: {e}") from None
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFileError(f"unsupported model format version {doc.get('format_version')!r}")
    kind = doc.get("kind")
    if kind not in ("classifier", "encoder"):
        raise ModelFileError(f"unknown model kind {kind!r}")
    if expect_kind is not None and kind != expect_kind:
        raise ModelKindError(f"expected a {expect_kind} model, file holds {kind!r}")
    if expect_family_hash is not None and doc["template_family_hash"] != expect_family_hash:
        raise FamilyHashError(
            f"model family hash {doc['template_family_hash']} does not match "
            f"expected {expect_family_hash}")

    sizes = [int(s) for s in doc["layer_sizes"]]
    complex_valued = kind == "encoder"
    shapes = [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]
    weights = [_unpack_array(w, s, complex_valued) for w, s in zip(doc["weights"], shapes)]
    biases = [_unpack_array(b, (s[0],), complex_valued) for b, s in zip(doc["biases"], shapes)]
    meta = doc.get("training_metadata", {})
    if kind == "classifier":
        return ClassifierNet(int(doc["n_qubits"]), doc["template_family_hash"],
                             sizes, weights, biases, meta)
    return EncoderModel(int(doc["n_qubits"]), doc["template_family_hash"],
                        int(doc["template_id"]), [str(k) for k in doc["slot_kinds"]],
                        sizes, weights, biases, bool(doc.get("conj_augment", False)), meta)
