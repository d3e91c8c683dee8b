"""Data generation, training drivers, and evaluation for both models.

Training data is generated on the fly: every batch samples fresh
(template, angles) pairs, so no fixed dataset exists and overfitting to a
finite sample is impossible.  Evaluation always draws fresh samples from a
dedicated seed, never reuses training data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import neural, qmat
from .gradsim import assemble_batch
from .neural import AdamState, ClassifierNet, EncoderModel
from .templates import TemplateSpec, param_count, sample_params, slots_to_params

__all__ = [
    "ClassifierEvalReport",
    "SuggesterEvalReport",
    "TrainConfig",
    "eval_classifier",
    "eval_suggester",
    "gen_classifier_batch",
    "gen_encoder_batch",
    "sweep_rz",
    "train_classifier",
    "train_suggester",
]


@dataclass
class TrainConfig:
    steps: int = 20000
    batch_size: int = 256
    seed: int = 0
    hidden: tuple[int, ...] = (256, 256)
    lr: float = 1e-3
    lr_decay: float = 1.0       # multiplicative decay factor
    lr_decay_every: int = 10000
    log_interval: int = 200
    canonical_phase: bool = False
    conj_augment: bool = False  # encoder input [u, conj(u)] instead of u


@dataclass
class ClassifierEvalReport:
    accuracy: float
    top_k_accuracy: dict[int, float]
    confusion: np.ndarray  # (K, K) ints, rows = true template
    expected_visits: float
    n_samples: int


@dataclass
class SuggesterEvalReport:
    model_start_fids: np.ndarray
    random_start_fids: np.ndarray
    refined_fids: np.ndarray | None = None
    refined_iters: np.ndarray | None = None

    @property
    def mean_model(self) -> float:
        return float(np.mean(self.model_start_fids))

    @property
    def mean_random(self) -> float:
        return float(np.mean(self.random_start_fids))

    def quantiles(self, qs=(0.05, 0.25, 0.5, 0.75, 0.95)) -> dict[str, list[float]]:
        return {
            "model": np.quantile(self.model_start_fids, qs).tolist(),
            "random": np.quantile(self.random_start_fids, qs).tolist(),
        }


def _sample_family_unitaries(family: list[TemplateSpec], labels: np.ndarray,
                             rng: np.random.Generator) -> np.ndarray:
    """Assemble one fresh random instance per row; rows grouped by template."""
    d = family[0].dim
    out = np.empty((len(labels), d, d), dtype=np.complex128)
    # draw angles row by row so the stream is independent of the grouping
    angles = [sample_params(family[t], rng) for t in labels]
    for tid in np.unique(labels):
        idx = np.where(labels == tid)[0]
        out[idx] = assemble_batch(family[tid], np.stack([angles[i] for i in idx]))
    return out


def _features(unitaries: np.ndarray, canonical_phase: bool) -> np.ndarray:
    u = unitaries
    if canonical_phase:
        flatmag = np.abs(u.reshape(u.shape[0], -1))
        k = np.argmax(flatmag, axis=1)
        picked = u.reshape(u.shape[0], -1)[np.arange(u.shape[0]), k]
        u = u * np.exp(-1j * np.angle(picked))[:, None, None]
    b = u.shape[0]
    return np.concatenate([u.real.reshape(b, -1), u.imag.reshape(b, -1)], axis=1)


def gen_classifier_batch(family: list[TemplateSpec], batch_size: int,
                         rng: np.random.Generator,
                         canonical_phase: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Fresh (features, labels): template drawn uniformly, angles uniform."""
    labels = rng.integers(0, len(family), size=batch_size)
    unitaries = _sample_family_unitaries(family, labels, rng)
    return _features(unitaries, canonical_phase), labels


def gen_encoder_batch(t: TemplateSpec, batch_size: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Fresh unitaries sampled from the template, so each is representable on it."""
    params = np.stack([sample_params(t, rng) for _ in range(batch_size)])
    return assemble_batch(t, params)


def train_classifier(family: list[TemplateSpec], config: TrainConfig,
                     family_hash: str = "") -> tuple[ClassifierNet, list[tuple[int, float]]]:
    """Train a template classifier on on-the-fly batches; returns (net, loss curve)."""
    rng = np.random.default_rng(config.seed)
    net = ClassifierNet.create(family[0].n_qubits, len(family), tuple(config.hidden),
                               family_hash, rng)
    adam = AdamState(net.params(), lr=config.lr)
    curve = []
    for step in range(1, config.steps + 1):
        adam.lr = config.lr * (config.lr_decay ** ((step - 1) // config.lr_decay_every))
        x, y = gen_classifier_batch(family, config.batch_size, rng, config.canonical_phase)
        loss = neural.classifier_train_step(net, x, y, adam)
        if step == 1 or step % config.log_interval == 0 or step == config.steps:
            curve.append((step, loss))
    net.metadata = {
        "seed": config.seed,
        "steps": config.steps,
        "final_metric": curve[-1][1] if curve else None,
        "batch_size": config.batch_size,
        "lr": config.lr,
        "canonical_phase": config.canonical_phase,
    }
    return net, curve


def train_suggester(t: TemplateSpec, config: TrainConfig,
                    family_hash: str = "") -> tuple[EncoderModel, list[tuple[int, float]]]:
    """Train a parameter-suggestion encoder; returns (encoder, fidelity curve)."""
    rng = np.random.default_rng(config.seed)
    enc = EncoderModel.create(t, tuple(config.hidden), family_hash, rng,
                              conj_augment=config.conj_augment)
    adam = AdamState(enc.params(), lr=config.lr)
    curve = []
    for step in range(1, config.steps + 1):
        adam.lr = config.lr * (config.lr_decay ** ((step - 1) // config.lr_decay_every))
        batch = gen_encoder_batch(t, config.batch_size, rng)
        fid = neural.encoder_train_step(enc, batch, t, adam)
        if step == 1 or step % config.log_interval == 0 or step == config.steps:
            curve.append((step, fid))
    enc.metadata = {
        "seed": config.seed,
        "steps": config.steps,
        "final_metric": curve[-1][1] if curve else None,
        "batch_size": config.batch_size,
        "lr": config.lr,
        "conj_augment": config.conj_augment,
    }
    return enc, curve


def _ranks(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """1-based rank of the true label under descending probability.

    Ties broken by template id (stable sort on the negated probabilities).
    """
    order = np.argsort(-probs, axis=1, kind="stable")
    ranks = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        ranks[i] = int(np.where(order[i] == lab)[0][0]) + 1
    return ranks


def _resolve_canonical(net, canonical_phase):
    if canonical_phase is None:
        meta = getattr(net, "metadata", None) or {}
        return bool(meta.get("canonical_phase", False))
    return canonical_phase


def eval_classifier(net, family: list[TemplateSpec], n_per_template: int,
                    seed: int, canonical_phase: bool | None = None) -> ClassifierEvalReport:
    """Evaluate on fresh samples: n_per_template draws from every template.

    Feature phase handling defaults to whatever the model was trained with
    (recorded in its metadata).
    """
    canonical_phase = _resolve_canonical(net, canonical_phase)
    rng = np.random.default_rng(seed)
    k = len(family)
    labels = np.repeat(np.arange(k), n_per_template)
    unitaries = _sample_family_unitaries(family, labels, rng)
    probs = net.forward_batch(_features(unitaries, canonical_phase))

    pred = np.argmax(probs, axis=1)
    confusion = np.zeros((k, k), dtype=np.int64)
    for true, p in zip(labels, pred):
        confusion[true, p] += 1
    ranks = _ranks(probs, labels)
    total = len(labels)
    top_k = {kk: float(np.mean(ranks <= kk)) for kk in range(1, k + 1)}
    return ClassifierEvalReport(
        accuracy=float(np.trace(confusion) / total),
        top_k_accuracy=top_k,
        confusion=confusion,
        expected_visits=float(np.mean(ranks)),
        n_samples=total,
    )


def eval_suggester(enc: EncoderModel, t: TemplateSpec, n_samples: int, seed: int,
                   refine: bool = False, refine_config=None) -> SuggesterEvalReport:
    """Start-fidelity comparison: encoder-suggested versus random parameters.

    The encoder output is projected onto the template's angle
    parameterization (the same path the refinement stage consumes) before
    the start fidelity is measured.
    """
    rng = np.random.default_rng(seed)
    targets = gen_encoder_batch(t, n_samples, rng)
    mats, _ = enc.forward_batch(targets)

    model_fids = np.empty(n_samples)
    random_fids = np.empty(n_samples)
    model_params = np.empty((n_samples, param_count(t)))
    for i in range(n_samples):
        model_params[i] = slots_to_params(t, list(mats[i]))
        p_rand = sample_params(t, rng)
        random_fids[i] = qmat.fidelity(targets[i], assemble_batch(t, p_rand[None])[0])
    model_v = assemble_batch(t, model_params)
    for i in range(n_samples):
        model_fids[i] = qmat.fidelity(targets[i], model_v[i])

    report = SuggesterEvalReport(model_fids, random_fids)
    if refine:
        from .synth import RefineConfig, refine as refine_fn

        cfg = refine_config or RefineConfig()
        fids = np.empty(n_samples)
        iters = np.empty(n_samples, dtype=np.int64)
        for i in range(n_samples):
            _, fid, trace = refine_fn(t, model_params[i], targets[i], cfg)
            fids[i] = fid
            iters[i] = trace[-1][0]
        report.refined_fids = fids
        report.refined_iters = iters
    return report


def sweep_rz(net, resolution: int = 201, canonical_phase: bool | None = None):
    """Classifier response to CX . RZ(theta on target qubit) . CX.

    Returns a list of (theta, probabilities, argmax template id) rows over a
    uniform grid of ``resolution`` angles spanning [-pi, pi].
    """
    canonical_phase = _resolve_canonical(net, canonical_phase)
    cx = qmat.standard_gate("CX")
    thetas = np.linspace(-np.pi, np.pi, resolution)
    rows = []
    for theta in thetas:
        mid = np.kron(np.eye(2), qmat.rz(theta))
        u = cx @ mid @ cx
        probs = net.forward_batch(_features(u[None], canonical_phase))[0]
        rows.append((float(theta), probs, int(np.argmax(probs))))
    return rows
