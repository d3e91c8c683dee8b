"""Parameter refinement, template ranking, the synthesis pipeline, and a
multi-restart optimization ladder that labels the minimal CZ count of a
unitary.

The refiner runs Adam ascent on the gate fidelity with a step-decay
schedule.  Restarts are vectorized: a whole batch of independent starting
points advances in lockstep, which keeps multi-restart searches fast and
deterministic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import qmat
from .gradsim import assemble_batch, fidelity_grad_angles_batch
from .neural import EncoderModel, flatten_unitary
from .templates import (
    TemplateSpec,
    enumerate_templates,
    param_count,
    sample_params,
    slots_to_params,
)

__all__ = [
    "NotRepresentableError",
    "OracleConfig",
    "RefineConfig",
    "SynthesisReport",
    "VisitRecord",
    "oracle_min_cz",
    "rank_templates",
    "refine",
    "synthesize",
]


class NotRepresentableError(RuntimeError):
    """No template in the family reached the fidelity threshold."""


@dataclass
class RefineConfig:
    max_iters: int = 5000
    target_error: float = 1e-8  # on 1 - F
    lr: float = 0.05
    lr_decay: float = 0.5
    lr_decay_every: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    restarts: int = 5
    log_interval: int = 50
    seed: int = 0
    max_visits: int | None = None


@dataclass
class VisitRecord:
    template_id: int
    start_fidelity: float
    final_fidelity: float
    iterations: int
    trace: list[tuple[int, float]] | None = None  # (iteration, best error so far)


@dataclass
class SynthesisReport:
    success: bool
    template_id: int | None
    params: np.ndarray | None
    fidelity: float
    visits: list[VisitRecord]
    stage_seconds: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "template_id": self.template_id,
            "params": None if self.params is None else self.params.tolist(),
            "fidelity": self.fidelity,
            "templates_visited": [
                {
                    "template_id": v.template_id,
                    "start_fidelity": v.start_fidelity,
                    "final_fidelity": v.final_fidelity,
                    "iterations": v.iterations,
                }
                for v in self.visits
            ],
        }


def _refine_batch(t: TemplateSpec, p0s: np.ndarray, target: np.ndarray,
                  cfg: RefineConfig, record_trace: bool = False):
    """Adam ascent on fidelity for a batch of independent starts.

    Returns (best_params (B, P), best_fids (B,), first_hit (B,) iteration at
    which each row first met the target error (-1 if never), iterations run,
    trace).  Stops as soon as any row converges (the pipeline takes the
    first success) unless no row ever does.  The trace, when recorded, holds
    (iteration, best error over the batch so far) at the logging interval.
    """
    p = np.atleast_2d(np.asarray(p0s, dtype=np.float64)).copy()
    bsz = p.shape[0]
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    fids, _, _ = fidelity_grad_angles_batch(t, p, target)
    best_f = fids.copy()
    best_p = p.copy()
    trace = [(0, float(1.0 - best_f.max()))] if record_trace else None
    first_hit = np.where(1.0 - best_f <= cfg.target_error,
                         np.zeros(bsz, dtype=np.int64), -np.ones(bsz, dtype=np.int64))
    if (first_hit >= 0).any():
        return best_p, best_f, first_hit, 0, trace

    for it in range(1, cfg.max_iters + 1):
        fids, grads, _ = fidelity_grad_angles_batch(t, p, target)
        improved = fids > best_f
        best_f[improved] = fids[improved]
        best_p[improved] = p[improved]
        if record_trace and it % cfg.log_interval == 0:
            trace.append((it, float(1.0 - best_f.max())))
        hit = (first_hit < 0) & (1.0 - best_f <= cfg.target_error)
        first_hit[hit] = it
        if (first_hit >= 0).any():
            if record_trace and trace[-1][0] != it:
                trace.append((it, float(1.0 - best_f.max())))
            return best_p, best_f, first_hit, it, trace
        g = -grads
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1**it)
        vhat = v / (1 - cfg.beta2**it)
        lr = cfg.lr * (cfg.lr_decay ** ((it - 1) // cfg.lr_decay_every))
        p = p - lr * mhat / (np.sqrt(vhat) + cfg.eps)
    if record_trace and trace[-1][0] != cfg.max_iters:
        trace.append((cfg.max_iters, float(1.0 - best_f.max())))
    return best_p, best_f, first_hit, cfg.max_iters, trace


def refine(t: TemplateSpec, p0: np.ndarray, target: np.ndarray,
           cfg: RefineConfig | None = None):
    """Refine one parameter vector against a target unitary.

    Returns (params, fidelity, trace) where trace is a list of
    (iteration, error) rows at the configured logging interval.  Reporting
    is best-iterate: the error at each trace row is 1 - F of the best
    parameters seen up to that iteration, so the returned fidelity is never
    below the starting fidelity.  Stops once 1 - F <= target_error.
    """
    cfg = cfg or RefineConfig()
    target = np.asarray(target, dtype=np.complex128)
    p = np.asarray(p0, dtype=np.float64).copy()
    if target.shape != (t.dim, t.dim):
        raise ValueError(f"target shape {target.shape} does not match template dim {t.dim}")
    if p.shape != (param_count(t),):
        raise ValueError(f"expected {param_count(t)} parameters, got {p.shape}")

    pb = p[None, :]
    m = np.zeros_like(pb)
    v = np.zeros_like(pb)
    fids, _, _ = fidelity_grad_angles_batch(t, pb, target)
    best_f = float(fids[0])
    best_p = pb[0].copy()
    trace = [(0, 1.0 - best_f)]
    if 1.0 - best_f <= cfg.target_error:
        return best_p, best_f, trace

    for it in range(1, cfg.max_iters + 1):
        fids, grads, _ = fidelity_grad_angles_batch(t, pb, target)
        if fids[0] > best_f:
            best_f = float(fids[0])
            best_p = pb[0].copy()
        if it % cfg.log_interval == 0:
            trace.append((it, 1.0 - best_f))
        if 1.0 - best_f <= cfg.target_error:
            if trace[-1][0] != it:
                trace.append((it, 1.0 - best_f))
            return best_p, best_f, trace
        g = -grads
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1**it)
        vhat = v / (1 - cfg.beta2**it)
        lr = cfg.lr * (cfg.lr_decay ** ((it - 1) // cfg.lr_decay_every))
        pb = pb - lr * mhat / (np.sqrt(vhat) + cfg.eps)
    if trace[-1][0] != cfg.max_iters:
        trace.append((cfg.max_iters, 1.0 - best_f))
    return best_p, best_f, trace


def rank_templates(net, target: np.ndarray, family: list[TemplateSpec],
                   max_cz: int | None = None) -> list[int]:
    """Template ids by descending classifier probability, ties by id.

    With ``max_cz``, templates using more CZ gates are dropped (the
    block-resynthesis cost filter).  Feature phase handling follows the
    model's training metadata.
    """
    meta = getattr(net, "metadata", None) or {}
    canonical = bool(meta.get("canonical_phase", False))
    probs = net.forward_batch(flatten_unitary(target, canonical_phase=canonical)[None])[0]
    order = np.argsort(-probs, kind="stable")
    ids = [family[i].id for i in order]
    if max_cz is not None:
        ids = [i for i in ids if family[i].n_cz <= max_cz]
    return ids


def _check_unitary_target(target: np.ndarray, dim: int) -> np.ndarray:
    target = np.asarray(target, dtype=np.complex128)
    if target.shape != (dim, dim):
        raise ValueError(f"target shape {target.shape} does not match dim {dim}")
    return target


def synthesize(target: np.ndarray, classifier, suggesters: dict[int, EncoderModel],
               family: list[TemplateSpec], cfg: RefineConfig | None = None,
               max_cz: int | None = None) -> SynthesisReport:
    """Full pipeline: rank templates, suggest parameters, refine, fall through.

    Visits templates in ranked order.  On each template the start is the
    suggester output when one is registered for that template id, otherwise
    random; up to restarts - 1 extra random starts run alongside.  Stops at
    the first template whose refined error meets the target; on exhaustion
    returns success=False with the full visit log.
    """
    cfg = cfg or RefineConfig()
    by_id = {t.id: t for t in family}
    target = _check_unitary_target(target, family[0].dim)

    t0 = time.perf_counter()
    ranked = rank_templates(classifier, target, family, max_cz=max_cz)
    rank_s = time.perf_counter() - t0
    if cfg.max_visits is not None:
        ranked = ranked[: cfg.max_visits]

    visits = []
    suggest_s = 0.0
    refine_s = 0.0
    for tid in ranked:
        t = by_id[tid]
        rng = np.random.default_rng([cfg.seed, tid])
        starts = []
        t1 = time.perf_counter()
        enc = suggesters.get(tid)
        if enc is not None:
            mats, _ = enc.forward_batch(target[None])
            starts.append(slots_to_params(t, list(mats[0])))
        while len(starts) < max(1, cfg.restarts):
            starts.append(sample_params(t, rng))
        p0s = np.stack(starts)
        suggest_s += time.perf_counter() - t1

        t1 = time.perf_counter()
        start_fid = qmat.fidelity(target, assemble_batch(t, p0s[:1])[0])
        best_p, best_f, first_hit, iters, trace = _refine_batch(
            t, p0s, target, cfg, record_trace=True)
        refine_s += time.perf_counter() - t1

        winner = int(np.argmax(best_f))
        visits.append(VisitRecord(tid, start_fid, float(best_f[winner]), iters, trace))
        if 1.0 - best_f[winner] <= cfg.target_error:
            return SynthesisReport(
                True, tid, best_p[winner], float(best_f[winner]), visits,
                {"rank": rank_s, "suggest": suggest_s, "refine": refine_s})
    best = max(visits, key=lambda v: v.final_fidelity) if visits else None
    return SynthesisReport(
        False, None, None, best.final_fidelity if best else 0.0, visits,
        {"rank": rank_s, "suggest": suggest_s, "refine": refine_s})


@dataclass
class OracleConfig:
    restarts: int = 20
    threshold: float = 1.0 - 1e-6
    max_iters: int = 2000
    seed: int = 0
    family_max_cz: int | None = None  # default: 3 for 2 qubits, 5 for 3


def oracle_min_cz(target: np.ndarray, n_qubits: int,
                  cfg: OracleConfig | None = None, return_evidence: bool = False):
    """Smallest CZ count whose template family reaches the target fidelity.

    Climbs the template ladder by CZ count, running multi-restart refinement
    on every template of each rung; the first rung with a hit is the label.
    Raises NotRepresentableError when the whole family fails.  With
    ``return_evidence`` also returns the best fidelity reached per visited
    template.
    """
    cfg = cfg or OracleConfig()
    max_cz = cfg.family_max_cz if cfg.family_max_cz is not None else (3 if n_qubits == 2 else 5)
    family = enumerate_templates(n_qubits, max_cz)
    target = _check_unitary_target(target, family[0].dim)

    rcfg = RefineConfig(max_iters=cfg.max_iters, target_error=1.0 - cfg.threshold,
                        restarts=cfg.restarts)
    evidence = []
    for k in range(max_cz + 1):
        for t in (t for t in family if t.n_cz == k):
            rng = np.random.default_rng([cfg.seed, t.id])
            p0s = np.stack([sample_params(t, rng) for _ in range(cfg.restarts)])
            _, best_f, _, _, _ = _refine_batch(t, p0s, target, rcfg)
            evidence.append({"template_id": t.id, "n_cz": k,
                             "best_fidelity": float(best_f.max())})
            if best_f.max() >= cfg.threshold:
                return (k, evidence) if return_evidence else k
    raise NotRepresentableError(
        f"target not representable with up to {max_cz} CZ gates on {n_qubits} qubits")
