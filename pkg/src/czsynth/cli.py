"""Command-line entry point.

Subcommands: templates, train-classifier, train-suggester, eval-classifier,
eval-suggester, synthesize, sweep-rz, oracle, gradcheck.

Reproducibility contract: every stochastic command requires an explicit
--seed; payload files (model JSON, CSV tables, report JSON) are
byte-identical across reruns with the same inputs.  Wall-clock timing and
provenance (tool version, command line, seed) go to a ``<file>.meta.json``
sidecar next to each payload.

Exit codes: 0 success, 1 operational failure (synthesis exhausted, gradient
check failed, non-unitary input), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, gradsim, neural, qmat, synth, tasks, templates

_BUILTIN_TARGETS = {
    "identity": lambda n: np.eye(2**n, dtype=np.complex128),
    "cz": lambda n: qmat.standard_gate("CZ"),
    "cx": lambda n: qmat.standard_gate("CX"),
    "swap": lambda n: qmat.standard_gate("SWAP"),
    "toffoli": lambda n: qmat.standard_gate("TOFFOLI"),
}


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode()


def _write_payload(path: Path, data: bytes, args, extra_meta: dict | None = None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    meta = {
        "tool": "czsynth",
        "version": __version__,
        "command": " ".join(sys.argv[1:]),
        "seed": getattr(args, "seed", None),
        "wall_time_s": round(time.time() - args._t0, 3),
    }
    if extra_meta:
        meta.update(extra_meta)
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def _csv_bytes(header: list[str], rows: list[list]) -> bytes:
    def fmt(x):
        if isinstance(x, float):
            return repr(x)
        return str(x)

    lines = [",".join(header)]
    lines += [",".join(fmt(x) for x in row) for row in rows]
    return ("\n".join(lines) + "\n").encode()


def load_matrix_file(path: str) -> np.ndarray:
    """Read a matrix file: JSON array-of-arrays of [re, im] pairs, row-major."""
    with open(path) as fh:
        raw = json.load(fh)
    return np.array([[complex(re, im) for re, im in row] for row in raw])


def save_matrix_file(path: str, u: np.ndarray) -> None:
    u = np.asarray(u, dtype=np.complex128)
    rows = [[[float(x.real), float(x.imag)] for x in row] for row in u]
    Path(path).write_text(json.dumps(rows) + "\n")


def _resolve_target(spec: str, n_qubits: int) -> np.ndarray:
    if spec.lower() in _BUILTIN_TARGETS:
        u = _BUILTIN_TARGETS[spec.lower()](n_qubits)
    else:
        u = load_matrix_file(spec)
    if u.shape != (2**n_qubits, 2**n_qubits):
        raise SystemExit(f"error: target is {u.shape[0]}x{u.shape[1]}, "
                         f"expected {2**n_qubits}x{2**n_qubits} for --qubits {n_qubits}")
    dev = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if dev > 1e-8:
        print(f"error: target is not unitary, max deviation of U^dag U from I is {dev:.3e}")
        raise SystemExit(1)
    return u


def _family_for(n_qubits: int, max_cz: int):
    fam = templates.enumerate_templates(n_qubits, max_cz)
    doc = templates.family_document(fam, n_qubits, max_cz)
    return fam, templates.family_hash(doc), doc


def _layered_family(n_qubits: int, layers: int):
    t = templates.layered_template(n_qubits, layers)
    doc = templates.family_document([t], n_qubits, layers)
    return t, templates.family_hash(doc), doc


def _family_from_hash(n_qubits: int, want_hash: str):
    """Recover an enumerated family from a model's pinned family hash."""
    for max_cz in range(0, 9):
        fam, h, _ = _family_for(n_qubits, max_cz)
        if h == want_hash:
            return fam, max_cz
    for layers in range(0, 13):
        t, h, _ = _layered_family(n_qubits, layers)
        if h == want_hash:
            return [t], layers
    raise SystemExit(f"error: cannot reconstruct the template family with hash {want_hash}")


def _suggester_template(args):
    if args.layers is not None:
        t, fhash, _ = _layered_family(args.qubits, args.layers)
        return t, fhash, f"layers{args.layers}"
    if args.template_id is None:
        raise SystemExit("error: provide either --template-id (with --max-cz) or --layers")
    fam, fhash, _ = _family_for(args.qubits, args.max_cz)
    if not 0 <= args.template_id < len(fam):
        raise SystemExit(f"error: --template-id out of range 0..{len(fam) - 1}")
    return fam[args.template_id], fhash, f"cz{args.max_cz}_id{args.template_id}"


def cmd_templates(args) -> int:
    fam, fhash, doc = _family_for(args.qubits, args.max_cz)
    out = Path(args.out_dir) / f"templates_{args.qubits}q_cz{args.max_cz}.json"
    _write_payload(out, _json_bytes(doc), args, {"family_hash": fhash})
    print(f"{len(fam)} templates ({args.qubits} qubits, up to {args.max_cz} CZ), "
          f"family hash {fhash}")
    print(f"wrote {out}")
    return 0


def cmd_train_classifier(args) -> int:
    fam, fhash, _ = _family_for(args.qubits, args.max_cz)
    cfg = tasks.TrainConfig(steps=args.steps, batch_size=args.batch_size, seed=args.seed,
                            hidden=tuple(args.hidden), lr=args.lr,
                            lr_decay=args.lr_decay, lr_decay_every=args.lr_decay_every,
                            log_interval=args.log_interval,
                            canonical_phase=args.canonical_phase)
    net, curve = tasks.train_classifier(fam, cfg, family_hash=fhash)
    stem = f"classifier_{args.qubits}q_cz{args.max_cz}_seed{args.seed}"
    model_path = Path(args.out_dir) / f"{stem}.json"
    model_path.parent.mkdir(parents=True, exist_ok=True)
    neural.save_model(net, str(model_path))
    _write_payload(Path(str(model_path)), model_path.read_bytes(), args,
                   {"family_hash": fhash})
    _write_payload(Path(args.out_dir) / f"{stem}_loss.csv",
                   _csv_bytes(["step", "loss"], [[s, l] for s, l in curve]), args)
    print(f"trained classifier on {len(fam)} templates: final loss {curve[-1][1]:.4f}")
    print(f"wrote {model_path}")
    return 0


def cmd_train_suggester(args) -> int:
    t, fhash, desc = _suggester_template(args)
    cfg = tasks.TrainConfig(steps=args.steps, batch_size=args.batch_size, seed=args.seed,
                            hidden=tuple(args.hidden), lr=args.lr,
                            lr_decay=args.lr_decay, lr_decay_every=args.lr_decay_every,
                            log_interval=args.log_interval,
                            conj_augment=args.conj_augment)
    enc, curve = tasks.train_suggester(t, cfg, family_hash=fhash)
    stem = f"suggester_{args.qubits}q_{desc}_seed{args.seed}"
    model_path = Path(args.out_dir) / f"{stem}.json"
    model_path.parent.mkdir(parents=True, exist_ok=True)
    neural.save_model(enc, str(model_path))
    _write_payload(Path(str(model_path)), model_path.read_bytes(), args,
                   {"family_hash": fhash})
    _write_payload(Path(args.out_dir) / f"{stem}_fidelity.csv",
                   _csv_bytes(["step", "mean_fidelity"], [[s, f] for s, f in curve]), args)
    print(f"trained suggester for template id {t.id} ({t.n_cz} CZ): "
          f"final mean fidelity {curve[-1][1]:.4f}")
    print(f"wrote {model_path}")
    return 0


def cmd_eval_classifier(args) -> int:
    net = neural.load_model(args.model, expect_kind="classifier")
    fam, _ = _family_from_hash(net.n_qubits, net.family_hash)
    report = tasks.eval_classifier(net, fam, args.samples_per_template, args.seed)
    k = len(fam)
    stem = Path(args.model).stem + f"_eval_seed{args.seed}"
    summary_rows = [["accuracy", report.accuracy],
                    ["expected_visits", report.expected_visits],
                    ["n_samples", report.n_samples]]
    summary_rows += [[f"top_{kk}", report.top_k_accuracy[kk]] for kk in sorted(report.top_k_accuracy)]
    _write_payload(Path(args.out_dir) / f"{stem}_summary.csv",
                   _csv_bytes(["metric", "value"], summary_rows), args)
    _write_payload(Path(args.out_dir) / f"{stem}_confusion.csv",
                   _csv_bytes([f"pred_{j}" for j in range(k)],
                              report.confusion.tolist()), args)
    print(f"accuracy {report.accuracy:.4f}, top-2 {report.top_k_accuracy.get(2, 1.0):.4f}, "
          f"expected visits {report.expected_visits:.2f} (of {k})")
    return 0


def cmd_eval_suggester(args) -> int:
    enc = neural.load_model(args.model, expect_kind="encoder")
    t, fhash, _ = _suggester_template(args)
    if enc.family_hash != fhash:
        raise SystemExit(f"error: model family hash {enc.family_hash} does not match "
                         f"the requested template family {fhash}")
    report = tasks.eval_suggester(enc, t, args.samples, args.seed, refine=args.refine)
    stem = Path(args.model).stem + f"_eval_seed{args.seed}"
    header = ["sample", "model_start_fidelity", "random_start_fidelity"]
    rows = [[i, float(m), float(r)] for i, (m, r) in
            enumerate(zip(report.model_start_fids, report.random_start_fids))]
    if report.refined_fids is not None:
        header += ["refined_fidelity", "refined_iterations"]
        for row, f, n in zip(rows, report.refined_fids, report.refined_iters):
            row += [float(f), int(n)]
    _write_payload(Path(args.out_dir) / f"{stem}_fidelities.csv",
                   _csv_bytes(header, rows), args)
    print(f"model-start mean fidelity {report.mean_model:.4f}, "
          f"random-start mean {report.mean_random:.4f}")
    return 0


def _load_models(paths: list[str]):
    classifier = None
    suggesters = {}
    for p in paths:
        model = neural.load_model(p)
        if model.kind == "classifier":
            if classifier is not None:
                raise SystemExit("error: more than one classifier model given")
            classifier = model
        else:
            suggesters[model.template_id] = model
    if classifier is None:
        raise SystemExit("error: a classifier model is required (pass with --model)")
    return classifier, suggesters


def cmd_synthesize(args) -> int:
    classifier, suggesters = _load_models(args.model)
    fam, _ = _family_from_hash(classifier.n_qubits, classifier.family_hash)
    if classifier.n_qubits != args.qubits:
        raise SystemExit(f"error: classifier is for {classifier.n_qubits} qubits, "
                         f"target for {args.qubits}")
    for tid, enc in suggesters.items():
        if enc.n_qubits != args.qubits:
            raise SystemExit(f"error: suggester for template {tid} has wrong qubit count")
    target = _resolve_target(args.target, args.qubits)
    cfg = synth.RefineConfig(max_iters=args.max_iters, target_error=1.0 - args.threshold,
                             restarts=args.restarts, seed=args.seed)
    report = synth.synthesize(target, classifier, suggesters, fam, cfg, max_cz=args.max_cz)
    stem = f"synthesis_{args.target if args.target.lower() in _BUILTIN_TARGETS else 'custom'}_seed{args.seed}"
    _write_payload(Path(args.out_dir) / f"{stem}.json", _json_bytes(report.to_dict()), args,
                   {"stage_seconds": report.stage_seconds})
    for v in report.visits:
        if v.trace:
            _write_payload(Path(args.out_dir) / f"{stem}_trace_t{v.template_id}.csv",
                           _csv_bytes(["iteration", "error"],
                                      [[i, float(e)] for i, e in v.trace]), args)
    if report.success:
        print(f"success: template {report.template_id} "
              f"({fam[report.template_id].n_cz} CZ), fidelity {report.fidelity:.10f}, "
              f"{len(report.visits)} template visit(s)")
        return 0
    print(f"failed: suggestions exhausted after {len(report.visits)} visit(s); "
          f"best fidelity {report.fidelity:.6f}")
    return 1


def cmd_sweep_rz(args) -> int:
    net = neural.load_model(args.model, expect_kind="classifier")
    if net.n_qubits != 2:
        raise SystemExit("error: sweep-rz requires a 2-qubit classifier")
    fam, _ = _family_from_hash(net.n_qubits, net.family_hash)
    rows = tasks.sweep_rz(net, args.resolution)
    k = len(fam)
    header = ["theta_over_pi"] + [f"p{j}" for j in range(k)] + ["argmax"]
    table = [[theta / np.pi, *[float(p) for p in probs], arg] for theta, probs, arg in rows]
    out = Path(args.out_dir) / f"sweep_rz_{Path(args.model).stem}.csv"
    _write_payload(out, _csv_bytes(header, table), args)
    print(f"wrote {out} ({len(rows)} rows)")
    return 0


def cmd_oracle(args) -> int:
    target = _resolve_target(args.target, args.qubits)
    cfg = synth.OracleConfig(restarts=args.restarts, threshold=args.threshold,
                             max_iters=args.max_iters, seed=args.seed,
                             family_max_cz=args.max_cz)
    try:
        k, evidence = synth.oracle_min_cz(target, args.qubits, cfg, return_evidence=True)
    except synth.NotRepresentableError as e:
        print(f"error: {e}")
        return 1
    out = Path(args.out_dir) / f"oracle_{args.target if args.target.lower() in _BUILTIN_TARGETS else 'custom'}_seed{args.seed}.json"
    _write_payload(out, _json_bytes({
        "target": args.target,
        "n_qubits": args.qubits,
        "min_cz": k,
        "threshold": args.threshold,
        "restarts": args.restarts,
        "evidence": evidence,
    }), args)
    print(f"minimal CZ count: {k}")
    return 0


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    fams = [templates.enumerate_templates(2, 3),
            templates.enumerate_templates(3, 3),
            [templates.layered_template(3, 6)]]
    n_checked = 0
    for fam in fams:
        for t in fam:
            p = templates.sample_params(t, rng)
            a = rng.normal(size=(t.dim, t.dim)) + 1j * rng.normal(size=(t.dim, t.dim))
            w, _ = np.linalg.qr(a)
            res = gradsim.fidelity_grad_angles(t, p, w)
            grad = res.grad + (1e-3 if args.inject_bug else 0.0)
            fd = gradsim.finite_diff_grad(
                lambda x: qmat.fidelity(w, templates.assemble(t, x)), p, 1e-5)
            rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-8)
            worst = max(worst, float(rel.max()))
            n_checked += 1
    ok = worst <= 1e-5
    print(f"{'PASS' if ok else 'FAIL'}: max rel err {worst:.3e} over {n_checked} "
          f"(template, params, target) triples")
    return 0 if ok else 1


def _add_common_out(p):
    p.add_argument("--out-dir", default="out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="czsynth",
                                description="Approximate unitary synthesis over CZ + RZ/SX templates")
    p.add_argument("--version", action="version", version=f"czsynth {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("templates", help="emit a template family as JSON")
    sp.add_argument("--qubits", type=int, required=True, choices=(2, 3))
    sp.add_argument("--max-cz", type=int, required=True)
    _add_common_out(sp)
    sp.set_defaults(func=cmd_templates)

    for name, fn in (("train-classifier", cmd_train_classifier),
                     ("train-suggester", cmd_train_suggester)):
        sp = sub.add_parser(name, help=f"{name.replace('-', ' ')} on on-the-fly data")
        sp.add_argument("--qubits", type=int, required=True, choices=(2, 3))
        sp.add_argument("--max-cz", type=int, default=3)
        sp.add_argument("--steps", type=int, default=20000)
        sp.add_argument("--batch-size", type=int, default=256)
        sp.add_argument("--lr", type=float, default=1e-3)
        sp.add_argument("--lr-decay", type=float, default=1.0,
                        help="multiply the learning rate by this factor periodically")
        sp.add_argument("--lr-decay-every", type=int, default=10000)
        sp.add_argument("--seed", type=int, required=True)
        sp.add_argument("--hidden", type=lambda s: [int(x) for x in s.split(",")],
                        default=[256, 256], help="comma-separated hidden layer sizes")
        sp.add_argument("--log-interval", type=int, default=200)
        if name == "train-classifier":
            sp.add_argument("--canonical-phase", action="store_true",
                            help="strip the global phase from classifier inputs")
        if name == "train-suggester":
            sp.add_argument("--template-id", type=int)
            sp.add_argument("--layers", type=int,
                            help="use the brick-pattern template with this many CZ layers")
            sp.add_argument("--conj-augment", action="store_true",
                            help="feed [u, conj(u)] to the encoder instead of u")
        _add_common_out(sp)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("eval-classifier", help="evaluate a classifier on fresh samples")
    sp.add_argument("--model", required=True)
    sp.add_argument("--samples-per-template", type=int, default=1000)
    sp.add_argument("--seed", type=int, required=True)
    _add_common_out(sp)
    sp.set_defaults(func=cmd_eval_classifier)

    sp = sub.add_parser("eval-suggester", help="evaluate a suggester against random starts")
    sp.add_argument("--model", required=True)
    sp.add_argument("--qubits", type=int, required=True, choices=(2, 3))
    sp.add_argument("--max-cz", type=int, default=3)
    sp.add_argument("--template-id", type=int)
    sp.add_argument("--layers", type=int)
    sp.add_argument("--samples", type=int, default=500)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--refine", action="store_true",
                    help="also refine the model starts and record iterations")
    _add_common_out(sp)
    sp.set_defaults(func=cmd_eval_suggester)

    sp = sub.add_parser("synthesize", help="run the full pipeline on a target unitary")
    sp.add_argument("--target", required=True,
                    help="builtin name (toffoli, swap, cx, cz, identity) or matrix file")
    sp.add_argument("--qubits", type=int, required=True, choices=(2, 3))
    sp.add_argument("--model", action="append", required=True,
                    help="model file; repeat for classifier + suggesters")
    sp.add_argument("--max-cz", type=int, default=None,
                    help="cost filter: skip templates with more CZ gates")
    sp.add_argument("--max-iters", type=int, default=5000)
    sp.add_argument("--restarts", type=int, default=5)
    sp.add_argument("--threshold", type=float, default=1.0 - 1e-8,
                    help="success fidelity threshold")
    sp.add_argument("--seed", type=int, required=True)
    _add_common_out(sp)
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("sweep-rz", help="classifier probabilities along a ZZ-angle sweep")
    sp.add_argument("--model", required=True)
    sp.add_argument("--resolution", type=int, default=201)
    _add_common_out(sp)
    sp.set_defaults(func=cmd_sweep_rz)

    sp = sub.add_parser("oracle", help="minimal CZ count via the optimization ladder")
    sp.add_argument("--target", required=True)
    sp.add_argument("--qubits", type=int, required=True, choices=(2, 3))
    sp.add_argument("--restarts", type=int, default=20)
    sp.add_argument("--threshold", type=float, default=1.0 - 1e-6)
    sp.add_argument("--max-iters", type=int, default=2000)
    sp.add_argument("--max-cz", type=int, default=None,
                    help="family bound (default 3 for 2 qubits, 5 for 3)")
    sp.add_argument("--seed", type=int, required=True)
    _add_common_out(sp)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--inject-bug", action="store_true",
                    help="perturb the analytic gradient (negative control, must FAIL)")
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args._t0 = time.time()
    try:
        return args.func(args)
    except SystemExit:
        raise
    except (neural.ModelFileError, neural.ModelKindError, neural.FamilyHashError,
            FileNotFoundError, ValueError) as e:
        print(f"error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
