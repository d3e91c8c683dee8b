"""End-to-end synthesis: classify, suggest, refine, fall through.

Builds the full pipeline from the committed models when available (training
quick stand-ins otherwise) and synthesizes a couple of targets, printing the
per-template visit log that the report JSON also carries.
"""

from pathlib import Path

import numpy as np

from czsynth import neural, qmat, synth, tasks, templates

family = templates.enumerate_templates(2, 3)
fhash = templates.family_hash(templates.family_document(family, 2, 3))
models_dir = Path(__file__).resolve().parent.parent / "models"

clf_path = models_dir / "classifier_2q_cz3_seed1.json"
if clf_path.exists():
    classifier = neural.load_model(str(clf_path), expect_kind="classifier")
    suggesters = {}
    for tid in range(4):
        p = models_dir / f"suggester_2q_cz3_id{tid}_seed1.json"
        if p.exists():
            suggesters[tid] = neural.load_model(str(p), expect_kind="encoder")
    print(f"loaded committed classifier + {len(suggesters)} suggesters")
else:
    print("training quick stand-ins (a few minutes) ...")
    classifier, _ = tasks.train_classifier(
        family, tasks.TrainConfig(steps=3000, batch_size=128, seed=7, hidden=(128, 128)),
        family_hash=fhash)
    suggesters = {}

rng = np.random.default_rng(5)
a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
q0, _ = np.linalg.qr(a)
targets = {
    "local product": np.kron(q0, np.eye(2)),
    "CZ": qmat.CZ,
    "SWAP": qmat.standard_gate("SWAP"),
}

cfg = synth.RefineConfig(max_iters=3000, target_error=1e-8, restarts=5, seed=0)
for name, target in targets.items():
    report = synth.synthesize(target, classifier, suggesters, family, cfg)
    print(f"\ntarget: {name}")
    for v in report.visits:
        print(f"  visited template {v.template_id} ({family[v.template_id].n_cz} CZ): "
              f"start F {v.start_fidelity:.3f} -> final F {v.final_fidelity:.8f} "
              f"({v.iterations} iters)")
    if report.success:
        print(f"  => success on template {report.template_id} "
              f"with {family[report.template_id].n_cz} CZ")
    else:
        print("  => suggestions exhausted")
