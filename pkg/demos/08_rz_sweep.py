"""Classifier response along a ZZ-interaction sweep.

The probe circuit is CX . RZ(theta on the target qubit) . CX, a ZZ rotation.
At theta = 0 or +-pi the CNOTs cancel (0-CZ template); at theta = +-pi/2 the
circuit is locally equivalent to a single CZ; elsewhere two CZ gates are
needed.  A trained 2-qubit classifier should trace those transitions.

Uses the committed model under models/ when present, otherwise trains a
quick stand-in first.
"""

from pathlib import Path

import numpy as np

from czsynth import neural, tasks, templates

model_path = Path(__file__).resolve().parent.parent / "models" / "classifier_2q_cz3_seed1.json"
if model_path.exists():
    net = neural.load_model(str(model_path), expect_kind="classifier")
    print(f"loaded {model_path.name}")
else:
    print("no committed model found; training a quick stand-in (2500 steps) ...")
    family = templates.enumerate_templates(2, 3)
    fhash = templates.family_hash(templates.family_document(family, 2, 3))
    net, _ = tasks.train_classifier(
        family, tasks.TrainConfig(steps=2500, batch_size=128, seed=7, hidden=(128, 128)),
        family_hash=fhash)

rows = tasks.sweep_rz(net, resolution=41)
print("\n theta/pi   p(0 CZ)  p(1 CZ)  p(2 CZ)  p(3 CZ)   predicted")
for theta, probs, arg in rows[::2]:
    bar = "#" * int(20 * probs[arg])
    print(f"  {theta / np.pi:+.2f}     {probs[0]:.3f}    {probs[1]:.3f}    "
          f"{probs[2]:.3f}    {probs[3]:.3f}    {arg}-CZ {bar}")
