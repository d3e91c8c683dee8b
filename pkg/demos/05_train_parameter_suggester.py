"""Train a parameter suggester: encoder + fixed differentiable decoder.

The encoder is a complex-valued dense net mapping a unitary to one head
pair per template slot.  The decoder is not learned: it is the template
simulation itself, so training maximizes reconstruction fidelity directly
and no parameter labels are ever needed.
"""

import numpy as np

from czsynth import tasks, templates

t = templates.enumerate_templates(2, 3)[0]  # 0-CZ template (local unitaries)
print(f"template {t.id}: {t.n_cz} CZ, {templates.param_count(t)} angles")

config = tasks.TrainConfig(steps=2500, batch_size=64, seed=3,
                           hidden=(256, 256), lr=1e-3, log_interval=500)
print("training: 2500 steps, batch 64 ...")
enc, curve = tasks.train_suggester(t, config, family_hash="demo")
for step, fid in curve:
    print(f"  step {step:5d}  mean reconstruction fidelity {fid:.4f}")

report = tasks.eval_suggester(enc, t, n_samples=200, seed=999)
print(f"\nstart fidelity, encoder suggestion: {report.mean_model:.4f}")
print(f"start fidelity, random angles:      {report.mean_random:.4f}")
qs = report.quantiles()
print(f"suggester quantiles (5/25/50/75/95%): "
      f"{np.round(qs['model'], 3).tolist()}")
