# A small end-to-end run: simulate, split, train, then predict and compare kernels.
# Scaled down to finish in seconds; the acceptance suite runs the full-size version.
import numpy as np

from sghp import appendix_a_spec, simulate_dataset, split_dataset
from sghp.evaluation import (constant_baseline_rmse, f1_micro_last_event, kernel_recovery,
                             rmse_last_event)
from sghp.training import TrainConfig, train

spec = appendix_a_spec()
ds = simulate_dataset(spec, 200, horizon=44.0, seed=1, min_length=2)
tr, va, te = split_dataset(ds, (0.8, 0.1, 0.1), seed=0)
print("split sizes", len(tr), len(va), len(te))

cfg = TrainConfig(dim=8, num_samples=5, max_epochs=8, lr=5e-3)
params, report = train(tr, va, cfg, on_epoch=lambda e, a, b: print(f"epoch {e}: train {a:.3f}  val {b:.3f}"))
print("parameters", report.parameter_count, " best epoch", report.best_epoch)

print(f"last-event gap RMSE {rmse_last_event(te, params):.3f}"
      f"  (per-type constant baseline {constant_baseline_rmse(tr, te):.3f})")
print(f"last-event type micro-F1 {f1_micro_last_event(te, params):.3f}")

for row in kernel_recovery(params, spec):
    u, v = row.pair
    print(f"q_{u + 1}{v + 1}: peak-normalised L-inf {row.linf:.3f}, learned peak {row.learned_peak:.2f}, "
          f"true peak {row.truth_peak:.2f}")
