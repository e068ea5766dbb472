"""Dev smoke: annulus -> dataset -> short train -> accuracy -> resample."""
import time

from kinet.evalbench import accuracy, bench, chassis_verdict, derive_annulus, MethodOutcome
from kinet.dataio import generate_dataset, split
from kinet.predictor import TrainConfig, train_cmp, predict_with_resampling

t0 = time.monotonic()
ann = derive_annulus()
print(f"annulus: r_min={ann.r_min:.6f} r_max={ann.r_max:.6f} flange={ann.flange:.6f}"
      f"  ({time.monotonic()-t0:.2f}s)")

t0 = time.monotonic()
data = generate_dataset(64, seed=7)
print(f"dataset: {len(data.records)} records in {time.monotonic()-t0:.2f}s")
for rec in data.records[:3]:
    v = chassis_verdict(rec.chassis, rec.target)
    print("  verdict:", v.valid, v.reason)

parts = split(data, (0.8, 0.1, 0.1), seed=7)
print(f"split: train={len(parts.train)} val={len(parts.val)} test={len(parts.test)}")

cfg = TrainConfig(kind="cmp", case=2, epochs=3, seed=1, acc_every=1)
t0 = time.monotonic()
res = train_cmp(parts, cfg)
dt = time.monotonic() - t0
print(f"train 3 epochs x {len(parts.train)} recs: {dt:.2f}s ({dt/3:.2f}s/epoch)")
for row in res.log_rows:
    print("  epoch", row["epoch"], "total", f"{row['total']:.4f}",
          "train_acc", row["train_acc"], "val_acc", row["val_acc"])

pr = predict_with_resampling(res.checkpoint, parts.test[0].target, max_attempts=5)
print("resample:", pr.success, "attempts", pr.attempts, "det_fail", pr.deterministic_failure)
