"""Dev: FMP convergence at 3200 training samples."""
import math
import os
import time

from kinet.dataio import DatasetFile, generate_dataset, split
from kinet.evalbench import derive_annulus, evaluate_model, fmp_verdict
from kinet.kinematics import MountTransform, chassis_to_base, default_table, fk_chain
from kinet.predictor import DropoutSpec, TrainConfig, forward_values, train_fmp

CACHE = "dev_data4000.txt"
if os.path.exists(CACHE):
    data = DatasetFile.load(CACHE)
else:
    t0 = time.monotonic()
    data = generate_dataset(4000, seed=21)
    data.save(CACHE)
    print(f"generated 4000 in {time.monotonic() - t0:.0f}s", flush=True)

parts = split(data, (0.8, 0.1, 0.1), seed=21)
table, mount = default_table(), MountTransform()
reach = derive_annulus(table)
OFF = DropoutSpec(0.0, False, False)

cfg = TrainConfig(kind="fmp", case=1, epochs=80, seed=1, acc_every=2, acc_train_cap=1)
t0 = time.monotonic()
res = train_fmp(parts, cfg)
dt = time.monotonic() - t0
curve = [(r["epoch"], r["val_acc"]) for r in res.log_rows if r["val_acc"] is not None]
best_ep, best = max(curve, key=lambda t: t[1])
print(f"fmp: best {best:.3f} @ep{best_ep}, final {curve[-1][1]:.3f}, "
      f"{dt:.0f}s ({dt / cfg.epochs:.1f}s/ep)", flush=True)
print("   " + " ".join(f"{e}:{a:.3f}" for e, a in curve), flush=True)

p = res.checkpoint.to_params()
rep = evaluate_model(p, parts.val, "fmp", table, mount, reach)
errs = []
for rec in parts.val:
    out = forward_values(p, rec.target, OFF, "infer")
    v = fmp_verdict(tuple(out[:3]), tuple(out[3:]), rec.target, table, mount, reach)
    if v.valid:
        H = chassis_to_base(tuple(out[:3]), mount) @ fk_chain(list(out[3:]), table)
        h, t = H.to_floats(), rec.target_hom.to_floats()
        errs.append(math.sqrt(sum((h[i][3] - t[i][3]) ** 2 for i in range(3))))
errs.sort()
med = errs[len(errs) // 2] if errs else float("nan")
print(f"val validity {rep.acc:.3f} {rep.reasons} | median pos err on successes "
      f"{med * 1000:.3f} mm over {len(errs)}", flush=True)
