"""Dev: NN-regression plateau, resampled attempts, and EBS sigma sweep."""
import random
import time

from kinet.baselines import (
    SamplerConfig,
    make_ebs_method,
    make_network_method,
    make_rs_method,
    nn_regression_train,
)
from kinet.dataio import DatasetFile, split
from kinet.evalbench import derive_annulus, evaluate_model
from kinet.kinematics import MountTransform, default_table
from kinet.predictor import TrainConfig

data = DatasetFile.load("dev_data4000.txt")
parts = split(data, (0.8, 0.1, 0.1), seed=21)
table, mount = default_table(), MountTransform()
reach = derive_annulus(table)

cfg = TrainConfig(kind="cmp", case=2, epochs=200, seed=1, acc_every=5, acc_train_cap=1)
t0 = time.monotonic()
res = nn_regression_train(parts, cfg)
dt = time.monotonic() - t0
curve = [(r["epoch"], r["val_acc"]) for r in res.log_rows if r["val_acc"] is not None]
best_ep, best = max(curve, key=lambda t: t[1])
print(f"nnreg: best {best:.3f} @ep{best_ep}, final {curve[-1][1]:.3f}, "
      f"{dt:.0f}s ({dt / cfg.epochs:.2f}s/ep)", flush=True)
print("   " + " ".join(f"{e}:{a:.3f}" for e, a in curve if e % 10 == 0), flush=True)

p = res.checkpoint.to_params()
rep = evaluate_model(p, parts.test, "cmp", table, mount, reach)
print(f"test single-attempt ACC {rep.acc:.3f} {rep.reasons}", flush=True)


def attempts_over(method, tag, tasks):
    outs = [method(r.target, random.Random(f"dev/{tag}/{r.task_id}")) for r in tasks]
    n = len(outs)
    mean = sum(o.attempts for o in outs) / n
    succ = sum(o.valid for o in outs) / n
    capped = sum(1 for o in outs if not o.valid)
    print(f"{tag:14s} mean attempts {mean:6.2f}  success {succ:.3f}  "
          f"capped/failed {capped}/{n}", flush=True)
    return mean


tasks = parts.test
attempts_over(make_network_method(res.checkpoint, 20), "nnreg x20", tasks)
attempts_over(make_rs_method(SamplerConfig(seed=0), 200), "rs", tasks)
for sig in (1.0, 1.5, 2.0, 3.0):
    attempts_over(make_ebs_method(SamplerConfig(heading="facing", ebs_sigma=sig), 200),
                  f"ebs s={sig}", tasks)
