"""Dev: why does CMP stall? Inspect predictions, saturation, lr variants."""
import math
import sys
import time

from kinet.dataio import generate_dataset, split
from kinet.evalbench import chassis_verdict, derive_annulus, evaluate_model
from kinet.kinematics import MountTransform, default_table
from kinet.predictor import TrainConfig, train_cmp, forward_values, DropoutSpec

table = default_table()
mount = MountTransform()
reach = derive_annulus(table)

data = generate_dataset(380, seed=11)
parts = split(data, (0.8, 0.1, 0.1), seed=11)

lr = float(sys.argv[1]) if len(sys.argv) > 1 else 1e-3
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 40

cfg = TrainConfig(kind="cmp", case=2, epochs=epochs, seed=1, acc_every=5,
                  learning_rate=lr)
t0 = time.monotonic()
res = train_cmp(parts, cfg)
print(f"lr={lr} epochs={epochs} took {time.monotonic()-t0:.0f}s")
for row in res.log_rows:
    if row["val_acc"] is not None:
        print(f"  ep {row['epoch']:3d} total {row['total']:11.2f} "
              f"outdom {row['outdom']:9.2f} illsolu {row['illsolu']:10.2f} "
              f"acc {row['train_acc']:.3f}/{row['val_acc']:.3f}")

p = res.checkpoint.to_params()
off = DropoutSpec(0.0, False, False)
print("\npredictions vs targets (test):")
for rec in parts.test[:8]:
    out = forward_values(p, rec.target, off, "infer")
    tx, ty = rec.target[3], rec.target[4]
    d = math.hypot(out[1] - tx, out[2] - ty)
    v = chassis_verdict(tuple(out[:3]), rec.target, table, mount, reach)
    print(f"  target ({tx:+.2f},{ty:+.2f}) pred psi {out[0]:+.2f} "
          f"xy ({out[1]:+.2f},{out[2]:+.2f}) |xy-t| {d:.3f} "
          f"[{reach.r_min:.2f},{reach.r_max:.2f}] -> {v.reason}")

# hidden saturation fractions
from kinet.autodiff import Tape, value_of
from kinet.predictor import mlp_forward
import kinet.predictor as P
sat1 = sat2 = n1 = n2 = 0
with Tape():
    for rec in parts.test[:20]:
        x = P.normalize_input(rec.target, p.pos_scale)
        (W1, b1), (W2, b2), (W3, b3) = p.layers
        from kinet.autodiff import dot, tanh
        h1 = [tanh(dot(x, W1[i], b1[i])) for i in range(len(b1))]
        h2 = [tanh(dot(h1, W2[i], b2[i])) for i in range(len(b2))]
        sat1 += sum(abs(value_of(h)) > 0.99 for h in h1); n1 += len(h1)
        sat2 += sum(abs(value_of(h)) > 0.99 for h in h2); n2 += len(h2)
print(f"saturation: h1 {sat1/n1:.2%}  h2 {sat2/n2:.2%}")
w1m = max(abs(v.value) for row in p.layers[0][0] for v in row)
w3m = max(abs(v.value) for row in p.layers[2][0] for v in row)
print(f"max |W1| {w1m:.2f}  max |W3| {w3m:.2f}")
