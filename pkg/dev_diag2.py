"""Dev: failure-mode diagnostic for the CMP accuracy plateau."""
import time

from kinet.autodiff import Tape, backward
from kinet.dataio import generate_dataset, split
from kinet.evalbench import annulus_distance, chassis_verdict, derive_annulus, evaluate_model
from kinet.kinematics import MountTransform, default_table
from kinet.losses import LossWeights, loss_cmp
from kinet.predictor import (
    AdamState,
    DropoutSpec,
    TrainConfig,
    _stream,
    adam_step,
    cmp_sample_loss,
    forward_values,
    init_params,
)

data = generate_dataset(1250, seed=11)
parts = split(data, (0.8, 0.1, 0.1), seed=11)
table, mount = default_table(), MountTransform()
reach = derive_annulus(table)
OFF = DropoutSpec(0.0, False, False)

p = init_params(1, "cmp", 2.0)
flat = p.flat()
state = AdamState(len(flat))
d = TrainConfig(kind="cmp", case=2, seed=1).dropout()
drop_rng = _stream(1, "dropout")
order_rng = _stream(1, "order")
records = list(parts.train)
W = LossWeights()


def run_epochs(n, lr):
    for _ in range(n):
        order = list(range(len(records)))
        order_rng.shuffle(order)
        for s in range(0, len(order), 32):
            batch = [records[i] for i in order[s:s + 32]]
            with Tape():
                bd = loss_cmp([cmp_sample_loss(p, r, d, drop_rng, table, mount)
                               for r in batch], W)
                backward(bd.total)
            adam_step(flat, state, lr, (0.9, 0.999), 1e-8)


def probe(tag):
    rep = evaluate_model(p, parts.val, "cmp", table, mount, reach)
    trep = evaluate_model(p, parts.train[:200], "cmp", table, mount, reach)
    print(f"{tag}: val {rep.acc:.3f} {rep.reasons} | train200 {trep.acc:.3f} {trep.reasons}",
          flush=True)


for n, lr in [(30, 1e-3), (20, 3e-4), (20, 1e-4)]:
    t0 = time.monotonic()
    run_epochs(n, lr)
    print(f"{n} epochs @ lr={lr}: {time.monotonic() - t0:.0f}s", flush=True)
    probe(f"after lr={lr}")

print("failure anatomy (val):", flush=True)
for rec in parts.val:
    out = forward_values(p, rec.target, OFF, "infer")
    ch = tuple(out[:3])
    v = chassis_verdict(ch, rec.target, table, mount, reach)
    if not v.valid:
        dist = annulus_distance(ch, rec.target, mount, reach)
        wdist = annulus_distance(rec.chassis, rec.target, mount, reach)
        print(f"  task {rec.task_id:4d} {v.reason:18s} pred_r {dist:7.4f} "
              f"witness_r {wdist:7.4f} band [{reach.r_min:.3f},{reach.r_max:.3f}]",
              flush=True)
