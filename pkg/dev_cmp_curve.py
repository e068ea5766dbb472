"""Dev: per-epoch ACC curves for CMP loss-weight settings."""
import time

from kinet.dataio import generate_dataset, split
from kinet.losses import LossWeights
from kinet.predictor import TrainConfig, train_cmp

data = generate_dataset(1250, seed=11)
parts = split(data, (0.8, 0.1, 0.1), seed=11)

SETTINGS = [
    ("defaults U=1 solu=1,1", LossWeights()),
    ("soft    U=1 solu=.1,.1", LossWeights(delta_illsolu=0.1, delta_idesolu=0.1)),
    ("walls   U=1 solu=0,0", LossWeights(delta_illsolu=0.0, delta_idesolu=0.0)),
    ("cmp2    U=0 solu=1,1", LossWeights(U=0)),
]

for tag, w in SETTINGS:
    cfg = TrainConfig(kind="cmp", case=1, epochs=70, seed=1, weights=w,
                      acc_every=1, acc_train_cap=1)
    t0 = time.monotonic()
    res = train_cmp(parts, cfg)
    dt = time.monotonic() - t0
    curve = [(r["epoch"], r["val_acc"]) for r in res.log_rows if r["val_acc"] is not None]
    best_ep, best = max(curve, key=lambda t: t[1])
    line = " ".join(f"{e}:{a:.3f}" for e, a in curve if e % 5 == 0 or e == best_ep)
    print(f"== {tag}: best {best:.3f} @ep{best_ep}, final {curve[-1][1]:.3f}, "
          f"{dt:.0f}s\n   {line}", flush=True)
