"""Dev: CMP convergence on 1000 samples, ACC probes every 5 epochs."""
import time

from kinet.dataio import generate_dataset, split
from kinet.predictor import TrainConfig, train_cmp

data = generate_dataset(1250, seed=11)
parts = split(data, (0.8, 0.1, 0.1), seed=11)
print(f"train={len(parts.train)} val={len(parts.val)} test={len(parts.test)}", flush=True)

cfg = TrainConfig(kind="cmp", case=2, epochs=120, seed=1, acc_every=5)
t0 = time.monotonic()
res = train_cmp(parts, cfg)
dt = time.monotonic() - t0
print(f"total {dt:.1f}s ({dt/120:.2f}s/epoch)", flush=True)
for row in res.log_rows:
    if row["val_acc"] is not None:
        print(f"  ep {row['epoch']:4d} total {row['total']:10.4f} "
          f"illroot {row['illroot']:8.4f} outdom {row['outdom']:10.4f} "
          f"illsolu {row['illsolu']:8.4f} idesolu {row['idesolu']:8.4f} "
          f"train_acc {row['train_acc']:.3f} val_acc {row['val_acc']:.3f}", flush=True)
