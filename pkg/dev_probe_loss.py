"""Dev: is the CMP training loss nonzero, and do parameters move?"""
from kinet.dataio import generate_dataset, split
from kinet.predictor import TrainConfig, init_params, train_cmp

data = generate_dataset(1250, seed=11)
parts = split(data, (0.8, 0.1, 0.1), seed=11)
parts.train[:] = parts.train[:200]

cfg = TrainConfig(kind="cmp", case=1, epochs=3, seed=1, acc_every=1, acc_train_cap=1)
before = [v.value for v in init_params(1, "cmp").flat()]
res = train_cmp(parts, cfg)
after = res.checkpoint.values
drift = max(abs(a - b) for a, b in zip(after, before))
print(f"max param drift over 3 epochs: {drift:.3e}", flush=True)
for r in res.log_rows:
    print({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in r.items()},
          flush=True)
