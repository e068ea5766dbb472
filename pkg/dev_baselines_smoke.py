"""Dev: DLS basin test, sampler acceptance rates, method timing estimates."""
import math
import random
import time

from kinet.baselines import (
    DLSConfig, SamplerConfig, biased_sample_chassis, dls_seed, jacobian_dls_ik,
    random_sample_chassis,
)
from kinet.evalbench import chassis_verdict, derive_annulus
from kinet.kinematics import default_table, fk_chain, ik_feasible, pose_to_hom, hom_to_pose
from kinet.dataio import generate_dataset

table = default_table()
reach = derive_annulus(table)
rng = random.Random(3)

# DLS basin: target = FK(q0), seed = q0 + small noise
hits = 0
t0 = time.monotonic()
iters_used = []
for k in range(20):
    q0 = [rng.uniform(-2.5, 2.5) for _ in range(6)]
    if abs(math.sin(q0[4])) < 0.1:
        q0[4] = 0.5
    H = fk_chain(q0, table)
    seed = tuple(q + rng.uniform(-0.2, 0.2) for q in q0)
    jv = jacobian_dls_ik(H, seed, DLSConfig(), table)
    if jv is not None:
        Hs = fk_chain(list(jv), table).to_floats()
        Ht = H.to_floats()
        err = math.sqrt(sum((Hs[i][3] - Ht[i][3]) ** 2 for i in range(3)))
        hits += err < 1e-4
dt = time.monotonic() - t0
print(f"DLS basin: {hits}/20 converged, {dt/20*1000:.1f} ms/solve")

# DLS from generic fixed seed on dataset-like relative targets
data = generate_dataset(30, seed=5)
ok_fixed = 0
t0 = time.monotonic()
from kinet.kinematics import MountTransform, chassis_to_base, relative_target
mount = MountTransform()
for rec in data.records:
    rel = relative_target(chassis_to_base(rec.chassis, mount), pose_to_hom(rec.target))
    jv = jacobian_dls_ik(rel, dls_seed(DLSConfig(), rng), DLSConfig(), table)
    ok_fixed += jv is not None
dt = time.monotonic() - t0
print(f"DLS fixed-seed on witness chassis: {ok_fixed}/30, {dt/30*1000:.1f} ms/solve")

# sampler acceptance vs box size
for half in (2.0, 4.0, 6.0):
    cfg = SamplerConfig(half_x=half, half_y=half)
    acc = 0
    n = 0
    t0 = time.monotonic()
    for rec in data.records[:20]:
        for _ in range(60):
            c = random_sample_chassis(cfg, rec.target, rng)
            acc += chassis_verdict(c, rec.target, table, mount, reach).valid
            n += 1
    dt = (time.monotonic() - t0) / n * 1000.0
    print(f"RS box {2*half:.0f}x{2*half:.0f}: acceptance {acc/n:.4f} "
          f"(mean attempts ~{n/max(acc,1):.1f}), verdict+draw {dt:.3f} ms")

for sigma in (0.4, 0.7, 1.0, 1.4):
    cfg = SamplerConfig(heading="facing", ebs_sigma=sigma)
    acc = 0
    n = 0
    for rec in data.records[:20]:
        for _ in range(60):
            c = biased_sample_chassis(cfg, rec.target, rng, reach)
            acc += chassis_verdict(c, rec.target, table, mount, reach).valid
            n += 1
    print(f"EBS sigma {sigma}: acceptance {acc/n:.4f} (mean attempts ~{n/max(acc,1):.1f})")

# plain verdict / ik timing
t0 = time.monotonic()
m = 0
for rec in data.records:
    for _ in range(30):
        c = random_sample_chassis(SamplerConfig(), rec.target, rng)
        chassis_verdict(c, rec.target, table, mount, reach)
        m += 1
print(f"chassis_verdict mean {(time.monotonic()-t0)/m*1000:.3f} ms over {m}")
