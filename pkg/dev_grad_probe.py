"""Dev: per-sample dLoss/d(chassis outputs) at a fixed naive predictor.

Bypasses the MLP: treats (psi, x, y) as free leaves at chosen points and asks
whether the CMP loss gradient actually points the chassis toward the target
annulus, and how its magnitude behaves with distance.
"""
import math
import random

from kinet.autodiff import GraphValue, Tape, backward, value_of
from kinet.dataio import generate_dataset
from kinet.evalbench import derive_annulus
from kinet.kinematics import MountTransform, analytic_ik, chassis_to_base, default_table, relative_target
from kinet.losses import LossWeights, loss_cmp

table = default_table()
mount = MountTransform()
reach = derive_annulus(table)
W = LossWeights()
data = generate_dataset(40, seed=23)
rng = random.Random(5)

agree = 0
total = 0
print("offset  |grad_xy|      align(grad->target)   loss")
for dist in (3.0, 2.0, 1.5, 1.0, 0.6, 0.3):
    a_sum = 0.0
    g_sum = 0.0
    l_sum = 0.0
    n = 0
    for rec in data.records[:20]:
        tx, ty = rec.target[3], rec.target[4]
        ang = rng.uniform(-math.pi, math.pi)
        px, py = tx + dist * math.cos(ang), ty + dist * math.sin(ang)
        with Tape():
            psi = GraphValue(rng.uniform(-math.pi, math.pi))
            x = GraphValue(px)
            y = GraphValue(py)
            rel = relative_target(chassis_to_base((psi, x, y), mount), rec.target_hom())
            sol = analytic_ik(rel, table)
            bd = loss_cmp([sol], W)
            backward(bd.total)
        gx, gy = x.grad, y.grad
        # descent direction is -grad; toward-target unit vector:
        ux, uy = (tx - px) / dist, (ty - py) / dist
        gn = math.hypot(gx, gy)
        if gn > 0:
            a_sum += (-gx * ux - gy * uy) / gn
        g_sum += gn
        l_sum += value_of(bd.total)
        n += 1
    print(f"  {dist:.1f}   {g_sum/n:12.2f}   {a_sum/n:+.3f}                {l_sum/n:10.1f}")
