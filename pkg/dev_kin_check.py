import math
import random
import sys

sys.path.insert(0, "tests")
import numpy as np
from oracles import fk_oracle, UR10E_A, UR10E_D, UR10E_ALPHA

from kinet.kinematics import (
    default_table, fk_chain, analytic_ik, ik_feasible, se3_inverse,
    pose_to_hom, hom_to_pose, chassis_to_base, MountTransform, Pose6,
    HomTransform,
)
from kinet.autodiff import GraphMatrix, value_of

table = default_table()

# 1. FK agreement with the numpy oracle on random joints
rng = random.Random(7)
worst = 0.0
for _ in range(200):
    q = [rng.uniform(-math.pi, math.pi) for _ in range(6)]
    H = fk_chain(q, table).to_floats()
    Ho = fk_oracle(q, UR10E_A, UR10E_D, UR10E_ALPHA)
    for i in range(4):
        for j in range(4):
            worst = max(worst, abs(H[i][j] - Ho[i, j]))
print("fk vs oracle worst entry diff:", worst)
assert worst < 1e-12

# 2. IK round-trip: witness q -> FK -> analytic_ik; some branch must both
# reproduce H within 1e-9 AND (for non-degenerate q) match q itself.
fails = 0
exact_misses = 0
branch_hits = [0] * 8
worst_H = 0.0
for trial in range(500):
    q = [rng.uniform(-math.pi + 0.1, math.pi - 0.1) for _ in range(6)]
    # keep away from wrist singularity for the match check
    if abs(math.sin(q[4])) < 0.05:
        continue
    H = fk_chain(q, table)
    sol = analytic_ik(H, table)
    Ho = np.array(H.to_floats())
    got = False
    match_q = False
    for b in sol.valid_branches():
        jv = sol.joint_vector(b)
        Hb = np.array(fk_chain(list(jv), table).to_floats())
        d = np.max(np.abs(Hb - Ho))
        worst_H = max(worst_H, d)
        if d < 1e-9:
            got = True
        if max(abs(((a - c + math.pi) % (2 * math.pi)) - math.pi) for a, c in zip(jv, q)) < 1e-8:
            match_q = True
            branch_hits[b] += 1
    if not got:
        fails += 1
        if fails <= 3:
            print("FAIL q:", [round(v, 3) for v in q])
            print("  valid:", sol.valid_branches(), "events:", [(e.kind, round(value_of(e.magnitude), 6), e.branch) for e in sol.events])
            for b in sol.valid_branches():
                jv = sol.joint_vector(b)
                Hb = np.array(fk_chain(list(jv), table).to_floats())
                print("  b", b, [round(v, 3) for v in jv], "err", np.max(np.abs(Hb - Ho)))
    if not match_q:
        exact_misses += 1
print("roundtrip fails:", fails, " exact q misses:", exact_misses, " worst valid-branch H err:", worst_H)
print("branch hit counts:", branch_hits)
