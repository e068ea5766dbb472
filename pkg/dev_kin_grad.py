import math
import random
import sys

sys.path.insert(0, "tests")
import numpy as np
from oracles import central_difference, se3_inverse_oracle, matrix_to_euler_zyx, euler_zyx_to_matrix

from kinet.kinematics import (
    default_table, fk_chain, analytic_ik, se3_inverse, pose_to_hom,
    hom_to_pose, chassis_to_base, relative_target, MountTransform, Pose6,
    ChassisPose, HomTransform,
)
from kinet.autodiff import Tape, GraphValue, backward, value_of

table = default_table()
mount = MountTransform()
rng = random.Random(42)

# Fixed reachable world target: put the arm somewhere and read off its tool pose
q_wit = [0.4, -1.2, 1.8, -0.5, 1.1, 0.7]
chassis_wit = (0.3, 0.2, -0.1)
H_base = chassis_to_base(chassis_wit, mount)
H_tool = H_base @ fk_chain(q_wit, table)
target = np.array(H_tool.to_floats())


def ik_outputs(params, which):
    """Plain-mode pipeline: chassis params -> selected IK scalar output."""
    psi, x, y = params
    Hb = chassis_to_base((psi, x, y), mount)
    Ht = HomTransform.from_rt([list(r[:3]) for r in target[:3]], [target[0][3], target[1][3], target[2][3]])
    rel = relative_target(Hb, Ht)
    sol = analytic_ik(rel, table)
    kind, idx = which
    if kind == "joint":
        b, j = idx
        return value_of(sol.prewrap[b][j])
    if kind == "eventsum":
        return sum(value_of(e.magnitude) for e in sol.events)
    raise AssertionError


# 1. joint gradients at a chassis placement where IK is clean
point = (0.35, 0.25, -0.15)
with Tape() as tape:
    leaves = [GraphValue(v) for v in point]
    Hb = chassis_to_base(leaves, mount)
    Ht = HomTransform.from_rt([list(r[:3]) for r in target[:3]], [target[0][3], target[1][3], target[2][3]])
    rel = relative_target(Hb, Ht)
    sol = analytic_ik(rel, table)
    worst = 0.0
    n_checked = 0
    for b in sol.valid_branches():
        for j in range(6):
            node = sol.prewrap[b][j]
            if isinstance(node, float):
                continue
            tape.zero_grads()
            for lf in leaves:
                lf.grad = 0.0
            backward(node)
            ad = [lf.grad for lf in leaves]
            cd = central_difference(lambda p: ik_outputs(p, ("joint", (b, j))), list(point))
            for g, c in zip(ad, cd):
                rel_err = abs(g - c) / max(1.0, abs(c))
                worst = max(worst, rel_err)
            n_checked += 1
print(f"joint grads: {n_checked} outputs checked, worst rel err {worst:.3e}")
assert worst < 1e-5

# 2. event-magnitude gradients at an unreachable placement (chassis far away)
far = (0.0, 3.5, 0.0)
with Tape() as tape:
    leaves = [GraphValue(v) for v in far]
    Hb = chassis_to_base(leaves, mount)
    Ht = HomTransform.from_rt([list(r[:3]) for r in target[:3]], [target[0][3], target[1][3], target[2][3]])
    rel = relative_target(Hb, Ht)
    sol = analytic_ik(rel, table)
    mags = [e.magnitude for e in sol.events if not isinstance(e.magnitude, float)]
    print("far events:", len(sol.events), "graph magnitudes:", len(mags))
    assert sol.events, "expected violations at unreachable placement"
    total = mags[0]
    for m in mags[1:]:
        total = total + m
    tape.zero_grads()
    for lf in leaves:
        lf.grad = 0.0
    backward(total)
    ad = [lf.grad for lf in leaves]
cd = central_difference(lambda p: ik_outputs(p, ("eventsum", None)), list(far))
err = max(abs(g - c) / max(1.0, abs(c)) for g, c in zip(ad, cd))
print("event-sum grad ad:", ad, " cd:", cd, " rel err:", err)
assert err < 1e-5

# 3. se3_inverse vs oracle + pose round trips
for _ in range(50):
    pose = Pose6(rng.uniform(-3, 3), rng.uniform(-1.4, 1.4), rng.uniform(-3, 3),
                 rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2))
    H = pose_to_hom(pose)
    Hf = np.array(H.to_floats())
    inv_o = se3_inverse_oracle(Hf)
    inv_m = np.array(se3_inverse(H).to_floats())
    assert np.max(np.abs(inv_o - inv_m)) < 1e-12
    back = hom_to_pose(H)
    R2 = euler_zyx_to_matrix(back.phi, back.theta, back.psi)
    assert np.max(np.abs(R2 - Hf[:3, :3])) < 1e-9, (pose, back)
print("se3_inverse + pose round trips ok")

# 4. wrist-singular target (q5 = 0): the witness shoulder's branches sit in
# the arccos band (flagged + invalidated), the opposite shoulder still
# reproduces the pose, and no DomainError escapes.
q_sing = [0.4, -1.2, 1.8, -0.5, 0.0, 0.7]
H = fk_chain(q_sing, table)
sol = analytic_ik(H, table)
vb = sol.valid_branches()
assert any(sol.wrist_singular)
assert all(not sol.branch_valid[b] for b in range(8) if sol.wrist_singular[b])
ok = False
for b in vb:
    jv = sol.joint_vector(b)
    Hb = np.array(fk_chain(list(jv), table).to_floats())
    if np.max(np.abs(Hb - np.array(H.to_floats()))) < 1e-9:
        ok = True
assert ok, ("wrist-singular pose not reproduced by any valid branch", vb)
print("wrist-singular target handled; valid branches:", vb)
