"""Tests for forward kinematics, pose algebra, and the eight-branch inverse."""

import math
import random

import numpy as np
import pytest

from kinet.autodiff import GraphValue, Tape, backward, value_of
from kinet.kinematics import (
    ChassisPose,
    DHTable,
    HomTransform,
    JointVector,
    MountTransform,
    Pose6,
    analytic_ik,
    chassis_to_base,
    default_table,
    dh_link_transform,
    fk_chain,
    hom_to_pose,
    ik_feasible,
    pose_to_hom,
    relative_target,
    se3_inverse,
    verify_fk_probes,
)

from oracles import (
    UR10E_A,
    UR10E_ALPHA,
    UR10E_D,
    central_difference,
    dh_matrix,
    euler_zyx_to_matrix,
    fk_oracle,
    se3_inverse_oracle,
)

TABLE = default_table()


def wrap_diff(a, b):
    return abs(((a - b + math.pi) % (2.0 * math.pi)) - math.pi)


def test_default_table_constants():
    assert TABLE.a == (0.0, -0.6127, -0.57155, 0.0, 0.0, 0.0)
    assert TABLE.d == (0.1807, 0.0, 0.0, 0.17415, 0.11985, 0.11655)
    assert TABLE.is_offset_wrist()


def test_table_hash_stable_and_sensitive():
    h1 = default_table().hash_hex()
    assert h1 == TABLE.hash_hex()
    other = DHTable(a=(0.0, -0.6, -0.57155, 0.0, 0.0, 0.0), d=TABLE.d, alpha=TABLE.alpha)
    assert other.hash_hex() != h1


def test_fk_frozen_probes():
    assert verify_fk_probes(tol=1e-9) < 1e-12


def test_fk_matches_reference_oracle():
    rng = random.Random(11)
    for _ in range(100):
        q = [rng.uniform(-math.pi, math.pi) for _ in range(6)]
        got = np.array(fk_chain(q, TABLE).to_floats())
        want = fk_oracle(q, UR10E_A, UR10E_D, UR10E_ALPHA)
        assert np.max(np.abs(got - want)) < 1e-12


def test_fk_bottom_row_exact():
    H = fk_chain([0.1, 0.2, 0.3, 0.4, 0.5, 0.6], TABLE).to_floats()
    assert H[3] == [0.0, 0.0, 0.0, 1.0]


def test_single_link_matches_oracle():
    got = np.array(dh_link_transform(0.7, -0.6127, 0.05, math.pi / 2).to_floats())
    want = dh_matrix(0.7, -0.6127, 0.05, math.pi / 2)
    assert np.max(np.abs(got - want)) < 1e-15


def test_fk_gradients_against_central_difference():
    def entry(qs, i, j):
        return value_of(fk_chain(qs, TABLE).r(i, j) if j < 3 else fk_chain(qs, TABLE).p(i))

    q0 = [0.4, -1.2, 1.8, -0.5, 1.1, 0.7]
    for (i, j) in ((0, 3), (1, 3), (2, 3), (0, 0), (2, 1)):
        with Tape():
            leaves = [GraphValue(v) for v in q0]
            H = fk_chain(leaves, TABLE)
            node = H.p(i) if j == 3 else H.r(i, j)
            backward(node)
            ad = [lf.grad for lf in leaves]
        cd = central_difference(lambda qs: entry(list(qs), i, j), q0)
        for g, c in zip(ad, cd):
            assert g == pytest.approx(c, abs=1e-6)


def test_pose_round_trip():
    rng = random.Random(5)
    for _ in range(50):
        pose = Pose6(rng.uniform(-3, 3), rng.uniform(-1.4, 1.4), rng.uniform(-3, 3),
                     rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2))
        H = pose_to_hom(pose)
        R = np.array(H.to_floats())[:3, :3]
        assert np.max(np.abs(R - euler_zyx_to_matrix(pose.phi, pose.theta, pose.psi))) < 1e-12
        back = hom_to_pose(H)
        # angles need not match individually, the rotation must
        R2 = euler_zyx_to_matrix(back.phi, back.theta, back.psi)
        assert np.max(np.abs(R2 - R)) < 1e-9
        assert (back.x, back.y, back.z) == (pose.x, pose.y, pose.z)


def test_pose_gimbal_flagged():
    pose = Pose6(0.4, math.pi / 2.0, -0.7, 0.0, 0.0, 0.0)
    back = hom_to_pose(pose_to_hom(pose))
    assert back.gimbal
    assert back.phi == 0.0
    R2 = euler_zyx_to_matrix(back.phi, back.theta, back.psi)
    want = euler_zyx_to_matrix(pose.phi, pose.theta, pose.psi)
    assert np.max(np.abs(R2 - want)) < 1e-9


def test_se3_inverse_matches_oracle():
    H = pose_to_hom(Pose6(0.3, -0.8, 2.1, 0.4, -0.6, 1.1))
    got = np.array(se3_inverse(H).to_floats())
    want = se3_inverse_oracle(np.array(H.to_floats()))
    assert np.max(np.abs(got - want)) < 1e-12


def test_chassis_to_base_geometry():
    mount = MountTransform()
    H = np.array(chassis_to_base(ChassisPose(math.pi / 2.0, 1.0, 2.0), mount).to_floats())
    # base sits 0.4 above the chassis point, heading rotated by psi
    assert H[0][3] == pytest.approx(1.0)
    assert H[1][3] == pytest.approx(2.0)
    assert H[2][3] == pytest.approx(0.4)
    assert H[0][0] == pytest.approx(0.0, abs=1e-15)
    assert H[1][0] == pytest.approx(1.0)


def test_mount_validation():
    with pytest.raises(ValueError):
        MountTransform(matrix=((1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 2)))


def test_relative_target_identity():
    H = pose_to_hom(Pose6(0.2, 0.5, -1.0, 0.3, 0.8, 0.1))
    rel = np.array(relative_target(H, H).to_floats())
    assert np.max(np.abs(rel - np.eye(4))) < 1e-12


def test_joint_vector_legality():
    assert JointVector((0, 1, -1, 3.1, -3.1, 2)).legal()
    assert not JointVector((0, 1, -1, 3.2, 0, 0)).legal()
    with pytest.raises(ValueError):
        JointVector((1, 2, 3))


def test_ik_rejects_foreign_table():
    bad = DHTable(a=(0.1,) * 6, d=(0.1,) * 6, alpha=(0.0,) * 6)
    H = HomTransform.identity()
    with pytest.raises(ValueError):
        analytic_ik(H, bad)


def test_ik_round_trip_reproduces_pose():
    """Every event-free branch must reproduce the target transform to 1e-9."""
    rng = random.Random(23)
    checked = 0
    for _ in range(60):
        q = [rng.uniform(-math.pi + 0.1, math.pi - 0.1) for _ in range(6)]
        if abs(math.sin(q[4])) < 0.05:
            continue
        H = fk_chain(q, TABLE)
        target = np.array(H.to_floats())
        sol = analytic_ik(H, TABLE)
        for b in sol.valid_branches():
            jv = sol.joint_vector(b)
            assert jv.legal()
            back = np.array(fk_chain(list(jv), TABLE).to_floats())
            assert np.max(np.abs(back - target)) < 1e-9
            checked += 1
    assert checked > 100


def test_ik_recovers_witness_branch():
    """Some branch matches the generating joints themselves."""
    rng = random.Random(31)
    hits = [0] * 8
    for _ in range(120):
        q = [rng.uniform(-math.pi + 0.1, math.pi - 0.1) for _ in range(6)]
        if abs(math.sin(q[4])) < 0.05 or math.pi - abs(q[2]) < 0.05:
            continue
        sol = analytic_ik(fk_chain(q, TABLE), TABLE)
        found = False
        for b in sol.valid_branches():
            jv = sol.joint_vector(b)
            if max(wrap_diff(a, c) for a, c in zip(jv, q)) < 1e-8:
                hits[b] += 1
                found = True
        assert found, q
    # all eight sign conventions must actually occur
    assert all(h > 0 for h in hits), hits


def test_ik_unreachable_reports_events():
    H = pose_to_hom(Pose6(0.0, 0.0, 0.0, 3.0, 0.0, 0.5))
    sol = analytic_ik(H, TABLE)
    assert sol.valid_branches() == []
    assert any(e.kind == "outdom" and value_of(e.magnitude) > 0 for e in sol.events)
    kinds = {(e.kind, e.branch) for e in sol.events}
    assert len({b for _, b in kinds}) == 8


def test_ik_wrist_singular_pinned_and_flagged():
    q = [0.4, -1.2, 1.8, -0.5, 0.0, 0.7]
    H = fk_chain(q, TABLE)
    sol = analytic_ik(H, TABLE)
    assert any(sol.wrist_singular)
    for b in range(8):
        if sol.wrist_singular[b]:
            assert not sol.branch_valid[b]
            assert value_of(sol.joints[b][5]) == 0.0
    target = np.array(H.to_floats())
    assert any(
        np.max(np.abs(np.array(fk_chain(list(sol.joint_vector(b)), TABLE).to_floats()) - target)) < 1e-9
        for b in sol.valid_branches()
    )


def test_ik_shoulder_singular_flag():
    # tool z along world z at x = y = 0: the wrist point lands exactly on
    # the base axis, so the shoulder equation degenerates
    H = pose_to_hom(Pose6(0.0, 0.0, 0.0, 0.0, 0.0, 1.2))
    sol = analytic_ik(H, TABLE)
    assert sol.shoulder_singular
    assert sol.valid_branches() == []


def test_ik_feasible_agrees_with_fk():
    q = [0.5, -1.0, 1.2, -0.3, 0.9, -0.4]
    H = fk_chain(q, TABLE)
    ok, jv = ik_feasible(H, TABLE)
    assert ok
    back = np.array(fk_chain(list(jv), TABLE).to_floats())
    assert np.max(np.abs(back - np.array(H.to_floats()))) < 1e-9
    far = pose_to_hom(Pose6(0.0, 0.0, 0.0, 4.0, 0.0, 0.3))
    ok, jv = ik_feasible(far, TABLE)
    assert not ok and jv is None


def test_ik_joint_gradients():
    """Reverse-mode grads through chassis -> relative pose -> IK match FD."""
    mount = MountTransform()
    q_wit = [0.4, -1.2, 1.8, -0.5, 1.1, 0.7]
    H_tool = chassis_to_base((0.3, 0.2, -0.1), mount) @ fk_chain(q_wit, TABLE)
    target = np.array(H_tool.to_floats())

    def tgt_hom():
        return HomTransform.from_rt([list(r[:3]) for r in target[:3]],
                                    [target[0][3], target[1][3], target[2][3]])

    def joint_value(params, b, j):
        rel = relative_target(chassis_to_base(tuple(params), mount), tgt_hom())
        return value_of(analytic_ik(rel, TABLE).prewrap[b][j])

    point = (0.35, 0.25, -0.15)
    with Tape() as tape:
        leaves = [GraphValue(v) for v in point]
        rel = relative_target(chassis_to_base(leaves, mount), tgt_hom())
        sol = analytic_ik(rel, TABLE)
        assert sol.valid_branches()
        for b in sol.valid_branches()[:2]:
            for j in (0, 2, 4):
                node = sol.prewrap[b][j]
                tape.zero_grads()
                for lf in leaves:
                    lf.grad = 0.0
                backward(node)
                cd = central_difference(lambda p: joint_value(p, b, j), list(point))
                for lf, c in zip(leaves, cd):
                    assert lf.grad == pytest.approx(c, abs=1e-6)
