"""Forward and analytic inverse kinematics for offset-wrist six-axis arms.

All operations run generically over plain floats or autodiff GraphValues from
the same source: instrumented mode is used while training (gradients plus
domain-violation events), plain mode everywhere feasibility is merely checked.

Conventions: standard Denavit-Hartenberg link matrices
Rz(theta) Tz(d) Tx(a) Rx(alpha); Euler angles are Z-Y-X (yaw psi about z,
pitch theta about y, roll phi about x); joint angles are wrapped into
(-pi, pi] with the raw analytic value retained for the out-of-range penalty.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from .autodiff import (
    ACOS_DELTA,
    BranchEvent,
    GraphMatrix,
    Scalar,
    acos_extended,
    atan2_diff,
    cos,
    linear_combination,
    sin,
    sqrt_guarded,
    value_of,
    wrap_angle,
)

HALF_PI = math.pi / 2.0

# |sin q5| below this is treated as a wrist singularity (q6 := 0).
WRIST_SINGULAR_BAND = 1e-6
# Planar wrist radius below this is treated as a shoulder-axis singularity.
SHOULDER_SINGULAR_BAND = 1e-9
# |cos pitch| below this makes the Euler extraction gimbal-degenerate.
GIMBAL_BAND = 1e-8


def _fmt(values) -> str:
    return ",".join(f"{float(v):.17g}" for v in values)


@dataclass(frozen=True)
class DHTable:
    """Six rows of standard DH constants (a, d, alpha per joint)."""

    a: tuple
    d: tuple
    alpha: tuple

    def __post_init__(self):
        for name in ("a", "d", "alpha"):
            vals = getattr(self, name)
            if len(vals) != 6:
                raise ValueError(f"DH column '{name}' needs 6 entries, got {len(vals)}")
            object.__setattr__(self, name, tuple(float(v) for v in vals))

    def hash_hex(self) -> str:
        text = f"a={_fmt(self.a)};d={_fmt(self.d)};alpha={_fmt(self.alpha)}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def is_offset_wrist(self, tol: float = 1e-9) -> bool:
        """Whether the closed-form eight-branch solution applies."""
        pattern = (HALF_PI, 0.0, 0.0, HALF_PI, -HALF_PI, 0.0)
        if any(abs(al - p) > tol for al, p in zip(self.alpha, pattern)):
            return False
        if any(abs(self.a[i]) > tol for i in (0, 3, 4, 5)):
            return False
        if abs(self.d[1]) > tol or abs(self.d[2]) > tol:
            return False
        return abs(self.a[1]) > tol and abs(self.a[2]) > tol and abs(self.d[5]) > tol


def default_table() -> DHTable:
    """UR10e-class geometry used throughout as the default arm."""
    return DHTable(
        a=(0.0, -0.6127, -0.57155, 0.0, 0.0, 0.0),
        d=(0.1807, 0.0, 0.0, 0.17415, 0.11985, 0.11655),
        alpha=(HALF_PI, 0.0, 0.0, HALF_PI, -HALF_PI, 0.0),
    )


class HomTransform:
    """4x4 homogeneous transform over mixed scalars; bottom row stays exact."""

    __slots__ = ("m",)

    def __init__(self, m: GraphMatrix):
        if m.rows != 4 or m.cols != 4:
            raise ValueError("HomTransform needs a 4x4 matrix")
        self.m = m

    @classmethod
    def from_rt(cls, r: list, p: list) -> "HomTransform":
        rows = [list(r[i]) + [p[i]] for i in range(3)] + [[0.0, 0.0, 0.0, 1.0]]
        return cls(GraphMatrix.from_rows(rows))

    @classmethod
    def identity(cls) -> "HomTransform":
        return cls(GraphMatrix.identity(4))

    def r(self, i: int, j: int) -> Scalar:
        return self.m.at(i, j)

    def p(self, i: int) -> Scalar:
        return self.m.at(i, 3)

    def rotation_rows(self) -> list:
        return [[self.m.at(i, j) for j in range(3)] for i in range(3)]

    def translation(self) -> list:
        return [self.m.at(i, 3) for i in range(3)]

    def __matmul__(self, other: "HomTransform") -> "HomTransform":
        return HomTransform(self.m @ other.m)

    def to_floats(self) -> list:
        return self.m.to_floats()

    def orthonormality_defect(self) -> float:
        """Max |(R^T R - I)| entry, plain arithmetic."""
        R = [[value_of(self.m.at(i, j)) for j in range(3)] for i in range(3)]
        worst = 0.0
        for i in range(3):
            for j in range(3):
                s = sum(R[k][i] * R[k][j] for k in range(3)) - (1.0 if i == j else 0.0)
                worst = max(worst, abs(s))
        return worst


def se3_inverse(H: HomTransform) -> HomTransform:
    """Proper rigid-transform inverse [R^T, -R^T d]."""
    R = H.rotation_rows()
    p = H.translation()
    rt = [[R[j][i] for j in range(3)] for i in range(3)]
    pt = [-linear_combination([(rt[i][k], p[k]) for k in range(3)]) for i in range(3)]
    return HomTransform.from_rt(rt, pt)


@dataclass(frozen=True)
class Pose6:
    """Six-dof pose: Z-Y-X Euler angles (roll phi, pitch theta, yaw psi) + position."""

    phi: float
    theta: float
    psi: float
    x: float
    y: float
    z: float
    gimbal: bool = field(default=False, compare=False)

    def as_tuple(self) -> tuple:
        return (self.phi, self.theta, self.psi, self.x, self.y, self.z)


@dataclass(frozen=True)
class ChassisPose:
    """Planar base placement: heading psi, position x, y (z = 0 by construction)."""

    psi: float
    x: float
    y: float

    def as_tuple(self) -> tuple:
        return (self.psi, self.x, self.y)


@dataclass(frozen=True)
class JointVector:
    q: tuple

    def __post_init__(self):
        if len(self.q) != 6:
            raise ValueError("JointVector needs 6 angles")
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))

    def legal(self, limit: float = math.pi) -> bool:
        return all(abs(v) <= limit for v in self.q)

    def __iter__(self):
        return iter(self.q)


@dataclass(frozen=True)
class MountTransform:
    """Fixed chassis-to-arm-base transform; default is a 0.4 m vertical post."""

    matrix: tuple = (
        (1.0, 0.0, 0.0, 0.0),
        (0.0, 1.0, 0.0, 0.0),
        (0.0, 0.0, 1.0, 0.4),
        (0.0, 0.0, 0.0, 1.0),
    )

    def __post_init__(self):
        m = tuple(tuple(float(v) for v in row) for row in self.matrix)
        if len(m) != 4 or any(len(r) != 4 for r in m):
            raise ValueError("mount matrix must be 4x4")
        if m[3] != (0.0, 0.0, 0.0, 1.0):
            raise ValueError("mount bottom row must be (0,0,0,1)")
        object.__setattr__(self, "matrix", m)

    def hom(self) -> HomTransform:
        return HomTransform(GraphMatrix.from_rows([list(r) for r in self.matrix]))

    def hash_hex(self) -> str:
        return hashlib.sha256(_fmt(v for r in self.matrix for v in r).encode()).hexdigest()[:16]


def dh_link_transform(theta: Scalar, a: float, d: float, alpha: float) -> HomTransform:
    """Single standard-DH link matrix for joint angle theta."""
    ct, st = cos(theta), sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    rows = [
        [ct, st * -ca, st * sa],
        [st, ct * ca, ct * -sa],
        [0.0, sa, ca],
    ]
    return HomTransform.from_rt(rows, [ct * a, st * a, d])


def fk_chain(q, table: DHTable) -> HomTransform:
    """Tool pose in the arm-base frame for six joint angles."""
    if len(q) != 6:
        raise ValueError("fk_chain needs 6 joint angles")
    H = dh_link_transform(q[0], table.a[0], table.d[0], table.alpha[0])
    for i in range(1, 6):
        H = H @ dh_link_transform(q[i], table.a[i], table.d[i], table.alpha[i])
    return H


def pose_to_hom(pose) -> HomTransform:
    """Homogeneous transform from (phi, theta, psi, x, y, z), scalars allowed."""
    if isinstance(pose, Pose6):
        phi, theta, psi, x, y, z = pose.as_tuple()
    else:
        phi, theta, psi, x, y, z = pose
    cps, sps = cos(psi), sin(psi)
    cth, sth = cos(theta), sin(theta)
    cph, sph = cos(phi), sin(phi)
    rows = [
        [cps * cth, cps * (sth * sph) - sps * cph, cps * (sth * cph) + sps * sph],
        [sps * cth, sps * (sth * sph) + cps * cph, sps * (sth * cph) - cps * sph],
        [-sth, cth * sph, cth * cph],
    ]
    return HomTransform.from_rt(rows, [x, y, z])


def hom_to_pose(H: HomTransform):
    """Z-Y-X Euler extraction; returns Pose6 in plain mode, scalar 6-tuple in graph mode.

    Near pitch = +/- pi/2 (|cos theta| < GIMBAL_BAND) roll is pinned to zero
    and the degenerate yaw/roll combination lands in psi; the result is
    flagged via Pose6.gimbal (plain mode).
    """
    r00, r10, r20 = H.r(0, 0), H.r(1, 0), H.r(2, 0)
    r21, r22 = H.r(2, 1), H.r(2, 2)
    cth = sqrt_guarded(square_sum(r00, r10))
    degenerate = value_of(cth) < GIMBAL_BAND
    if degenerate:
        # sin(theta) = -r20 is +/-1; only psi -/+ phi is observable. Take phi = 0.
        theta = atan2_diff(-r20, 0.0)
        psi = atan2_diff(-H.r(0, 1), H.r(1, 1))
        phi = 0.0
    else:
        theta = atan2_diff(-r20, cth)
        psi = atan2_diff(r10, r00)
        phi = atan2_diff(r21, r22)
    x, y, z = H.translation()
    if any(not isinstance(v, float) for v in (phi, theta, psi, x, y, z)):
        return (phi, theta, psi, x, y, z)
    return Pose6(phi, theta, psi, x, y, z, gimbal=degenerate)


def square_sum(a: Scalar, b: Scalar) -> Scalar:
    return a * a + b * b


def chassis_hom(psi: Scalar, x: Scalar, y: Scalar) -> HomTransform:
    """Planar chassis pose as a transform (rotation about world z, z = 0)."""
    c, s = cos(psi), sin(psi)
    rows = [
        [c, -s, 0.0],
        [s, c, 0.0],
        [0.0, 0.0, 1.0],
    ]
    return HomTransform.from_rt(rows, [x, y, 0.0])


def chassis_to_base(chassis, mount: MountTransform) -> HomTransform:
    """World pose of the arm base for a chassis placement."""
    if isinstance(chassis, ChassisPose):
        psi, x, y = chassis.as_tuple()
    else:
        psi, x, y = chassis
    return chassis_hom(psi, x, y) @ mount.hom()


def relative_target(H_pred: HomTransform, H_tar: HomTransform) -> HomTransform:
    """Target pose re-expressed in the predicted arm-base frame."""
    return se3_inverse(H_pred) @ H_tar


class SolutionSet:
    """All eight closed-form branches for one target, with instrumentation.

    Branch index packs the three binary choices as 4*shoulder + 2*wrist +
    elbow (0 = the '+' sign of each stage's arccos). joints holds wrapped
    angles, prewrap the raw analytic values whose excess beyond pi feeds the
    out-of-range loss. branch_valid[i] is False exactly when at least one
    guarded-op event is attributed to branch i.
    """

    __slots__ = ("joints", "prewrap", "branch_valid", "events",
                 "wrist_singular", "shoulder_singular")

    def __init__(self):
        self.joints: list = [None] * 8
        self.prewrap: list = [None] * 8
        self.branch_valid = [True] * 8
        self.events: list = []
        self.wrist_singular = [False] * 8
        self.shoulder_singular = False

    def attribute(self, raw_events: list, branches) -> None:
        for ev in raw_events:
            for b in branches:
                self.events.append(BranchEvent(ev.kind, ev.magnitude, b))
                self.branch_valid[b] = False

    def joint_vector(self, i: int) -> JointVector:
        return JointVector(tuple(value_of(v) for v in self.joints[i]))

    def valid_branches(self) -> list:
        return [i for i in range(8) if self.branch_valid[i]]


def analytic_ik(H: HomTransform, table: DHTable, delta: float = ACOS_DELTA) -> SolutionSet:
    """Closed-form eight-branch inverse kinematics of the offset-wrist family.

    Never raises on unreachable poses: guarded square roots and the extended
    arccos keep every branch numerically alive and report violations as
    BranchEvents attributed to the branches that consume the offending stage,
    so event magnitudes stay differentiable for training.
    """
    if not table.is_offset_wrist():
        raise ValueError("DH table outside the solvable offset-wrist family")
    d1, d4, d5, d6 = table.d[0], table.d[3], table.d[4], table.d[5]
    a2, a3 = table.a[1], table.a[2]

    r = [[H.r(i, j) for j in range(3)] for i in range(3)]
    px, py, pz = H.translation()

    sol = SolutionSet()

    # Wrist point and the shoulder equation, shared by all branches.
    p5x = px - d6 * r[0][2]
    p5y = py - d6 * r[1][2]
    radial_sq = square_sum(p5x, p5y)
    radial = sqrt_guarded(radial_sq)
    if value_of(radial) < SHOULDER_SINGULAR_BAND:
        sol.shoulder_singular = True
        gamma = 0.0
        u1 = d4 / (radial + SHOULDER_SINGULAR_BAND)
    else:
        gamma = atan2_diff(p5y, p5x)
        u1 = d4 / radial
    shared_events: list = []
    phi1 = acos_extended(u1, delta, shared_events)
    sol.attribute(shared_events, range(8))

    for s in (0, 1):
        q1_pre = gamma + HALF_PI + (phi1 if s == 0 else -phi1)
        q1 = wrap_angle(q1_pre)
        s1, c1 = sin(q1), cos(q1)

        # Target re-expressed in frame 1, whose x-axis is horizontal-radial
        # and whose y-axis is world z: the y-row of the rotation is row 2 of
        # the input, reused as is; only the x-row needs new nodes.
        xrow = [c1 * r[0][j] + s1 * r[1][j] for j in range(3)]
        yrow = r[2]
        p16x = c1 * px + s1 * py
        p16y = pz - d1
        lateral = px * s1 - py * c1

        wrist_events: list = []
        u5 = (lateral - d4) / d6
        phi5 = acos_extended(u5, delta, wrist_events)
        sol.attribute(wrist_events, range(4 * s, 4 * s + 4))

        for w in (0, 1):
            q5_pre = phi5 if w == 0 else -phi5
            q5 = wrap_angle(q5_pre)
            s5, c5 = sin(q5), cos(q5)
            # Components of the tool x/y axes along the joint-1 lateral axis
            # vanish together exactly at the wrist singularity, where q6 is
            # unobservable and gets pinned to zero.
            c6num = r[0][0] * s1 - r[1][0] * c1
            s6num = r[1][1] * c1 - r[0][1] * s1
            wrist_singular = (abs(value_of(s5)) < WRIST_SINGULAR_BAND
                              or (abs(value_of(c6num)) < 1e-9
                                  and abs(value_of(s6num)) < 1e-9))
            if wrist_singular:
                q6_pre = 0.0
            else:
                q6_pre = atan2_diff(s6num / s5, c6num / s5)
            q6 = wrap_angle(q6_pre)
            s6, c6 = sin(q6), cos(q6)

            # Frame-4 origin and x-axis seen from frame 1. The inverse of the
            # wrist pair T45 T56 has the closed-form translation below.
            t64 = (d5 * s6, d5 * c6, -d6)
            x46 = (c5 * c6, -(c5 * s6), -s5)
            p14x = p16x + linear_combination(list(zip(xrow, t64)))
            p14y = p16y + linear_combination(list(zip(yrow, t64)))
            x14x = linear_combination(list(zip(xrow, x46)))
            x14y = linear_combination(list(zip(yrow, x46)))

            planar_sq = square_sum(p14x, p14y)
            planar = sqrt_guarded(planar_sq)
            u3 = (planar_sq - (a2 * a2 + a3 * a3)) / (2.0 * a2 * a3)
            elbow_events: list = []
            phi3 = acos_extended(u3, delta, elbow_events)
            base = 4 * s + 2 * w
            sol.attribute(elbow_events, (base, base + 1))
            if value_of(p14x) == 0.0 and value_of(p14y) == 0.0:
                gamma2 = 0.0
            else:
                gamma2 = atan2_diff(p14y, p14x)
            q234 = atan2_diff(x14y, x14x)
            den = planar if value_of(planar) > 1e-12 else planar + 1e-12

            for e in (0, 1):
                q3_pre = phi3 if e == 0 else -phi3
                s3, c3 = sin(q3_pre), cos(q3_pre)
                branch_events: list = []
                w_arg = a3 * s3 / den
                beta = atan2_diff(w_arg, sqrt_guarded(1.0 - square_sum(w_arg, 0.0), branch_events))
                if value_of(a2 + a3 * c3) < 0.0:
                    q2_pre = gamma2 - math.pi + beta
                else:
                    q2_pre = gamma2 - beta
                q4_pre = q234 - q2_pre - q3_pre
                b = base + e
                sol.attribute(branch_events, (b,))
                sol.wrist_singular[b] = wrist_singular
                pre = (q1_pre, q2_pre, q3_pre, q4_pre, q5_pre, q6_pre)
                sol.prewrap[b] = pre
                sol.joints[b] = tuple(wrap_angle(v) for v in pre)
    return sol


# Three fixed joint probes with their tool poses under default_table(),
# frozen from an independent reference implementation. verify_fk_probes
# recomputes them and is wired into the CLI self-test.
FK_PROBES = (
    ((0.0, -HALF_PI, HALF_PI, 0.0, HALF_PI, 0.0),
     ((6.123233995736766e-17, -6.123233995736766e-17, -1.0, -0.6881),
      (-1.0, 1.2246467991473532e-16, -6.123233995736767e-17, -0.17415),
      (1.2246467991473532e-16, 1.0, -6.123233995736765e-17, 0.67355))),
    ((0.3, -1.1, 1.7, -0.4, 1.2, 0.9),
     ((0.2334372182736916, -0.5994976509108874, -0.7655779723039114, -0.7311736192720649),
      (-0.5342404246859173, 0.5787778792775293, -0.6161195785644343, -0.4526775437549497),
      (0.8124618352612334, 0.5528279415978659, -0.1851675814839493, 0.264979082864482))),
    ((-2.0, 0.5, -0.8, 2.2, -1.4, 0.6),
     ((0.9807847070527477, -0.19385194586616333, -0.021972289260754594, 0.24287364845375348),
      (0.18863113842642082, 0.9135181719513921, 0.360420370027194, 0.9967732964871309),
      (-0.04979610454050237, -0.35763944497005506, 0.9325311658996188, 0.203293308588685))),
)


def verify_fk_probes(tol: float = 1e-9) -> float:
    """Recompute the frozen probes; returns the worst entry deviation.

    Raises RuntimeError when any entry drifts beyond tol, which would mean
    the kinematics chain itself changed behavior.
    """
    table = default_table()
    worst = 0.0
    for q, expect in FK_PROBES:
        got = fk_chain(q, table).to_floats()
        for i in range(3):
            for j in range(4):
                worst = max(worst, abs(got[i][j] - expect[i][j]))
    if worst > tol:
        raise RuntimeError(f"forward-kinematics self-check drifted by {worst:.3e}")
    return worst


def ik_feasible(H: HomTransform, table: DHTable, delta: float = ACOS_DELTA):
    """(feasible, witness JointVector or None) for a target in the base frame.

    Feasible means some branch ran event-free and its wrapped joints lie in
    [-pi, pi] (the wrap makes the second condition structural; it is checked
    anyway as a guard).
    """
    sol = analytic_ik(H, table, delta)
    for i in sol.valid_branches():
        jv = sol.joint_vector(i)
        if jv.legal():
            return True, jv
    return False, None


def draw_nonsingular_joints(rng, table: DHTable | None = None,
                            margin: float = 0.05,
                            shoulder_margin: float = 1e-3) -> list:
    """Random legal joints clear of the wrist, elbow, and shoulder bands.

    The shoulder check keeps the wrist point's planar radius about the base
    axis at least shoulder_margin outside the lateral-offset cylinder, where
    the q1 subproblem degenerates.
    """
    table = table or default_table()
    a2, a3 = table.a[1], table.a[2]
    d4, d5 = table.d[3], table.d[4]
    while True:
        q = [rng.uniform(-math.pi + 0.1, math.pi - 0.1) for _ in range(6)]
        if abs(math.sin(q[4])) < margin:
            continue
        if abs(q[2]) < margin or math.pi - abs(q[2]) < margin:
            continue
        radial = (a2 * math.cos(q[1]) + a3 * math.cos(q[1] + q[2])
                  + d5 * math.sin(q[1] + q[2] + q[3]))
        if math.hypot(radial, d4) - d4 < shoulder_margin:
            continue
        return q
