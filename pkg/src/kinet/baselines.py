"""Comparison methods for the benchmark: samplers, iterative IK, regression.

Chassis-level searches draw placements until the feasibility oracle accepts
one; whole-body searches must also produce joints, either by damped
least-squares iteration or by brute-force joint sampling under a wall-clock
cap. Learned methods run a vectorized forward pass of a trained checkpoint so
their timings reflect inference cost, not graph bookkeeping.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass

import numpy as np

from .autodiff import wrap_angle
from .evalbench import Annulus, MethodOutcome, chassis_verdict, derive_annulus, fmp_verdict
from .kinematics import (
    DHTable,
    HomTransform,
    JointVector,
    MountTransform,
    chassis_to_base,
    default_table,
    fk_chain,
    ik_feasible,
    pose_to_hom,
    relative_target,
)
from .predictor import Checkpoint, draw_mask

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SamplerConfig:
    """Chassis sampling box (centered on the target) and EBS shape knobs."""

    half_x: float = 5.0
    half_y: float = 5.0
    heading: str = "uniform"          # RS heading policy
    ebs_radial_factor: float = 0.7    # radial mean as a fraction of r_max
    ebs_sigma: float = 1.0            # radial spread (m)
    ebs_heading_jitter_deg: float = 15.0
    seed: int = 0

    def __post_init__(self):
        if not (self.half_x > 0.0 and self.half_y > 0.0):
            raise ValueError("sampling box must be non-degenerate")
        if not self.ebs_sigma > 0.0:
            raise ValueError("EBS radial sigma must be positive")
        if self.heading not in ("uniform", "facing"):
            raise ValueError(f"unknown heading policy {self.heading!r}")


@dataclass(frozen=True)
class DLSConfig:
    """Damped least-squares iteration knobs."""

    lam: float = 0.05
    pos_tol: float = 1e-4
    rot_tol: float = 1e-3
    max_iters: int = 500
    seed_policy: str = "fixed"  # fixed | zeros | random

    def __post_init__(self):
        if not self.lam > 0.0:
            raise ValueError("damping must be positive")
        if self.max_iters < 1:
            raise ValueError("need at least one iteration")
        if self.seed_policy not in ("fixed", "zeros", "random"):
            raise ValueError(f"unknown seed policy {self.seed_policy!r}")


# Mildly bent arm: keeps the finite-difference Jacobian away from the
# stretched-singular rank drop a zero seed would start in.
SEED_JOINTS = (0.1, -0.6, 0.8, 0.2, 0.4, 0.1)


def random_sample_chassis(cfg: SamplerConfig, target, rng: random.Random):
    """Uniform placement in the box around the target, uniform heading."""
    tx, ty = float(target[3]), float(target[4])
    return (rng.uniform(-math.pi, math.pi),
            tx + rng.uniform(-cfg.half_x, cfg.half_x),
            ty + rng.uniform(-cfg.half_y, cfg.half_y))


def biased_sample_chassis(cfg: SamplerConfig, target, rng: random.Random,
                          reach: Annulus | None = None):
    """Radius-informed placement: Gaussian ring around the target, facing it."""
    reach = reach or derive_annulus()
    tx, ty = float(target[3]), float(target[4])
    r = rng.gauss(cfg.ebs_radial_factor * reach.r_max, cfg.ebs_sigma)
    ang = rng.uniform(-math.pi, math.pi)
    x = tx + r * math.cos(ang)
    y = ty + r * math.sin(ang)
    jitter = math.radians(cfg.ebs_heading_jitter_deg)
    psi = wrap_angle(math.atan2(ty - y, tx - x) + rng.gauss(0.0, jitter))
    return (psi, x, y)


def _rotation_log(R) -> np.ndarray:
    """Axis-angle vector of a rotation matrix, stable near 0 and pi."""
    tr = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    theta = math.acos(tr)
    if theta < 1e-9:
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) * 0.5
    if theta > math.pi - 1e-6:
        # near pi the skew part vanishes; recover the axis from the diagonal
        d = np.clip((np.diag(R) + 1.0) * 0.5, 0.0, None)
        axis = np.sqrt(d)
        k = int(np.argmax(axis))
        if axis[k] > 0.0:
            for j in range(3):
                if j != k:
                    axis[j] = (R[k, j] + R[j, k]) / (4.0 * axis[k])
        n = np.linalg.norm(axis)
        return axis / n * theta if n > 0 else np.zeros(3)
    vee = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return vee * (theta / (2.0 * math.sin(theta)))


def _fk_floats(joints, table: DHTable) -> np.ndarray:
    return np.array(fk_chain(list(joints), table).to_floats())


def _pose_twist(H_cur: np.ndarray, H_tar: np.ndarray) -> np.ndarray:
    """6-vector error: translation difference and rotation log, base frame."""
    e_p = H_tar[:3, 3] - H_cur[:3, 3]
    R_err = H_tar[:3, :3] @ H_cur[:3, :3].T
    return np.concatenate([e_p, _rotation_log(R_err)])


def jacobian_dls_ik(H_target_in_base: HomTransform, seed: JointVector,
                    cfg: DLSConfig | None = None,
                    table: DHTable | None = None) -> JointVector | None:
    """Iterative IK: q += J^T (J J^T + lam^2 I)^-1 e with a numeric Jacobian.

    The Jacobian comes from central differences on the forward chain, so the
    method stays oblivious to the analytic branch structure (that is the
    point of benchmarking against it). Returns wrapped, legal joints on
    convergence and None on a miss.
    """
    cfg = cfg or DLSConfig()
    table = table or default_table()
    H_tar = np.array(H_target_in_base.to_floats())
    q = np.array([float(v) for v in seed], dtype=float)
    lam2 = cfg.lam * cfg.lam
    h = 1e-6
    for _ in range(cfg.max_iters):
        H_cur = _fk_floats(q, table)
        e = _pose_twist(H_cur, H_tar)
        if np.linalg.norm(e[:3]) < cfg.pos_tol and np.linalg.norm(e[3:]) < cfg.rot_tol:
            wrapped = JointVector(tuple(wrap_angle(v) for v in q))
            return wrapped if wrapped.legal() else None
        J = np.empty((6, 6))
        for j in range(6):
            qp = q.copy(); qp[j] += h
            qm = q.copy(); qm[j] -= h
            col = _pose_twist(_fk_floats(qm, table), _fk_floats(qp, table)) / (2.0 * h)
            J[:, j] = col
        step = J.T @ np.linalg.solve(J @ J.T + lam2 * np.eye(6), e)
        q += step
    return None


def dls_seed(cfg: DLSConfig, rng: random.Random | None = None) -> JointVector:
    if cfg.seed_policy == "zeros":
        return JointVector((0.0,) * 6)
    if cfg.seed_policy == "random":
        rng = rng or random.Random(0)
        return JointVector(tuple(rng.uniform(-math.pi, math.pi) for _ in range(6)))
    return JointVector(SEED_JOINTS)


def nn_regression_train(data, cfg=None):
    """Supervised MSE regression to the witness chassis; the data-hungry one."""
    from .predictor import train_regression
    return train_regression(data, cfg)


def compile_fast_forward(ckpt: Checkpoint):
    """Vectorized inference closure for a checkpoint.

    fn(pose, mask=None) -> list of floats with the same normalization, tanh
    stacks, and output heads as the graph forward; mask (length 50) replays
    inverted dropout between the hidden layers.
    """
    from .predictor import HEAD_OFFSET_X, HIDDEN, INPUT_DIM, OUT_DIMS
    sizes = (INPUT_DIM, HIDDEN, HIDDEN, OUT_DIMS[ckpt.kind])
    mats, biases, off = [], [], 0
    vals = ckpt.values
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        W = np.array(vals[off:off + fan_in * fan_out]).reshape(fan_out, fan_in)
        off += fan_in * fan_out
        b = np.array(vals[off:off + fan_out])
        off += fan_out
        mats.append(W)
        biases.append(b)
    pos_scale = ckpt.pos_scale

    def forward(pose, mask=None):
        phi, theta, psi, x, y, z = (float(v) for v in pose)
        inp = np.array([wrap_angle(phi) / math.pi, wrap_angle(theta) / math.pi,
                        wrap_angle(psi) / math.pi,
                        x / pos_scale, y / pos_scale, z / pos_scale])
        h1 = np.tanh(mats[0] @ inp + biases[0])
        if mask is not None:
            h1 = h1 * np.asarray(mask)
        h2 = np.tanh(mats[1] @ h1 + biases[1])
        raw = mats[2] @ h2 + biases[2]
        out = [math.pi * math.tanh(raw[0]),
               x + HEAD_OFFSET_X + pos_scale * raw[1],
               y + pos_scale * raw[2]]
        out.extend(math.pi * math.tanh(v) for v in raw[3:])
        return out

    return forward


# --- bench method factories -------------------------------------------------
#
# Each factory returns fn(task, rng) -> MethodOutcome for evalbench.bench.
# Tasks are dataset records (or anything with a 6-tuple .target). The sample
# phase covers candidate generation (rng or network), the check phase the
# feasibility oracle; both accumulate across attempts.


def _target_of(task):
    return task.target if hasattr(task, "target") else tuple(task)


def make_rs_method(sampler: SamplerConfig | None = None, max_attempts: int = 200,
                   table: DHTable | None = None, mount: MountTransform | None = None):
    sampler = sampler or SamplerConfig()
    table = table or default_table()
    mount = mount or MountTransform()
    reach = derive_annulus(table)

    def run(task, rng):
        target = _target_of(task)
        s_ms = c_ms = 0.0
        for attempt in range(1, max_attempts + 1):
            t0 = time.monotonic()
            c = random_sample_chassis(sampler, target, rng)
            t1 = time.monotonic()
            v = chassis_verdict(c, target, table, mount, reach)
            t2 = time.monotonic()
            s_ms += (t1 - t0) * 1000.0
            c_ms += (t2 - t1) * 1000.0
            if v.valid:
                return MethodOutcome(True, "ok", attempt, s_ms, c_ms, config=c)
        return MethodOutcome(False, "no_ik_solution", max_attempts, s_ms, c_ms)

    return run


def make_ebs_method(sampler: SamplerConfig | None = None, max_attempts: int = 200,
                    table: DHTable | None = None, mount: MountTransform | None = None):
    sampler = sampler or SamplerConfig(heading="facing")
    table = table or default_table()
    mount = mount or MountTransform()
    reach = derive_annulus(table)

    def run(task, rng):
        target = _target_of(task)
        s_ms = c_ms = 0.0
        for attempt in range(1, max_attempts + 1):
            t0 = time.monotonic()
            c = biased_sample_chassis(sampler, target, rng, reach)
            t1 = time.monotonic()
            v = chassis_verdict(c, target, table, mount, reach)
            t2 = time.monotonic()
            s_ms += (t1 - t0) * 1000.0
            c_ms += (t2 - t1) * 1000.0
            if v.valid:
                return MethodOutcome(True, "ok", attempt, s_ms, c_ms, config=c)
        return MethodOutcome(False, "no_ik_solution", max_attempts, s_ms, c_ms)

    return run


def make_network_method(ckpt: Checkpoint, max_attempts: int = 20,
                        table: DHTable | None = None,
                        mount: MountTransform | None = None):
    """CMP / NN-regression / FMP inference with resampling via dropout masks."""
    table = table or default_table()
    mount = mount or MountTransform()
    reach = derive_annulus(table)
    forward = compile_fast_forward(ckpt)
    stochastic = ckpt.dropout.active("infer")
    full = ckpt.kind == "fmp"

    def run(task, rng):
        target = _target_of(task)
        s_ms = c_ms = 0.0
        for attempt in range(1, max_attempts + 1):
            t0 = time.monotonic()
            mask = draw_mask(ckpt.dropout.rate, rng) if stochastic else None
            out = forward(target, mask)
            t1 = time.monotonic()
            if full:
                v = fmp_verdict(tuple(out[:3]), tuple(out[3:]), target, table, mount, reach)
            else:
                v = chassis_verdict(tuple(out[:3]), target, table, mount, reach)
            t2 = time.monotonic()
            s_ms += (t1 - t0) * 1000.0
            c_ms += (t2 - t1) * 1000.0
            if v.valid:
                return MethodOutcome(True, "ok", attempt, s_ms, c_ms, config=tuple(out))
            if not stochastic:
                return MethodOutcome(False, v.reason, attempt, s_ms, c_ms)
        return MethodOutcome(False, v.reason, max_attempts, s_ms, c_ms)

    return run


def make_rs_dls_method(sampler: SamplerConfig | None = None,
                       dls: DLSConfig | None = None, max_attempts: int = 200,
                       table: DHTable | None = None,
                       mount: MountTransform | None = None):
    """Chassis by random sampling, joints by damped least-squares iteration.

    The sample phase is the chassis draw; everything kinematic (feasibility
    screen, DLS itself, final validity) lands in the check phase.
    """
    sampler = sampler or SamplerConfig()
    dls = dls or DLSConfig()
    table = table or default_table()
    mount = mount or MountTransform()
    reach = derive_annulus(table)

    def run(task, rng):
        target = _target_of(task)
        H_tar = pose_to_hom(target)
        s_ms = c_ms = 0.0
        for attempt in range(1, max_attempts + 1):
            t0 = time.monotonic()
            c = random_sample_chassis(sampler, target, rng)
            t1 = time.monotonic()
            s_ms += (t1 - t0) * 1000.0
            base = chassis_to_base(c, mount)
            rel = relative_target(base, H_tar)
            ok, _ = ik_feasible(rel, table)
            if ok:
                jv = jacobian_dls_ik(rel, dls_seed(dls, rng), dls, table)
                if jv is not None and fmp_verdict(c, tuple(jv), target, table,
                                                  mount, reach).valid:
                    c_ms += (time.monotonic() - t1) * 1000.0
                    return MethodOutcome(True, "ok", attempt, s_ms, c_ms,
                                         config=c + tuple(jv))
            c_ms += (time.monotonic() - t1) * 1000.0
        return MethodOutcome(False, "no_ik_solution", max_attempts, s_ms, c_ms)

    return run


def make_whole_body_rs_method(sampler: SamplerConfig | None = None,
                              cap_ms: float = 30_000.0,
                              table: DHTable | None = None,
                              mount: MountTransform | None = None):
    """Joint brute force: sample chassis and all six joints, check the pose.

    Kept as the reference for how hopeless unstructured search is in nine
    dimensions; expected to exhaust its wall-clock cap.
    """
    sampler = sampler or SamplerConfig()
    table = table or default_table()
    mount = mount or MountTransform()
    reach = derive_annulus(table)

    def run(task, rng):
        target = _target_of(task)
        s_ms = c_ms = 0.0
        attempt = 0
        start = time.monotonic()
        while (time.monotonic() - start) * 1000.0 < cap_ms:
            attempt += 1
            t0 = time.monotonic()
            c = random_sample_chassis(sampler, target, rng)
            joints = tuple(rng.uniform(-math.pi, math.pi) for _ in range(6))
            t1 = time.monotonic()
            v = fmp_verdict(c, joints, target, table, mount, reach)
            t2 = time.monotonic()
            s_ms += (t1 - t0) * 1000.0
            c_ms += (t2 - t1) * 1000.0
            if v.valid:
                return MethodOutcome(True, "ok", attempt, s_ms, c_ms, config=c + joints)
        return MethodOutcome(False, "timeout", attempt, s_ms, c_ms)

    return run
