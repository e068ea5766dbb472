"""Feasibility oracles, accuracy metric, reach annulus, and timing bench.

The planar reach band is measured once per DH table by Monte-Carlo over the
arm's posture space and cached; verdicts then combine that band with the
exact eight-branch inverse kinematics to classify predictions, and the bench
harness times competing methods on identical task lists.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .kinematics import (
    DHTable,
    JointVector,
    MountTransform,
    analytic_ik,
    chassis_to_base,
    default_table,
    fk_chain,
    hom_to_pose,
    pose_to_hom,
    relative_target,
)

# Safety margin (m) pulled inside the measured reach extremes.
ANNULUS_MARGIN = 0.02
# Outward slack covering what the posture Monte-Carlo cannot quite reach.
SCREEN_EPS = 1e-3
MC_SAMPLES = 1_000_000
MC_SEED = 12345

POSITION_TOL = 1e-3     # m, FK position acceptance for full configurations
ORIENTATION_TOL = 0.1   # rad, per-axis orientation acceptance

REASONS = ("ok", "no_ik_solution", "joint_illegal", "out_of_workspace",
           "fk_error_exceeds", "orientation_exceeds")


class Annulus(NamedTuple):
    """Planar reach band of the wrist center about the arm base axis."""

    r_min: float
    r_max: float
    flange: float  # tool offset d6: wrist center = tool point - flange * tool z


_ANNULUS_CACHE: dict = {}


def derive_annulus(table: DHTable | None = None) -> Annulus:
    """Measure the reachable wrist-center radii by posture Monte-Carlo.

    For the offset-wrist family the wrist center's planar radius is
    hypot(a2*cos(q2) + a3*cos(q2+q3) + d5*sin(q2+q3+q4), d4), independent of
    q1, q5, q6. One million uniform postures bracket the band; the stored
    bounds shrink by a 2 cm margin on each side so verdicts stay clear of
    boundary noise.
    """
    table = table or default_table()
    if not table.is_offset_wrist():
        raise ValueError("annulus derivation needs an offset-wrist family table")
    key = table.hash_hex()
    hit = _ANNULUS_CACHE.get(key)
    if hit is not None:
        return hit
    a2, a3 = table.a[1], table.a[2]
    d4, d5 = table.d[3], table.d[4]
    rng = np.random.default_rng(MC_SEED)
    q2 = rng.uniform(-math.pi, math.pi, MC_SAMPLES)
    q3 = rng.uniform(-math.pi, math.pi, MC_SAMPLES)
    q4 = rng.uniform(-math.pi, math.pi, MC_SAMPLES)
    radial = a2 * np.cos(q2) + a3 * np.cos(q2 + q3) + d5 * np.sin(q2 + q3 + q4)
    r = np.hypot(radial, d4)
    ann = Annulus(float(r.min()) + ANNULUS_MARGIN, float(r.max()) - ANNULUS_MARGIN,
                  table.d[5])
    _ANNULUS_CACHE[key] = ann
    return ann


@dataclass(frozen=True)
class FeasibilityVerdict:
    valid: bool
    reason: str
    witness: JointVector | None = None

    def __post_init__(self):
        if self.reason not in REASONS:
            raise ValueError(f"unknown reason {self.reason!r}")
        if self.valid != (self.reason == "ok"):
            raise ValueError("valid must hold exactly when reason is 'ok'")


def _wrist_center_xy(target) -> tuple:
    H = pose_to_hom(target)
    f = H.to_floats()
    return f[0][3], f[1][3], f[0][2], f[1][2]  # x, y, z-axis x/y components


def annulus_distance(chassis, target, mount: MountTransform, reach: Annulus) -> float:
    """Planar distance from the arm base axis to the target's wrist center."""
    base = chassis_to_base(chassis, mount).to_floats()
    tx, ty, zx, zy = _wrist_center_xy(target)
    wx = tx - reach.flange * zx
    wy = ty - reach.flange * zy
    return math.hypot(wx - base[0][3], wy - base[1][3])


def _screen_band(reach: Annulus) -> tuple:
    # the stored band is margin-shrunk; the rejection screen must instead be
    # conservative (outer), so it unwinds the margin and adds MC slack
    return (reach.r_min - ANNULUS_MARGIN - SCREEN_EPS,
            reach.r_max + ANNULUS_MARGIN + SCREEN_EPS)


def chassis_verdict(chassis, target, table: DHTable | None = None,
                    mount: MountTransform | None = None,
                    reach: Annulus | None = None) -> FeasibilityVerdict:
    """Can the arm on this chassis placement reach the target pose?

    The decision is exact: the eight-branch enumeration plus joint legality.
    The reach band only short-circuits placements that are provably hopeless
    (outside the conservative outer band) and attributes failure reasons; it
    never rejects anything inverse kinematics could still solve. A valid
    verdict always carries a joint witness.
    """
    table = table or default_table()
    mount = mount or MountTransform()
    reach = reach or derive_annulus(table)
    dist = annulus_distance(chassis, target, mount, reach)
    lo, hi = _screen_band(reach)
    if not lo <= dist <= hi:
        return FeasibilityVerdict(False, "out_of_workspace")
    rel = relative_target(chassis_to_base(chassis, mount), pose_to_hom(target))
    sol = analytic_ik(rel, table)
    branches = sol.valid_branches()
    if not branches:
        if not reach.r_min <= dist <= reach.r_max:
            return FeasibilityVerdict(False, "out_of_workspace")
        return FeasibilityVerdict(False, "no_ik_solution")
    for b in branches:
        jv = sol.joint_vector(b)
        if jv.legal():
            return FeasibilityVerdict(True, "ok", witness=jv)
    return FeasibilityVerdict(False, "joint_illegal")


def fmp_verdict(chassis, joints, target, table: DHTable | None = None,
                mount: MountTransform | None = None,
                reach: Annulus | None = None) -> FeasibilityVerdict:
    """Does a full (chassis, joints) configuration actually solve the task?

    Forward kinematics is the proof: a legal configuration whose tool pose
    matches within tolerance is valid wherever its radius lands. The reach
    band only picks the failure label when the pose misses.
    """
    table = table or default_table()
    mount = mount or MountTransform()
    reach = reach or derive_annulus(table)
    jv = JointVector(tuple(joints))
    if not jv.legal():
        return FeasibilityVerdict(False, "joint_illegal")
    H_pred = chassis_to_base(chassis, mount) @ fk_chain(list(jv), table)
    Hp = H_pred.to_floats()
    Ht = pose_to_hom(target).to_floats()
    pos_err = math.sqrt(sum((Hp[i][3] - Ht[i][3]) ** 2 for i in range(3)))
    if pos_err >= POSITION_TOL:
        dist = annulus_distance(chassis, target, mount, reach)
        lo, hi = _screen_band(reach)
        if not lo <= dist <= hi:
            return FeasibilityVerdict(False, "out_of_workspace")
        return FeasibilityVerdict(False, "fk_error_exceeds")
    rel = relative_target(H_pred, pose_to_hom(target))
    pose = hom_to_pose(rel)
    if any(abs(v) >= ORIENTATION_TOL for v in (pose.phi, pose.theta, pose.psi)):
        return FeasibilityVerdict(False, "orientation_exceeds")
    return FeasibilityVerdict(True, "ok")


@dataclass
class AccuracyReport:
    n: int
    successes: int
    acc: float
    reasons: dict

    @classmethod
    def from_verdicts(cls, verdicts) -> "AccuracyReport":
        if not verdicts:
            raise ValueError("accuracy over an empty set is undefined")
        reasons: dict = {}
        ok = 0
        for v in verdicts:
            reasons[v.reason] = reasons.get(v.reason, 0) + 1
            ok += int(v.valid)
        return cls(n=len(verdicts), successes=ok, acc=ok / len(verdicts), reasons=reasons)


def accuracy(params, records, kind: str, table: DHTable | None = None,
             mount: MountTransform | None = None,
             reach: Annulus | None = None) -> float:
    """Single-attempt ACC of an MLP over records, dropout off."""
    report = evaluate_model(params, records, kind, table, mount, reach)
    return report.acc


def evaluate_model(params, records, kind: str, table: DHTable | None = None,
                   mount: MountTransform | None = None,
                   reach: Annulus | None = None) -> AccuracyReport:
    from .predictor import DropoutSpec, forward_values
    table = table or default_table()
    mount = mount or MountTransform()
    reach = reach or derive_annulus(table)
    off = DropoutSpec(rate=0.0, active_in_training=False, active_in_inference=False)
    verdicts = []
    for rec in records:
        out = forward_values(params, rec.target, off, "infer")
        if kind == "cmp":
            verdicts.append(chassis_verdict(tuple(out[:3]), rec.target, table, mount, reach))
        elif kind == "fmp":
            verdicts.append(fmp_verdict(tuple(out[:3]), tuple(out[3:]), rec.target,
                                        table, mount, reach))
        else:
            raise ValueError(f"unknown model kind {kind!r}")
    return AccuracyReport.from_verdicts(verdicts)


@dataclass
class MethodOutcome:
    """What one method did on one task, with its own phase timings."""

    valid: bool
    reason: str
    attempts: int
    sample_ms: float
    check_ms: float
    config: tuple | None = None

    @property
    def total_ms(self) -> float:
        return self.sample_ms + self.check_ms


@dataclass
class TimingReport:
    task_count: int
    methods: dict  # name -> {mean_attempts, mean_sample_ms, mean_check_ms,
    #                         mean_total_ms, success_rate, speedup_vs_rs}

    def table_rows(self) -> list:
        rows = []
        for name, m in self.methods.items():
            rows.append([name, m["mean_attempts"], m["mean_sample_ms"],
                         m["mean_check_ms"], m["mean_total_ms"],
                         m["success_rate"], m["speedup_vs_rs"]])
        return rows


BENCH_COLUMNS = ("method", "task_id", "attempts", "sample_ms", "check_ms",
                 "total_ms", "valid", "reason")


def bench(methods: dict, tasks, seed: int = 0, repeats: int = 3,
          rs_key: str = "rs") -> tuple:
    """Run every method over the same task list; returns (TimingReport, rows).

    Each (method, task) pair is repeated with an identical derived rng and
    the median-total repetition is kept, damping scheduler noise without
    changing the work measured. Speedups are mean-total ratios against the
    rs_key method when present. A method exception becomes a failed row, not
    a crash.
    """
    if not methods:
        raise ValueError("bench needs at least one method")
    repeats = max(1, int(repeats))
    rows = []
    per_method: dict = {name: [] for name in methods}
    for name, fn in methods.items():
        for tid, task in enumerate(tasks):
            reps = []
            for _ in range(repeats):
                rng = random.Random(f"{seed}/{name}/{tid}")
                t0 = time.monotonic()
                try:
                    out = fn(task, rng)
                except Exception as exc:  # noqa: BLE001 - recorded, not fatal
                    wall = (time.monotonic() - t0) * 1000.0
                    out = MethodOutcome(False, "error: " + type(exc).__name__,
                                        0, wall, 0.0)
                reps.append(out)
            reps.sort(key=lambda o: o.total_ms)
            out = reps[len(reps) // 2]
            per_method[name].append(out)
            rows.append([name, tid, out.attempts, out.sample_ms, out.check_ms,
                         out.total_ms, int(out.valid), out.reason])
    summary = {}
    rs_mean = None
    if rs_key in per_method and per_method[rs_key]:
        rs_mean = _mean([o.total_ms for o in per_method[rs_key]])
    for name, outs in per_method.items():
        mean_total = _mean([o.total_ms for o in outs])
        summary[name] = {
            "mean_attempts": _mean([o.attempts for o in outs]),
            "mean_sample_ms": _mean([o.sample_ms for o in outs]),
            "mean_check_ms": _mean([o.check_ms for o in outs]),
            "mean_total_ms": mean_total,
            "success_rate": _mean([float(o.valid) for o in outs]),
            "speedup_vs_rs": (rs_mean / mean_total) if (rs_mean and mean_total > 0) else None,
        }
    return TimingReport(task_count=len(list(tasks)), methods=summary), rows


def _mean(xs) -> float:
    xs = list(xs)
    return sum(xs) / len(xs) if xs else 0.0
