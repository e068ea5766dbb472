"""Constraint losses that couple network outputs to the kinematics engine.

Four of them read inverse-kinematics instrumentation (guarded-op events and
raw pre-wrap joint angles), three compare a predicted tool pose against the
target. Each is zero exactly on the feasible set it polices and piecewise
differentiable elsewhere; gates are decided on plain values so the graph only
grows where a penalty is active.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .autodiff import (
    BranchEvent,
    ILLROOT,
    OUTDOM,
    Scalar,
    atan2_diff,
    cos,
    linear_combination,
    sin,
    sqrt_guarded,
    value_of,
)
from .kinematics import (
    ChassisPose,
    HomTransform,
    Pose6,
    SolutionSet,
    hom_to_pose,
    pose_to_hom,
    relative_target,
)

__all__ = [
    "BranchEvent",
    "LossWeights",
    "LossBreakdown",
    "loss_illroot",
    "loss_outdom",
    "loss_illsolu",
    "loss_idesolu",
    "loss_cmp",
    "loss_pre_error",
    "loss_distance",
    "loss_orien",
    "fmp_terms",
    "loss_fmp",
]

# Position tolerance (m) below which the pose-error term stays silent.
POSITION_GATE = 1e-3
# Per-axis orientation tolerance (rad) for the orientation term.
ORIENTATION_GATE = 0.1


def _check_weight(name: str, v: float) -> float:
    v = float(v)
    if not math.isfinite(v) or v < 0.0:
        raise ValueError(f"loss weight {name} must be finite and nonnegative, got {v!r}")
    return v


@dataclass(frozen=True)
class LossWeights:
    """Per-component weights plus the U gate on guarded-op event terms."""

    delta_illroot: float = 1.0
    delta_outdom: float = 1.0
    delta_illsolu: float = 1.0
    delta_idesolu: float = 1.0
    delta_pre_error: float = 1.0
    delta_distance: float = 0.5
    delta_orien: float = 0.5
    U: int = 1

    def __post_init__(self):
        for name in ("delta_illroot", "delta_outdom", "delta_illsolu", "delta_idesolu",
                     "delta_pre_error", "delta_distance", "delta_orien"):
            object.__setattr__(self, name, _check_weight(name, getattr(self, name)))
        if self.U not in (0, 1):
            raise ValueError(f"U must be 0 or 1, got {self.U!r}")


@dataclass
class LossBreakdown:
    """Batch-mean value of each component (unweighted) plus the weighted total.

    Component fields are plain floats for logging; total keeps the graph so
    callers can run backward on it.
    """

    illroot: float = 0.0
    outdom: float = 0.0
    illsolu: float = 0.0
    idesolu: float = 0.0
    pre_error: float = 0.0
    distance: float = 0.0
    orien: float = 0.0
    total: Scalar = 0.0

    def as_row(self) -> dict:
        return {
            "illroot": self.illroot,
            "outdom": self.outdom,
            "illsolu": self.illsolu,
            "idesolu": self.idesolu,
            "pre_error": self.pre_error,
            "distance": self.distance,
            "orien": self.orien,
            "total": value_of(self.total),
        }


def _sum_scalars(parts: list) -> Scalar:
    if not parts:
        return 0.0
    return linear_combination([(p, 1.0) for p in parts])


def loss_illroot(events) -> Scalar:
    """Sum of negative-radicand magnitudes across all events."""
    return _sum_scalars([e.magnitude for e in events if e.kind == ILLROOT])


def loss_outdom(events) -> Scalar:
    """Sum of arccos-domain-violation magnitudes across all events."""
    return _sum_scalars([e.magnitude for e in events if e.kind == OUTDOM])


def loss_illsolu(sol: SolutionSet) -> Scalar:
    """Excess of |raw joint angle| beyond pi, over branches that exist.

    A branch whose dataflow tripped a guarded op is not a solution: its raw
    angles continue tangent extensions whose slope amplifies the domain
    violation ~70x, and the event terms already penalize that violation
    directly. Only event-free branches contribute angle excess here.
    """
    parts = []
    for i, pre in enumerate(sol.prewrap):
        if not sol.branch_valid[i]:
            continue
        for q in pre:
            if abs(value_of(q)) > math.pi:
                parts.append(abs(q) - math.pi)
    return _sum_scalars(parts)


def _has_in_range_branch(sol: SolutionSet) -> bool:
    for i, pre in enumerate(sol.prewrap):
        if sol.branch_valid[i] and all(abs(value_of(q)) <= math.pi for q in pre):
            return True
    return False


def loss_idesolu(sol: SolutionSet) -> Scalar:
    """Zero once any existing branch lands fully inside [-pi, pi]; else the
    excess sum over existing branches."""
    if _has_in_range_branch(sol):
        return 0.0
    return loss_illsolu(sol)


def loss_cmp(sols, weights: LossWeights) -> LossBreakdown:
    """Batch mean of the four solvability terms, U gating the event pair."""
    if not sols:
        raise ValueError("loss_cmp needs at least one sample")
    n = float(len(sols))
    comp = {"illroot": [], "outdom": [], "illsolu": [], "idesolu": []}
    for sol in sols:
        comp["illroot"].append(loss_illroot(sol.events))
        comp["outdom"].append(loss_outdom(sol.events))
        comp["illsolu"].append(loss_illsolu(sol))
        comp["idesolu"].append(loss_idesolu(sol))
    means = {k: _sum_scalars(v) / n for k, v in comp.items()}
    w = weights
    total = _sum_scalars([
        means["illroot"] * (w.U * w.delta_illroot),
        means["outdom"] * (w.U * w.delta_outdom),
        means["illsolu"] * w.delta_illsolu,
        means["idesolu"] * w.delta_idesolu,
    ])
    return LossBreakdown(
        illroot=value_of(means["illroot"]),
        outdom=value_of(means["outdom"]),
        illsolu=value_of(means["illsolu"]),
        idesolu=value_of(means["idesolu"]),
        total=total,
    )


def loss_pre_error(H_fk: HomTransform, H_tar: HomTransform,
                   threshold: float = POSITION_GATE) -> Scalar:
    """Mean squared difference over the 12 pose entries, gated on position.

    Silent while the Euclidean position error stays below threshold; once it
    does not, the full rotation+translation discrepancy is penalized.
    """
    dd_sq = sum((value_of(H_fk.p(i)) - value_of(H_tar.p(i))) ** 2 for i in range(3))
    if dd_sq < threshold * threshold:
        return 0.0
    parts = []
    for i in range(3):
        for j in range(4):
            d = H_fk.m.at(i, j) - H_tar.m.at(i, j)
            parts.append(d * d)
    return _sum_scalars(parts) / 12.0


def loss_distance(chassis, target, reach) -> Scalar:
    """Squared violation of the planar reach annulus around the base axis.

    The reachable band applies to the wrist center, which sits one flange
    offset behind the tool along its approach axis; reach carries both the
    radii and that offset (see evalbench.derive_annulus).
    """
    r_min, r_max, flange = reach.r_min, reach.r_max, reach.flange
    if isinstance(chassis, ChassisPose):
        cx, cy = chassis.x, chassis.y
    else:
        _, cx, cy = chassis
    Ht = pose_to_hom(target)
    wx = Ht.p(0) - flange * Ht.r(0, 2)
    wy = Ht.p(1) - flange * Ht.r(1, 2)
    dx = wx - cx
    dy = wy - cy
    dist_sq = dx * dx + dy * dy
    dist = math.sqrt(value_of(dist_sq))
    if dist > r_max:
        excess = sqrt_guarded(dist_sq) - r_max
        return excess * excess
    if dist < r_min:
        short = r_min - sqrt_guarded(dist_sq)
        return short * short
    return 0.0


def loss_orien(dtx: Scalar, dty: Scalar, dtz: Scalar) -> Scalar:
    """Sum of wrapped per-axis orientation errors beyond the 0.1 rad gate."""
    parts = []
    for dt in (dtx, dty, dtz):
        wrapped = atan2_diff(sin(dt), cos(dt))
        if abs(value_of(wrapped)) >= ORIENTATION_GATE:
            parts.append(abs(wrapped))
    return _sum_scalars(parts)


def fmp_terms(H_pred: HomTransform, H_tar: HomTransform, chassis, target, reach,
              threshold: float = POSITION_GATE) -> tuple:
    """Per-sample (pre_error, distance, orien) scalars for the pose loss."""
    pre = loss_pre_error(H_pred, H_tar, threshold)
    dist = loss_distance(chassis, target, reach)
    rel = relative_target(H_pred, H_tar)
    pose = hom_to_pose(rel)
    if isinstance(pose, Pose6):
        angles = (pose.phi, pose.theta, pose.psi)
    else:
        angles = pose[:3]
    orien = loss_orien(*angles)
    return pre, dist, orien


def loss_fmp(samples, weights: LossWeights) -> LossBreakdown:
    """Batch mean of weighted (pre_error, distance, orien) triples."""
    if not samples:
        raise ValueError("loss_fmp needs at least one sample")
    n = float(len(samples))
    pre = _sum_scalars([s[0] for s in samples]) / n
    dist = _sum_scalars([s[1] for s in samples]) / n
    orien = _sum_scalars([s[2] for s in samples]) / n
    w = weights
    total = _sum_scalars([
        pre * w.delta_pre_error,
        dist * w.delta_distance,
        orien * w.delta_orien,
    ])
    return LossBreakdown(
        pre_error=value_of(pre),
        distance=value_of(dist),
        orien=value_of(orien),
        total=total,
    )
