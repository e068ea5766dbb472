"""Dataset generation with built-in feasibility witnesses, and persistence.

Every record is produced configuration-first: draw a chassis placement and a
joint vector, push them through forward kinematics, and store the resulting
tool pose as the task target. The generating pair is kept as the witness, so
every target is reachable by construction and supervised baselines get their
labels for free.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .kinematics import (
    ChassisPose,
    DHTable,
    HomTransform,
    MountTransform,
    Pose6,
    chassis_to_base,
    default_table,
    fk_chain,
    hom_to_pose,
    pose_to_hom,
)

DATASET_MAGIC = "kinet-dataset v1"
# Chassis placement box (m) and heading range used for witness draws.
CHASSIS_XY_BOUND = 2.0
# Joint draws stay this far inside the hard +/- pi range.
JOINT_MARGIN = 0.1
# Rejection bands around the wrist and elbow singularities.
WRIST_BAND = 0.05
ELBOW_FOLD_BAND = 0.05

_COLUMNS = ("task_id",
            "phi", "theta", "psi", "x", "y", "z",
            "c_psi", "c_x", "c_y",
            "q1", "q2", "q3", "q4", "q5", "q6")


@dataclass(frozen=True)
class DatasetRecord:
    task_id: int
    target: tuple          # (phi, theta, psi, x, y, z) world tool pose
    chassis: tuple         # witness (psi, x, y)
    joints: tuple          # witness joint angles

    def target_pose(self) -> Pose6:
        return Pose6(*self.target)

    def target_hom(self) -> HomTransform:
        return pose_to_hom(self.target)

    def row(self) -> list:
        return [self.task_id, *self.target, *self.chassis, *self.joints]


@dataclass
class DatasetFile:
    seed: int
    dh_hash: str
    mount: MountTransform
    records: list

    def save(self, path: str) -> None:
        lines = [DATASET_MAGIC,
                 f"seed {self.seed}",
                 f"dh_hash {self.dh_hash}",
                 "mount " + ",".join(f"{v:.17g}" for row in self.mount.matrix for v in row),
                 f"count {len(self.records)}",
                 ",".join(_COLUMNS)]
        for r in self.records:
            vals = r.row()
            lines.append(str(vals[0]) + "," + ",".join(f"{v:.17g}" for v in vals[1:]))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str, expect_table: DHTable | None = None) -> "DatasetFile":
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != DATASET_MAGIC:
            raise ValueError(f"not a recognizable dataset file: {path}")
        head = {}
        i = 1
        while i < len(lines) and " " in lines[i] and not lines[i].startswith("task_id"):
            key, _, rest = lines[i].partition(" ")
            head[key] = rest
            i += 1
        if i == len(lines) or lines[i] != ",".join(_COLUMNS):
            raise ValueError(f"line {i + 1}: expected column header")
        dh_hash = head["dh_hash"]
        if expect_table is not None and expect_table.hash_hex() != dh_hash:
            raise ValueError("dataset was generated against a different DH table")
        n = int(head["count"])
        mvals = [float(v) for v in head["mount"].split(",")]
        mount = MountTransform(tuple(tuple(mvals[r * 4 + c] for c in range(4)) for r in range(4)))
        records = []
        for k in range(n):
            ln = i + 1 + k
            if ln >= len(lines) or not lines[ln]:
                raise ValueError(f"line {ln + 1}: dataset truncated ({k} of {n} rows)")
            parts = lines[ln].split(",")
            if len(parts) != len(_COLUMNS):
                raise ValueError(f"line {ln + 1}: expected {len(_COLUMNS)} fields, got {len(parts)}")
            records.append(DatasetRecord(
                task_id=int(parts[0]),
                target=tuple(float(v) for v in parts[1:7]),
                chassis=tuple(float(v) for v in parts[7:10]),
                joints=tuple(float(v) for v in parts[10:16])))
        return cls(seed=int(head["seed"]), dh_hash=dh_hash, mount=mount, records=records)


def _draw_witness(rng: random.Random, table: DHTable, mount: MountTransform, verdict_fn):
    """One accepted (chassis, joints, target) triple; rejection-sampled."""
    lo = -math.pi + JOINT_MARGIN
    hi = math.pi - JOINT_MARGIN
    while True:
        chassis = (rng.uniform(-math.pi, math.pi),
                   rng.uniform(-CHASSIS_XY_BOUND, CHASSIS_XY_BOUND),
                   rng.uniform(-CHASSIS_XY_BOUND, CHASSIS_XY_BOUND))
        joints = tuple(rng.uniform(lo, hi) for _ in range(6))
        if abs(math.sin(joints[4])) < WRIST_BAND:
            continue
        if math.pi - abs(joints[2]) < ELBOW_FOLD_BAND:
            continue
        H = chassis_to_base(chassis, mount) @ fk_chain(joints, table)
        pose = hom_to_pose(H)
        target = pose.as_tuple()
        if not verdict_fn(chassis, target):
            continue
        return chassis, joints, target


def generate_dataset(n: int, seed: int, table: DHTable | None = None,
                     mount: MountTransform | None = None) -> DatasetFile:
    """n feasibility-witnessed records, deterministic per seed."""
    if n < 1:
        raise ValueError("dataset size must be >= 1")
    from .evalbench import annulus_distance, chassis_verdict, derive_annulus
    table = table or default_table()
    mount = mount or MountTransform()
    reach = derive_annulus(table)

    def verdict_fn(chassis, target):
        # keep training targets comfortably inside the margin-shrunk band,
        # strictly tighter than what the verdict itself requires
        dist = annulus_distance(chassis, target, mount, reach)
        if not reach.r_min <= dist <= reach.r_max:
            return False
        return chassis_verdict(chassis, target, table, mount, reach).valid

    rng = random.Random(f"{int(seed)}/data")
    records = []
    for task_id in range(n):
        chassis, joints, target = _draw_witness(rng, table, mount, verdict_fn)
        records.append(DatasetRecord(task_id=task_id, target=target,
                                     chassis=chassis, joints=joints))
    return DatasetFile(seed=int(seed), dh_hash=table.hash_hex(), mount=mount,
                       records=records)


@dataclass
class SplitData:
    train: list
    val: list
    test: list


def split(data: DatasetFile, fractions: tuple = (0.8, 0.1, 0.1), seed: int = 0) -> SplitData:
    """Deterministic shuffled train/val/test split."""
    if abs(sum(fractions) - 1.0) > 1e-9 or len(fractions) != 3:
        raise ValueError("fractions must be three parts summing to 1")
    records = list(data.records)
    rng = random.Random(f"{int(seed)}/split")
    rng.shuffle(records)
    n = len(records)
    n_train = round(fractions[0] * n)
    n_val = round(fractions[1] * n)
    parts = SplitData(train=records[:n_train],
                      val=records[n_train:n_train + n_val],
                      test=records[n_train + n_val:])
    if not parts.train or not parts.val or not parts.test:
        raise ValueError(f"split of {n} records left an empty part")
    return parts
