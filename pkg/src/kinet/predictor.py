"""MLP predictors, optimizer, training loops, and resampling inference.

Two network kinds share one architecture (6 -> 50 -> dropout -> 50 -> out):
"cmp" emits a chassis placement (psi, x, y), "fmp" adds the six joint angles.
Angle outputs pass through pi*tanh so they always land inside (-pi, pi);
planar coordinates are linear, scaled by the workspace radius. Training pipes
every prediction through the differentiable kinematics losses and runs plain
reverse-mode Adam on the parameter leaves.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field

from .autodiff import GraphValue, Tape, backward, dot, tanh, value_of, wrap_angle
from .kinematics import (
    DHTable,
    MountTransform,
    Pose6,
    analytic_ik,
    chassis_to_base,
    default_table,
    fk_chain,
    relative_target,
)
from .losses import LossBreakdown, LossWeights, fmp_terms, loss_cmp, loss_fmp

CHECKPOINT_MAGIC = "kinet-checkpoint v1"
HIDDEN = 50
INPUT_DIM = 6
OUT_DIMS = {"cmp": 3, "fmp": 9}
# Planar workspace half-width (m) used to normalize positions in and scale
# linear position outputs; targets live well inside this box.
POS_SCALE = 2.0
# Anchor of the planar output head, relative to the target: a fresh network
# places the chassis this far to the side, a mid-band radius for the default
# arm family, instead of directly on the (unreachable) target point.
HEAD_OFFSET_X = -0.9


def _stream(seed: int, name: str) -> random.Random:
    """Independent deterministic RNG stream derived from (seed, name)."""
    return random.Random(f"{int(seed)}/{name}")


@dataclass(frozen=True)
class DropoutSpec:
    """Single mask between the hidden layers, inverted scaling."""

    rate: float = 0.05
    active_in_training: bool = True
    active_in_inference: bool = True

    def __post_init__(self):
        r = float(self.rate)
        if not 0.0 <= r < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {r!r}")
        # searched band; rate 0 with flags on degenerates to inactive and is allowed
        if r > 0.0 and (self.active_in_training or self.active_in_inference):
            if not 0.02 <= r <= 0.15:
                raise ValueError(f"active dropout rate must lie in [0.02, 0.15], got {r!r}")
        object.__setattr__(self, "rate", r)

    def active(self, mode: str) -> bool:
        if mode == "train":
            return self.active_in_training and self.rate > 0.0
        if mode == "infer":
            return self.active_in_inference and self.rate > 0.0
        raise ValueError(f"unknown mode {mode!r}")


def dropout_for_case(case: int, rate: float = 0.05) -> DropoutSpec:
    if case == 1:
        return DropoutSpec(rate=rate, active_in_training=False, active_in_inference=False)
    if case == 2:
        return DropoutSpec(rate=rate, active_in_training=True, active_in_inference=True)
    if case == 3:
        return DropoutSpec(rate=rate, active_in_training=False, active_in_inference=True)
    raise ValueError(f"stochasticity case must be 1, 2, or 3, got {case!r}")


CASE_EPOCHS = {1: 400, 2: 1000, 3: 400}


@dataclass
class MLPParams:
    """Weight matrices and bias vectors as off-tape gradient leaves."""

    kind: str
    layers: list  # [(W: list[out][in] of GraphValue, b: list[out] of GraphValue), ...]
    pos_scale: float = POS_SCALE

    @property
    def sizes(self) -> tuple:
        first_in = len(self.layers[0][0][0])
        return (first_in,) + tuple(len(b) for _, b in self.layers)

    def flat(self) -> list:
        out = []
        for W, b in self.layers:
            for row in W:
                out.extend(row)
            out.extend(b)
        return out

    def n_params(self) -> int:
        return len(self.flat())


def init_params(seed: int, kind: str, pos_scale: float = POS_SCALE) -> MLPParams:
    """Xavier-uniform weights, zero biases, deterministic per seed."""
    if kind not in OUT_DIMS:
        raise ValueError(f"kind must be one of {sorted(OUT_DIMS)}, got {kind!r}")
    rng = _stream(seed, "init")
    sizes = (INPUT_DIM, HIDDEN, HIDDEN, OUT_DIMS[kind])
    layers = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        W = [[GraphValue(rng.uniform(-bound, bound)) for _ in range(fan_in)]
             for _ in range(fan_out)]
        b = [GraphValue(0.0) for _ in range(fan_out)]
        layers.append((W, b))
    return MLPParams(kind=kind, layers=layers, pos_scale=float(pos_scale))


def normalize_input(pose, pos_scale: float) -> list:
    """Wrap the three angles to (-pi, pi] / pi, scale positions to ~[-1, 1]."""
    if isinstance(pose, Pose6):
        pose = pose.as_tuple()
    phi, theta, psi, x, y, z = (float(v) for v in pose)
    return [wrap_angle(phi) / math.pi, wrap_angle(theta) / math.pi,
            wrap_angle(psi) / math.pi, x / pos_scale, y / pos_scale, z / pos_scale]


def draw_mask(rate: float, rng: random.Random) -> list:
    keep = 1.0 / (1.0 - rate)
    return [keep if rng.random() >= rate else 0.0 for _ in range(HIDDEN)]


def mlp_forward(p: MLPParams, pose, d: DropoutSpec, mode: str,
                rng: random.Random | None = None, mask: list | None = None) -> list:
    """One forward pass; returns the output head scalars (graph values).

    A dropout mask is drawn from rng exactly when the spec is active for
    mode (or can be supplied directly for replay); dropped hidden units fold
    out of the graph entirely, kept ones carry the inverted-dropout scale.

    The planar head is target-relative: the network emits a displacement that
    is added to an anchor point sitting HEAD_OFFSET_X beside the target's
    (x, y). Placement feasibility depends only on the chassis pose relative
    to the target, so this keeps the learning problem translation-equivariant
    instead of asking two tanh layers to reproduce an identity map before any
    kinematic signal can matter. The anchor offset starts every placement at
    a mid-band radius rather than on top of the target, where the inverse
    kinematics runs entirely on its guard extensions and their amplified,
    mutually cancelling gradients trap a fraction of samples.
    """
    if isinstance(pose, Pose6):
        pose = pose.as_tuple()
    x = normalize_input(pose, p.pos_scale)
    (W1, b1), (W2, b2), (W3, b3) = p.layers
    h1 = [tanh(dot(x, W1[i], b1[i])) for i in range(len(b1))]
    if mask is None and d.active(mode):
        if rng is None:
            raise ValueError("active dropout needs an rng to draw the mask")
        mask = draw_mask(d.rate, rng)
    if mask is not None:
        h1 = [h * m for h, m in zip(h1, mask)]
    h2 = [tanh(dot(h1, W2[i], b2[i])) for i in range(len(b2))]
    raw = [dot(h2, W3[i], b3[i]) for i in range(len(b3))]
    tx, ty = float(pose[3]), float(pose[4])
    out = [math.pi * tanh(raw[0]),
           tx + HEAD_OFFSET_X + p.pos_scale * raw[1],
           ty + p.pos_scale * raw[2]]
    for r in raw[3:]:
        out.append(math.pi * tanh(r))
    return out


def forward_values(p: MLPParams, pose, d: DropoutSpec, mode: str,
                   rng: random.Random | None = None) -> list:
    """Forward pass for evaluation only: plain floats, own throwaway tape."""
    with Tape():
        return [value_of(v) for v in mlp_forward(p, pose, d, mode, rng)]


class AdamState:
    """First/second-moment accumulators for one parameter list."""

    def __init__(self, n: int):
        self.m = [0.0] * n
        self.v = [0.0] * n
        self.t = 0


def adam_step(params: list, state: AdamState, lr: float = 1e-3,
              betas: tuple = (0.9, 0.999), eps: float = 1e-8) -> None:
    """Standard bias-corrected Adam over leaf .grad fields; grads cleared."""
    b1, b2 = betas
    state.t += 1
    t = state.t
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for i, p in enumerate(params):
        g = p.grad
        if not math.isfinite(g):
            raise RuntimeError(f"non-finite gradient at parameter {i} (step {t})")
        m = state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        v = state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        p.value -= lr * (m / c1) / (math.sqrt(v / c2) + eps)
        p.grad = 0.0


@dataclass(frozen=True)
class TrainConfig:
    kind: str = "cmp"
    case: int = 2
    epochs: int | None = None  # None: the case default (400/1000/400)
    batch_size: int = 32
    learning_rate: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    dropout_rate: float = 0.05
    pos_scale: float = POS_SCALE
    acc_every: int = 1          # epochs between accuracy probes
    acc_train_cap: int = 200    # training-ACC subsample size (log only)

    def resolved_epochs(self) -> int:
        return CASE_EPOCHS[self.case] if self.epochs is None else int(self.epochs)

    def dropout(self) -> DropoutSpec:
        return dropout_for_case(self.case, self.dropout_rate)


@dataclass
class Checkpoint:
    kind: str
    sizes: tuple
    pos_scale: float
    dh_hash: str
    mount: MountTransform
    weights: LossWeights
    dropout: DropoutSpec
    values: list
    epochs_run: int = 0
    final_loss: float = 0.0
    seed: int = 0

    def to_params(self) -> MLPParams:
        p = init_params(0, self.kind, self.pos_scale)
        flat = p.flat()
        if len(flat) != len(self.values):
            raise ValueError("checkpoint parameter count mismatch")
        for leaf, v in zip(flat, self.values):
            leaf.value = v
            leaf.grad = 0.0
        return p

    def save(self, path: str) -> None:
        lines = [CHECKPOINT_MAGIC,
                 f"kind {self.kind}",
                 "sizes " + ",".join(str(s) for s in self.sizes),
                 f"pos_scale {self.pos_scale:.17g}",
                 f"dh_hash {self.dh_hash}",
                 "mount " + ",".join(f"{v:.17g}" for row in self.mount.matrix for v in row),
                 "loss_weights " + ",".join(
                     f"{getattr(self.weights, n):.17g}" for n in (
                         "delta_illroot", "delta_outdom", "delta_illsolu", "delta_idesolu",
                         "delta_pre_error", "delta_distance", "delta_orien")) + f",{self.weights.U}",
                 f"dropout {self.dropout.rate:.17g},{int(self.dropout.active_in_training)},"
                 f"{int(self.dropout.active_in_inference)}",
                 f"meta {self.epochs_run},{self.final_loss:.17g},{self.seed}",
                 f"params {len(self.values)}"]
        lines.extend(f"{v:.17g}" for v in self.values)
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str, expect_table: DHTable | None = None) -> "Checkpoint":
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != CHECKPOINT_MAGIC:
            raise ValueError(f"not a recognizable checkpoint: {path}")
        head = {}
        i = 1
        while i < len(lines) and not lines[i].startswith("params "):
            key, _, rest = lines[i].partition(" ")
            head[key] = rest
            i += 1
        if i == len(lines):
            raise ValueError("checkpoint missing parameter block")
        n = int(lines[i].split()[1])
        values = [float(v) for v in lines[i + 1:i + 1 + n]]
        if len(values) != n:
            raise ValueError("checkpoint parameter block truncated")
        kind = head["kind"]
        sizes = tuple(int(s) for s in head["sizes"].split(","))
        expect_sizes = (INPUT_DIM, HIDDEN, HIDDEN, OUT_DIMS.get(kind, -1))
        if kind not in OUT_DIMS or sizes != expect_sizes:
            raise ValueError(f"unsupported architecture {kind} {sizes}")
        dh_hash = head["dh_hash"]
        if expect_table is not None and expect_table.hash_hex() != dh_hash:
            raise ValueError("checkpoint was trained against a different DH table")
        mvals = [float(v) for v in head["mount"].split(",")]
        mount = MountTransform(tuple(tuple(mvals[r * 4 + c] for c in range(4)) for r in range(4)))
        wvals = head["loss_weights"].split(",")
        weights = LossWeights(*[float(v) for v in wvals[:7]], U=int(wvals[7]))
        dvals = head["dropout"].split(",")
        dropout = DropoutSpec(float(dvals[0]), bool(int(dvals[1])), bool(int(dvals[2])))
        meta = head["meta"].split(",")
        return cls(kind=kind, sizes=sizes, pos_scale=float(head["pos_scale"]),
                   dh_hash=dh_hash, mount=mount, weights=weights, dropout=dropout,
                   values=values, epochs_run=int(meta[0]), final_loss=float(meta[1]),
                   seed=int(meta[2]))


def make_checkpoint(p: MLPParams, cfg: TrainConfig, table: DHTable,
                    mount: MountTransform, epochs_run: int, final_loss: float) -> Checkpoint:
    return Checkpoint(
        kind=p.kind, sizes=p.sizes, pos_scale=p.pos_scale, dh_hash=table.hash_hex(),
        mount=mount, weights=cfg.weights, dropout=cfg.dropout(),
        values=[leaf.value for leaf in p.flat()],
        epochs_run=epochs_run, final_loss=final_loss, seed=cfg.seed)


def cmp_sample_loss(p: MLPParams, record, d: DropoutSpec, rng, table, mount,
                    mode: str = "train"):
    """Graph for one CMP sample: prediction -> relative pose -> IK events."""
    out = mlp_forward(p, record.target, d, mode, rng)
    chassis = (out[0], out[1], out[2])
    H_tar = record.target_hom()
    rel = relative_target(chassis_to_base(chassis, mount), H_tar)
    return analytic_ik(rel, table)


def fmp_sample_terms(p: MLPParams, record, d: DropoutSpec, rng, table, mount, reach,
                     mode: str = "train"):
    """Graph for one FMP sample: prediction -> FK -> pose-error terms."""
    out = mlp_forward(p, record.target, d, mode, rng)
    chassis = (out[0], out[1], out[2])
    joints = out[3:]
    H_pred = chassis_to_base(chassis, mount) @ fk_chain(joints, table)
    H_tar = record.target_hom()
    return fmp_terms(H_pred, H_tar, chassis, Pose6(*record.target), reach)


def regression_sample_sq(p: MLPParams, record, d: DropoutSpec, rng,
                         mode: str = "train"):
    """Plain supervised squared error against the witness chassis labels."""
    out = mlp_forward(p, record.target, d, mode, rng)
    dpsi = wrap_angle(out[0] - record.chassis[0])
    dx = out[1] - record.chassis[1]
    dy = out[2] - record.chassis[2]
    return dpsi * dpsi + dx * dx + dy * dy


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log_rows: list  # dicts, one per epoch
    final_loss: float


LOG_COLUMNS = ("epoch", "illroot", "outdom", "illsolu", "idesolu", "pre_error",
               "distance", "orien", "total", "train_acc", "val_acc", "wall_ms")


def _epoch_row(epoch, bd_sums, n_batches, train_acc, val_acc, wall_ms):
    row = {"epoch": epoch, "train_acc": train_acc, "val_acc": val_acc, "wall_ms": wall_ms}
    for k in ("illroot", "outdom", "illsolu", "idesolu", "pre_error", "distance", "orien", "total"):
        row[k] = bd_sums.get(k, 0.0) / max(n_batches, 1)
    return row


def _train_loop(data, cfg: TrainConfig, batch_loss_fn, acc_fn) -> TrainResult:
    """Shared epoch/batch skeleton for the three training modes.

    batch_loss_fn(params, records, dropout, rng) -> LossBreakdown with a graph
    total; acc_fn(params, records) -> fraction or None to skip the probe.
    """
    table = default_table()
    mount = MountTransform()
    p = init_params(cfg.seed, cfg.kind, cfg.pos_scale)
    flat = p.flat()
    state = AdamState(len(flat))
    d = cfg.dropout()
    drop_rng = _stream(cfg.seed, "dropout")
    order_rng = _stream(cfg.seed, "order")
    records = list(data.train)
    if not records:
        raise ValueError("training split is empty")
    acc_cap = min(cfg.acc_train_cap, len(records))
    rows = []
    final_loss = math.inf
    epochs = cfg.resolved_epochs()
    for epoch in range(1, epochs + 1):
        t0 = time.monotonic()
        order = list(range(len(records)))
        order_rng.shuffle(order)
        sums = {}
        n_batches = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [records[i] for i in order[start:start + cfg.batch_size]]
            with Tape():
                bd = batch_loss_fn(p, batch, d, drop_rng)
                total = bd.total
                loss_val = value_of(total)
                if not math.isfinite(loss_val):
                    raise RuntimeError(
                        f"non-finite loss at epoch {epoch}, batch {n_batches}: {loss_val!r}")
                if isinstance(total, GraphValue):
                    backward(total)
            adam_step(flat, state, cfg.learning_rate, cfg.betas, cfg.eps)
            for k, v in bd.as_row().items():
                sums[k] = sums.get(k, 0.0) + v
            n_batches += 1
        final_loss = sums.get("total", 0.0) / max(n_batches, 1)
        train_acc = val_acc = None
        if acc_fn is not None and (epoch % cfg.acc_every == 0 or epoch == epochs):
            train_acc = acc_fn(p, records[:acc_cap])
            val_acc = acc_fn(p, data.val) if data.val else None
        rows.append(_epoch_row(epoch, sums, n_batches,
                               train_acc, val_acc,
                               (time.monotonic() - t0) * 1000.0))
    ckpt = make_checkpoint(p, cfg, table, mount, epochs, final_loss)
    return TrainResult(checkpoint=ckpt, log_rows=rows, final_loss=final_loss)


def train_cmp(data, cfg: TrainConfig | None = None, acc_fn=None) -> TrainResult:
    """Train the chassis predictor against IK-derived constraint losses."""
    cfg = cfg or TrainConfig(kind="cmp")
    if cfg.kind != "cmp":
        raise ValueError("train_cmp needs kind 'cmp'")
    table = default_table()
    mount = MountTransform()
    if acc_fn is None:
        acc_fn = _default_acc_fn("cmp")

    def batch_loss(p, batch, d, rng):
        sols = [cmp_sample_loss(p, r, d, rng, table, mount) for r in batch]
        return loss_cmp(sols, cfg.weights)

    return _train_loop(data, cfg, batch_loss, acc_fn)


def train_fmp(data, cfg: TrainConfig | None = None, acc_fn=None) -> TrainResult:
    """Train the full-configuration predictor against pose-error losses."""
    cfg = cfg or TrainConfig(kind="fmp")
    if cfg.kind != "fmp":
        raise ValueError("train_fmp needs kind 'fmp'")
    table = default_table()
    mount = MountTransform()
    reach = _reach()
    if acc_fn is None:
        acc_fn = _default_acc_fn("fmp")

    def batch_loss(p, batch, d, rng):
        terms = [fmp_sample_terms(p, r, d, rng, table, mount, reach) for r in batch]
        return loss_fmp(terms, cfg.weights)

    return _train_loop(data, cfg, batch_loss, acc_fn)


def train_regression(data, cfg: TrainConfig | None = None, acc_fn=None) -> TrainResult:
    """Supervised chassis regression: the kinematics-blind reference model."""
    cfg = cfg or TrainConfig(kind="cmp")
    if cfg.kind != "cmp":
        raise ValueError("train_regression predicts chassis placements (kind 'cmp')")
    if acc_fn is None:
        acc_fn = _default_acc_fn("cmp")

    def batch_loss(p, batch, d, rng):
        parts = [regression_sample_sq(p, r, d, rng) for r in batch]
        total = parts[0]
        for q in parts[1:]:
            total = total + q
        total = total / float(len(parts))
        return LossBreakdown(pre_error=value_of(total), total=total)

    return _train_loop(data, cfg, batch_loss, acc_fn)


def _reach():
    from .evalbench import derive_annulus
    return derive_annulus(default_table())


def _default_acc_fn(kind: str):
    from .evalbench import accuracy
    return lambda p, recs: accuracy(p, recs, kind)


@dataclass
class PredictionResult:
    success: bool
    config: tuple | None
    attempts: int
    rejected: list
    deterministic_failure: bool = False


def predict_with_resampling(ckpt: Checkpoint, target, max_attempts: int = 20,
                            rng: random.Random | None = None,
                            validator=None) -> PredictionResult:
    """Draw fresh dropout masks until a prediction passes the validity check.

    validator(config_tuple, target) -> bool; defaults to the standard verdict
    for the checkpoint's kind. With inference dropout inactive a second
    attempt would repeat the first, so failure is flagged deterministic
    immediately.
    """
    p = ckpt.to_params()
    d = ckpt.dropout
    rng = rng or random.Random(0)
    if validator is None:
        from .evalbench import chassis_verdict, fmp_verdict
        table = default_table()
        mount = ckpt.mount
        reach = _reach()
        if ckpt.kind == "cmp":
            def validator(config, tgt):
                return chassis_verdict(config, tgt, table, mount, reach).valid
        else:
            def validator(config, tgt):
                return fmp_verdict(config[:3], config[3:], tgt, table, mount, reach).valid
    stochastic = d.active("infer")
    rejected = []
    attempts = 0
    while attempts < max(1, max_attempts):
        attempts += 1
        out = forward_values(p, target, d, "infer", rng)
        config = tuple(out)
        if validator(config, target):
            return PredictionResult(True, config, attempts, rejected)
        rejected.append(config)
        if not stochastic:
            return PredictionResult(False, None, attempts, rejected,
                                    deterministic_failure=True)
    return PredictionResult(False, None, attempts, rejected)
