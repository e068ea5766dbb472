"""Scalar reverse-mode automatic differentiation on an explicit tape.

Every differentiable quantity is a GraphValue holding a float payload, the
local partials toward its parents, and its position on the active Tape. The
tape records nodes in creation order, so the backward sweep is a single
reverse pass with no topological sort. Functions in this module accept plain
floats as well as GraphValues and fall back to ordinary arithmetic when no
graph operand is involved, which lets the kinematics code run in a cheap
uninstrumented mode from the same source.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Iterable, Sequence, Union

TWO_PI = 2.0 * math.pi

# Derivative guard for sqrt at the origin.
EPS_ROOT = 1e-12

# Default half-width of the arccos tangent extension band.
ACOS_DELTA = 1e-4

ILLROOT = "illroot"
OUTDOM = "outdom"


class GraphIntegrityError(RuntimeError):
    """Graph construction or traversal broke an engine invariant."""


class DomainError(ValueError):
    """An operation was evaluated at a point where it is undefined."""


class BranchEvent:
    """Record of a guarded operation leaving its natural domain.

    kind is "illroot" (negative radicand) or "outdom" (arccos argument at or
    beyond the extension seam). magnitude is the violation size, a GraphValue
    in instrumented mode so the penalty is differentiable, and is always
    >= 0 in value. branch is filled in by the inverse-kinematics layer when
    the event is attributed to solution branches; a raw event from a guarded
    op carries branch = None.
    """

    __slots__ = ("kind", "magnitude", "branch")

    def __init__(self, kind: str, magnitude: "Scalar", branch: "int | None" = None):
        self.kind = kind
        self.magnitude = magnitude
        self.branch = branch

    def __repr__(self):
        return f"BranchEvent({self.kind}, mag={value_of(self.magnitude):.6g}, branch={self.branch})"


_TLS = threading.local()


def _tape_stack() -> list:
    stack = getattr(_TLS, "stack", None)
    if stack is None:
        stack = []
        _TLS.stack = stack
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Append-only record of GraphValues in creation order.

    Used as a context manager; nodes created inside the block are appended.
    One tape is confined to one thread. backward() walks the node list in
    exact reverse creation order, which is a valid reverse topological order
    because parents always precede children.
    """

    __slots__ = ("nodes", "_sweep")

    def __init__(self):
        self.nodes: list[GraphValue] = []
        self._sweep = 0

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise GraphIntegrityError("tape context exited out of order")
        stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def zero_grads(self) -> None:
        for node in self.nodes:
            node.grad = 0.0

    def backward(self, root: "GraphValue") -> None:
        """Accumulate d(root)/d(node) into .grad for every ancestor of root.

        Repeated sweeps without zeroing add up: each call contributes its own
        adjoints, so two identical calls exactly double every gradient.
        Parameters living off-tape (leaves created outside any tape) receive
        their contributions as well.
        """
        if not isinstance(root, GraphValue):
            raise GraphIntegrityError("backward root must be a GraphValue")
        nodes = self.nodes
        if root.idx >= 0:
            if root.idx >= len(nodes) or nodes[root.idx] is not root:
                raise GraphIntegrityError("backward root does not belong to this tape")
        self._sweep += 1
        sweep = self._sweep
        root.adj = 1.0
        root.sweep = sweep
        off_tape: list[GraphValue] = []
        if root.idx < 0:
            # Leaf root: gradient toward itself only.
            root.grad += 1.0
            return
        for i in range(root.idx, -1, -1):
            node = nodes[i]
            if node.sweep != sweep:
                continue
            a = node.adj
            node.grad += a
            parents = node.parents
            if not parents:
                continue
            partials = node.partials
            for j in range(len(parents)):
                p = parents[j]
                if p.sweep == sweep:
                    p.adj += a * partials[j]
                else:
                    p.sweep = sweep
                    p.adj = a * partials[j]
                    if p.idx < 0:
                        off_tape.append(p)
        for p in off_tape:
            p.grad += p.adj


class GraphValue:
    """One scalar node of the computation graph."""

    __slots__ = ("value", "grad", "parents", "partials", "op", "idx", "adj", "sweep")

    def __init__(self, value: float, parents: tuple = (), partials: tuple = (), op: str = "leaf"):
        value = float(value)
        if not math.isfinite(value):
            raise GraphIntegrityError(f"non-finite value in op '{op}': {value!r}")
        self.value = value
        self.grad = 0.0
        self.parents = parents
        self.partials = partials
        self.op = op
        self.adj = 0.0
        self.sweep = 0
        tape = active_tape()
        if tape is not None:
            self.idx = len(tape.nodes)
            tape.nodes.append(self)
        else:
            if parents:
                raise GraphIntegrityError(f"op '{op}' evaluated with no active tape")
            self.idx = -1

    def __repr__(self):
        return f"GraphValue({self.value!r}, op={self.op})"

    # -- arithmetic ---------------------------------------------------------
    # Mixed-mode rules: float constants fold where the result is exact
    # (x+0, x*1, x*0, x/1) so constant-heavy matrix work stays small.

    def __add__(self, other):
        if isinstance(other, GraphValue):
            return GraphValue(self.value + other.value, (self, other), (1.0, 1.0), "add")
        other = float(other)
        if other == 0.0:
            return self
        return GraphValue(self.value + other, (self,), (1.0,), "add")

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, GraphValue):
            return GraphValue(self.value - other.value, (self, other), (1.0, -1.0), "sub")
        other = float(other)
        if other == 0.0:
            return self
        return GraphValue(self.value - other, (self,), (1.0,), "sub")

    def __rsub__(self, other):
        return GraphValue(float(other) - self.value, (self,), (-1.0,), "sub")

    def __mul__(self, other):
        if isinstance(other, GraphValue):
            return GraphValue(self.value * other.value, (self, other), (other.value, self.value), "mul")
        other = float(other)
        if other == 0.0:
            return 0.0
        if other == 1.0:
            return self
        return GraphValue(self.value * other, (self,), (other,), "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, GraphValue):
            b = other.value
            if b == 0.0:
                raise DomainError(f"division by exact zero (node {other.idx})")
            inv = 1.0 / b
            return GraphValue(self.value * inv, (self, other), (inv, -self.value * inv * inv), "div")
        other = float(other)
        if other == 0.0:
            raise DomainError("division by exact zero constant")
        if other == 1.0:
            return self
        inv = 1.0 / other
        return GraphValue(self.value * inv, (self,), (inv,), "div")

    def __rtruediv__(self, other):
        if self.value == 0.0:
            raise DomainError(f"division by exact zero (node {self.idx})")
        other = float(other)
        inv = 1.0 / self.value
        return GraphValue(other * inv, (self,), (-other * inv * inv,), "div")

    def __neg__(self):
        return GraphValue(-self.value, (self,), (-1.0,), "neg")

    def __abs__(self):
        s = 1.0 if self.value > 0.0 else (-1.0 if self.value < 0.0 else 0.0)
        return GraphValue(abs(self.value), (self,), (s,), "abs")

    def __pow__(self, n):
        if n == 2:
            return GraphValue(self.value * self.value, (self,), (2.0 * self.value,), "square")
        n = float(n)
        v = self.value ** n
        return GraphValue(v, (self,), (n * self.value ** (n - 1.0),), "pow")


Scalar = Union[GraphValue, float]


def value_of(x: Scalar) -> float:
    """Payload float of a scalar in either mode."""
    return x.value if isinstance(x, GraphValue) else float(x)


def as_leaf(x: float) -> GraphValue:
    return GraphValue(float(x))


def backward(root: GraphValue) -> None:
    """Backward sweep on the active tape (see Tape.backward)."""
    tape = active_tape()
    if tape is None:
        if isinstance(root, GraphValue) and root.idx < 0:
            root.grad += 1.0
            return
        raise GraphIntegrityError("backward called with no active tape")
    tape.backward(root)


def zero_grads(values: Iterable[GraphValue]) -> None:
    for v in values:
        v.grad = 0.0


# -- unary / binary transcendental primitives --------------------------------


def sin(x: Scalar) -> Scalar:
    if isinstance(x, GraphValue):
        return GraphValue(math.sin(x.value), (x,), (math.cos(x.value),), "sin")
    return math.sin(x)


def cos(x: Scalar) -> Scalar:
    if isinstance(x, GraphValue):
        return GraphValue(math.cos(x.value), (x,), (-math.sin(x.value),), "cos")
    return math.cos(x)


def tanh(x: Scalar) -> Scalar:
    if isinstance(x, GraphValue):
        t = math.tanh(x.value)
        return GraphValue(t, (x,), (1.0 - t * t,), "tanh")
    return math.tanh(x)


def square(x: Scalar) -> Scalar:
    if isinstance(x, GraphValue):
        return x ** 2
    return x * x


def sqrt_guarded(x: Scalar, events: "list | None" = None) -> Scalar:
    """Square root that survives negative input.

    Negative radicand yields value 0 and appends an illroot BranchEvent whose
    magnitude is -x (positive, differentiable); the value path carries no
    gradient back in that case, the penalty path does. For x >= 0 the partial
    is clamped at EPS_ROOT so the derivative stays finite at the origin.
    """
    if isinstance(x, GraphValue):
        v = x.value
        if v < 0.0:
            if events is not None:
                events.append(BranchEvent(ILLROOT, GraphValue(-v, (x,), (-1.0,), "illroot_mag")))
            return GraphValue(0.0, (x,), (0.0,), "sqrt_guarded")
        r = math.sqrt(v)
        return GraphValue(r, (x,), (0.5 / max(r, math.sqrt(EPS_ROOT)),), "sqrt_guarded")
    x = float(x)
    if x < 0.0:
        if events is not None:
            events.append(BranchEvent(ILLROOT, -x))
        return 0.0
    return math.sqrt(x)


def atan2_diff(y: Scalar, x: Scalar) -> Scalar:
    """Four-quadrant arctangent with the standard smooth partials."""
    yv = value_of(y)
    xv = value_of(x)
    if yv == 0.0 and xv == 0.0:
        raise DomainError("atan2 at the origin")
    gy = isinstance(y, GraphValue)
    gx = isinstance(x, GraphValue)
    if not (gy or gx):
        return math.atan2(yv, xv)
    denom = xv * xv + yv * yv
    val = math.atan2(yv, xv)
    if gy and gx:
        return GraphValue(val, (y, x), (xv / denom, -yv / denom), "atan2")
    if gy:
        return GraphValue(val, (y,), (xv / denom,), "atan2")
    return GraphValue(val, (x,), (-yv / denom,), "atan2")


def acos_extended(x: Scalar, delta: float = ACOS_DELTA, events: "list | None" = None) -> Scalar:
    """Arccos extended past +/- 1 by its tangent lines at +/-(1 - delta).

    Inside (-1+delta, 1-delta) this is plain arccos. At and beyond the seam
    the tangent line continues the function with the seam's slope, so value
    and first derivative are continuous while the output keeps steering
    gradients even for impossible cosine arguments. Any |x| >= 1 - delta
    appends an outdom BranchEvent with magnitude max(|x| - 1, 0).
    """
    if not (0.0 < delta < 0.5):
        raise DomainError(f"acos_extended delta out of (0, 0.5): {delta}")
    c = 1.0 - delta
    slope = -1.0 / math.sqrt(1.0 - c * c)
    xv = value_of(x)
    if isinstance(x, GraphValue):
        if xv >= c:
            out = GraphValue(math.acos(c) + slope * (xv - c), (x,), (slope,), "acos_ext")
        elif xv <= -c:
            out = GraphValue(math.acos(-c) + slope * (xv + c), (x,), (slope,), "acos_ext")
        else:
            out = GraphValue(math.acos(xv), (x,), (-1.0 / math.sqrt(1.0 - xv * xv),), "acos_ext")
        if events is not None and abs(xv) >= c:
            if xv > 1.0:
                mag = GraphValue(xv - 1.0, (x,), (1.0,), "outdom_mag")
            elif xv < -1.0:
                mag = GraphValue(-xv - 1.0, (x,), (-1.0,), "outdom_mag")
            else:
                mag = 0.0
            events.append(BranchEvent(OUTDOM, mag))
        return out
    xv = float(xv)
    if xv >= c:
        out = math.acos(c) + slope * (xv - c)
    elif xv <= -c:
        out = math.acos(-c) + slope * (xv + c)
    else:
        out = math.acos(xv)
    if events is not None and abs(xv) >= c:
        events.append(BranchEvent(OUTDOM, max(abs(xv) - 1.0, 0.0)))
    return out


def wrap_angle(x: Scalar) -> Scalar:
    """Wrap into (-pi, pi]. Gradient passes through with slope 1."""
    xv = value_of(x)
    k = math.ceil((xv - math.pi) / TWO_PI)
    if k == 0:
        return x
    return x - TWO_PI * k


def linear_combination(terms: Sequence[tuple]) -> Scalar:
    """Sum of a_i * b_i over (a, b) pairs of mixed scalars, as one node.

    Terms where either factor is an exact-zero float are dropped; if no
    GraphValue survives, the plain float sum is returned. The node's parents
    are exactly the contributing graph factors (a factor appearing twice
    accumulates, as with repeated operands anywhere else).
    """
    total = 0.0
    const = 0.0
    parents: list[GraphValue] = []
    partials: list[float] = []
    for a, b in terms:
        ga = isinstance(a, GraphValue)
        gb = isinstance(b, GraphValue)
        if not (ga or gb):
            const += float(a) * float(b)
            continue
        av = a.value if ga else float(a)
        bv = b.value if gb else float(b)
        if av == 0.0 and not ga:
            continue
        if bv == 0.0 and not gb:
            continue
        total += av * bv
        if ga:
            parents.append(a)
            partials.append(bv)
        if gb:
            parents.append(b)
            partials.append(av)
    if not parents:
        return const
    if const == 0.0 and len(parents) == 1 and partials[0] == 1.0:
        return parents[0]
    return GraphValue(total + const, tuple(parents), tuple(partials), "lincomb")


def dot(xs: Sequence[Scalar], ws: Sequence[Scalar], bias: Scalar = 0.0) -> Scalar:
    """Inner product plus bias, fused into at most one node plus the add."""
    if len(xs) != len(ws):
        raise ValueError("dot length mismatch")
    s = linear_combination(list(zip(xs, ws)))
    if isinstance(bias, GraphValue):
        return bias + s
    bias = float(bias)
    if bias == 0.0:
        return s
    return s + bias


class GraphMatrix:
    """Dense row-major matrix of mixed scalars."""

    __slots__ = ("rows", "cols", "entries")

    def __init__(self, rows: int, cols: int, entries: Sequence[Scalar]):
        if rows <= 0 or cols <= 0 or len(entries) != rows * cols:
            raise ValueError(f"entry count {len(entries)} does not match {rows}x{cols}")
        self.rows = rows
        self.cols = cols
        self.entries = list(entries)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[Scalar]]) -> "GraphMatrix":
        n = len(rows)
        m = len(rows[0])
        flat: list[Scalar] = []
        for r in rows:
            if len(r) != m:
                raise ValueError("ragged rows")
            flat.extend(r)
        return cls(n, m, flat)

    @classmethod
    def identity(cls, n: int) -> "GraphMatrix":
        return cls(n, n, [1.0 if i == j else 0.0 for i in range(n) for j in range(n)])

    def at(self, i: int, j: int) -> Scalar:
        return self.entries[i * self.cols + j]

    def to_floats(self) -> list:
        return [[value_of(self.at(i, j)) for j in range(self.cols)] for i in range(self.rows)]

    def transpose(self) -> "GraphMatrix":
        return GraphMatrix(self.cols, self.rows,
                           [self.at(i, j) for j in range(self.cols) for i in range(self.rows)])

    def __matmul__(self, other: "GraphMatrix") -> "GraphMatrix":
        return mat_mul(self, other)


def mat_mul(a: GraphMatrix, b: GraphMatrix) -> GraphMatrix:
    """Matrix product; no broadcasting, shapes must agree exactly."""
    if a.cols != b.rows:
        raise ValueError(f"shape mismatch: {a.rows}x{a.cols} @ {b.rows}x{b.cols}")
    out: list[Scalar] = []
    for i in range(a.rows):
        row = a.entries[i * a.cols:(i + 1) * a.cols]
        for j in range(b.cols):
            col = b.entries[j::b.cols]
            out.append(linear_combination(list(zip(row, col))))
    return GraphMatrix(a.rows, b.cols, out)


def grad_check(f: Callable, point: Sequence[float], h: float = 1e-6) -> float:
    """Max relative disagreement between reverse-mode and central differences.

    f takes a list of scalars (floats or GraphValues, same source both ways)
    and returns one scalar. Relative error per coordinate is
    |ad - cd| / max(1, |cd|); a non-finite evaluation on either route makes
    that coordinate's error +inf rather than raising.
    """
    point = [float(v) for v in point]
    n = len(point)
    with Tape() as tape:
        leaves = [GraphValue(v) for v in point]
        out = f(leaves)
        if isinstance(out, GraphValue):
            tape.backward(out)
            ad = [leaf.grad for leaf in leaves]
        else:
            ad = [0.0] * n
    worst = 0.0
    for i in range(n):
        hi = list(point)
        lo = list(point)
        hi[i] += h
        lo[i] -= h
        try:
            fp = value_of(f(hi))
            fm = value_of(f(lo))
            cd = (fp - fm) / (2.0 * h)
        except (DomainError, ValueError, ZeroDivisionError, OverflowError):
            return math.inf
        if not (math.isfinite(cd) and math.isfinite(ad[i])):
            return math.inf
        err = abs(ad[i] - cd) / max(1.0, abs(cd))
        if err > worst:
            worst = err
    return worst
