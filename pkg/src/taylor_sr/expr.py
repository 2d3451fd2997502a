"""Expression trees over the search function set.

Trees are immutable. Leaves are variables (``x0``, ``x1``, ...) or real
constants; internal nodes are the binary operators ``add sub mul div`` and the
unary functions ``sin cos log exp sqrt``.  ``log`` is the protected natural
log of the absolute value.  ``asin`` exists only for benchmark ground truths
and is never produced by the search.
"""

from __future__ import annotations

import enum
import math
import re
from typing import Iterator, Mapping, Sequence

import numpy as np

BINARY_OPS = ("add", "sub", "mul", "div")
UNARY_OPS = ("sin", "cos", "log", "exp", "sqrt")
EVAL_ONLY_OPS = ("asin",)
FUNCTION_SET = BINARY_OPS + UNARY_OPS

_SYMBOLS = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


class Parity(str, enum.Enum):
    ODD = "odd"
    EVEN = "even"
    NONE = "none"


class Monotonicity(str, enum.Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"
    NONE = "none"


_ARITY = {**{op: 2 for op in BINARY_OPS}, **{op: 1 for op in UNARY_OPS + EVAL_ONLY_OPS}, "var": 0, "const": 0}


def arity(op: str) -> int:
    if op in BINARY_OPS:
        return 2
    if op in UNARY_OPS or op in EVAL_ONLY_OPS:
        return 1
    if op in ("var", "const"):
        return 0
    raise ValueError(f"unknown operator {op!r}")


class Expr:
    """A node of an immutable expression tree.

    ``arg`` holds the variable index for ``var`` nodes and the value for
    ``const`` nodes; it is ``None`` otherwise.
    """

    __slots__ = ("op", "children", "arg", "size", "depth", "nvars", "_hash", "_memo")

    def __init__(self, op: str, children: Sequence[Expr] = (), arg=None):
        children = tuple(children)
        n = len(children)
        if _ARITY.get(op, -1) != n:
            raise ValueError(f"{op} takes {arity(op)} children, got {n}")
        set_ = object.__setattr__
        if n == 0:
            if op == "var":
                arg = int(arg)
                if arg < 0:
                    raise ValueError("variable index must be non-negative")
                nv = arg + 1
            else:
                arg = float(arg)
                nv = 0
            size = depth = 1
        elif n == 1:
            c = children[0]
            size, depth, nv = c.size + 1, c.depth + 1, c.nvars
        else:
            a, b = children
            size = a.size + b.size + 1
            depth = (a.depth if a.depth > b.depth else b.depth) + 1
            nv = a.nvars if a.nvars > b.nvars else b.nvars
        set_(self, "op", op)
        set_(self, "children", children)
        set_(self, "arg", arg)
        set_(self, "size", size)
        set_(self, "depth", depth)
        set_(self, "nvars", nv)
        set_(self, "_hash", hash((op, arg, children)))
        set_(self, "_memo", None)

    def __setattr__(self, name, value):
        raise AttributeError("Expr is immutable")

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr) or self._hash != other._hash:
            return False
        return (
            self.op == other.op
            and self.arg == other.arg
            and self.children == other.children
        )

    def __repr__(self) -> str:
        return f"Expr({format_expr(self)!r})"

    def __str__(self) -> str:
        return format_expr(self)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def n_vars(self) -> int:
        """One more than the largest variable index used (0 if none)."""
        return self.nvars

    def walk(self) -> Iterator[Expr]:
        """Pre-order traversal."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


# --- constructors -----------------------------------------------------------


def var(i: int) -> Expr:
    return Expr("var", (), i)


def const(c: float) -> Expr:
    return Expr("const", (), c)


def add(a: Expr, b: Expr) -> Expr:
    return Expr("add", (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    return Expr("sub", (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    return Expr("mul", (a, b))


def div(a: Expr, b: Expr) -> Expr:
    return Expr("div", (a, b))


def unary(op: str, a: Expr) -> Expr:
    return Expr(op, (a,))


def sin(a: Expr) -> Expr:
    return Expr("sin", (a,))


def cos(a: Expr) -> Expr:
    return Expr("cos", (a,))


def log(a: Expr) -> Expr:
    return Expr("log", (a,))


def exp(a: Expr) -> Expr:
    return Expr("exp", (a,))


def sqrt(a: Expr) -> Expr:
    return Expr("sqrt", (a,))


def node_count(e: Expr) -> int:
    return e.size


# --- evaluation -------------------------------------------------------------


def _ev(e: Expr, cols, token=None):
    # constants stay scalars and broadcast; with a token, every internal
    # node memoizes its value for the dataset the token stands for
    op = e.op
    if op == "var":
        return cols[e.arg]
    if op == "const":
        return np.float64(e.arg)
    if token is not None:
        memo = e._memo
        if memo is not None and memo[0] is token:
            return memo[1]
    out = _apply(op, [_ev(c, cols, token) for c in e.children])
    if token is not None:
        object.__setattr__(e, "_memo", (token, out))
    return out


def _apply(op: str, args):
    if len(args) == 2:
        a, b = args
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        if op == "mul":
            return a * b
        return a / b
    (a,) = args
    if op == "sin":
        return np.sin(a)
    if op == "cos":
        return np.cos(a)
    if op == "log":
        return np.log(np.abs(a))
    if op == "exp":
        return np.exp(a)
    if op == "sqrt":
        return np.sqrt(a)
    return np.arcsin(a)


def eval_batch(e: Expr, X) -> np.ndarray:
    """Evaluate ``e`` on every row of ``X``; non-finite values stay in-band."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    cols = [X[:, j] for j in range(X.shape[1])]
    with np.errstate(all="ignore"):
        out = _ev(e, cols)
    return np.broadcast_to(np.asarray(out, dtype=float), (n,)).copy()


class Evaluator:
    """Evaluates many related trees on one sample matrix.

    Internal nodes remember their value, so a tree assembled from already
    evaluated parts costs only its new nodes.  Results are bitwise identical
    to :func:`eval_batch`.
    """

    def __init__(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        self.n = X.shape[0]
        self.cols = [X[:, j].copy() for j in range(X.shape[1])]
        self._token = object()

    def __call__(self, e: Expr) -> np.ndarray:
        with np.errstate(all="ignore"):
            return self.raw(e)

    def raw(self, e: Expr) -> np.ndarray:
        """Like calling the evaluator, but floating-point warnings follow the
        caller's ``np.errstate``."""
        out = _ev(e, self.cols, self._token)
        if out.ndim == 0:
            return np.full(self.n, float(out))
        return out


def evaluate(e: Expr, point) -> float:
    """Evaluate at a single point (same semantics as :func:`eval_batch`)."""
    row = np.atleast_1d(np.asarray(point, dtype=float))
    return float(eval_batch(e, row[None, :])[0])


# --- structural helpers -----------------------------------------------------


def remap(e: Expr, mapping: Mapping[int, int]) -> Expr:
    """Rename variable indices according to ``mapping``."""
    if e.op == "var":
        return var(mapping[e.arg])
    if e.is_leaf:
        return e
    return Expr(e.op, [remap(c, mapping) for c in e.children])


def substitute(e: Expr, replacement: Mapping[int, Expr] | Expr) -> Expr:
    """Replace variables by expressions.

    A bare ``Expr`` replaces every variable, which is how composition
    ``f(g(x))`` is built for multivariate ``f``.
    """
    if e.op == "var":
        if isinstance(replacement, Expr):
            return replacement
        return replacement.get(e.arg, e)
    if e.is_leaf:
        return e
    return Expr(e.op, [substitute(c, replacement) for c in e.children])


def compose(f: Expr, g: Expr) -> Expr:
    return substitute(f, g)


def subtrees(e: Expr) -> list[tuple[tuple[int, ...], Expr]]:
    """All (path, node) pairs in pre-order; a path is a tuple of child slots."""
    out = []
    stack: list[tuple[tuple[int, ...], Expr]] = [((), e)]
    while stack:
        path, node = stack.pop()
        out.append((path, node))
        for i in range(len(node.children) - 1, -1, -1):
            stack.append((path + (i,), node.children[i]))
    return out


def replace_at(e: Expr, path: Sequence[int], new: Expr) -> Expr:
    if not path:
        return new
    i = path[0]
    kids = list(e.children)
    kids[i] = replace_at(kids[i], path[1:], new)
    return Expr(e.op, kids, e.arg)


# --- symbolic differentiation -----------------------------------------------


def _is_const(e: Expr, value: float) -> bool:
    return e.op == "const" and e.arg == value


def _sadd(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return add(a, b)


def _ssub(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _sneg(b)
    return sub(a, b)


def _smul(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return mul(a, b)


def _sdiv(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return const(0.0)
    if _is_const(b, 1.0):
        return a
    return div(a, b)


def _sneg(a: Expr) -> Expr:
    if a.op == "const":
        return const(-a.arg)
    return mul(const(-1.0), a)


def differentiate(e: Expr, i: int) -> Expr:
    """Partial derivative with respect to variable ``i``.

    Only literal zero/one factors are removed; no further simplification.
    """
    op = e.op
    if op == "var":
        return const(1.0 if e.arg == i else 0.0)
    if op == "const":
        return const(0.0)
    if op in BINARY_OPS:
        a, b = e.children
        da, db = differentiate(a, i), differentiate(b, i)
        if op == "add":
            return _sadd(da, db)
        if op == "sub":
            return _ssub(da, db)
        if op == "mul":
            return _sadd(_smul(da, b), _smul(a, db))
        num = _ssub(_smul(da, b), _smul(a, db))
        return _sdiv(num, mul(b, b))
    (a,) = e.children
    da = differentiate(a, i)
    if _is_const(da, 0.0):
        return const(0.0)
    if op == "sin":
        outer = cos(a)
    elif op == "cos":
        outer = _sneg(sin(a))
    elif op == "log":
        return _sdiv(da, a)
    elif op == "exp":
        outer = e
    elif op == "sqrt":
        return _sdiv(da, mul(const(2.0), e))
    else:  # asin
        return _sdiv(da, sqrt(sub(const(1.0), mul(a, a))))
    return _smul(outer, da)


# --- parity by point sampling -----------------------------------------------


def sample_box(domain, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples from a box given as a sequence of intervals.

    Infinite sides are clipped to +-10.
    """
    lo = np.array([max(iv.lo, -10.0) if math.isinf(iv.lo) else iv.lo for iv in domain])
    hi = np.array([min(iv.hi, 10.0) if math.isinf(iv.hi) else iv.hi for iv in domain])
    return lo + (hi - lo) * rng.random((n, len(domain)))


def parity_of(
    e: Expr,
    domain,
    rng: np.random.Generator,
    samples: int = 64,
    tol: float = 1e-8,
) -> Parity:
    """Classify ``e`` as odd/even by comparing f(x) with f(-x) at random points.

    ``domain`` should be symmetric about the origin.  The tolerance is
    relative to the largest observed magnitude.  Any non-finite sample gives
    ``Parity.NONE``.
    """
    pts = sample_box(domain, samples, rng)
    return parity_at(e, pts, tol)


def parity_at(e: Expr, pts: np.ndarray, tol: float = 1e-8) -> Parity:
    fx = eval_batch(e, pts)
    fm = eval_batch(e, -pts)
    if not (np.all(np.isfinite(fx)) and np.all(np.isfinite(fm))):
        return Parity.NONE
    scale = max(float(np.max(np.abs(fx))), float(np.max(np.abs(fm))))
    bound = tol * scale if scale > 0 else 0.0
    if float(np.max(np.abs(fm + fx))) <= bound:
        return Parity.ODD
    if float(np.max(np.abs(fm - fx))) <= bound:
        return Parity.EVEN
    return Parity.NONE


# --- text format ------------------------------------------------------------


def format_expr(e: Expr) -> str:
    op = e.op
    if op == "var":
        return f"x{e.arg}"
    if op == "const":
        return repr(e.arg)
    if op in BINARY_OPS:
        a, b = e.children
        return f"({format_expr(a)} {_SYMBOLS[op]} {format_expr(b)})"
    return f"{op}({format_expr(e.children[0])})"


class ParseError(ValueError):
    def __init__(self, message: str, position: int, token: str | None):
        where = "end of input" if token is None else f"{token!r} at position {position}"
        super().__init__(f"{message}: {where}")
        self.position = position
        self.token = token


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?|inf|nan)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<sym>[-+*/()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError("unexpected character", start, text[start])
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str, names: Mapping[str, int] | None, eval_only: bool):
        self.tokens = _tokenize(text)
        self.i = 0
        self.names = names
        self.functions = set(UNARY_OPS) | (set(EVAL_ONLY_OPS) if eval_only else set())

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def fail(self, message: str):
        tok = self.peek()
        if tok is None:
            raise ParseError(message, -1, None)
        raise ParseError(message, tok[2], tok[1])

    def take(self, value: str | None = None):
        tok = self.peek()
        if tok is None or (value is not None and tok[1] != value):
            self.fail(f"expected {value!r}" if value else "unexpected end")
        self.i += 1
        return tok

    def expression(self) -> Expr:
        node = self.term()
        while (tok := self.peek()) is not None and tok[1] in "+-" and tok[0] == "sym":
            self.i += 1
            rhs = self.term()
            node = add(node, rhs) if tok[1] == "+" else sub(node, rhs)
        return node

    def term(self) -> Expr:
        node = self.factor()
        while (tok := self.peek()) is not None and tok[1] in "*/" and tok[0] == "sym":
            self.i += 1
            rhs = self.factor()
            node = mul(node, rhs) if tok[1] == "*" else div(node, rhs)
        return node

    def factor(self) -> Expr:
        tok = self.peek()
        if tok is None:
            self.fail("unexpected end of expression")
        kind, text, _ = tok
        if kind == "sym" and text == "-":
            self.i += 1
            nxt = self.peek()
            if nxt is not None and nxt[0] == "num":
                self.i += 1
                return const(-float(nxt[1]))
            return _sneg(self.factor())
        if kind == "sym" and text == "+":
            self.i += 1
            return self.factor()
        if kind == "num":
            self.i += 1
            return const(float(text))
        if kind == "sym" and text == "(":
            self.i += 1
            node = self.expression()
            self.take(")")
            return node
        if kind == "name":
            self.i += 1
            if text in self.functions:
                self.take("(")
                arg = self.expression()
                self.take(")")
                return unary(text, arg)
            if self.names is not None and text in self.names:
                return var(self.names[text])
            m = re.fullmatch(r"x(\d+)", text)
            if m and self.names is None:
                return var(int(m.group(1)))
            self.i -= 1
            self.fail("unknown name")
        self.fail("unexpected token")


def parse(text: str, names: Mapping[str, int] | None = None, eval_only: bool = False) -> Expr:
    """Parse infix text produced by :func:`format_expr` (or written by hand).

    ``names`` replaces the default ``x0, x1, ...`` variable naming.
    ``eval_only`` additionally admits ``asin``.
    """
    p = _Parser(text, names, eval_only)
    if p.peek() is None:
        raise ParseError("empty expression", 0, None)
    node = p.expression()
    if p.peek() is not None:
        p.fail("unexpected trailing input")
    return node
