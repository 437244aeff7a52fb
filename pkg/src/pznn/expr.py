"""Small expression language for plant dynamics.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | factor
    factor := base ('^' int)?
    base   := number | ident | '(' expr ')' | func '(' expr ')'
    ident  := 'x' int | 'u' int | 'w' int        (1-based)
    func   := sin | cos | exp | tanh | sqrt | sigmoid
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .interval import Interval, ScalarInterval, iv_elem, iv_pow_int

FUNCS = ("sin", "cos", "exp", "tanh", "sqrt", "sigmoid")


class ExprSyntaxError(ValueError):
    def __init__(self, msg: str, pos: int):
        super().__init__(f"{msg} at position {pos}")
        self.pos = pos


# ---------------------------------------------------------------------------
# AST


class Expr:
    def __add__(self, o):
        return add(self, _c(o))

    def __radd__(self, o):
        return add(_c(o), self)

    def __sub__(self, o):
        return sub(self, _c(o))

    def __mul__(self, o):
        return mul(self, _c(o))

    def __rmul__(self, o):
        return mul(_c(o), self)

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_str(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True, eq=True)
class Var(Expr):
    kind: str   # 'x', 'u' or 'w'
    index: int  # zero-based


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exp: int


@dataclass(frozen=True, eq=True)
class Func(Expr):
    name: str
    arg: Expr


def _c(v) -> Expr:
    return v if isinstance(v, Expr) else Const(float(v))


def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Const) and e.value == v


# constructors with light constant folding


def add(a: Expr, b: Expr) -> Expr:
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is(b, 0):
        return a
    if _is(a, 0):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is(a, 0) or _is(b, 0):
        return Const(0.0)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is(b, 1):
        return a
    if _is(a, 0) and not _is(b, 0):
        return Const(0.0)
    return BinOp("/", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a: Expr, k: int) -> Expr:
    if k == 0:
        return Const(1.0)
    if k == 1:
        return a
    if isinstance(a, Const):
        return Const(a.value ** k)
    return Pow(a, k)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[start]!r}", start + 1)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), start + 1))
        pos = m.end()
    toks.append(("end", "", len(text) + 1))
    return toks


class _Parser:
    def __init__(self, text: str, dims: dict):
        self.toks = _tokenize(text)
        self.i = 0
        self.dims = dims

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, val):
        t = self.take()
        if t[1] != val:
            what = "end of input" if t[0] == "end" else repr(t[1])
            raise ExprSyntaxError(f"expected {val!r}, found {what}", t[2])

    def parse(self) -> Expr:
        e = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise ExprSyntaxError(f"unexpected {t[1]!r}", t[2])
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            r = self.term()
            e = BinOp(op, e, r)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            r = self.unary()
            e = BinOp(op, e, r)
        return e

    def unary(self) -> Expr:
        if self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.factor()

    def factor(self) -> Expr:
        b = self.base()
        if self.peek()[1] == "^":
            self.take()
            t = self.take()
            if t[0] != "num" or not re.fullmatch(r"\d+", t[1]):
                raise ExprSyntaxError("exponent must be a non-negative integer", t[2])
            return Pow(b, int(t[1]))
        return b

    def base(self) -> Expr:
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            if val in FUNCS:
                self.expect("(")
                e = self.expr()
                self.expect(")")
                return Func(val, e)
            m = re.fullmatch(r"([xuw])(\d+)", val)
            if not m:
                raise ExprSyntaxError(f"unknown identifier {val!r}", pos)
            k, idx = m.group(1), int(m.group(2))
            limit = self.dims.get(k, 0)
            if idx < 1 or idx > limit:
                raise ExprSyntaxError(f"variable {val} out of range (declared {k}1..{k}{limit})", pos)
            return Var(k, idx - 1)
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", pos)
        raise ExprSyntaxError(f"unexpected {val!r}", pos)


def parse_expr(text: str, dims: dict | tuple = (1, 0, 0)) -> Expr:
    """Parse ``text``. ``dims`` gives the number of x, u and w variables,
    either as an (n, m, r) tuple or a dict keyed by 'x', 'u', 'w'."""
    if not isinstance(dims, dict):
        n, m, r = dims
        dims = {"x": n, "u": m, "w": r}
    return _Parser(text, dims).parse()


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt_num(v: float) -> str:
    return repr(float(v))


def to_str(e: Expr, parent: int = 0) -> str:
    if isinstance(e, Const):
        s = _fmt_num(e.value)
        return f"({s})" if s.startswith("-") and parent > 0 else s
    if isinstance(e, Var):
        return f"{e.kind}{e.index + 1}"
    if isinstance(e, Func):
        return f"{e.name}({to_str(e.arg)})"
    if isinstance(e, Neg):
        s = "-" + to_str(e.arg, 3)
        return f"({s})" if parent > 0 else s
    if isinstance(e, Pow):
        s = f"{to_str(e.base, 4)}^{e.exp}"
        return f"({s})" if parent >= 4 else s
    p = _PREC[e.op]
    left = to_str(e.left, p)
    right = to_str(e.right, p + 1)
    s = f"{left} {e.op} {right}"
    return f"({s})" if p < parent else s


# ---------------------------------------------------------------------------
# evaluation


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


_NP = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh,
       "sqrt": np.sqrt, "sigmoid": _sigmoid}


def evaluate(e: Expr, x=(), u=(), w=()):
    """Evaluate at a point; arguments may also be stacked arrays whose first
    axis indexes the variable."""
    env = {"x": x, "u": u, "w": w}

    def ev(node):
        if isinstance(node, Const):
            return node.value
        if isinstance(node, Var):
            return env[node.kind][node.index]
        if isinstance(node, Neg):
            return -ev(node.arg)
        if isinstance(node, Pow):
            return ev(node.base) ** node.exp
        if isinstance(node, Func):
            a = ev(node.arg)
            if node.name == "sqrt" and np.any(np.asarray(a) < 0):
                raise ValueError("square root of a negative number")
            return _NP[node.name](a)
        a, b = ev(node.left), ev(node.right)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0):
            raise ZeroDivisionError("division by zero in expression")
        return a / b

    return ev(e)


eval_expr = evaluate


def compile_expr(e: Expr):
    """Fast numpy callable ``f(x, u, w)`` without runtime domain checks."""
    def src(node) -> str:
        if isinstance(node, Const):
            return repr(node.value)
        if isinstance(node, Var):
            return f"{node.kind}[{node.index}]"
        if isinstance(node, Neg):
            return f"(-{src(node.arg)})"
        if isinstance(node, Pow):
            return f"({src(node.base)}**{node.exp})"
        if isinstance(node, Func):
            return f"_f_{node.name}({src(node.arg)})"
        return f"({src(node.left)} {node.op} {src(node.right)})"

    ns = {f"_f_{k}": v for k, v in _NP.items()}
    return eval(f"lambda x, u, w: {src(e)}", ns)


# ---------------------------------------------------------------------------
# differentiation


def diff(e: Expr, var: Var) -> Expr:
    """Symbolic partial derivative with respect to ``var``."""
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e == var else 0.0)
    if isinstance(e, Neg):
        return neg(diff(e.arg, var))
    if isinstance(e, Pow):
        if e.exp == 0:
            return Const(0.0)
        return mul(mul(Const(float(e.exp)), power(e.base, e.exp - 1)), diff(e.base, var))
    if isinstance(e, Func):
        a = e.arg
        da = diff(a, var)
        if _is(da, 0):
            return Const(0.0)
        if e.name == "sin":
            outer = Func("cos", a)
        elif e.name == "cos":
            outer = neg(Func("sin", a))
        elif e.name == "exp":
            outer = e
        elif e.name == "tanh":
            outer = sub(Const(1.0), power(e, 2))
        elif e.name == "sigmoid":
            outer = mul(e, sub(Const(1.0), e))
        else:  # sqrt
            outer = div(Const(0.5), e)
        return mul(outer, da)
    dl, dr = diff(e.left, var), diff(e.right, var)
    if e.op == "+":
        return add(dl, dr)
    if e.op == "-":
        return sub(dl, dr)
    if e.op == "*":
        return add(mul(dl, e.right), mul(e.left, dr))
    # quotient rule
    return div(sub(mul(dl, e.right), mul(e.left, dr)), power(e.right, 2))


# ---------------------------------------------------------------------------
# interval evaluation


def interval_eval(e: Expr, x: Interval | None = None, u: Interval | None = None,
                  w: Interval | None = None) -> ScalarInterval:
    """Enclosure of the range of ``e`` over a box of variables."""
    env = {"x": x, "u": u, "w": w}

    def ev(node) -> ScalarInterval:
        if isinstance(node, Const):
            return ScalarInterval.point(node.value)
        if isinstance(node, Var):
            box = env[node.kind]
            if box is None or node.index >= box.dim:
                raise ValueError(f"no range given for {node.kind}{node.index + 1}")
            return box.scalar(node.index)
        if isinstance(node, Neg):
            return -ev(node.arg)
        if isinstance(node, Pow):
            return iv_pow_int(ev(node.base), node.exp)
        if isinstance(node, Func):
            return iv_elem(node.name, ev(node.arg))
        a, b = ev(node.left), ev(node.right)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a / b

    return ev(e)


def variables(e: Expr) -> set:
    if isinstance(e, Var):
        return {e}
    if isinstance(e, Const):
        return set()
    if isinstance(e, (Neg,)):
        return variables(e.arg)
    if isinstance(e, Pow):
        return variables(e.base)
    if isinstance(e, Func):
        return variables(e.arg)
    return variables(e.left) | variables(e.right)


# ---------------------------------------------------------------------------
# plants


class Plant:
    """``dx/dt = f(x, u, w)`` given as one expression per state."""

    def __init__(self, exprs, n: int | None = None, m: int = 0, r: int = 0):
        if isinstance(exprs, str):
            exprs = [exprs]
        exprs = list(exprs)
        n = len(exprs) if n is None else n
        if len(exprs) != n:
            raise ValueError(f"need {n} expressions, got {len(exprs)}")
        self.n, self.m, self.r = n, m, r
        self.f = [parse_expr(s, (n, m, r)) if isinstance(s, str) else s for s in exprs]
        self._fast = [compile_expr(e) for e in self.f]
        self._jac = None
        self._hess = None

    @property
    def all_vars(self) -> list:
        return ([Var("x", i) for i in range(self.n)] + [Var("u", i) for i in range(self.m)]
                + [Var("w", i) for i in range(self.r)])

    def __call__(self, x, u=(), w=()):
        x = np.asarray(x, dtype=float)
        out = [np.broadcast_to(np.asarray(f(x, np.asarray(u, dtype=float), np.asarray(w, dtype=float)), dtype=float),
                               x.shape[1:]) for f in self._fast]
        return np.stack(out)

    def jacobian_exprs(self):
        """d f_i / d v_j over v = (x, u, w)."""
        if self._jac is None:
            self._jac = [[diff(fi, v) for v in self.all_vars] for fi in self.f]
        return self._jac

    def hessian_exprs(self):
        if self._hess is None:
            vs = self.all_vars
            self._hess = [[[diff(dij, v) for v in vs] for dij in row] for row in self.jacobian_exprs()]
        return self._hess

    def jacobian(self, x, u=(), w=()) -> np.ndarray:
        return np.array([[float(evaluate(d, x, u, w)) for d in row] for row in self.jacobian_exprs()])

    def is_linear(self) -> bool:
        return all(_is(h, 0) for blk in self.hessian_exprs() for row in blk for h in row)

    @classmethod
    def linear(cls, A, B=None, E=None) -> "Plant":
        """Expression form of ``A x + B u + E w``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        n = A.shape[0]
        B = np.zeros((n, 0)) if B is None else np.asarray(B, dtype=float).reshape(n, -1)
        E = np.zeros((n, 0)) if E is None else np.asarray(E, dtype=float).reshape(n, -1)
        exprs = []
        for i in range(n):
            e: Expr = Const(0.0)
            for M, kind in ((A, "x"), (B, "u"), (E, "w")):
                for j in range(M.shape[1]):
                    e = add(e, mul(Const(M[i, j]), Var(kind, j)))
            exprs.append(e)
        return cls(exprs, n, B.shape[1], E.shape[1])
