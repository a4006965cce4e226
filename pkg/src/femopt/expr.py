"""Tiny symbolic expression layer for PDE coefficients and manufactured solutions.

Grammar: floating constants, variables x and y, binary + - * / ^, unary minus,
and exp(.).  Binary operators are left-associative with precedence
^  >  unary minus  >  * /  >  + -.  There is deliberately no simplification
engine: smart constructors fold constants (and the neutral elements that
constant folding implies) and nothing else, so a printed expression re-parses
to a structurally identical tree and integer powers keep their evaluation
order bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Exp",
    "ExprError",
    "ExprSyntaxError",
    "ExprEvalError",
    "parse",
    "to_str",
    "evaluate",
    "differentiate",
    "polynomial_degree",
    "manufacture_rhs",
]

_MAX_INT_POWER = 64


class ExprError(Exception):
    """Base class for expression layer failures."""


class ExprSyntaxError(ExprError):
    """Raised on malformed input; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class ExprEvalError(ExprError):
    """Raised when evaluation hits an undefined operation."""


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Exp:
    arg: "Expr"


Expr = Union[Const, Var, Neg, BinOp, Exp]


# ---------------------------------------------------------------------------
# smart constructors (constant folding only)

def _is_const(e, v=None):
    return isinstance(e, Const) and (v is None or e.value == v)


def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    # 0/e is not folded: e may vanish somewhere and the error must surface
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return Const(a.value / b.value)
    if _is_const(b, 1.0):
        return a
    return BinOp("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return Const(1.0)
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(float(_eval_pow(a.value, b.value, "constant fold")))
    return BinOp("^", a, b)


def neg(a: Expr) -> Expr:
    if _is_const(a):
        return Const(-a.value)
    return Neg(a)


def exp(a: Expr) -> Expr:
    if _is_const(a):
        return Const(math.exp(a.value))
    return Exp(a)


# ---------------------------------------------------------------------------
# parsing

_ALLOWED_VARS = ("x", "y")


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message, offset=None):
        raise ExprSyntaxError(message, self.pos if offset is None else offset)

    def next_token(self):
        """Return (kind, value, offset); kind in num/ident/op/end."""
        t = self.text
        while self.pos < len(t) and t[self.pos] in " \t\r\n":
            self.pos += 1
        if self.pos >= len(t):
            return ("end", "", len(t))
        start = self.pos
        c = t[start]
        if c in "+-*/^()":
            self.pos += 1
            return ("op", c, start)
        if c.isdigit() or (c == "." and start + 1 < len(t) and t[start + 1].isdigit()):
            i = start
            while i < len(t) and t[i].isdigit():
                i += 1
            if i < len(t) and t[i] == ".":
                i += 1
                while i < len(t) and t[i].isdigit():
                    i += 1
            if i < len(t) and t[i] in "eE":
                j = i + 1
                if j < len(t) and t[j] in "+-":
                    j += 1
                if j < len(t) and t[j].isdigit():
                    i = j
                    while i < len(t) and t[i].isdigit():
                        i += 1
            self.pos = i
            return ("num", t[start:i], start)
        if c.isalpha() or c == "_":
            i = start
            while i < len(t) and (t[i].isalnum() or t[i] == "_"):
                i += 1
            self.pos = i
            return ("ident", t[start:i], start)
        self.error(f"unexpected character {c!r}")


class _Parser:
    def __init__(self, text: str):
        self.tok = _Tokenizer(text)
        self.cur = self.tok.next_token()

    def advance(self):
        self.cur = self.tok.next_token()

    def expect_op(self, ch):
        kind, val, off = self.cur
        if kind != "op" or val != ch:
            raise ExprSyntaxError(f"expected {ch!r}", off)
        self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, off = self.cur
        if kind != "end":
            raise ExprSyntaxError(f"unexpected trailing input {val!r}", off)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.cur[0] == "op" and self.cur[1] in "+-":
            op = self.cur[1]
            self.advance()
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.cur[0] == "op" and self.cur[1] in "*/":
            op = self.cur[1]
            self.advance()
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self) -> Expr:
        if self.cur[0] == "op" and self.cur[1] == "-":
            self.advance()
            return neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        e = self.atom()
        while self.cur[0] == "op" and self.cur[1] == "^":
            self.advance()
            e = power(e, self.signed_atom())
        return e

    def signed_atom(self) -> Expr:
        # allows x^-2 without forcing parentheses
        if self.cur[0] == "op" and self.cur[1] == "-":
            self.advance()
            return neg(self.signed_atom())
        return self.atom()

    def atom(self) -> Expr:
        kind, val, off = self.cur
        if kind == "num":
            self.advance()
            return Const(float(val))
        if kind == "ident":
            self.advance()
            if self.cur[0] == "op" and self.cur[1] == "(":
                if val != "exp":
                    raise ExprSyntaxError(f"unknown function {val!r}", off)
                self.advance()
                arg = self.expr()
                self.expect_op(")")
                return exp(arg)
            if val not in _ALLOWED_VARS:
                raise ExprSyntaxError(f"unknown identifier {val!r}", off)
            return Var(val)
        if kind == "op" and val == "(":
            self.advance()
            e = self.expr()
            self.expect_op(")")
            return e
        raise ExprSyntaxError(f"expected a value, got {val!r}" if val else "unexpected end of input", off)


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises ExprSyntaxError (with byte offset) on malformed input.
    """
    if not isinstance(text, str):
        raise ExprSyntaxError("expression must be a string", 0)
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printing

_LEVEL = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _level(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _LEVEL[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Const) and e.value < 0:
        return 3  # prints with a leading minus
    return 5


def to_str(e: Expr) -> str:
    """Render with minimal parentheses; parse(to_str(e)) == e structurally."""
    if isinstance(e, Const):
        return repr(e.value) if e.value == e.value else "nan"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Exp):
        return f"exp({to_str(e.arg)})"
    if isinstance(e, Neg):
        inner = to_str(e.arg)
        if _level(e.arg) < 3:
            inner = f"({inner})"
        return f"-{inner}"
    lvl = _LEVEL[e.op]
    left = to_str(e.left)
    if _level(e.left) < lvl:
        left = f"({left})"
    right = to_str(e.right)
    # left-associative: a-(b-c), a/(b/c), a+(b+c) all keep their parentheses
    if _level(e.right) <= lvl:
        right = f"({right})"
    return f"{left}{e.op}{right}"


# ---------------------------------------------------------------------------
# evaluation

def _eval_pow(base, expo, where):
    expo_arr = np.asarray(expo)
    if expo_arr.ndim == 0 and float(expo_arr) == int(expo_arr) and abs(int(expo_arr)) <= _MAX_INT_POWER:
        n = int(expo_arr)
        out = base * 0.0 + 1.0
        for _ in range(abs(n)):
            out = out * base
        if n < 0:
            if np.any(np.asarray(base) == 0.0):
                raise ExprEvalError(f"zero raised to negative power in {where}")
            out = 1.0 / out
        return out
    if np.any(np.asarray(base) < 0.0):
        raise ExprEvalError(f"negative base with non-integer exponent in {where}")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.exp(expo * np.log(base))


def evaluate(e: Expr, x, y=None):
    """Evaluate ``e`` at x (and y in 2D).  Accepts floats or numpy arrays.

    Integer powers are computed by repeated multiplication, real powers via
    exp/log (non-negative bases only).  Division by zero and domain errors
    raise ExprEvalError instead of warning.
    """
    scalar = np.isscalar(x) and (y is None or np.isscalar(y))
    out = _evaluate(e, x, y)
    if scalar:
        return float(out)
    shape = np.broadcast_shapes(np.shape(x), np.shape(y) if y is not None else ())
    return np.array(np.broadcast_to(np.asarray(out, dtype=float), shape))


def _evaluate(e: Expr, x, y):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        if e.name == "x":
            return x
        if y is None:
            raise ExprEvalError("expression references y but no y was supplied")
        return y
    if isinstance(e, Neg):
        return -_evaluate(e.arg, x, y)
    if isinstance(e, Exp):
        return np.exp(_evaluate(e.arg, x, y))
    a = _evaluate(e.left, x, y)
    b = _evaluate(e.right, x, y)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        if np.any(np.asarray(b) == 0.0):
            raise ExprEvalError(f"division by zero in {to_str(e)!r}")
        return a / b
    return _eval_pow(a, b, f"{to_str(e)!r}")


# ---------------------------------------------------------------------------
# differentiation

def differentiate(e: Expr, var: str) -> Expr:
    """Exact derivative with respect to ``var`` ("x" or "y")."""
    if var not in _ALLOWED_VARS:
        raise ExprError(f"cannot differentiate with respect to {var!r}")
    return _diff(e, var)


def _diff(e: Expr, v: str) -> Expr:
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0) if e.name == v else Const(0.0)
    if isinstance(e, Neg):
        return neg(_diff(e.arg, v))
    if isinstance(e, Exp):
        return mul(exp(e.arg), _diff(e.arg, v))
    da, db = None, None
    if e.op == "+":
        return add(_diff(e.left, v), _diff(e.right, v))
    if e.op == "-":
        return sub(_diff(e.left, v), _diff(e.right, v))
    if e.op == "*":
        return add(mul(_diff(e.left, v), e.right), mul(e.left, _diff(e.right, v)))
    if e.op == "/":
        da = _diff(e.left, v)
        db = _diff(e.right, v)
        num = sub(mul(da, e.right), mul(e.left, db))
        return div(num, power(e.right, Const(2.0)))
    # power rule; general a(x)^b(x) would need a logarithm node
    if not isinstance(e.right, Const):
        raise ExprError("differentiation of non-constant exponents is unsupported")
    n = e.right.value
    return mul(mul(Const(n), power(e.left, Const(n - 1.0))), _diff(e.left, v))


# ---------------------------------------------------------------------------
# polynomial degree bounds

def polynomial_degree(e: Expr):
    """Return (deg_x, deg_y, total_degree) upper bounds, or None if not polynomial."""
    if isinstance(e, Const):
        return (0, 0, 0)
    if isinstance(e, Var):
        return (1, 0, 1) if e.name == "x" else (0, 1, 1)
    if isinstance(e, Neg):
        return polynomial_degree(e.arg)
    if isinstance(e, Exp):
        return None
    a = polynomial_degree(e.left)
    b = polynomial_degree(e.right)
    if e.op in "+-":
        if a is None or b is None:
            return None
        return tuple(max(i, j) for i, j in zip(a, b))
    if e.op == "*":
        if a is None or b is None:
            return None
        return tuple(i + j for i, j in zip(a, b))
    if e.op == "/":
        if a is None or not isinstance(e.right, Const) or e.right.value == 0.0:
            return None
        return a
    if isinstance(e.right, Const):
        n = e.right.value
        if a is not None and n == int(n) and n >= 0:
            return tuple(int(n) * i for i in a)
    return None


# ---------------------------------------------------------------------------
# method of manufactured solutions

def _as_matrix(D, dim):
    """Normalize D to a scalar Expr (1D) or symmetric 2x2 tuple of Expr (2D)."""
    if dim == 1:
        if not isinstance(D, (Const, Var, Neg, BinOp, Exp)):
            raise ExprError("1D diffusion must be a scalar expression")
        return D
    if isinstance(D, (Const, Var, Neg, BinOp, Exp)):
        return ((D, Const(0.0)), (Const(0.0), D))
    rows = tuple(tuple(row) for row in D)
    if len(rows) != 2 or any(len(r) != 2 for r in rows):
        raise ExprError("2D diffusion must be a 2x2 matrix of expressions")
    _check_symmetric(rows)
    return rows


def _check_symmetric(rows):
    a, b = rows[0][1], rows[1][0]
    if a == b:
        return
    rng = np.random.default_rng(8127)
    pts = rng.random((16, 2))
    va = evaluate(a, pts[:, 0], pts[:, 1])
    vb = evaluate(b, pts[:, 0], pts[:, 1])
    if not np.allclose(va, vb, rtol=1e-12, atol=1e-12):
        raise ExprError("diffusion matrix must be symmetric")


def manufacture_rhs(u: Expr, D, r: Expr, dim: int) -> Expr:
    """Source term f = -div(D grad u) + r u for a chosen solution u.

    D is a scalar expression in 1D; in 2D either a scalar (isotropic) or a
    symmetric 2x2 matrix of expressions.
    """
    if dim not in (1, 2):
        raise ExprError("dim must be 1 or 2")
    if dim == 1:
        Ds = _as_matrix(D, 1)
        flux = mul(Ds, differentiate(u, "x"))
        return add(neg(differentiate(flux, "x")), mul(r, u))
    rows = _as_matrix(D, 2)
    ux = differentiate(u, "x")
    uy = differentiate(u, "y")
    fx = add(mul(rows[0][0], ux), mul(rows[0][1], uy))
    fy = add(mul(rows[1][0], ux), mul(rows[1][1], uy))
    divergence = add(differentiate(fx, "x"), differentiate(fy, "y"))
    return add(neg(divergence), mul(r, u))


def conormal_flux(u: Expr, D, dim: int):
    """Outward co-normal data D grad(u) . n on the horizontal boundaries.

    Returns {"bottom": h_b, "top": h_t}; n = (0,-1) at y=0 and (0,1) at y=1.
    The expressions still contain y and are meant to be evaluated on the facet.
    """
    if dim != 2:
        raise ExprError("co-normal data only applies to the 2D problem")
    rows = _as_matrix(D, 2)
    ux = differentiate(u, "x")
    uy = differentiate(u, "y")
    fy = add(mul(rows[1][0], ux), mul(rows[1][1], uy))
    return {"bottom": neg(fy), "top": fy}
