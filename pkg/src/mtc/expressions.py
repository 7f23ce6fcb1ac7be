"""Scalar expressions in the multitime variables t1..tm.

Expressions are small immutable ASTs built by :func:`parse_expr`.  They can be
evaluated at a single multitime (:func:`eval_expr`), vectorized over a batch of
points (:func:`eval_array`), differentiated symbolically (:func:`diff_expr`)
and printed back to text (``str(e)``) in a form :func:`parse_expr` accepts.

Grammar (highest precedence first)::

    atom    := number | t<i> | func '(' expr ')' | '(' expr ')'
    power   := atom ['^' ['-'|'+'] integer]
    unary   := ('-'|'+') unary | power
    term    := unary (('*'|'/') unary)*
    expr    := term (('+'|'-') term)*

with ``func`` one of ``sin``, ``cos``, ``exp``, ``sqrt``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Expression",
    "Const",
    "Var",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Func",
    "MatrixExpr",
    "ExpressionError",
    "ExpressionSyntaxError",
    "UnknownIdentifierError",
    "EvaluationError",
    "parse_expr",
    "eval_expr",
    "eval_array",
    "diff_expr",
    "eval_matrix",
    "eval_matrix_array",
    "diff_matrix",
    "matrix_from_rows",
    "zero_matrix",
    "const",
]

FUNCTIONS = ("sin", "cos", "exp", "sqrt")


class ExpressionError(ValueError):
    """Base class for expression errors."""


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class UnknownIdentifierError(ExpressionError):
    def __init__(self, name: str, position: int):
        self.name = name
        self.position = position
        super().__init__(f"unknown identifier {name!r} at position {position}")


class EvaluationError(ExpressionError, ArithmeticError):
    """Raised when an expression is undefined at a point.

    ``t`` holds the offending multitime and ``entry`` the (row, col) of the
    matrix entry when raised from a matrix evaluation.
    """

    def __init__(self, message: str, t=None, entry: tuple[int, int] | None = None):
        self.reason = message
        self.t = None if t is None else tuple(float(x) for x in np.atleast_1d(t))
        self.entry = entry
        where = f" at t={self.t}" if self.t is not None else ""
        if entry is not None:
            where += f" (entry {entry})"
        super().__init__(message + where)


# --------------------------------------------------------------------------
# AST

class Expression:
    """Base of the expression AST.  Nodes are frozen dataclasses."""

    # binding strength used by the printer
    precedence = 100

    def variables(self) -> set[int]:
        out: set[int] = set()
        for child in self.children():
            out |= child.variables()
        return out

    def children(self) -> tuple["Expression", ...]:
        return ()

    def is_zero(self) -> bool:
        return isinstance(self, Const) and self.value == 0.0


@dataclass(frozen=True)
class Const(Expression):
    value: float

    def __str__(self) -> str:
        if self.value < 0 or (self.value == 0 and math.copysign(1.0, self.value) < 0):
            return f"({float(self.value)!r})"
        return repr(float(self.value))


@dataclass(frozen=True)
class Var(Expression):
    index: int  # 1-based

    def variables(self) -> set[int]:
        return {self.index}

    def __str__(self) -> str:
        return f"t{self.index}"


@dataclass(frozen=True)
class Neg(Expression):
    arg: Expression
    precedence = 30

    def children(self):
        return (self.arg,)

    def __str__(self) -> str:
        return f"-{_wrap(self.arg, self.precedence + 1)}"


@dataclass(frozen=True)
class _Binary(Expression):
    left: Expression
    right: Expression

    symbol = "?"

    def children(self):
        return (self.left, self.right)

    def __str__(self) -> str:
        # left-associative: the right operand needs strictly higher binding
        return (f"{_wrap(self.left, self.precedence)} {self.symbol} "
                f"{_wrap(self.right, self.precedence + 1)}")


class Add(_Binary):
    symbol = "+"
    precedence = 10


class Sub(_Binary):
    symbol = "-"
    precedence = 10


class Mul(_Binary):
    symbol = "*"
    precedence = 20


class Div(_Binary):
    symbol = "/"
    precedence = 20


@dataclass(frozen=True)
class Pow(Expression):
    base: Expression
    exponent: int
    precedence = 40

    def children(self):
        return (self.base,)

    def __str__(self) -> str:
        exp = str(self.exponent) if self.exponent >= 0 else f"({self.exponent})"
        return f"{_wrap(self.base, self.precedence + 1)}^{exp}"


@dataclass(frozen=True)
class Func(Expression):
    name: str
    arg: Expression

    def children(self):
        return (self.arg,)

    def __str__(self) -> str:
        return f"{self.name}({self.arg})"


def _wrap(e: Expression, min_prec: int) -> str:
    s = str(e)
    if e.precedence < min_prec:
        return f"({s})"
    return s


def const(value: float) -> Const:
    return Const(float(value))


ZERO = Const(0.0)
ONE = Const(1.0)


# --------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass
class _Token:
    kind: str  # num | name | op | end
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append(_Token(kind, m.group(kind), start))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, m: int | None):
        self.text = text
        self.m = m
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message: str, tok: _Token | None = None):
        tok = tok or self.tok
        if tok.kind == "end":
            message = "unexpected end of input" if message is None else message
        raise ExpressionSyntaxError(message, tok.pos, self.text)

    def expect(self, op: str):
        if self.tok.kind == "op" and self.tok.text == op:
            return self.advance()
        found = "end of input" if self.tok.kind == "end" else repr(self.tok.text)
        self.error(f"expected {op!r}, found {found}")

    def parse(self) -> Expression:
        e = self.expr()
        if self.tok.kind != "end":
            self.error(f"unexpected token {self.tok.text!r}")
        return e

    def expr(self) -> Expression:
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self) -> Expression:
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            rhs = self.unary()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def unary(self) -> Expression:
        if self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            arg = self.unary()
            if op == "+":
                return arg
            if isinstance(arg, Const):
                return Const(-arg.value)
            return Neg(arg)
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return Pow(base, self.integer_exponent())
        return base

    def integer_exponent(self) -> int:
        paren = False
        if self.tok.kind == "op" and self.tok.text == "(":
            paren = True
            self.advance()
        sign = 1
        while self.tok.kind == "op" and self.tok.text in "+-":
            if self.advance().text == "-":
                sign = -sign
        tok = self.tok
        if tok.kind != "num" or not tok.text.isdigit():
            self.error("exponent must be an integer literal")
        self.advance()
        if paren:
            self.expect(")")
        return sign * int(tok.text)

    def atom(self) -> Expression:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "name":
            self.advance()
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(tok.text, arg)
            m = re.fullmatch(r"t([1-9][0-9]*)", tok.text)
            if m is None:
                raise UnknownIdentifierError(tok.text, tok.pos)
            index = int(m.group(1))
            if self.m is not None and index > self.m:
                raise UnknownIdentifierError(tok.text, tok.pos)
            return Var(index)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind == "end":
            self.error("unexpected end of input")
        self.error(f"unexpected token {tok.text!r}")


def parse_expr(text: str | float | int, m: int | None = None) -> Expression:
    """Parse ``text`` into an :class:`Expression`.

    Numbers are accepted as-is so that matrices in config files may mix
    ``0`` and ``"t2"``.  When ``m`` is given, variables beyond ``t<m>`` are
    rejected.  Syntax errors report a 0-based character position.
    """
    if isinstance(text, bool):
        raise TypeError("boolean is not an expression")
    if isinstance(text, (int, float)):
        return Const(float(text))
    if not isinstance(text, str):
        raise TypeError(f"cannot parse expression from {type(text).__name__}")
    if not text.strip():
        raise ExpressionSyntaxError("empty expression", 0, text)
    return _Parser(text, m).parse()


# --------------------------------------------------------------------------
# Evaluation

def eval_array(e: Expression, points, strict: bool = True) -> np.ndarray:
    """Evaluate ``e`` at every row of ``points`` (shape ``(N, m)``).

    With ``strict`` an :class:`EvaluationError` is raised at the first point
    where the expression is undefined (division by zero, sqrt of a negative,
    overflow); otherwise such points evaluate to NaN.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    with np.errstate(all="ignore"):
        out = _eval(e, pts)
    out = np.broadcast_to(out, (pts.shape[0],)).astype(float, copy=True)
    if strict:
        bad = ~np.isfinite(out)
        if bad.any():
            i = int(np.argmax(bad))
            raise EvaluationError(_diagnose(e, pts[i]), pts[i])
    return out


def _eval(e: Expression, pts: np.ndarray):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        if e.index > pts.shape[1]:
            raise EvaluationError(f"variable t{e.index} not available for m={pts.shape[1]}")
        return pts[:, e.index - 1]
    if isinstance(e, Neg):
        return -_eval(e.arg, pts)
    if isinstance(e, Add):
        return _eval(e.left, pts) + _eval(e.right, pts)
    if isinstance(e, Sub):
        return _eval(e.left, pts) - _eval(e.right, pts)
    if isinstance(e, Mul):
        return _eval(e.left, pts) * _eval(e.right, pts)
    if isinstance(e, Div):
        den = np.asarray(_eval(e.right, pts), dtype=float)
        num = _eval(e.left, pts)
        return np.where(den == 0.0, np.nan, num / np.where(den == 0.0, 1.0, den))
    if isinstance(e, Pow):
        base = np.asarray(_eval(e.base, pts), dtype=float)
        if e.exponent < 0:
            safe = np.where(base == 0.0, 1.0, base)
            return np.where(base == 0.0, np.nan, safe ** e.exponent)
        return base ** e.exponent
    if isinstance(e, Func):
        arg = np.asarray(_eval(e.arg, pts), dtype=float)
        if e.name == "sqrt":
            return np.where(arg < 0.0, np.nan, np.sqrt(np.abs(arg)))
        return getattr(np, e.name)(arg)
    raise TypeError(f"not an expression node: {e!r}")


def _diagnose(e: Expression, point: np.ndarray) -> str:
    """Name the first failing sub-operation at a single point."""
    pts = point[None, :]
    with np.errstate(all="ignore"):
        for node in _postorder(e):
            if isinstance(node, Div) and np.all(np.asarray(_eval(node.right, pts)) == 0.0):
                return "division by zero"
            if isinstance(node, Pow) and node.exponent < 0 and np.all(np.asarray(_eval(node.base, pts)) == 0.0):
                return "division by zero"
            if isinstance(node, Func) and node.name == "sqrt" and np.all(np.asarray(_eval(node.arg, pts)) < 0.0):
                return "sqrt of negative"
    return "non-finite value"


def _postorder(e: Expression):
    for c in e.children():
        yield from _postorder(c)
    yield e


def eval_expr(e: Expression, t: Sequence[float]) -> float:
    """Evaluate ``e`` at the single multitime ``t``."""
    t = np.asarray(t, dtype=float).ravel()
    return float(eval_array(e, t[None, :])[0])


# --------------------------------------------------------------------------
# Symbolic differentiation with constant folding

def _add(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if a.is_zero():
        return b
    if b.is_zero():
        return a
    return Add(a, b)


def _sub(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if b.is_zero():
        return a
    if a.is_zero():
        return _neg(b)
    return Sub(a, b)


def _neg(a: Expression) -> Expression:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if a.is_zero() or b.is_zero():
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    return Mul(a, b)


def _div(a: Expression, b: Expression) -> Expression:
    if a.is_zero():
        return ZERO
    if b == ONE:
        return a
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    return Div(a, b)


def _pow(base: Expression, exponent: int) -> Expression:
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if isinstance(base, Const) and not (base.value == 0.0 and exponent < 0):
        return Const(base.value ** exponent)
    return Pow(base, exponent)


def diff_expr(e: Expression, var: int) -> Expression:
    """Symbolic derivative of ``e`` with respect to ``t<var>`` (1-based)."""
    if var < 1:
        raise ValueError("variable index is 1-based")
    if var not in e.variables():
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == var else ZERO
    if isinstance(e, Neg):
        return _neg(diff_expr(e.arg, var))
    if isinstance(e, Add):
        return _add(diff_expr(e.left, var), diff_expr(e.right, var))
    if isinstance(e, Sub):
        return _sub(diff_expr(e.left, var), diff_expr(e.right, var))
    if isinstance(e, Mul):
        return _add(_mul(diff_expr(e.left, var), e.right),
                    _mul(e.left, diff_expr(e.right, var)))
    if isinstance(e, Div):
        # (f/g)' = f'/g - f g'/g^2
        df, dg = diff_expr(e.left, var), diff_expr(e.right, var)
        return _sub(_div(df, e.right), _div(_mul(e.left, dg), _pow(e.right, 2)))
    if isinstance(e, Pow):
        k = e.exponent
        return _mul(_mul(Const(float(k)), _pow(e.base, k - 1)), diff_expr(e.base, var))
    if isinstance(e, Func):
        inner = diff_expr(e.arg, var)
        if e.name == "sin":
            outer = Func("cos", e.arg)
        elif e.name == "cos":
            outer = _neg(Func("sin", e.arg))
        elif e.name == "exp":
            outer = e
        else:  # sqrt
            outer = _div(Const(0.5), e)
        return _mul(outer, inner)
    raise TypeError(f"not an expression node: {e!r}")


# --------------------------------------------------------------------------
# Matrices of expressions

@dataclass(frozen=True)
class MatrixExpr:
    rows: int
    cols: int
    entries: tuple[Expression, ...]

    def __post_init__(self):
        if len(self.entries) != self.rows * self.cols:
            raise ValueError(
                f"MatrixExpr {self.rows}x{self.cols} needs {self.rows * self.cols} "
                f"entries, got {len(self.entries)}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def entry(self, i: int, j: int) -> Expression:
        return self.entries[i * self.cols + j]

    def is_zero(self) -> bool:
        return all(e.is_zero() for e in self.entries)

    def is_constant(self) -> bool:
        return all(not e.variables() for e in self.entries)

    def transpose(self) -> "MatrixExpr":
        return MatrixExpr(self.cols, self.rows, tuple(
            self.entry(i, j) for j in range(self.cols) for i in range(self.rows)))

    def to_rows(self) -> list[list[str]]:
        return [[str(self.entry(i, j)) for j in range(self.cols)] for i in range(self.rows)]


def matrix_from_rows(rows, m: int | None = None) -> MatrixExpr:
    """Build a :class:`MatrixExpr` from nested lists of strings/numbers."""
    rows = list(rows)
    if not rows or any(not isinstance(r, (list, tuple)) for r in rows):
        raise ValueError("matrix must be a nonempty list of rows")
    ncols = len(rows[0])
    if ncols == 0 or any(len(r) != ncols for r in rows):
        raise ValueError("matrix rows must be nonempty and of equal length")
    return MatrixExpr(len(rows), ncols, tuple(parse_expr(x, m) for r in rows for x in r))


def zero_matrix(rows: int, cols: int) -> MatrixExpr:
    return MatrixExpr(rows, cols, (ZERO,) * (rows * cols))


def eval_matrix_array(M: MatrixExpr, points, strict: bool = True) -> np.ndarray:
    """Entrywise evaluation at a batch of points; shape ``(N, rows, cols)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty((pts.shape[0], M.rows, M.cols))
    for idx, e in enumerate(M.entries):
        i, j = divmod(idx, M.cols)
        try:
            out[:, i, j] = eval_array(e, pts, strict=strict)
        except EvaluationError as err:
            raise EvaluationError(err.reason, err.t, entry=(i, j)) from None
    return out


def eval_matrix(M: MatrixExpr, t: Sequence[float]) -> np.ndarray:
    t = np.asarray(t, dtype=float).ravel()
    return eval_matrix_array(M, t[None, :])[0]


def diff_matrix(M: MatrixExpr, var: int) -> MatrixExpr:
    return MatrixExpr(M.rows, M.cols, tuple(diff_expr(e, var) for e in M.entries))
