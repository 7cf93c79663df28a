"""A small expression language over domain coordinates s1..sd.

Grammar (operator precedence low to high, ^ is right-associative and binds
tighter than unary minus):

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | VAR | FUNC '(' expr (',' expr)* ')' | '(' expr ')'

Functions: abs, exp, log, sqrt, sin, cos with one argument; min, max, pow
with two; indicator(lo, hi, x) evaluating to 1.0 when lo <= x < hi.
Evaluation is total: any non-finite intermediate raises EvalError instead
of letting NaN or inf leak into quadrature.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import EvalError, ExprSyntaxError, UnknownIdentifier

_UNARY_FUNCS = {
    "abs": np.abs,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
}
_BINARY_FUNCS = {
    "min": np.minimum,
    "max": np.maximum,
    "pow": np.power,
}
FUNCTION_NAMES = frozenset(_UNARY_FUNCS) | frozenset(_BINARY_FUNCS) | {"indicator"}


@dataclass(frozen=True)
class Expr:
    """A parsed expression tree node.

    ``op`` is one of 'num', 'var', 'neg', '+', '-', '*', '/', '^' or a
    function name; ``args`` holds child nodes, ``value`` the literal for
    'num' and the 1-based coordinate index for 'var'. ``pos`` is the byte
    offset in the source text (None for programmatically built trees) and
    is excluded from equality so round-tripping compares structurally.
    """

    op: str
    args: tuple = ()
    value: float | int | None = None
    pos: int | None = field(default=None, compare=False)

    def variables(self) -> set[int]:
        if self.op == "var":
            return {self.value}
        out: set[int] = set()
        for a in self.args:
            out |= a.variables()
        return out

    def is_constant(self) -> bool:
        return not self.variables()

    def __str__(self) -> str:
        return _print(self, 0)


def num(v: float) -> Expr:
    return Expr("num", value=float(v))


def var(index: int) -> Expr:
    return Expr("var", value=int(index))


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    tokens = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None or m.end() == i:
            stripped = text[i:].lstrip()
            if not stripped:
                break
            bad_at = len(text) - len(stripped)
            raise ExprSyntaxError(f"unexpected character {stripped[0]!r}", bad_at)
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        i = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.k = 0

    def peek(self):
        return self.tokens[self.k]

    def take(self):
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def expect_op(self, symbol):
        kind, val, pos = self.peek()
        if kind == "op" and val == symbol:
            return self.take()
        raise ExprSyntaxError(
            f"expected {symbol!r}, found {val or 'end of input'!r}", pos, (symbol,)
        )

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"trailing input {val!r}", pos, ("end of input",))
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, val, pos = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                e = Expr(val, (e, self.term()), pos=pos)
            else:
                return e

    def term(self) -> Expr:
        e = self.unary()
        while True:
            kind, val, pos = self.peek()
            if kind == "op" and val in "*/":
                self.take()
                e = Expr(val, (e, self.unary()), pos=pos)
            else:
                return e

    def unary(self) -> Expr:
        kind, val, pos = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Expr("neg", (self.unary(),), pos=pos)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, val, pos = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return Expr("^", (base, self.unary()), pos=pos)
        return base

    def atom(self) -> Expr:
        kind, val, pos = self.take()
        if kind == "num":
            return Expr("num", value=float(val), pos=pos)
        if kind == "ident":
            nkind, nval, _ = self.peek()
            if nkind == "op" and nval == "(":
                return self.call(val, pos)
            m = re.fullmatch(r"s(\d+)", val)
            if m and int(m.group(1)) >= 1:
                return Expr("var", value=int(m.group(1)), pos=pos)
            raise UnknownIdentifier(val, pos)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise ExprSyntaxError(
            f"expected a value, found {val or 'end of input'!r}",
            pos,
            ("number", "variable", "function", "("),
        )

    def call(self, name: str, pos: int) -> Expr:
        if name not in FUNCTION_NAMES:
            raise UnknownIdentifier(name, pos)
        self.expect_op("(")
        args = [self.expr()]
        while True:
            kind, val, p = self.peek()
            if kind == "op" and val == ",":
                self.take()
                args.append(self.expr())
            else:
                break
        self.expect_op(")")
        want = 3 if name == "indicator" else (2 if name in _BINARY_FUNCS else 1)
        if len(args) != want:
            raise ExprSyntaxError(
                f"{name} takes {want} argument(s), got {len(args)}", pos
            )
        return Expr(name, tuple(args), pos=pos)


def parse(text: str) -> Expr:
    return _Parser(text).parse()


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _print(e: Expr, parent_prec: int) -> str:
    if e.op == "num":
        return repr(e.value)
    if e.op == "var":
        return f"s{e.value}"
    if e.op == "neg":
        inner = _print(e.args[0], _PREC["neg"])
        text = f"-{inner}"
        return f"({text})" if parent_prec > _PREC["neg"] else text
    if e.op in ("+", "-", "*", "/"):
        prec = _PREC[e.op]
        left = _print(e.args[0], prec)
        right = _print(e.args[1], prec + 1)
        text = f"{left} {e.op} {right}" if prec == 1 else f"{left}{e.op}{right}"
        return f"({text})" if parent_prec > prec else text
    if e.op == "^":
        left = _print(e.args[0], _PREC["^"] + 1)
        right = _print(e.args[1], _PREC["^"])
        text = f"{left}^{right}"
        return f"({text})" if parent_prec > _PREC["^"] else text
    args = ", ".join(_print(a, 0) for a in e.args)
    return f"{e.op}({args})"


def to_text(e: Expr) -> str:
    return _print(e, 0)


def _check_finite(values, pos, what):
    if not np.all(np.isfinite(values)):
        raise EvalError(f"non-finite result from {what}", pos)
    return values


def _eval_node(e: Expr, cols):
    if e.op == "num":
        return e.value
    if e.op == "var":
        if e.value > len(cols):
            raise EvalError(
                f"variable s{e.value} not available in dimension {len(cols)}", e.pos
            )
        return cols[e.value - 1]
    if e.op == "neg":
        return -_eval_node(e.args[0], cols)
    if e.op in ("+", "-", "*", "/", "^"):
        a = _eval_node(e.args[0], cols)
        b = _eval_node(e.args[1], cols)
        with np.errstate(all="ignore"):
            if e.op == "+":
                out = a + b
            elif e.op == "-":
                out = a - b
            elif e.op == "*":
                out = a * b
            elif e.op == "/":
                out = np.divide(a, b)
            else:
                out = np.power(a, b)
        return _check_finite(out, e.pos, f"operator {e.op!r}")
    if e.op == "indicator":
        lo = _eval_node(e.args[0], cols)
        hi = _eval_node(e.args[1], cols)
        x = _eval_node(e.args[2], cols)
        return np.where((lo <= x) & (x < hi), 1.0, 0.0)
    a = _eval_node(e.args[0], cols)
    with np.errstate(all="ignore"):
        if e.op in _UNARY_FUNCS:
            out = _UNARY_FUNCS[e.op](a)
        else:
            b = _eval_node(e.args[1], cols)
            out = _BINARY_FUNCS[e.op](a, b)
    return _check_finite(out, e.pos, f"{e.op}(...)")


def evaluate(e: Expr, points) -> np.ndarray:
    """Evaluate ``e`` on points of shape (n, d); returns shape (n,).

    A (d,) vector is treated as a single point and returns a scalar.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    cols = [pts[:, j] for j in range(pts.shape[1])]
    out = np.broadcast_to(np.asarray(_eval_node(e, cols), dtype=float), (pts.shape[0],))
    return float(out[0]) if single else np.array(out, dtype=float)
