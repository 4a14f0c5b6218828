"""Coefficient expressions in the variable ``t``.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' int)*            # right associative, integer exponents
    atom   := number | '(' expr ',' expr ')' | 't'
            | ident '(' expr ')' | '(' expr ')'
    ident  := sin | cos | exp | ln | sqrt

``(a, b)`` denotes ``a + b i``.  Trees are immutable; :func:`derivative`
differentiates symbolically and :func:`to_text` prints a form that parses
back to the same tree.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ExprSyntaxError, UnknownIdentifierError

MAX_TEXT_BYTES = 64 * 1024
FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Num(Expr):
    value: complex


@dataclass(frozen=True)
class Var(Expr):
    pass


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr


@dataclass(frozen=True)
class Cplx(Expr):
    re: Expr
    im: Expr


T = Var()
ZERO = Num(0.0)
ONE = Num(1.0)

# ---------------------------------------------------------------------------
# tokenizer and parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
      | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
      | (?P<op>[-+*/^(),−])
    )""",
    re.VERBOSE,
)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while True:
            while pos < len(text) and text[pos].isspace():
                pos += 1
            if pos == len(text):
                break
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                raise ExprSyntaxError(f"unexpected character {text[pos]!r}", self._byte(pos))
            kind = m.lastgroup
            value = m.group(kind)
            if value == "−":
                value = "-"
            self.tokens.append((kind, value, m.start(kind)))
            pos = m.end()
        self.i = 0

    def _byte(self, pos: int) -> int:
        return len(self.text[:pos].encode("utf-8"))

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("end", "", len(self.text))

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value or kind == "end":
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", self._byte(pos))

    def error(self, msg: str):
        raise ExprSyntaxError(msg, self._byte(self.peek()[2]))

    # expr := term (('+'|'-') term)*
    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        exps = []
        while self.peek()[:2] == ("op", "^"):
            self.take()
            exps.append(self.integer())
        if not exps:
            return base
        e = exps[-1]
        for b in reversed(exps[:-1]):
            if e < 0:
                self.error("negative exponent inside an exponent chain")
            e = b**e
        return Pow(base, e)

    def integer(self) -> int:
        sign = 1
        if self.peek()[:2] == ("op", "-"):
            self.take()
            sign = -1
        kind, val, pos = self.take()
        if kind != "num" or not val.isdigit():
            raise ExprSyntaxError("exponent must be an integer literal", self._byte(pos))
        return sign * int(val)

    def atom(self) -> Expr:
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val == "t":
                return T
            if val not in FUNCTIONS:
                raise UnknownIdentifierError(f"unknown identifier {val!r}", self._byte(pos))
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Call(val, arg)
        if val == "(" and kind == "op":
            first = self.expr()
            if self.peek()[:2] == ("op", ","):
                self.take()
                second = self.expr()
                self.expect(")")
                return Cplx(first, second)
            self.expect(")")
            return first
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {found}", self._byte(pos))


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree."""
    if len(text.encode("utf-8")) > MAX_TEXT_BYTES:
        raise ExprSyntaxError("expression longer than 64 KiB", MAX_TEXT_BYTES)
    p = _Parser(text)
    if not p.tokens:
        raise ExprSyntaxError("empty expression", 0)
    node = p.expr()
    if p.i != len(p.tokens):
        p.error(f"unexpected {p.peek()[1]!r}")
    return node


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _is_real_nonpos(z, strict: bool) -> bool:
    z = np.asarray(z)
    real = np.abs(z.imag) == 0.0
    bad = (z.real <= 0.0) if strict else (z.real < 0.0)
    return bool(np.any(real & bad))


def eval(e: Expr, t):
    """Evaluate at ``t`` (scalar or array); the result is complex."""
    t = np.asarray(t, dtype=np.float64)
    return _eval(e, t)


def _eval(e: Expr, t):
    if isinstance(e, Num):
        return np.full(t.shape, complex(e.value)) if t.ndim else complex(e.value)
    if isinstance(e, Var):
        return t.astype(np.complex128) if t.ndim else complex(t)
    if isinstance(e, Neg):
        return -_eval(e.arg, t)
    if isinstance(e, BinOp):
        a, b = _eval(e.left, t), _eval(e.right, t)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0):
            raise DomainError("division by zero")
        return a / b
    if isinstance(e, Pow):
        b = _eval(e.base, t)
        if e.exponent < 0 and np.any(np.asarray(b) == 0):
            raise DomainError("zero raised to a negative power")
        return b ** e.exponent
    if isinstance(e, Cplx):
        return _eval(e.re, t) + 1j * _eval(e.im, t)
    if isinstance(e, Call):
        a = _eval(e.arg, t)
        if e.func == "sin":
            return np.sin(a)
        if e.func == "cos":
            return np.cos(a)
        if e.func == "exp":
            return np.exp(a)
        if e.func == "ln":
            if _is_real_nonpos(a, strict=True):
                raise DomainError("ln of a nonpositive value")
            return np.log(a)
        if e.func == "sqrt":
            if _is_real_nonpos(a, strict=False):
                raise DomainError("sqrt of a negative value")
            return np.sqrt(a)
    raise TypeError(f"not an expression node: {e!r}")


def eval_deriv(e: Expr, t):
    """Derivative in ``t`` via symbolic differentiation."""
    return eval(derivative(e), t)


# ---------------------------------------------------------------------------
# differentiation with light folding
# ---------------------------------------------------------------------------


def _const(e: Expr):
    return e.value if isinstance(e, Num) else None


def add(a: Expr, b: Expr) -> Expr:
    if _const(a) == 0:
        return b
    if _const(b) == 0:
        return a
    if _const(a) is not None and _const(b) is not None:
        return Num(a.value + b.value)
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _const(b) == 0:
        return a
    if _const(a) == 0:
        return neg(b)
    if _const(a) is not None and _const(b) is not None:
        return Num(a.value - b.value)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _const(a) == 0 or _const(b) == 0:
        return ZERO
    if _const(a) == 1:
        return b
    if _const(b) == 1:
        return a
    if _const(a) is not None and _const(b) is not None:
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _const(a) == 0:
        return ZERO
    if _const(b) == 1:
        return a
    return BinOp("/", a, b)


def neg(a: Expr) -> Expr:
    if _const(a) is not None:
        return Num(-a.value + 0.0)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return a
    return Pow(a, n)


def derivative(e: Expr) -> Expr:
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Neg):
        return neg(derivative(e.arg))
    if isinstance(e, Cplx):
        dre, dim = derivative(e.re), derivative(e.im)
        if _const(dre) is not None and _const(dim) is not None:
            return Num(dre.value + 1j * dim.value)
        return Cplx(dre, dim)
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = derivative(a), derivative(b)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        return div(sub(mul(da, b), mul(a, db)), power(b, 2))
    if isinstance(e, Pow):
        return mul(mul(Num(float(e.exponent)), power(e.base, e.exponent - 1)), derivative(e.base))
    if isinstance(e, Call):
        a = e.arg
        da = derivative(a)
        if e.func == "sin":
            outer = Call("cos", a)
        elif e.func == "cos":
            outer = neg(Call("sin", a))
        elif e.func == "exp":
            outer = e
        elif e.func == "ln":
            return div(da, a)
        else:
            return div(da, mul(Num(2.0), e))
        return mul(outer, da)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    return 5


def _num_text(v: complex) -> str:
    v = complex(v)
    if v.imag == 0:
        return repr(float(v.real)) if v.real >= 0 else f"(-{repr(float(-v.real))})"
    return f"({repr(float(v.real))}, {repr(float(v.imag))})"


def to_text(e: Expr) -> str:
    """Canonical text; ``parse(to_text(parse(s))) == parse(s)``."""
    if isinstance(e, Num):
        return _num_text(e.value)
    if isinstance(e, Var):
        return "t"
    if isinstance(e, Cplx):
        return f"({to_text(e.re)}, {to_text(e.im)})"
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        return "-" + (inner if _prec(e.arg) >= 3 else f"({inner})")
    if isinstance(e, Pow):
        base = to_text(e.base)
        if _prec(e.base) < 5:
            base = f"({base})"
        return f"{base}^{e.exponent}"
    left = to_text(e.left)
    if _prec(e.left) < _PREC[e.op]:
        left = f"({left})"
    right = to_text(e.right)
    if _prec(e.right) <= _PREC[e.op]:
        right = f"({right})"
    return f"{left} {e.op} {right}"
