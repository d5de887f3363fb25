"""Load-expression language: numbers, x, y, pi, + - * / ^, unary minus, sin cos exp sqrt abs.

``^`` is right-associative and binds tighter than unary minus, so
``-x^2`` is ``-(x^2)``. Evaluation is vectorised over numpy arrays.
"""
from dataclasses import dataclass
import re

import numpy as np

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs}
CONSTANTS = {"pi": np.pi}
VARIABLES = ("x", "y")


class ExpressionError(ValueError):
    """Syntax or name error; ``position`` is a 0-based character offset."""

    def __init__(self, message, position=None):
        where = f" at position {position}" if position is not None else ""
        super().__init__(message + where)
        self.position = position


class EvaluationError(ArithmeticError):
    """Division by zero or a domain error during evaluation."""


_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


def tokenize(text):
    out = []
    i = 0
    n = len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        m = _TOKEN.match(text, i)
        if not m or m.end() == i:
            raise ExpressionError(f"unexpected character {text[i]!r}", i)
        kind = m.lastgroup
        start = m.start(kind)
        out.append(Token(kind, m.group(kind), start))
        i = m.end()
    out.append(Token("end", "", n))
    return out


# -- syntax tree --------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float

    def eval(self, env):
        return self.value

    def text(self):
        v = float(self.value)
        return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


@dataclass(frozen=True)
class Name:
    name: str

    def eval(self, env):
        if self.name in CONSTANTS:
            return CONSTANTS[self.name]
        if self.name not in env:
            raise EvaluationError(f"variable {self.name!r} is not available here")
        return env[self.name]

    def text(self):
        return self.name


@dataclass(frozen=True)
class Neg:
    arg: object

    def eval(self, env):
        return -self.arg.eval(env)

    def text(self):
        return "-" + _wrap(self.arg, _PREC_NEG)


@dataclass(frozen=True)
class Bin:
    op: str
    left: object
    right: object

    def eval(self, env):
        a = self.left.eval(env)
        b = self.right.eval(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            if np.any(np.asarray(b) == 0):
                raise EvaluationError("division by zero")
            return a / b
        with np.errstate(all="raise"):
            try:
                return np.power(np.asarray(a, float), b)
            except FloatingPointError as exc:
                raise EvaluationError(f"invalid power: {exc}") from None

    def text(self):
        lp, rp = _BIN[self.op]
        if self.op == "^":
            return f"{_wrap(self.left, lp + 1)}^{_wrap(self.right, lp)}"
        return f"{_wrap(self.left, lp)} {self.op} {_wrap(self.right, lp + 1)}"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object

    def eval(self, env):
        v = np.asarray(self.arg.eval(env), float)
        if self.fn == "sqrt" and np.any(v < 0):
            raise EvaluationError("sqrt of a negative number")
        return FUNCTIONS[self.fn](v)

    def text(self):
        return f"{self.fn}({self.arg.text()})"


_BIN = {"+": (1, 1), "-": (1, 1), "*": (2, 2), "/": (2, 2), "^": (4, 4)}
_PREC_NEG = 3


def _prec(node):
    if isinstance(node, Bin):
        return _BIN[node.op][0]
    if isinstance(node, Neg):
        return _PREC_NEG
    return 10


def _wrap(node, need):
    s = node.text()
    return f"({s})" if _prec(node) < need else s


# -- Pratt parser ---------------------------------------------------------------

class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text):
        t = self.tok
        if t.text != text:
            found = "end of input" if t.kind == "end" else repr(t.text)
            raise ExpressionError(f"expected {text!r}, found {found}", t.pos)
        return self.take()

    def expr(self, min_prec=0):
        left = self.prefix()
        while True:
            t = self.tok
            if t.kind != "op" or t.text not in _BIN:
                break
            lp, _ = _BIN[t.text]
            if lp < min_prec:
                break
            self.take()
            # right-associative ^ recurses at its own level, the rest one above
            right = self.expr(lp if t.text == "^" else lp + 1)
            left = Bin(t.text, left, right)
        return left

    def prefix(self):
        t = self.take()
        if t.kind == "num":
            return Num(float(t.text))
        if t.kind == "name":
            if t.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(t.text, arg)
            if t.text in CONSTANTS or t.text in VARIABLES:
                return Name(t.text)
            raise ExpressionError(f"unknown identifier {t.text!r}", t.pos)
        if t.text == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        if t.text == "-":
            return Neg(self.expr(_PREC_NEG))
        if t.text == "+":
            return self.expr(_PREC_NEG)
        found = "end of input" if t.kind == "end" else repr(t.text)
        raise ExpressionError(f"unexpected {found}", t.pos)


@dataclass(frozen=True)
class Expression:
    source: str
    tree: object

    def __call__(self, X=None, **env):
        """Evaluate at points X (m, d) or at keyword values ``x=..., y=...``."""
        if X is not None:
            X = np.atleast_2d(np.asarray(X, float))
            env = {"x": X[:, 0]}
            if X.shape[1] > 1:
                env["y"] = X[:, 1]
            n = len(X)
        else:
            n = None
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.tree.eval(env)
        out = np.asarray(out, float)
        if n is not None and out.ndim == 0:
            out = np.full(n, float(out))
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"non-finite value in {self.source!r}")
        return out if out.ndim else float(out)

    def text(self):
        return self.tree.text()


def parse_expression(text):
    if not isinstance(text, str):
        raise ExpressionError("expression must be a string")
    p = _Parser(text)
    tree = p.expr()
    if p.tok.kind != "end":
        raise ExpressionError(f"unexpected {p.tok.text!r}", p.tok.pos)
    return Expression(text, tree)
