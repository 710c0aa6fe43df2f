"""Minimal arithmetic expression language for user-supplied maps.

Grammar (``^`` is right-associative power and binds tighter than unary minus)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Names are variables ``x1 .. xn``, bound parameters, or one of the functions
in :data:`FUNCTIONS`.  Trees are immutable, differentiate symbolically and
compile to vectorised numpy closures.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "ExpressionError",
    "Node",
    "Num",
    "Var",
    "Neg",
    "Bin",
    "Call",
    "FUNCTIONS",
    "parse_expression",
    "parse_expression_list",
    "to_source",
    "derivative",
    "compile_node",
]

# name -> arity
FUNCTIONS: dict[str, int] = {
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "log": 1,
    "abs": 1,
    "pow": 2,
    "cbrt": 1,
    # internal: produced by differentiating abs
    "sign": 1,
}

_VAR_RE = re.compile(r"x([1-9][0-9]*)$")


class ExpressionError(ValueError):
    """Lexical, syntax or binding error, with the character offset."""

    def __init__(self, message: str, position: int | None = None, source: str | None = None):
        self.message = message
        self.position = position
        self.source = source
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)


class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class Bin(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    fn: str
    args: tuple[Node, ...]


# --------------------------------------------------------------------------
# lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(src: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i = 0
    while i < len(src):
        m = _TOKEN_RE.match(src, i)
        if m is None:
            raise ExpressionError(f"unexpected character {src[i]!r}", i, src)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), i))
        i = m.end()
    toks.append(_Tok("end", "", len(src)))
    return toks


class _Parser:
    def __init__(self, src: str, names: Callable[[str, int], None]):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0
        self.check_name = names

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        if self.tok.text != text:
            found = self.tok.text or "end of input"
            raise ExpressionError(f"expected {text!r}, found {found!r}", self.tok.pos, self.src)
        return self.advance()

    def parse_list(self) -> list[Node]:
        out = [self.expr()]
        while self.tok.text == ",":
            self.advance()
            out.append(self.expr())
        if self.tok.kind != "end":
            raise ExpressionError(f"unexpected {self.tok.text!r}", self.tok.pos, self.src)
        return out

    def expr(self) -> Node:
        node = self.term()
        while self.tok.text in ("+", "-"):
            op = self.advance().text
            node = Bin(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok.text in ("*", "/"):
            op = self.advance().text
            node = Bin(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        if self.tok.text == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.tok.text == "^":
            self.advance()
            return Bin("^", base, self.unary())
        return base

    def atom(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(float(t.text))
        if t.kind == "name":
            self.advance()
            if self.tok.text == "(":
                if t.text not in FUNCTIONS:
                    raise ExpressionError(f"unknown function {t.text}", t.pos, self.src)
                self.advance()
                args = [self.expr()]
                while self.tok.text == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[t.text]:
                    raise ExpressionError(
                        f"arity mismatch: {t.text} takes {FUNCTIONS[t.text]} argument(s), got {len(args)}",
                        t.pos,
                        self.src,
                    )
                return Call(t.text, tuple(args))
            if t.text in FUNCTIONS:
                raise ExpressionError(f"function {t.text} used without arguments", t.pos, self.src)
            self.check_name(t.text, t.pos)
            return Var(t.text)
        if t.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        found = t.text or "end of input"
        raise ExpressionError(f"unexpected {found!r}", t.pos, self.src)


def _name_checker(src: str, dimension: int | None, params: Mapping[str, float]):
    def check(name: str, pos: int) -> None:
        if name in params:
            return
        m = _VAR_RE.match(name)
        if m and (dimension is None or int(m.group(1)) <= dimension):
            return
        raise ExpressionError(f"unknown identifier {name}", pos, src)

    return check


def parse_expression_list(
    source: str, dimension: int | None = None, params: Mapping[str, float] | None = None
) -> list[Node]:
    """Parse a comma separated list of expressions."""
    params = dict(params or {})
    return _Parser(source, _name_checker(source, dimension, params)).parse_list()


def parse_expression(
    source: str, dimension: int | None = None, params: Mapping[str, float] | None = None
) -> Node:
    nodes = parse_expression_list(source, dimension, params)
    if len(nodes) != 1:
        raise ExpressionError(f"expected a single expression, got {len(nodes)}")
    return nodes[0]


# --------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_source(node: Node) -> str:
    """Render a tree back to the input grammar (re-parses to an equal tree)."""
    return _src(node)[0]


def _src(node: Node) -> tuple[str, int]:
    if isinstance(node, Num):
        if node.value < 0 or math.copysign(1.0, node.value) < 0:
            # parser never yields negative literals; keep them atomic
            return f"({_fmt_num(node.value)})", 5
        return _fmt_num(node.value), 5
    if isinstance(node, Var):
        return node.name, 5
    if isinstance(node, Call):
        return f"{node.fn}({', '.join(_src(a)[0] for a in node.args)})", 5
    if isinstance(node, Neg):
        s, p = _src(node.arg)
        if p < _PREC["neg"]:
            s = f"({s})"
        return f"-{s}", _PREC["neg"]
    if isinstance(node, Bin):
        prec = _PREC[node.op]
        ls, lp = _src(node.left)
        rs, rp = _src(node.right)
        if node.op == "^":
            # left operand of ^ must be an atom; right side may be unary
            if lp <= prec:
                ls = f"({ls})"
            if rp < _PREC["neg"]:
                rs = f"({rs})"
        else:
            if lp < prec:
                ls = f"({ls})"
            if rp <= prec:
                rs = f"({rs})"
        return f"{ls} {node.op} {rs}", prec
    raise TypeError(node)


# --------------------------------------------------------------------------
# symbolic differentiation (with trivial constant folding only)

_ZERO = Num(0.0)
_ONE = Num(1.0)


def _is(node: Node, v: float) -> bool:
    return isinstance(node, Num) and node.value == v


def _add(a: Node, b: Node) -> Node:
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    return Bin("+", a, b)


def _sub(a: Node, b: Node) -> Node:
    if _is(b, 0):
        return a
    if _is(a, 0):
        return _neg(b)
    return Bin("-", a, b)


def _mul(a: Node, b: Node) -> Node:
    if _is(a, 0) or _is(b, 0):
        return _ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    return Bin("*", a, b)


def _div(a: Node, b: Node) -> Node:
    if _is(a, 0):
        return _ZERO
    if _is(b, 1):
        return a
    return Bin("/", a, b)


def _neg(a: Node) -> Node:
    if _is(a, 0):
        return _ZERO
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _pow(a: Node, b: Node) -> Node:
    if _is(b, 1):
        return a
    if _is(b, 0):
        return _ONE
    return Bin("^", a, b)


def _depends(node: Node, var: str) -> bool:
    if isinstance(node, Num):
        return False
    if isinstance(node, Var):
        return node.name == var
    if isinstance(node, Neg):
        return _depends(node.arg, var)
    if isinstance(node, Bin):
        return _depends(node.left, var) or _depends(node.right, var)
    return any(_depends(a, var) for a in node.args)


def derivative(node: Node, var: str) -> Node:
    """Symbolic partial derivative of ``node`` with respect to ``var``."""
    if not _depends(node, var):
        return _ZERO
    if isinstance(node, Var):
        return _ONE
    if isinstance(node, Neg):
        return _neg(derivative(node.arg, var))
    if isinstance(node, Bin):
        a, b = node.left, node.right
        da, db = derivative(a, var), derivative(b, var)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        if node.op == "/":
            return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, Num(2.0)))
        return _dpow(a, b, da, db, var)
    if isinstance(node, Call):
        args = node.args
        if node.fn == "pow":
            return _dpow(args[0], args[1], derivative(args[0], var), derivative(args[1], var), var)
        u = args[0]
        du = derivative(u, var)
        if node.fn == "sin":
            outer: Node = Call("cos", (u,))
        elif node.fn == "cos":
            outer = _neg(Call("sin", (u,)))
        elif node.fn == "exp":
            outer = node
        elif node.fn == "log":
            outer = _div(_ONE, u)
        elif node.fn == "abs":
            outer = Call("sign", (u,))
        elif node.fn == "cbrt":
            outer = _div(_ONE, _mul(Num(3.0), _pow(Call("cbrt", (u,)), Num(2.0))))
        elif node.fn == "sign":
            outer = _ZERO
        else:  # pragma: no cover - FUNCTIONS is closed
            raise ExpressionError(f"no derivative rule for {node.fn}")
        return _mul(outer, du)
    raise TypeError(node)


def _dpow(a: Node, b: Node, da: Node, db: Node, var: str) -> Node:
    if not _depends(b, var):
        # b * a^(b-1) * a'
        if isinstance(b, Num):
            expo: Node = Num(b.value - 1.0)
        else:
            expo = _sub(b, _ONE)
        return _mul(_mul(b, _pow(a, expo)), da)
    # a^b * (b' log a + b a'/a)
    return _mul(Bin("^", a, b), _add(_mul(db, Call("log", (a,))), _div(_mul(b, da), a)))


# --------------------------------------------------------------------------
# compilation

_NP_FUNCS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "abs": np.abs,
    "cbrt": np.cbrt,
    "sign": np.sign,
}


def _power(a, b):
    # integer exponents go through repeated multiplication: exact sign for
    # negative bases and bit-identical to hand-written products
    if np.ndim(b) == 0 and float(b) == int(b) and 0 <= int(b) <= 16:
        n = int(b)
        if n == 0:
            return np.ones_like(a) if np.ndim(a) else 1.0
        out = a
        for _ in range(n - 1):
            out = out * a
        return out
    return np.power(a, b)


def compile_node(node: Node, variables: Sequence[str], params: Mapping[str, float]) -> Callable:
    """Compile ``node`` into ``f(columns) -> array`` where ``columns[i]``
    holds the values of ``variables[i]``."""
    index = {name: i for i, name in enumerate(variables)}
    params = dict(params)

    def build(n: Node) -> Callable:
        if isinstance(n, Num):
            v = n.value
            return lambda cols: v
        if isinstance(n, Var):
            if n.name in index:
                i = index[n.name]
                return lambda cols: cols[i]
            if n.name in params:
                v = float(params[n.name])
                return lambda cols: v
            raise ExpressionError(f"unknown identifier {n.name}")
        if isinstance(n, Neg):
            f = build(n.arg)
            return lambda cols: -f(cols)
        if isinstance(n, Bin):
            f, g = build(n.left), build(n.right)
            if n.op == "+":
                return lambda cols: f(cols) + g(cols)
            if n.op == "-":
                return lambda cols: f(cols) - g(cols)
            if n.op == "*":
                return lambda cols: f(cols) * g(cols)
            if n.op == "/":
                return lambda cols: f(cols) / g(cols)
            return lambda cols: _power(f(cols), g(cols))
        if isinstance(n, Call):
            fs = [build(a) for a in n.args]
            if n.fn == "pow":
                return lambda cols: _power(fs[0](cols), fs[1](cols))
            fn = _NP_FUNCS[n.fn]
            f0 = fs[0]
            return lambda cols: fn(f0(cols))
        raise TypeError(n)

    return build(node)
