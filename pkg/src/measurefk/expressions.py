"""Tiny arithmetic expression grammar for config-declared fields.

Grammar: identifiers ``x`` (first coordinate), ``x1`` .. ``xd``, and ``u``
(the unknown, for nonlinearities); operators ``+ - * / ^`` with usual
precedence and unary minus; functions ``sin cos exp log abs min max``;
numeric literals, parentheses, and the constant ``pi``.

Compiled expressions evaluate vectorized: coordinates arrive as an array of
shape (m, d) and ``u`` (when used) as shape (m,).
"""

from __future__ import annotations

import numpy as np

_FUNCS1 = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log,
           "abs": np.abs}
_FUNCS2 = {"min": np.minimum, "max": np.maximum}


class ExpressionError(ValueError):
    pass


def _tokenize(text: str):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "+-*/^(),":
            tokens.append((ch, ch))
            i += 1
        elif ch.isdigit() or ch == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] in ".eE"
                             or (text[j] in "+-" and text[j - 1] in "eE")):
                j += 1
            try:
                tokens.append(("num", float(text[i:j])))
            except ValueError:
                raise ExpressionError(f"bad numeric literal {text[i:j]!r}")
            i = j
        elif ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("name", text[i:j]))
            i = j
        else:
            raise ExpressionError(f"unexpected character {ch!r} in expression")
    tokens.append(("end", None))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def eat(self, kind=None):
        tok = self.tokens[self.pos]
        if kind is not None and tok[0] != kind:
            raise ExpressionError(f"expected {kind!r}, got {tok[0]!r}")
        self.pos += 1
        return tok

    # sum -> product (('+'|'-') product)*
    def parse_sum(self):
        node = self.parse_product()
        while self.peek()[0] in "+-":
            op = self.eat()[0]
            rhs = self.parse_product()
            node = (op, node, rhs)
        return node

    def parse_product(self):
        node = self.parse_unary()
        while self.peek()[0] in "*/":
            op = self.eat()[0]
            rhs = self.parse_unary()
            node = (op, node, rhs)
        return node

    def parse_unary(self):
        if self.peek()[0] == "-":
            self.eat()
            return ("neg", self.parse_unary())
        if self.peek()[0] == "+":
            self.eat()
            return self.parse_unary()
        return self.parse_power()

    # power is right associative: a^b^c == a^(b^c)
    def parse_power(self):
        base = self.parse_atom()
        if self.peek()[0] == "^":
            self.eat()
            return ("^", base, self.parse_unary())
        return base

    def parse_atom(self):
        kind, value = self.peek()
        if kind == "num":
            self.eat()
            return ("num", value)
        if kind == "(":
            self.eat()
            node = self.parse_sum()
            self.eat(")")
            return node
        if kind == "name":
            self.eat()
            if self.peek()[0] == "(":
                self.eat("(")
                args = [self.parse_sum()]
                while self.peek()[0] == ",":
                    self.eat(",")
                    args.append(self.parse_sum())
                self.eat(")")
                return ("call", value, args)
            return ("var", value)
        raise ExpressionError(f"unexpected token {kind!r}")


def _compile(node, dim, allow_u):
    kind = node[0]
    if kind == "num":
        v = node[1]
        return lambda x, u: v
    if kind == "var":
        name = node[1]
        if name == "pi":
            return lambda x, u: np.pi
        if name == "u":
            if not allow_u:
                raise ExpressionError("'u' is only valid in nonlinearity expressions")
            return lambda x, u: u
        if name == "x":
            return lambda x, u: x[..., 0]
        if name.startswith("x") and name[1:].isdigit():
            k = int(name[1:]) - 1
            if not 0 <= k < dim:
                raise ExpressionError(f"coordinate {name!r} out of range for dim {dim}")
            return lambda x, u: x[..., k]
        raise ExpressionError(f"unknown identifier {name!r}")
    if kind == "neg":
        f = _compile(node[1], dim, allow_u)
        return lambda x, u: -f(x, u)
    if kind == "call":
        name, args = node[1], node[2]
        if name in _FUNCS1:
            if len(args) != 1:
                raise ExpressionError(f"{name} takes one argument")
            f = _compile(args[0], dim, allow_u)
            fn = _FUNCS1[name]
            return lambda x, u: fn(f(x, u))
        if name in _FUNCS2:
            if len(args) != 2:
                raise ExpressionError(f"{name} takes two arguments")
            fa = _compile(args[0], dim, allow_u)
            fb = _compile(args[1], dim, allow_u)
            fn = _FUNCS2[name]
            return lambda x, u: fn(fa(x, u), fb(x, u))
        raise ExpressionError(f"unknown function {name!r}")
    fa = _compile(node[1], dim, allow_u)
    fb = _compile(node[2], dim, allow_u)
    if kind == "+":
        return lambda x, u: fa(x, u) + fb(x, u)
    if kind == "-":
        return lambda x, u: fa(x, u) - fb(x, u)
    if kind == "*":
        return lambda x, u: fa(x, u) * fb(x, u)
    if kind == "/":
        return lambda x, u: fa(x, u) / fb(x, u)
    if kind == "^":
        return lambda x, u: fa(x, u) ** fb(x, u)
    raise ExpressionError(f"unhandled node {kind!r}")


def compile_scalar_field(text: str, dim: int):
    """Compile an expression of x/x1..xd into ``field(points) -> values``."""
    parser = _Parser(_tokenize(text))
    node = parser.parse_sum()
    parser.eat("end")
    body = _compile(node, dim, allow_u=False)

    def field(points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if dim == 1 else pts.reshape(1, -1)
        out = body(pts, None)
        return np.broadcast_to(np.asarray(out, dtype=np.float64),
                               pts.shape[:-1]).copy()

    return field


def compile_driver(text: str, dim: int):
    """Compile an expression of x/x1..xd and u into ``f(points, y) -> values``."""
    parser = _Parser(_tokenize(text))
    node = parser.parse_sum()
    parser.eat("end")
    body = _compile(node, dim, allow_u=True)

    def driver(points, y):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if dim == 1 else pts.reshape(1, -1)
        y = np.asarray(y, dtype=np.float64)
        out = body(pts, y)
        shape = np.broadcast_shapes(pts.shape[:-1], y.shape)
        return np.broadcast_to(np.asarray(out, dtype=np.float64), shape).copy()

    return driver
