"""Small expression language for the scalar functions of a problem.

Grammar (lowest to highest binding)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

``^`` is right-associative and binds tighter than unary minus, so
``-a^2 == -(a^2)`` and ``2^3^2 == 2^(3^2)``.

Evaluation works on floats and on numpy arrays (with broadcasting) and never
returns a silent ``nan``/``inf``: every undefined operation raises
:class:`DomainError`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

import numpy as np

Node = Union["Num", "Var", "Neg", "BinOp", "Call"]

_NAME_RE = re.compile(r"[a-zA-Z][a-zA-Z0-9_]*\Z")
_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[a-zA-Z][a-zA-Z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)

#: function name -> accepted argument count (None means "two or more")
FUNCTIONS: dict[str, int | None] = {
    "exp": 1,
    "ln": 1,
    "sqrt": 1,
    "abs": 1,
    "sin": 1,
    "cos": 1,
    "min": None,
    "max": None,
}


class ExpressionError(ValueError):
    """Base class of all expression errors."""


class ParseError(ExpressionError):
    def __init__(self, message: str, source: str, position: int) -> None:
        self.source = source
        self.position = position
        pointer = source + "\n" + " " * position + "^"
        super().__init__(f"{message} at position {position}\n{pointer}")


class UnknownVariableError(ParseError):
    def __init__(self, name: str, source: str, position: int) -> None:
        self.name = name
        super().__init__(f"unknown variable {name!r}", source, position)


class UnknownFunctionError(ParseError):
    def __init__(self, name: str, source: str, position: int) -> None:
        self.name = name
        super().__init__(f"unknown function {name!r}", source, position)


class DomainError(ExpressionError, ArithmeticError):
    """An operation was evaluated outside its real domain.

    ``kind`` is a short tag (``"division by zero"``, ``"ln of nonpositive"``,
    ...), ``subexpression`` the source text of the failing node and ``where``
    the array index of the first offending element (``None`` for scalars).
    """

    def __init__(self, kind: str, subexpression: str, where: tuple[int, ...] | None = None):
        self.kind = kind
        self.subexpression = subexpression
        self.where = where
        loc = "" if not where else f" at index {where}"
        super().__init__(f"{kind} in {subexpression!r}{loc}")


# {{{ tree


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: Node


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: Node
    right: Node


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple[Node, ...]


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC_POW if node.op == "^" else _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC_NEG
    return _PREC_ATOM


def to_source(node: Node) -> str:
    """Render ``node`` with the minimal parentheses that preserve its structure."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = to_source(node.operand)
        if _prec(node.operand) < _PREC_NEG:
            inner = f"({inner})"
        return f"-{inner}"

    left, right = to_source(node.left), to_source(node.right)
    if node.op == "^":
        if _prec(node.left) <= _PREC_POW:
            left = f"({left})"
        if _prec(node.right) < _PREC_NEG:
            right = f"({right})"
        return f"{left}^{right}"

    p = _PREC[node.op]
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


def free_variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Neg):
        return free_variables(node.operand)
    if isinstance(node, BinOp):
        return free_variables(node.left) | free_variables(node.right)
    if isinstance(node, Call):
        out: set[str] = set()
        for a in node.args:
            out |= free_variables(a)
        return out
    return set()


# }}}


# {{{ parser


class _Parser:
    def __init__(self, source: str, declared: frozenset[str]) -> None:
        self.source = source
        self.declared = declared
        self.tokens = self._tokenize(source)
        self.i = 0

    @staticmethod
    def _tokenize(source: str) -> list[tuple[str, str, int]]:
        tokens = []
        pos = 0
        while True:
            while pos < len(source) and source[pos].isspace():
                pos += 1
            if pos >= len(source):
                break
            m = _TOKEN_RE.match(source, pos)
            if m is None or m.end() == pos:
                raise ParseError(f"unexpected character {source[pos]!r}", source, pos)
            kind = m.lastgroup
            assert kind is not None
            tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        tokens.append(("end", "", len(source)))
        return tokens

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> None:
        kind, value, pos = self.advance()
        if value != text or kind != "op":
            found = "end of input" if kind == "end" else repr(value)
            raise ParseError(f"expected {text!r}, found {found}", self.source, pos)

    def parse(self) -> Node:
        node = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {value!r}", self.source, pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.peek()[:2] == ("op", "-"):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, value, pos = self.advance()
        if kind == "num":
            number = float(value)
            if not np.isfinite(number):
                raise ParseError(f"numeric literal {value!r} overflows", self.source, pos)
            return Num(number)
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                return self.call(value, pos)
            if value not in self.declared:
                raise UnknownVariableError(value, self.source, pos)
            return Var(value)
        if (kind, value) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(value)
        raise ParseError(f"unexpected {found}", self.source, pos)

    def call(self, name: str, pos: int) -> Node:
        if name not in FUNCTIONS:
            raise UnknownFunctionError(name, self.source, pos)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[:2] == ("op", ","):
            self.advance()
            args.append(self.expr())
        self.expect(")")

        arity = FUNCTIONS[name]
        if (arity is None and len(args) < 2) or (arity is not None and len(args) != arity):
            want = "at least 2" if arity is None else str(arity)
            raise ParseError(
                f"{name}() takes {want} argument(s), got {len(args)}", self.source, pos
            )
        return Call(name, tuple(args))


# }}}


# {{{ evaluation

Value = Union[float, np.ndarray]
_Compiled = Callable[[Mapping[str, np.ndarray]], np.ndarray]


def _first(mask: np.ndarray) -> tuple[int, ...] | None:
    if mask.ndim == 0:
        return None
    return tuple(int(i) for i in np.argwhere(mask)[0])


def _checked(node: Node, result: np.ndarray) -> np.ndarray:
    bad = ~np.isfinite(result)
    if bad.any():
        raise DomainError("non-finite result", to_source(node), _first(bad))
    return result


def _compile(node: Node) -> _Compiled:
    text = to_source(node)

    if isinstance(node, Num):
        value = np.float64(node.value)
        return lambda env: value

    if isinstance(node, Var):
        name = node.name
        return lambda env: env[name]

    if isinstance(node, Neg):
        inner = _compile(node.operand)
        return lambda env: np.negative(inner(env))

    if isinstance(node, Call):
        args = [_compile(a) for a in node.args]
        return _compile_call(node, text, args)

    lhs, rhs = _compile(node.left), _compile(node.right)
    op = node.op

    def binop(env: Mapping[str, np.ndarray]) -> np.ndarray:
        a, b = lhs(env), rhs(env)
        with np.errstate(all="ignore"):
            if op == "+":
                r = np.add(a, b)
            elif op == "-":
                r = np.subtract(a, b)
            elif op == "*":
                r = np.multiply(a, b)
            elif op == "/":
                zero = np.broadcast_to(b == 0, np.broadcast_shapes(np.shape(a), np.shape(b)))
                if zero.any():
                    raise DomainError("division by zero", text, _first(zero))
                r = np.divide(a, b)
            else:
                shape = np.broadcast_shapes(np.shape(a), np.shape(b))
                neg = (a < 0) & (b != np.round(b))
                if np.any(neg):
                    neg = np.broadcast_to(neg, shape)
                    raise DomainError(
                        "negative base with non-integer exponent", text, _first(neg)
                    )
                zneg = (a == 0) & (b < 0)
                if np.any(zneg):
                    zneg = np.broadcast_to(zneg, shape)
                    raise DomainError("zero to a negative power", text, _first(zneg))
                r = np.power(a, b)
        return _checked(node, r)

    return binop


def _compile_call(node: Call, text: str, args: list[_Compiled]) -> _Compiled:
    name = node.name

    if name in ("min", "max"):
        reduce = np.minimum if name == "min" else np.maximum

        def minmax(env: Mapping[str, np.ndarray]) -> np.ndarray:
            r = args[0](env)
            for a in args[1:]:
                r = reduce(r, a(env))
            return r

        return minmax

    (arg,) = args

    def call(env: Mapping[str, np.ndarray]) -> np.ndarray:
        x = arg(env)
        with np.errstate(all="ignore"):
            if name == "ln":
                bad = x <= 0
                if np.any(bad):
                    raise DomainError("ln of nonpositive", text, _first(np.asarray(bad)))
                r = np.log(x)
            elif name == "sqrt":
                bad = x < 0
                if np.any(bad):
                    raise DomainError("sqrt of negative", text, _first(np.asarray(bad)))
                r = np.sqrt(x)
            elif name == "exp":
                r = np.exp(x)
            elif name == "abs":
                r = np.abs(x)
            elif name == "sin":
                r = np.sin(x)
            else:
                r = np.cos(x)
        return _checked(node, r)

    return call


# }}}


class Expression:
    """An immutable parsed expression over an ordered set of variables.

    Call it with keyword bindings (``e(t=1.0)``) or use :func:`evaluate`.
    Scalar bindings give a ``float``; array bindings broadcast together and
    give an array.
    """

    __slots__ = ("root", "declared_vars", "_fn")

    def __init__(self, root: Node, declared_vars: Sequence[str]) -> None:
        declared = tuple(declared_vars)
        unknown = free_variables(root) - set(declared)
        if unknown:
            raise ExpressionError(f"undeclared variable(s): {', '.join(sorted(unknown))}")
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "declared_vars", declared)
        object.__setattr__(self, "_fn", _compile(root))

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("Expression is immutable")

    @property
    def variables(self) -> set[str]:
        """Variables actually referenced by the tree."""
        return free_variables(self.root)

    def references(self, name: str) -> bool:
        return name in free_variables(self.root)

    def __call__(self, **bindings: Value) -> Value:
        return evaluate(self, bindings)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Expression):
            return NotImplemented
        return self.root == other.root and self.declared_vars == other.declared_vars

    def __hash__(self) -> int:
        return hash((self.root, self.declared_vars))

    def __str__(self) -> str:
        return to_source(self.root)

    def __repr__(self) -> str:
        return f"Expression({str(self)!r}, {self.declared_vars!r})"


def parse(source: str, declared_vars: Sequence[str] = ()) -> Expression:
    """Parse ``source`` into an :class:`Expression` over ``declared_vars``."""
    for name in declared_vars:
        if not _NAME_RE.match(name):
            raise ExpressionError(f"invalid variable name {name!r}")
        if name in FUNCTIONS:
            raise ExpressionError(f"variable name {name!r} shadows a function")
    root = _Parser(source, frozenset(declared_vars)).parse()
    return Expression(root, declared_vars)


def evaluate(e: Expression, bindings: Mapping[str, Value]) -> Value:
    missing = [v for v in e.declared_vars if v not in bindings]
    if missing:
        raise ExpressionError(f"missing binding(s) for {', '.join(missing)}")

    env = {}
    scalar = True
    for name in e.declared_vars:
        v = np.asarray(bindings[name], dtype=np.float64)
        scalar = scalar and v.ndim == 0
        env[name] = v

    result = e._fn(env)
    if scalar:
        return float(result)
    shape = np.broadcast_shapes(*(v.shape for v in env.values())) if env else ()
    return np.broadcast_to(result, np.broadcast_shapes(shape, np.shape(result)))
