"""
tristeer - Expression DSL

Small arithmetic language for block definitions in system configs:

    literals, variables, + - * / ^ (unary -), comparisons < <= > >= (also ≤ ≥),
    sin cos exp ln abs pow, piecewise(cond, a, b)

Parsed by precedence climbing into an immutable AST, then compiled to
closures for evaluation. piecewise only evaluates the branch it takes.
"""

import math
import re
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Tuple

from errors import ConfigError, PlannerError


class ParseError(ConfigError):
    """Syntax error or unknown name, with the byte offset into the source"""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}", offset=offset)
        self.offset = offset


class EvalError(PlannerError):
    """Domain error while evaluating an expression (ln of x <= 0, x / 0)"""


# Groups of increasing precedence; unary minus sits between * / and ^
OPERATORS = [
    [("<", "left"), ("<=", "left"), (">", "left"), (">=", "left")],
    [("+", "left"), ("-", "left")],
    [("*", "left"), ("/", "left")],
    [("^", "right")],
]
OPERATOR_PREC = {op: idx for idx, group in enumerate(OPERATORS) for op, _ in group}
OPERATOR_PREC["^"] = 4
OPERATOR_ASSOC = {op: assoc for group in OPERATORS for op, assoc in group}
UNARY_PREC = 3
COMPARISONS = frozenset({"<", "<=", ">", ">="})

FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "ln": 1, "abs": 1, "pow": 2, "piecewise": 3}

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|≤|≥|[-+*/^<>(),])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str      # "num", "name", "op", "end"
    text: str
    offset: int    # byte offset


# --- AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: Tuple["Expr", ...]


@dataclass(frozen=True)
class Piecewise:
    cond: "Expr"
    then: "Expr"
    other: "Expr"


Expr = object  # any of the node classes above


# --- tokenizer ---------------------------------------------------------------

def tokenize(src: str) -> List[Token]:
    tokens = []
    pos = 0
    while pos < len(src):
        match = _TOKEN_RE.match(src, pos)
        offset = len(src[:pos].encode("utf-8"))
        if match is None:
            raise ParseError(f"unexpected character {src[pos]!r}", offset)
        kind = match.lastgroup
        text = match.group()
        if kind != "ws":
            if text == "≤":
                text = "<="
            elif text == "≥":
                text = ">="
            tokens.append(Token(kind, text, offset))
        pos = match.end()
    tokens.append(Token("end", "", len(src.encode("utf-8"))))
    return tokens


# --- parser ------------------------------------------------------------------

class _Parser:
    def __init__(self, src: str, variables: Optional[FrozenSet[str]]):
        self.tokens = tokenize(src)
        self.pos = 0
        self.variables = variables

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect(self, text: str) -> Token:
        token = self.advance()
        if token.text != text or token.kind == "end":
            raise ParseError(f"expected {text!r}, found {token.text or 'end of input'!r}", token.offset)
        return token

    def parse(self) -> Expr:
        node = self.expression(0)
        token = self.peek()
        if token.kind != "end":
            raise ParseError(f"unexpected {token.text!r}", token.offset)
        return node

    def expression(self, min_prec: int) -> Expr:
        lhs = self.atom()
        while True:
            token = self.peek()
            if token.kind != "op" or token.text not in OPERATOR_PREC:
                return lhs
            prec = OPERATOR_PREC[token.text]
            if prec < min_prec:
                return lhs
            self.advance()
            next_prec = prec + 1 if OPERATOR_ASSOC[token.text] == "left" else prec
            rhs = self.expression(next_prec)
            if token.text in COMPARISONS:
                lhs = Compare(token.text, lhs, rhs)
            else:
                lhs = BinOp(token.text, lhs, rhs)

    def atom(self) -> Expr:
        token = self.advance()
        if token.kind == "num":
            return Num(float(token.text))
        if token.kind == "op" and token.text == "-":
            return Neg(self.expression(UNARY_PREC))
        if token.kind == "op" and token.text == "(":
            node = self.expression(0)
            self.expect(")")
            return node
        if token.kind == "name":
            if self.peek().text == "(":
                return self.call(token)
            if token.text in FUNCTIONS:
                raise ParseError(f"function {token.text!r} needs arguments", token.offset)
            if self.variables is not None and token.text not in self.variables:
                raise ParseError(f"unknown identifier {token.text!r}", token.offset)
            return Var(token.text)
        if token.kind == "end":
            raise ParseError("unexpected end of input", token.offset)
        raise ParseError(f"unexpected {token.text!r}", token.offset)

    def call(self, name: Token) -> Expr:
        if name.text not in FUNCTIONS:
            raise ParseError(f"unknown function {name.text!r}", name.offset)
        self.expect("(")
        args = [self.expression(0)]
        while self.peek().text == ",":
            self.advance()
            args.append(self.expression(0))
        self.expect(")")
        arity = FUNCTIONS[name.text]
        if len(args) != arity:
            raise ParseError(f"{name.text} takes {arity} argument(s), got {len(args)}", name.offset)
        if name.text == "piecewise":
            return Piecewise(*args)
        return Call(name.text, tuple(args))


def parse_expr(src: str, variables: Optional[Iterable[str]] = None) -> Expr:
    """Parse src; when variables is given, other identifiers are errors"""
    allowed = frozenset(variables) if variables is not None else None
    return _Parser(src, allowed).parse()


# --- printing ----------------------------------------------------------------

def to_source(node: Expr) -> str:
    """Fully parenthesized source; parse_expr(to_source(e)) == e"""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, (BinOp, Compare)):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    if isinstance(node, Piecewise):
        return f"piecewise({to_source(node.cond)}, {to_source(node.then)}, {to_source(node.other)})"
    raise TypeError(f"not an expression node: {node!r}")


def free_variables(node: Expr) -> FrozenSet[str]:
    if isinstance(node, Var):
        return frozenset({node.name})
    if isinstance(node, Num):
        return frozenset()
    if isinstance(node, Neg):
        return free_variables(node.operand)
    if isinstance(node, (BinOp, Compare)):
        return free_variables(node.left) | free_variables(node.right)
    if isinstance(node, Call):
        return frozenset().union(*(free_variables(a) for a in node.args))
    if isinstance(node, Piecewise):
        return free_variables(node.cond) | free_variables(node.then) | free_variables(node.other)
    raise TypeError(f"not an expression node: {node!r}")


# --- evaluation --------------------------------------------------------------

def _ln(x: float) -> float:
    if x <= 0.0:
        raise EvalError(f"ln of non-positive value {x!r}")
    return math.log(x)


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _pow(a: float, b: float) -> float:
    try:
        return math.pow(a, b)
    except OverflowError:
        return math.inf
    except ValueError as exc:
        raise EvalError(f"pow({a!r}, {b!r}) is undefined") from exc
    except ZeroDivisionError as exc:
        raise EvalError(f"pow({a!r}, {b!r}) divides by zero") from exc


def _div(a: float, b: float) -> float:
    if b == 0.0:
        raise EvalError("division by zero")
    return a / b


def _trig(fn: Callable[[float], float]) -> Callable[[float], float]:
    def wrapped(x: float) -> float:
        try:
            return fn(x)
        except ValueError as exc:
            raise EvalError(f"{fn.__name__} of {x!r} is undefined") from exc
    return wrapped


_UNARY = {"sin": _trig(math.sin), "cos": _trig(math.cos), "exp": _exp, "ln": _ln, "abs": abs}
_BINARY = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div,
    "^": _pow,
    "<": lambda a, b: float(a < b),
    "<=": lambda a, b: float(a <= b),
    ">": lambda a, b: float(a > b),
    ">=": lambda a, b: float(a >= b),
}

Compiled = Callable[[Dict[str, float]], float]


def compile_expr(node: Expr) -> Compiled:
    """Closure evaluating node against an environment of floats"""
    if isinstance(node, Num):
        value = node.value
        return lambda env: value
    if isinstance(node, Var):
        name = node.name

        def lookup(env):
            try:
                return env[name]
            except KeyError:
                raise EvalError(f"unbound variable {name!r}") from None
        return lookup
    if isinstance(node, Neg):
        inner = compile_expr(node.operand)
        return lambda env: -inner(env)
    if isinstance(node, (BinOp, Compare)):
        fn = _BINARY[node.op]
        left, right = compile_expr(node.left), compile_expr(node.right)
        return lambda env: fn(left(env), right(env))
    if isinstance(node, Call):
        args = [compile_expr(a) for a in node.args]
        if node.name == "pow":
            base, power = args
            return lambda env: _pow(base(env), power(env))
        fn = _UNARY[node.name]
        (arg,) = args
        return lambda env: fn(arg(env))
    if isinstance(node, Piecewise):
        cond, then, other = compile_expr(node.cond), compile_expr(node.then), compile_expr(node.other)
        return lambda env: then(env) if cond(env) != 0.0 else other(env)
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(node: Expr, env: Dict[str, float]) -> float:
    return float(compile_expr(node)(env))
