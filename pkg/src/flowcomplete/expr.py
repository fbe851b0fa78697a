"""Small arithmetic expression language for field components and domain predicates.

Expressions are parsed into immutable ASTs over the variables ``x1..xn`` and
``t``.  Predicates are boolean combinations of comparisons between
expressions.  Evaluation is strict and total except at mathematical
singularities, which raise :class:`EvaluationError` instead of producing
NaN/inf silently.

Grammar (see docs/expression_grammar.ebnf for the full EBNF)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" unary)?          # right associative, binds above unary minus
    atom    := NUMBER | IDENT | IDENT "(" expr ("," expr)* ")" | "(" expr ")"

    pred    := orpred
    orpred  := andpred ("or" andpred)*
    andpred := notpred ("and" notpred)*
    notpred := "not" notpred | "(" pred ")" | comparison
    comparison := expr RELOP expr         # RELOP one of < <= > >= !=
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

__all__ = [
    "Expression",
    "Predicate",
    "ParseError",
    "EvaluationError",
    "parse_expression",
    "parse_predicate",
    "evaluate",
    "evaluate_predicate",
    "compile_expression",
    "compile_predicate",
    "to_source",
    "predicate_to_source",
    "variables_used",
]


class ParseError(ValueError):
    """Syntax error with 1-based line/column position."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at {line}:{column}")
        self.line = line
        self.column = column


class EvaluationError(ArithmeticError):
    """Evaluation hit a mathematical singularity or an undefined variable."""


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    # "t" or "x<k>" with k >= 1
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * / ^
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expression", ...]


Expression = Num | Var | Neg | BinOp | Call


@dataclass(frozen=True)
class Cmp:
    op: str  # < <= > >= !=
    left: Expression
    right: Expression


@dataclass(frozen=True)
class BoolOp:
    op: str  # "and" | "or"
    left: "Predicate"
    right: "Predicate"


@dataclass(frozen=True)
class Not:
    operand: "Predicate"


Predicate = Cmp | BoolOp | Not

_FUNCTIONS: dict[str, tuple[int, Callable[..., float]]] = {
    "sin": (1, math.sin),
    "cos": (1, math.cos),
    "exp": (1, math.exp),
    "log": (1, math.log),
    "sqrt": (1, math.sqrt),
    "abs": (1, abs),
    "atan2": (2, math.atan2),
    "min": (2, min),
    "max": (2, max),
}

_RELOPS = ("<=", ">=", "!=", "<", ">")


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    kind: str  # num ident op lparen rparen comma end
    text: str
    line: int
    column: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        start_col = col
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            while j < n and (source[j].isdigit() or source[j] == "."):
                j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    j = k
                    while j < n and source[j].isdigit():
                        j += 1
            text = source[i:j]
            try:
                float(text)
            except ValueError:
                raise ParseError(f"invalid number {text!r}", line, start_col)
            tokens.append(_Token("num", text, line, start_col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(_Token("ident", source[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if source.startswith("==", i):
            raise ParseError(
                "equality comparison '==' is not allowed (domains must be open); "
                "use strict inequalities or '!='", line, start_col)
        two = source[i:i + 2]
        if two in ("<=", ">=", "!="):
            tokens.append(_Token("op", two, line, start_col))
            i += 2
            col += 2
            continue
        if ch in "+-*/^<>":
            tokens.append(_Token("op", ch, line, start_col))
        elif ch == "(":
            tokens.append(_Token("lparen", ch, line, start_col))
        elif ch == ")":
            tokens.append(_Token("rparen", ch, line, start_col))
        elif ch == ",":
            tokens.append(_Token("comma", ch, line, start_col))
        else:
            raise ParseError(f"unexpected character {ch!r}", line, start_col)
        i += 1
        col += 1
    tokens.append(_Token("end", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser (recursive descent)
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.pos = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        if self.cur.kind != kind:
            raise ParseError(f"expected {what}, found {self.cur.text or 'end of input'!r}",
                             self.cur.line, self.cur.column)
        return self.advance()

    def fail(self, message: str):
        raise ParseError(message, self.cur.line, self.cur.column)

    # -- expressions --------------------------------------------------------

    def expression(self) -> Expression:
        node = self.term()
        while self.cur.kind == "op" and self.cur.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expression:
        node = self.unary()
        while self.cur.kind == "op" and self.cur.text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expression:
        if self.cur.kind == "op" and self.cur.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.cur.kind == "op" and self.cur.text == "^":
            self.advance()
            # right associative; exponent may start with unary minus
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expression:
        tok = self.cur
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            name = tok.text
            if self.cur.kind == "lparen":
                if name not in _FUNCTIONS:
                    raise ParseError(f"unknown function {name!r}", tok.line, tok.column)
                self.advance()
                args = [self.expression()]
                while self.cur.kind == "comma":
                    self.advance()
                    args.append(self.expression())
                self.expect("rparen", "')'")
                arity = _FUNCTIONS[name][0]
                if len(args) != arity:
                    raise ParseError(
                        f"function {name!r} takes {arity} argument(s), got {len(args)}",
                        tok.line, tok.column)
                return Call(name, tuple(args))
            if name == "t":
                return Var("t")
            if name.startswith("x") and name[1:].isdigit() and int(name[1:]) >= 1:
                return Var(name)
            if name in _FUNCTIONS:
                raise ParseError(f"function {name!r} requires arguments", tok.line, tok.column)
            raise ParseError(f"unknown identifier {name!r} (expected x1..xn or t)",
                             tok.line, tok.column)
        if tok.kind == "lparen":
            self.advance()
            node = self.expression()
            self.expect("rparen", "')'")
            return node
        self.fail(f"expected expression, found {tok.text or 'end of input'!r}")

    # -- predicates ---------------------------------------------------------

    def predicate(self) -> Predicate:
        node = self.and_pred()
        while self.cur.kind == "ident" and self.cur.text == "or":
            self.advance()
            node = BoolOp("or", node, self.and_pred())
        return node

    def and_pred(self) -> Predicate:
        node = self.not_pred()
        while self.cur.kind == "ident" and self.cur.text == "and":
            self.advance()
            node = BoolOp("and", node, self.not_pred())
        return node

    def not_pred(self) -> Predicate:
        if self.cur.kind == "ident" and self.cur.text == "not":
            self.advance()
            return Not(self.not_pred())
        if self.cur.kind == "lparen":
            # may open a parenthesized predicate or an arithmetic sub-expression;
            # try predicate first, fall back to a comparison
            saved = self.pos
            try:
                self.advance()
                node = self.predicate()
                self.expect("rparen", "')'")
                return node
            except ParseError:
                self.pos = saved
        return self.comparison()

    def comparison(self) -> Predicate:
        left = self.expression()
        if self.cur.kind != "op" or self.cur.text not in _RELOPS:
            self.fail("expected comparison operator (<, <=, >, >=, !=)")
        op = self.advance().text
        right = self.expression()
        return Cmp(op, left, right)


def parse_expression(source: str) -> Expression:
    parser = _Parser(source)
    node = parser.expression()
    if parser.cur.kind != "end":
        parser.fail(f"unexpected trailing input {parser.cur.text!r}")
    return node


def parse_predicate(source: str) -> Predicate:
    parser = _Parser(source)
    node = parser.predicate()
    if parser.cur.kind != "end":
        parser.fail(f"unexpected trailing input {parser.cur.text!r}")
    return node


# ---------------------------------------------------------------------------
# Pretty printing (round-trip stable: parse(to_source(e)) == e)
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def to_source(e: Expression) -> str:
    return _print_expr(e, 0)


def _print_expr(e: Expression, parent_prec: int) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = _print_expr(e.operand, _PREC["neg"])
        text = f"-{inner}"
        return f"({text})" if parent_prec > _PREC["neg"] else text
    if isinstance(e, Call):
        args = ", ".join(_print_expr(a, 0) for a in e.args)
        return f"{e.func}({args})"
    prec = _PREC[e.op]
    # left operand of a right-associative ^ needs parens at equal precedence;
    # right operands of - and / likewise
    left = _print_expr(e.left, prec + (1 if e.op == "^" else 0))
    right = _print_expr(e.right, prec + (1 if e.op in ("-", "/") else 0))
    text = f"{left} {e.op} {right}" if e.op != "^" else f"{left}{e.op}{right}"
    return f"({text})" if parent_prec > prec else text


def predicate_to_source(p: Predicate) -> str:
    if isinstance(p, Cmp):
        return f"{to_source(p.left)} {p.op} {to_source(p.right)}"
    if isinstance(p, Not):
        return f"not ({predicate_to_source(p.operand)})"
    left = predicate_to_source(p.left)
    right = predicate_to_source(p.right)
    return f"({left}) {p.op} ({right})"


def variables_used(node: Expression | Predicate) -> set[str]:
    out: set[str] = set()
    stack: list = [node]
    while stack:
        cur = stack.pop()
        if isinstance(cur, Var):
            out.add(cur.name)
        elif isinstance(cur, Neg):
            stack.append(cur.operand)
        elif isinstance(cur, BinOp):
            stack.extend((cur.left, cur.right))
        elif isinstance(cur, Call):
            stack.extend(cur.args)
        elif isinstance(cur, Cmp):
            stack.extend((cur.left, cur.right))
        elif isinstance(cur, BoolOp):
            stack.extend((cur.left, cur.right))
        elif isinstance(cur, Not):
            stack.append(cur.operand)
    return out


# ---------------------------------------------------------------------------
# Compilation to closures (hot path: integrator stages call these)
# ---------------------------------------------------------------------------

def compile_expression(e: Expression) -> Callable[[Sequence[float], float], float]:
    """Compile to a closure f(point, t) -> float raising EvaluationError on singularities."""
    if isinstance(e, Num):
        v = e.value
        return lambda x, t: v
    if isinstance(e, Var):
        if e.name == "t":
            return lambda x, t: t
        idx = int(e.name[1:]) - 1
        name = e.name

        def load(x, t, idx=idx, name=name):
            try:
                return x[idx]
            except IndexError:
                raise EvaluationError(
                    f"variable {name} undefined for a point of dimension {len(x)}") from None

        return load
    if isinstance(e, Neg):
        f = compile_expression(e.operand)
        return lambda x, t: -f(x, t)
    if isinstance(e, Call):
        fns = [compile_expression(a) for a in e.args]
        name = e.func
        impl = _FUNCTIONS[name][1]
        if len(fns) == 1:
            g = fns[0]

            def call1(x, t, g=g, impl=impl, name=name):
                v = g(x, t)
                try:
                    out = impl(v)
                except ValueError:
                    raise EvaluationError(f"{name}({v!r}) is undefined") from None
                except OverflowError:
                    raise EvaluationError(f"{name}({v!r}) overflows") from None
                if not math.isfinite(out):
                    raise EvaluationError(f"{name}({v!r}) is not finite")
                return out

            return call1
        g1, g2 = fns

        def call2(x, t, g1=g1, g2=g2, impl=impl, name=name):
            a, b = g1(x, t), g2(x, t)
            try:
                out = impl(a, b)
            except ValueError:
                raise EvaluationError(f"{name}({a!r}, {b!r}) is undefined") from None
            if not math.isfinite(out):
                raise EvaluationError(f"{name}({a!r}, {b!r}) is not finite")
            return out

        return call2
    # BinOp
    fl = compile_expression(e.left)
    fr = compile_expression(e.right)
    op = e.op
    if op == "+":
        return lambda x, t: fl(x, t) + fr(x, t)
    if op == "-":
        return lambda x, t: fl(x, t) - fr(x, t)
    if op == "*":
        def mul(x, t):
            out = fl(x, t) * fr(x, t)
            if not math.isfinite(out):
                raise EvaluationError("product overflows")
            return out
        return mul
    if op == "/":
        def div(x, t):
            denom = fr(x, t)
            if denom == 0.0:
                raise EvaluationError("division by zero")
            return fl(x, t) / denom
        return div
    if op == "^":
        def pw(x, t):
            base, expo = fl(x, t), fr(x, t)
            try:
                out = base ** expo
            except (ValueError, ZeroDivisionError, OverflowError) as exc:
                raise EvaluationError(f"{base!r}^{expo!r} is undefined: {exc}") from None
            if isinstance(out, complex) or not math.isfinite(out):
                raise EvaluationError(f"{base!r}^{expo!r} is not a finite real")
            return out
        return pw
    raise AssertionError(f"unhandled operator {op!r}")


def compile_predicate(p: Predicate) -> Callable[[Sequence[float]], bool]:
    """Compile to a closure f(point) -> bool; strict (sub-expression errors propagate)."""
    if isinstance(p, Cmp):
        fl = compile_expression(p.left)
        fr = compile_expression(p.right)
        op = p.op
        if op == "<":
            return lambda x: fl(x, 0.0) < fr(x, 0.0)
        if op == "<=":
            return lambda x: fl(x, 0.0) <= fr(x, 0.0)
        if op == ">":
            return lambda x: fl(x, 0.0) > fr(x, 0.0)
        if op == ">=":
            return lambda x: fl(x, 0.0) >= fr(x, 0.0)
        return lambda x: fl(x, 0.0) != fr(x, 0.0)
    if isinstance(p, Not):
        f = compile_predicate(p.operand)
        return lambda x: not f(x)
    fl = compile_predicate(p.left)
    fr = compile_predicate(p.right)
    if p.op == "and":
        # strict: both sides evaluate so that singularities always surface
        def conj(x):
            a = fl(x)
            b = fr(x)
            return a and b
        return conj

    def disj(x):
        a = fl(x)
        b = fr(x)
        return a or b
    return disj


def evaluate(e: Expression, point: Sequence[float], t: float = 0.0) -> float:
    return compile_expression(e)(point, t)


def evaluate_predicate(p: Predicate, point: Sequence[float]) -> bool:
    return compile_predicate(p)(point)
