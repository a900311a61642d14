"""Reading, validating and desugaring program text.

``tokenize`` and ``parse`` produce a validated s-expression tree (``Symbol``,
``Number``, ``SList``).  ``desugar`` lowers that tree to the core AST, whose
only node types are ``Var``, ``Const``, ``PrimOp``, ``If``, ``Let``,
``Sample`` and ``Observe``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DesugarError, LexError, ParseError
from .symbolic import USER_OPS, fmt_number

# ---------------------------------------------------------------------------
# tokens

OPEN_PAREN = "open-paren"
CLOSE_PAREN = "close-paren"
OPEN_BRACKET = "open-bracket"
CLOSE_BRACKET = "close-bracket"
SYMBOL = "symbol"
NUMBER = "number"


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: tuple  # (line, column), both 1-based


_SCAN = re.compile(r"(?P<ws>\s+)|(?P<comment>;[^\n]*)|(?P<delim>[()\[\]])|(?P<atom>[^\s()\[\];]+)")
_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_BAD_CHARS = set("{}\"'`#@~^\\,")
_DELIMS = {"(": OPEN_PAREN, ")": CLOSE_PAREN, "[": OPEN_BRACKET, "]": CLOSE_BRACKET}


def tokenize(source):
    """Split program text into tokens; ``;`` starts a comment running to end of line."""
    tokens = []
    line, line_start = 1, 0
    for m in _SCAN.finditer(source):
        start = m.start()
        pos = (line, start - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        if kind == "delim":
            tokens.append(Token(_DELIMS[text], text, pos))
        elif kind == "atom":
            for i, ch in enumerate(text):
                if ch in _BAD_CHARS or not ch.isprintable():
                    raise LexError(f"invalid character {ch!r}", (line, pos[1] + i))
            if _NUMBER.fullmatch(text):
                tokens.append(Token(NUMBER, text, pos))
            elif text[0].isdigit() or (text[0] in "+-." and len(text) > 1 and text[1].isdigit()):
                raise LexError(f"malformed number {text!r}", pos)
            else:
                tokens.append(Token(SYMBOL, text, pos))
        if "\n" in text:
            line += text.count("\n")
            line_start = start + text.rindex("\n") + 1
    return tokens


# ---------------------------------------------------------------------------
# s-expressions

@dataclass(frozen=True)
class Symbol:
    name: str
    pos: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Number:
    value: float
    pos: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SList:
    items: tuple
    bracket: bool = False
    pos: tuple = field(default=None, compare=False, repr=False)

    @property
    def head(self):
        if self.items and isinstance(self.items[0], Symbol):
            return self.items[0].name
        return None


def _read_tokens(tokens):
    pos = 0

    def read_one():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok.kind == NUMBER:
            return Number(float(tok.text), tok.pos)
        if tok.kind == SYMBOL:
            return Symbol(tok.text, tok.pos)
        if tok.kind in (CLOSE_PAREN, CLOSE_BRACKET):
            raise ParseError(f"unexpected {tok.text!r}", tok.pos)
        closer = CLOSE_PAREN if tok.kind == OPEN_PAREN else CLOSE_BRACKET
        items = []
        while True:
            if pos >= len(tokens):
                raise ParseError(f"unbalanced {tok.text!r}: missing closing delimiter", tok.pos)
            nxt = tokens[pos]
            if nxt.kind in (CLOSE_PAREN, CLOSE_BRACKET):
                if nxt.kind != closer:
                    raise ParseError(f"mismatched {nxt.text!r} closing {tok.text!r} at "
                                     f"line {tok.pos[0]}, column {tok.pos[1]}", nxt.pos)
                pos += 1
                return SList(tuple(items), tok.kind == OPEN_BRACKET, tok.pos)
            items.append(read_one())

    if not tokens:
        raise ParseError("empty program")
    node = read_one()
    if pos != len(tokens):
        raise ParseError("a program is a single expression; found trailing input", tokens[pos].pos)
    return node


def read(text):
    """Read text into an s-expression tree without validation."""
    return _read_tokens(tokenize(text))


SPECIAL_FORMS = ("let", "if", "sample", "observe")
COMPARISONS = ("<", ">", "<=", ">=")
SUGAR_ARITY = {"max": (2, 2), "nth": (2, 2), "vector": (0, None)}
DIST_ARITY = {"normal": 2, "uniform": 2, "bernoulli": 1, "categorical": 1, "factor": 1}


def _check_arity(node, name, lo, hi):
    n = len(node.items) - 1
    if n < lo or (hi is not None and n > hi):
        want = str(lo) if lo == hi else (f"at least {lo}" if hi is None else f"{lo}-{hi}")
        raise ParseError(f"{name} expects {want} argument(s), got {n}", node.pos)


def _validate_dist(node, under):
    if not isinstance(node, SList) or node.bracket or node.head is None:
        raise ParseError(f"{under} expects a distribution such as (normal 0 1)", getattr(node, "pos", None))
    name = node.head
    if name not in DIST_ARITY:
        raise ParseError(f"unknown distribution {name!r}", node.pos)
    if name == "factor" and under == "sample":
        raise ParseError("factor only valid under observe", node.pos)
    _check_arity(node, name, DIST_ARITY[name], DIST_ARITY[name])
    for a in node.items[1:]:
        _validate(a)


def _validate(node):
    if isinstance(node, Number):
        return
    if isinstance(node, Symbol):
        if node.name in SPECIAL_FORMS:
            raise ParseError(f"reserved word {node.name!r} used as a variable", node.pos)
        return
    if node.bracket:
        for item in node.items:
            _validate(item)
        return
    if not node.items:
        raise ParseError("empty application ()", node.pos)
    head = node.head
    if head is None:
        raise ParseError("operator position must hold a symbol", node.pos)
    if head == "let":
        if len(node.items) < 3:
            raise ParseError("let expects a binding vector and at least one body", node.pos)
        binds = node.items[1]
        if not (isinstance(binds, SList) and binds.bracket):
            raise ParseError("let bindings must be written [name value ...]", binds.pos)
        if len(binds.items) % 2:
            raise ParseError("let binding vector needs an even number of forms", binds.pos)
        if not binds.items:
            raise ParseError("let needs at least one binding", binds.pos)
        for name, value in zip(binds.items[::2], binds.items[1::2]):
            if not isinstance(name, Symbol):
                raise ParseError("let binding name must be a symbol", getattr(name, "pos", None))
            if name.name in SPECIAL_FORMS:
                raise ParseError(f"cannot bind reserved word {name.name!r}", name.pos)
            _validate(value)
        for body in node.items[2:]:
            _validate(body)
    elif head == "if":
        _check_arity(node, "if", 3, 3)
        cond = node.items[1]
        if not (isinstance(cond, SList) and not cond.bracket and cond.head in COMPARISONS):
            raise ParseError("if condition must be a comparison such as (< e 0)", getattr(cond, "pos", None))
        for item in node.items[1:]:
            _validate(item)
    elif head == "sample":
        _check_arity(node, "sample", 1, 1)
        _validate_dist(node.items[1], "sample")
    elif head == "observe":
        _check_arity(node, "observe", 2, 2)
        _validate_dist(node.items[1], "observe")
        _validate(node.items[2])
    elif head in DIST_ARITY:
        raise ParseError(f"distribution constructor {head!r} only valid inside sample/observe", node.pos)
    elif head in COMPARISONS:
        _check_arity(node, head, 2, 2)
        for item in node.items[1:]:
            _validate(item)
    elif head in USER_OPS or head in SUGAR_ARITY:
        lo, hi = USER_OPS.get(head) or SUGAR_ARITY[head]
        _check_arity(node, head, lo, hi)
        for item in node.items[1:]:
            _validate(item)
    else:
        raise ParseError(f"unknown operator {head!r}", node.pos)


def parse(tokens):
    """Validated s-expression tree for a token list."""
    node = _read_tokens(list(tokens))
    _validate(node)
    return node


def to_source(node):
    """Print an s-expression tree; reading the result back yields an equal tree."""
    if isinstance(node, Number):
        return fmt_number(node.value)
    if isinstance(node, Symbol):
        return node.name
    inner = " ".join(to_source(i) for i in node.items)
    return f"[{inner}]" if node.bracket else f"({inner})"


def symbols(node):
    """Every symbol name occurring in an s-expression tree."""
    out = set()
    stack = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, Symbol):
            out.add(n.name)
        elif isinstance(n, SList):
            stack.extend(n.items)
    return out


# ---------------------------------------------------------------------------
# core AST

class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class PrimOp(Expr):
    op: str
    args: tuple


@dataclass(frozen=True)
class If(Expr):
    """``(if (< pred 0) then else)``.

    ``boolean`` marks an if produced from a comparison used as a value; the
    compiler keeps it as a piecewise return value instead of splitting paths.
    """

    pred: Expr
    then: Expr
    else_: Expr
    boolean: bool = False


@dataclass(frozen=True)
class Let(Expr):
    name: str
    value: Expr
    body: Expr


@dataclass(frozen=True)
class Sample(Expr):
    dist: str
    args: tuple


@dataclass(frozen=True)
class Observe(Expr):
    dist: str
    args: tuple
    observed: Expr  # Const, or Var naming a program constant


def core_to_source(e):
    if isinstance(e, Const):
        return fmt_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, PrimOp):
        return "(" + " ".join([e.op] + [core_to_source(a) for a in e.args]) + ")"
    if isinstance(e, If):
        return f"(if (< {core_to_source(e.pred)} 0) {core_to_source(e.then)} {core_to_source(e.else_)})"
    if isinstance(e, Let):
        return f"(let [{e.name} {core_to_source(e.value)}] {core_to_source(e.body)})"
    args = " ".join(core_to_source(a) for a in e.args)
    if isinstance(e, Sample):
        return f"(sample ({e.dist} {args}))"
    return f"(observe ({e.dist} {args}) {core_to_source(e.observed)})"


def children(e):
    if isinstance(e, (PrimOp, Sample)):
        return e.args
    if isinstance(e, Observe):
        return e.args + (e.observed,)
    if isinstance(e, If):
        return (e.pred, e.then, e.else_)
    if isinstance(e, Let):
        return (e.value, e.body)
    return ()


def walk(e):
    stack = [e]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(children(n))


def is_pure(e):
    return not any(isinstance(n, (Sample, Observe)) for n in walk(e))


def free_variables(e):
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Let):
        return free_variables(e.value) | (free_variables(e.body) - {e.name})
    out = set()
    for c in children(e):
        out |= free_variables(c)
    return out


def bound_names(e):
    return {n.name for n in walk(e) if isinstance(n, Let)}


@dataclass(frozen=True)
class Program:
    root: Expr
    source_name: str = "<string>"
    text: str = ""

    def free_variables(self):
        return free_variables(self.root)


# ---------------------------------------------------------------------------
# desugaring

class _Names:
    def __init__(self, taken):
        self.taken = set(taken)

    def fresh(self, base):
        name, n = base, 0
        while name in self.taken:
            n += 1
            name = f"{base}{n}"
        self.taken.add(name)
        return name


@dataclass(frozen=True)
class _Vector:
    elements: tuple
    captured: bool = False


def _is_vector_literal(node):
    return isinstance(node, SList) and (node.bracket or node.head == "vector")


def _vector_items(node):
    return node.items if node.bracket else node.items[1:]


def _minus(a, b):
    if isinstance(b, Const) and b.value == 0.0:
        return a
    return PrimOp("-", (a, b))


def _fold(e):
    """Evaluate a closed arithmetic expression to a Const when possible."""
    if isinstance(e, Const):
        return e
    if isinstance(e, PrimOp) and all(isinstance(a, Const) for a in e.args):
        from .symbolic import NUMERIC
        try:
            return Const(float(NUMERIC[e.op](*(a.value for a in e.args))))
        except (ArithmeticError, ValueError):
            return e
    return e


class _Desugarer:
    def __init__(self, taken):
        self.names = _Names(taken)

    @staticmethod
    def _bind(env, name, value):
        out = {}
        for k, v in env.items():
            if k == name:
                continue
            if isinstance(v, _Vector) and not v.captured and any(
                    name in free_variables(el) for el in v.elements):
                v = _Vector(v.elements, True)
            out[k] = v
        if value is not None:
            out[name] = value
        return out

    def vector(self, node, env):
        """Elements of a vector literal or of a symbol bound to one."""
        if isinstance(node, Symbol):
            v = env.get(node.name)
            if not isinstance(v, _Vector):
                raise DesugarError(f"{node.name!r} is not bound to a vector", node.pos)
            if v.captured:
                raise DesugarError(f"vector {node.name!r} refers to a variable shadowed at this point",
                                   node.pos)
            return v.elements
        if _is_vector_literal(node):
            elems = tuple(self.expr(i, env) for i in _vector_items(node))
            for el, item in zip(elems, _vector_items(node)):
                if not is_pure(el):
                    raise DesugarError("vector elements may not sample or observe",
                                       getattr(item, "pos", None))
            return elems
        raise DesugarError("expected a vector", getattr(node, "pos", None))

    def weights(self, node, env):
        elems = self.vector(node, env)
        ws = [_fold(e) for e in elems]
        if not ws or not all(isinstance(w, Const) for w in ws):
            raise DesugarError("categorical weights must be numeric constants", getattr(node, "pos", None))
        ws = [w.value for w in ws]
        if any(w < 0 for w in ws):
            raise DesugarError("categorical weights must be non-negative", getattr(node, "pos", None))
        if abs(math.fsum(ws) - 1.0) > 1e-9:
            raise DesugarError(f"categorical weights sum to {math.fsum(ws)!r}, not 1",
                               getattr(node, "pos", None))
        return ws

    def comparison(self, node, env):
        """(pred, swapped): the comparison holds iff ``pred < 0`` xor ``swapped``."""
        op, a, b = node.head, node.items[1], node.items[2]
        a, b = self.expr(a, env), self.expr(b, env)
        if op == "<":
            return _minus(a, b), False
        if op == ">":
            return _minus(b, a), False
        if op == "<=":
            return _minus(b, a), True
        return _minus(a, b), True

    def expr(self, node, env):
        if isinstance(node, Number):
            return Const(node.value)
        if isinstance(node, Symbol):
            if isinstance(env.get(node.name), _Vector):
                raise DesugarError(f"vector {node.name!r} may only be used through nth or categorical",
                                   node.pos)
            return Var(node.name)
        if node.bracket or node.head == "vector":
            raise DesugarError("vector literals are only supported in let bindings, nth and categorical",
                               node.pos)
        head = node.head
        args = node.items[1:]
        if head == "let":
            return self.let(node, env)
        if head == "if":
            pred, swapped = self.comparison(args[0], env)
            then, else_ = self.expr(args[1], env), self.expr(args[2], env)
            if swapped:
                then, else_ = else_, then
            return If(pred, then, else_)
        if head in COMPARISONS:
            pred, swapped = self.comparison(node, env)
            yes, no = Const(1.0), Const(0.0)
            return If(pred, no, yes, True) if swapped else If(pred, yes, no, True)
        if head == "max":
            a, b = (self.expr(x, env) for x in args)
            if is_pure(a) and is_pure(b):
                return If(PrimOp("-", (a, b)), b, a)
            ta, tb = self.names.fresh("max_a"), self.names.fresh("max_b")
            return Let(ta, a, Let(tb, b, If(PrimOp("-", (Var(ta), Var(tb))), Var(tb), Var(ta))))
        if head == "nth":
            vec, idx = args
            if not isinstance(idx, Number):
                raise DesugarError("unsupported feature: nth with non-constant index",
                                   getattr(idx, "pos", None))
            elems = self.vector(vec, env)
            k = idx.value
            if k != int(k) or not 0 <= k < len(elems):
                raise DesugarError(f"nth index {fmt_number(k)} out of range for length {len(elems)}",
                                   idx.pos)
            return elems[int(k)]
        if head == "sample":
            return self.sample(args[0], env)
        if head == "observe":
            return self.observe(args[0], args[1], env)
        return PrimOp(head, tuple(self.expr(a, env) for a in args))

    def let(self, node, env):
        binds = node.items[1].items
        chain = []
        last = None
        for name_node, value in zip(binds[::2], binds[1::2]):
            name = name_node.name
            last = name
            if _is_vector_literal(value):
                env = self._bind(env, name, _Vector(self.vector(value, env)))
            else:
                chain.append((name, self.expr(value, env)))
                env = self._bind(env, name, None)
        bodies = node.items[2:]
        out = self.expr(bodies[-1], env)
        if len(bodies) > 1:
            # The inner bodies are evaluated for their effects only.
            seq = []
            for b in bodies[:-1]:
                seq.append((self.names.fresh(f"{last}_"), self.expr(b, env)))
            for name, value in reversed(seq):
                out = Let(name, value, out)
        for name, value in reversed(chain):
            out = Let(name, value, out)
        return out

    def sample(self, dist, env):
        name = dist.head
        args = dist.items[1:]
        if name == "categorical":
            ws = self.weights(args[0], env)
            u = self.names.fresh("u")
            cum = 0.0
            body = Const(float(len(ws)))
            cuts = []
            for w in ws[:-1]:
                cum += w
                cuts.append(cum)
            for k in range(len(cuts), 0, -1):
                body = If(PrimOp("-", (Var(u), Const(cuts[k - 1]))), Const(float(k)), body)
            return Let(u, Sample("uniform", (Const(0.0), Const(1.0))), body)
        if name == "bernoulli":
            p = self.expr(args[0], env)
            u = self.names.fresh("u")
            wrap = None
            if not is_pure(p):
                wrap = self.names.fresh("p")
                p, p_value = Var(wrap), p
            cut = _fold(PrimOp("-", (Const(1.0), p)))
            out = Let(u, Sample("uniform", (Const(0.0), Const(1.0))),
                      If(PrimOp("-", (Var(u), cut)), Const(0.0), Const(1.0)))
            return Let(wrap, p_value, out) if wrap else out
        return Sample(name, tuple(self.expr(a, env) for a in args))

    def observe(self, dist, observed, env):
        name = dist.head
        args = dist.items[1:]
        if name == "factor" and isinstance(observed, Symbol) and observed.name == "_":
            obs = Const(0.0)
        else:
            obs = _fold(self.expr(observed, env))
        if not isinstance(obs, (Const, Var)):
            raise DesugarError("observed value must be a constant", getattr(observed, "pos", None))
        if name == "categorical":
            ws = self.weights(args[0], env)
            if not isinstance(obs, Const) or obs.value != int(obs.value) or not 1 <= obs.value <= len(ws):
                raise DesugarError("observed categorical value must be a literal category 1..K",
                                   getattr(observed, "pos", None))
            w = ws[int(obs.value) - 1]
            return Observe("factor", (Const(math.log(w) if w > 0 else -math.inf),), Const(0.0))
        return Observe(name, tuple(self.expr(a, env) for a in args), obs)


def desugar(sugared, reserved=()):
    """Lower a validated s-expression tree to the core AST.

    Names introduced here (throwaway binders, uniform draws behind categorical
    and bernoulli) avoid every symbol of the program and ``reserved``.
    """
    d = _Desugarer(symbols(sugared) | set(reserved))
    return d.expr(sugared, {})


def parse_program(text, source_name="<string>", reserved=()):
    """Text to a desugared :class:`Program`."""
    sugared = parse(tokenize(text))
    return Program(desugar(sugared, reserved), source_name, text)


def load_program(path, reserved=()):
    path = Path(path)
    return parse_program(path.read_text(encoding="utf-8"), str(path), reserved)
