"""Symbolic real-valued expressions over named variables.

These trees carry the guards, densities and return values produced by the
compiler.  Construction goes through the simplifying helpers (``add``,
``mul``, ...) so that literal 0/1 factors and all-literal subtrees fold away
and sums/products stay flat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import EvaluationError

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class SymExpr:
    """Base class of symbolic expressions. Instances are immutable and hashable."""

    __slots__ = ()

    def __str__(self):
        return to_sexpr(self)


def _cached_hash(self):
    h = self.__dict__.get("_hash")
    if h is None:
        h = hash((type(self).__name__,) + tuple(getattr(self, f) for f in self.__dataclass_fields__))
        object.__setattr__(self, "_hash", h)
    return h


@dataclass(frozen=True, repr=False)
class VarRef(SymExpr):
    name: str
    __hash__ = _cached_hash

    def __repr__(self):
        return f"VarRef({self.name!r})"


@dataclass(frozen=True, repr=False)
class Lit(SymExpr):
    value: float
    __hash__ = _cached_hash

    def __repr__(self):
        return f"Lit({self.value!r})"


@dataclass(frozen=True, repr=False)
class Apply(SymExpr):
    op: str
    args: tuple
    __hash__ = _cached_hash

    def __repr__(self):
        return f"Apply({self.op!r}, {self.args!r})"


@dataclass(frozen=True, repr=False)
class PiecewiseValue(SymExpr):
    """``then`` where ``guard < 0``, ``else_`` elsewhere."""

    guard: SymExpr
    then: SymExpr
    else_: SymExpr
    __hash__ = _cached_hash

    def __repr__(self):
        return f"PiecewiseValue({self.guard!r}, {self.then!r}, {self.else_!r})"


ZERO = Lit(0.0)
ONE = Lit(1.0)

# Primitives reachable from program text.
USER_OPS = {"+": (1, None), "-": (1, 2), "*": (1, None), "/": (2, 2),
            "exp": (1, 1), "log": (1, 1), "sqrt": (1, 1)}
# Density primitives used inside distribution schemas; analytic in their arguments.
DENSITY_OPS = {"normal-pdf": 3, "uniform-pdf": 3, "normal-logpdf": 3, "uniform-logpdf": 3}


# ---------------------------------------------------------------------------
# numeric kernels

def normal_logpdf(x, mu, sigma):
    if not sigma > 0:
        raise EvaluationError(f"normal scale must be positive, got {sigma}")
    z = (x - mu) / sigma
    return -0.5 * z * z - math.log(sigma) - HALF_LOG_2PI


def normal_pdf(x, mu, sigma):
    return math.exp(normal_logpdf(x, mu, sigma))


def uniform_logpdf(x, a, b):
    if not a < b:
        raise EvaluationError(f"uniform bounds must satisfy a < b, got ({a}, {b})")
    return -math.log(b - a)


def uniform_pdf(x, a, b):
    if not a < b:
        raise EvaluationError(f"uniform bounds must satisfy a < b, got ({a}, {b})")
    return 1.0 / (b - a)


def _exp(v):
    try:
        return math.exp(v)
    except OverflowError:
        return math.inf


def _log(v):
    if not v > 0:
        raise EvaluationError(f"log of non-positive value {v}")
    return math.log(v)


def _sqrt(v):
    if v < 0:
        raise EvaluationError(f"sqrt of negative value {v}")
    return math.sqrt(v)


def _div(a, b):
    if b == 0:
        raise EvaluationError("division by zero")
    return a / b


def _sub(*args):
    return -args[0] if len(args) == 1 else args[0] - args[1]


def _prod(*args):
    r = 1.0
    for a in args:
        r *= a
    return r


NUMERIC = {
    "+": lambda *a: math.fsum(a) if len(a) > 2 else sum(a),
    "-": _sub,
    "*": _prod,
    "/": _div,
    "exp": _exp,
    "log": _log,
    "sqrt": _sqrt,
    "normal-pdf": normal_pdf,
    "uniform-pdf": uniform_pdf,
    "normal-logpdf": normal_logpdf,
    "uniform-logpdf": uniform_logpdf,
}


# ---------------------------------------------------------------------------
# simplifying constructors

def lit(value):
    return Lit(float(value))


def var(name):
    return VarRef(name)


def add(*args):
    terms = []
    const = 0.0
    for a in args:
        parts = a.args if isinstance(a, Apply) and a.op == "+" else (a,)
        for t in parts:
            if isinstance(t, Lit):
                const += t.value
            else:
                terms.append(t)
    if const != 0.0 or not terms:
        terms.append(Lit(const))
    if len(terms) == 1:
        return terms[0]
    return Apply("+", tuple(terms))


def neg(a):
    if isinstance(a, Lit):
        return Lit(-a.value)
    if isinstance(a, Apply) and a.op == "-" and len(a.args) == 1:
        return a.args[0]
    return Apply("-", (a,))


def sub(a, b):
    if isinstance(b, Lit) and b.value == 0.0:
        return a
    if isinstance(a, Lit) and isinstance(b, Lit):
        return Lit(a.value - b.value)
    if isinstance(a, Lit) and a.value == 0.0:
        return neg(b)
    return Apply("-", (a, b))


def mul(*args):
    factors = []
    const = 1.0
    for a in args:
        parts = a.args if isinstance(a, Apply) and a.op == "*" else (a,)
        for f in parts:
            if isinstance(f, Lit):
                const *= f.value
            else:
                factors.append(f)
    if const == 0.0:
        return ZERO
    if const != 1.0 or not factors:
        factors.insert(0, Lit(const))
    if len(factors) == 1:
        return factors[0]
    return Apply("*", tuple(factors))


def div(a, b):
    if isinstance(b, Lit):
        if b.value == 1.0:
            return a
        if isinstance(a, Lit) and b.value != 0.0:
            return Lit(a.value / b.value)
    if isinstance(a, Lit) and a.value == 0.0:
        return ZERO
    return Apply("/", (a, b))


def _fold_unary(op, a):
    if isinstance(a, Lit):
        try:
            return Lit(NUMERIC[op](a.value))
        except (EvaluationError, ArithmeticError, ValueError):
            pass
    return Apply(op, (a,))


def exp_(a):
    return _fold_unary("exp", a)


def log_(a):
    return _fold_unary("log", a)


def sqrt_(a):
    return _fold_unary("sqrt", a)


def piecewise(guard, then, else_):
    if then == else_:
        return then
    if isinstance(guard, Lit):
        return then if guard.value < 0 else else_
    return PiecewiseValue(guard, then, else_)


def apply(op, args):
    """Build ``op(args)`` through the matching simplifying constructor."""
    args = tuple(args)
    if op == "+":
        return add(*args)
    if op == "-":
        return neg(args[0]) if len(args) == 1 else sub(*args)
    if op == "*":
        return mul(*args)
    if op == "/":
        return div(*args)
    if op == "exp":
        return exp_(args[0])
    if op == "log":
        return log_(args[0])
    if op == "sqrt":
        return sqrt_(args[0])
    if op in DENSITY_OPS:
        if all(isinstance(a, Lit) for a in args):
            try:
                return Lit(NUMERIC[op](*(a.value for a in args)))
            except (EvaluationError, ArithmeticError, ValueError):
                pass
        return Apply(op, args)
    raise ValueError(f"unknown primitive {op!r}")


# ---------------------------------------------------------------------------
# structural queries

def free_vars(e):
    fv = e.__dict__.get("_fv")
    if fv is not None:
        return fv
    if isinstance(e, VarRef):
        fv = frozenset((e.name,))
    elif isinstance(e, Lit):
        fv = frozenset()
    elif isinstance(e, Apply):
        fv = frozenset().union(*(free_vars(a) for a in e.args))
    else:
        fv = free_vars(e.guard) | free_vars(e.then) | free_vars(e.else_)
    object.__setattr__(e, "_fv", fv)
    return fv


def contains_piecewise(e):
    if isinstance(e, PiecewiseValue):
        return True
    if isinstance(e, Apply):
        return any(contains_piecewise(a) for a in e.args)
    return False


def substitute(e, mapping):
    """Simultaneously replace free occurrences of ``mapping`` keys in ``e``."""
    if not mapping or not (free_vars(e) & mapping.keys()):
        return e
    if isinstance(e, VarRef):
        return mapping[e.name]
    if isinstance(e, Apply):
        return apply(e.op, (substitute(a, mapping) for a in e.args))
    return piecewise(substitute(e.guard, mapping), substitute(e.then, mapping),
                     substitute(e.else_, mapping))


def evaluate(e, env):
    """Numeric value of ``e`` with variables looked up in ``env``."""
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, VarRef):
        try:
            return float(env[e.name])
        except KeyError:
            raise EvaluationError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Apply):
        vals = [evaluate(a, env) for a in e.args]
        return NUMERIC[e.op](*vals)
    if evaluate(e.guard, env) < 0:
        return evaluate(e.then, env)
    return evaluate(e.else_, env)


# ---------------------------------------------------------------------------
# calculus

def log_expr(e):
    """Symbolic log of a non-negative density expression.

    Products become sums, ``exp`` cancels, and the density primitives map to
    their log forms. A literal zero becomes ``-inf``.
    """
    if isinstance(e, Lit):
        if e.value == 0.0:
            return Lit(-math.inf)
        return log_(e)
    if isinstance(e, Apply):
        if e.op == "*":
            return add(*(log_expr(a) for a in e.args))
        if e.op == "/":
            return sub(log_expr(e.args[0]), log_expr(e.args[1]))
        if e.op == "exp":
            return e.args[0]
        if e.op == "sqrt":
            return mul(Lit(0.5), log_expr(e.args[0]))
        if e.op == "normal-pdf":
            return Apply("normal-logpdf", e.args)
        if e.op == "uniform-pdf":
            return apply("uniform-logpdf", e.args)
    return log_(e)


def diff(e, name):
    """Partial derivative of ``e`` with respect to variable ``name``."""
    if name not in free_vars(e):
        return ZERO
    if isinstance(e, VarRef):
        return ONE
    if isinstance(e, PiecewiseValue):
        return piecewise(e.guard, diff(e.then, name), diff(e.else_, name))
    op, args = e.op, e.args
    d = [diff(a, name) for a in args]
    if op == "+":
        return add(*d)
    if op == "-":
        return neg(d[0]) if len(args) == 1 else sub(d[0], d[1])
    if op == "*":
        terms = []
        for i, di in enumerate(d):
            if di != ZERO:
                terms.append(mul(*args[:i], di, *args[i + 1:]))
        return add(*terms)
    if op == "/":
        a, b = args
        return sub(div(d[0], b), div(mul(a, d[1]), mul(b, b)))
    if op == "exp":
        return mul(e, d[0])
    if op == "log":
        return div(d[0], args[0])
    if op == "sqrt":
        return div(d[0], mul(Lit(2.0), e))
    if op == "normal-logpdf":
        x, m, s = args
        r = sub(x, m)
        s2 = mul(s, s)
        return add(mul(d[0], neg(div(r, s2))),
                   mul(d[1], div(r, s2)),
                   mul(d[2], sub(div(mul(r, r), mul(s2, s)), div(ONE, s))))
    if op == "uniform-logpdf":
        _, a, b = args
        w = sub(b, a)
        return add(mul(d[1], div(ONE, w)), mul(d[2], neg(div(ONE, w))))
    if op in ("normal-pdf", "uniform-pdf"):
        return mul(e, diff(Apply(op.replace("pdf", "logpdf"), args), name))
    raise ValueError(f"cannot differentiate primitive {op!r}")


# ---------------------------------------------------------------------------
# printing

def fmt_number(v):
    if math.isfinite(v) and v == int(v) and abs(v) < 1e15:
        return str(int(v))
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def to_sexpr(e):
    if isinstance(e, Lit):
        return fmt_number(e.value)
    if isinstance(e, VarRef):
        return e.name
    if isinstance(e, Apply):
        return "(" + " ".join([e.op] + [to_sexpr(a) for a in e.args]) + ")"
    return f"(if (< {to_sexpr(e.guard)} 0) {to_sexpr(e.then)} {to_sexpr(e.else_)})"


def parse_sym(text):
    """Read a prefix s-expression (as printed by ``to_sexpr``) back into a SymExpr."""
    from .parser import Number, SList, Symbol, read

    def conv(node):
        if isinstance(node, Number):
            return Lit(node.value)
        if isinstance(node, Symbol):
            if node.name in ("inf", "-inf", "nan"):
                return Lit(float(node.name))
            return VarRef(node.name)
        head, *rest = node.items
        if head.name == "if":
            cond, then, else_ = rest
            return PiecewiseValue(conv(cond.items[1]), conv(then), conv(else_))
        return Apply(head.name, tuple(conv(a) for a in rest))

    return conv(read(text))


# ---------------------------------------------------------------------------
# code generation

CODEGEN_NAMESPACE = {
    "_exp": _exp, "_log": math.log, "_sqrt": math.sqrt,
    "_nlp": normal_logpdf, "_ulp": uniform_logpdf,
    "_npdf": normal_pdf, "_updf": uniform_pdf,
    "_INF": math.inf, "_NAN": math.nan, "_HL2P": HALF_LOG_2PI,
}


def _safe(fn):
    def wrapped(*args):
        try:
            return fn(*args)
        except (ArithmeticError, ValueError):
            return math.nan
    return wrapped


SAFE_NAMESPACE = dict(CODEGEN_NAMESPACE, _log=_safe(math.log), _sqrt=_safe(math.sqrt),
                      _nlp=_safe(normal_logpdf), _ulp=_safe(uniform_logpdf),
                      _npdf=_safe(normal_pdf), _updf=_safe(uniform_pdf),
                      _div=_safe(lambda a, b: a / b))


def to_python(e, names, safe=False):
    """Python source for ``e``; ``names`` maps variable names to identifiers.

    With ``safe`` the code yields nan on domain errors instead of raising
    (used for branch predicates, which are evaluated on untaken paths too).
    """
    def go(e):
        if isinstance(e, Lit):
            v = e.value
            if math.isnan(v):
                return "_NAN"
            if math.isinf(v):
                return "_INF" if v > 0 else "(-_INF)"
            return repr(v) if v >= 0 else f"({v!r})"
        if isinstance(e, VarRef):
            return names[e.name]
        if isinstance(e, PiecewiseValue):
            return f"({go(e.then)} if {go(e.guard)} < 0.0 else {go(e.else_)})"
        op, args = e.op, e.args
        a = [go(x) for x in args]
        if op == "+":
            return "(" + " + ".join(a) + ")"
        if op == "-":
            return f"(-{a[0]})" if len(a) == 1 else f"({a[0]} - {a[1]})"
        if op == "*":
            return "(" + " * ".join(a) + ")"
        if op == "/":
            return f"_div({a[0]}, {a[1]})" if safe else f"({a[0]} / {a[1]})"
        if op == "exp":
            return f"_exp({a[0]})"
        if op == "log":
            return f"_log({a[0]})"
        if op == "sqrt":
            return f"_sqrt({a[0]})"
        if op == "normal-logpdf":
            s = args[2]
            if isinstance(s, Lit) and s.value > 0 and not safe:
                c = -math.log(s.value) - HALF_LOG_2PI
                return f"(-0.5 * (({a[0]} - {a[1]}) * {1.0 / s.value!r}) ** 2 + {c!r})"
            return f"_nlp({a[0]}, {a[1]}, {a[2]})"
        if op == "uniform-logpdf":
            return f"_ulp({a[0]}, {a[1]}, {a[2]})"
        if op == "normal-pdf":
            return f"_npdf({a[0]}, {a[1]}, {a[2]})"
        if op == "uniform-pdf":
            return f"_updf({a[0]}, {a[1]}, {a[2]})"
        raise ValueError(f"no code generator for {op!r}")

    return go(e)
