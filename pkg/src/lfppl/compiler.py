"""Translation of core programs into the quadruple (delta, gamma, D, F).

D is kept in factored form: ``D_groups`` is a list of pair lists and the
literal D is the Cartesian product of the groups (guards multiplied,
densities multiplied).  Programs with many independent discrete choices would
otherwise produce exponentially many pairs.  ``Quadruple.D`` expands the
product for small programs.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

from . import parser as ast
from .distributions import schema
from .errors import CompileError, LFPPLError
from .partition import GE, ONE, Guard, IndicatorProduct, Leaf, decision_tree, ge, lt
from .symbolic import (ONE as LIT_ONE, ZERO, Lit, PiecewiseValue, VarRef, apply, free_vars,
                       mul, piecewise, substitute, to_sexpr)

MAX_EXPANDED_D = 4096


@dataclass(frozen=True)
class DensityPair:
    eta: IndicatorProduct
    k: object


@dataclass(frozen=True)
class FactorTriple:
    zeta: IndicatorProduct
    l: object
    v: object


@dataclass(frozen=True)
class Site:
    """A sample statement: fresh variable, distribution and parameter values."""

    name: str
    dist: str
    params: tuple
    label: str | None = None


@dataclass(frozen=True)
class Quadruple:
    delta: tuple
    gamma: tuple
    D_groups: tuple
    F: tuple
    branch_predicates: tuple = ()
    sites: tuple = ()
    constants: dict = field(default_factory=dict)

    @property
    def D(self):
        """The expanded list of density pairs (product over ``D_groups``)."""
        size = math.prod(len(g) for g in self.D_groups)
        if size > MAX_EXPANDED_D:
            raise LFPPLError(f"expanded D would hold {size} pairs; use D_groups")
        out = []
        for combo in itertools.product(*self.D_groups):
            eta = ONE.times(*(p.eta for p in combo))
            if eta is not None:
                out.append(DensityPair(eta, mul(*(p.k for p in combo))))
        return out

    @property
    def continuous(self):
        g = set(self.gamma)
        return tuple(x for x in self.delta if x not in g)

    @property
    def discontinuous(self):
        return self.gamma

    @property
    def labels(self):
        return {s.name: s.label for s in self.sites if s.label}

    def to_dict(self):
        out = {
            "delta": list(self.delta),
            "gamma": list(self.gamma),
            "constants": dict(self.constants),
            "D_groups": [[_pair_json(p) for p in g] for g in self.D_groups],
        }
        if math.prod(len(g) for g in self.D_groups) <= MAX_EXPANDED_D:
            out["D"] = [_pair_json(p) for p in self.D]
        out["F"] = [{"guards": _guards_json(t.zeta), "density": to_sexpr(t.l), "value": to_sexpr(t.v)}
                    for t in self.F]
        out["branchPredicates"] = [{"id": i, "predicate": to_sexpr(e)} for i, e in self.branch_predicates]
        out["labels"] = self.labels
        return out

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)


def guard_sexpr(g):
    op = ">=" if g.relation == GE else "<"
    return f"({op} {to_sexpr(g.expr)} 0)"


def _guards_json(product):
    return [guard_sexpr(g) for g in product]


def _pair_json(p):
    return {"guards": _guards_json(p.eta), "density": to_sexpr(p.k)}


def classify_variables(q):
    """(continuous, discontinuous) variable names."""
    return q.continuous, q.discontinuous


class FreshNames:
    """Issues z1, z2, ... skipping any name already taken."""

    def __init__(self, taken=()):
        self.taken = set(taken)
        self.count = 0

    def fresh(self, hint="z"):
        self.count += 1
        name = f"{hint}{self.count}"
        n = 0
        while name in self.taken:
            n += 1
            name = f"{hint}{self.count}${n}"
        self.taken.add(name)
        return name


# ---------------------------------------------------------------------------
# translation

class _Entry:
    """Registry record whose expressions follow the let substitutions."""

    __slots__ = ("kind", "exprs", "name", "dist", "label")

    def __init__(self, kind, exprs, name=None, dist=None):
        self.kind = kind  # "branch", "lifted" or "site"
        self.exprs = tuple(exprs)
        self.name = name
        self.dist = dist
        self.label = None


@dataclass
class _Result:
    delta: set
    gamma: set
    groups: list
    F: list


def _trivial(group):
    return len(group) == 1 and group[0].eta.is_one and group[0].k == LIT_ONE


def _subst_group(group, mapping):
    out = []
    for p in group:
        eta = p.eta.substitute(mapping)
        if eta is not None:
            out.append(DensityPair(eta, substitute(p.k, mapping)))
    return out


def _group_mentions(group, name):
    return any(name in p.eta.free_vars() or name in free_vars(p.k) for p in group)


def _find_piecewise(e):
    """A PiecewiseValue in ``e`` whose guard is free of further pieces."""
    if isinstance(e, PiecewiseValue):
        inner = _find_piecewise(e.guard)
        return inner if inner is not None else e
    for a in getattr(e, "args", ()):
        found = _find_piecewise(a)
        if found is not None:
            return found
    return None


def _replace(e, target, replacement):
    if e == target:
        return replacement
    if isinstance(e, PiecewiseValue):
        return piecewise(_replace(e.guard, target, replacement), _replace(e.then, target, replacement),
                         _replace(e.else_, target, replacement))
    if getattr(e, "args", None):
        return apply(e.op, (_replace(a, target, replacement) for a in e.args))
    return e


def merge_values(triples):
    """One expression equal to the value of whichever triple is active."""
    if len(triples) == 1:
        return triples[0].v
    tree = decision_tree([t.zeta for t in triples])

    def conv(node):
        if isinstance(node, Leaf):
            vals = {triples[i].v for i in node.entries}
            return vals.pop() if len(vals) == 1 else Lit(math.nan)
        return piecewise(node.guard, conv(node.lt), conv(node.ge))

    return conv(tree)


class _Translator:
    def __init__(self, constants, taken):
        self.constants = frozenset(constants)
        self.names = FreshNames(taken)
        self.entries = []

    def register_branch(self, expr, kind="branch"):
        self.entries.append(_Entry(kind, (expr,)))

    def lift(self, r):
        """Split triples whose value holds a piecewise part, so that the value
        can be used inside guards and densities."""
        out = []

        def split(t):
            p = _find_piecewise(t.v)
            if p is None:
                out.append(t)
                return
            self.register_branch(p.guard, "lifted")
            r.gamma |= free_vars(p.guard) - self.constants
            for rel, branch in ((lt, p.then), (ge, p.else_)):
                zeta = t.zeta.times(IndicatorProduct.of(rel(p.guard)))
                if zeta is not None:
                    split(FactorTriple(zeta, t.l, _replace(t.v, p, branch)))

        for t in r.F:
            split(t)
        r.F = out
        return out

    def tr(self, e):
        method = getattr(self, "tr_" + type(e).__name__)
        return method(e)

    def tr_Const(self, e):
        return _Result(set(), set(), [], [FactorTriple(ONE, LIT_ONE, Lit(e.value))])

    def tr_Var(self, e):
        if e.name in self.constants:
            return _Result(set(), set(), [], [FactorTriple(ONE, LIT_ONE, VarRef(e.name))])
        return _Result({e.name}, set(), [], [FactorTriple(ONE, LIT_ONE, VarRef(e.name))])

    @staticmethod
    def _combos(results):
        """(zeta, l, values) over the Cartesian product of the results' F."""
        for combo in itertools.product(*(r.F for r in results)):
            zeta = ONE.times(*(t.zeta for t in combo))
            if zeta is None:
                continue
            yield zeta, mul(*(t.l for t in combo)), tuple(t.v for t in combo)

    @staticmethod
    def _union(results):
        delta, gamma, groups = set(), set(), []
        for r in results:
            delta |= r.delta
            gamma |= r.gamma
            groups.extend(r.groups)
        return delta, gamma, groups

    def tr_PrimOp(self, e):
        rs = [self.tr(a) for a in e.args]
        delta, gamma, groups = self._union(rs)
        F = [FactorTriple(z, l, apply(e.op, vs)) for z, l, vs in self._combos(rs)]
        return _Result(delta, gamma, groups, F)

    def tr_If(self, e):
        r1 = self.tr(e.pred)
        if e.boolean:
            r2, r3 = self.tr(e.then), self.tr(e.else_)
            delta, gamma, groups = self._union((r1, r2, r3))
            F = [FactorTriple(z, l, piecewise(*vs)) for z, l, vs in self._combos((r1, r2, r3))]
            return _Result(delta, gamma, groups, F)
        self.lift(r1)
        self.register_branch(merge_values(r1.F))
        r2, r3 = self.tr(e.then), self.tr(e.else_)
        delta, gamma, groups = self._union((r1, r2, r3))
        gamma |= r1.delta
        F = []
        for rel, rb in ((lt, r2), (ge, r3)):
            for t1 in r1.F:
                guard = IndicatorProduct.of(rel(t1.v))
                if guard is None:
                    continue
                for tb in rb.F:
                    zeta = t1.zeta.times(tb.zeta, guard)
                    if zeta is not None:
                        F.append(FactorTriple(zeta, mul(t1.l, tb.l), tb.v))
        return _Result(delta, gamma, groups, F)

    def tr_Sample(self, e):
        sch = schema(e.dist)
        if not sch.sampleable:
            raise CompileError(f"{e.dist} cannot be sampled")
        rs = [self.tr(a) for a in e.args]
        for r in rs:
            self.lift(r)
        z = self.names.fresh("z")
        delta, gamma, groups = self._union(rs)
        delta.add(z)
        d0 = []
        F = []
        for zeta, l, vs in self._combos(rs):
            for psi, phi in sch.instantiate(VarRef(z), vs):
                eta = psi.times(zeta)
                if eta is not None:
                    d0.append(DensityPair(eta, phi))
            F.append(FactorTriple(zeta, l, VarRef(z)))
        groups.append(d0)
        self.entries.append(_Entry("site", [merge_values(r.F) for r in rs], name=z, dist=e.dist))
        return _Result(delta, gamma, groups, F)

    def tr_Observe(self, e):
        sch = schema(e.dist)
        obs = e.observed
        if isinstance(obs, ast.Var):
            if obs.name not in self.constants:
                raise CompileError(f"observed value {obs.name!r} is not a declared constant")
            c = VarRef(obs.name)
        else:
            c = Lit(obs.value)
        rs = [self.tr(a) for a in e.args]
        for r in rs:
            self.lift(r)
        delta, gamma, groups = self._union(rs)
        F = []
        for zeta, l, vs in self._combos(rs):
            for psi, phi in sch.instantiate(c, vs):
                z2 = psi.times(zeta)
                if z2 is not None:
                    F.append(FactorTriple(z2, mul(phi, l), ZERO))
        return _Result(delta, gamma, groups, F)

    def tr_Let(self, e):
        x = e.name
        if x in self.constants:
            raise CompileError(f"let rebinds the program constant {x!r}")
        r1 = self.tr(e.value)
        if isinstance(e.value, ast.Sample):
            self.entries[-1].label = x
        mark = len(self.entries)
        r2 = self.tr(e.body)
        in_density = (any(_group_mentions(g, x) for g in r2.groups)
                      or any(x in t.zeta.free_vars() or x in free_vars(t.l) for t in r2.F))
        if in_density:
            self.lift(r1)
        delta0 = set().union(*(free_vars(t.v) for t in r1.F)) - self.constants
        delta = r1.delta | (r2.delta - {x}) | (delta0 if x in r2.delta else set())
        gamma = r1.gamma | (r2.gamma - {x}) | (delta0 if x in r2.gamma else set())

        merged = {x: merge_values(r1.F)}
        for entry in self.entries[mark:]:
            entry.exprs = tuple(substitute(ex, merged) for ex in entry.exprs)

        groups = list(r1.groups)
        if len(r1.F) == 1:
            (t1,) = r1.F
            m = {x: t1.v}
            if not t1.zeta.is_one:
                groups.append([DensityPair(t1.zeta, LIT_ONE)])
            groups.extend(_subst_group(g, m) for g in r2.groups)
        else:
            dep = [g for g in r2.groups if _group_mentions(g, x)]
            coupled = []
            for t1 in r1.F:
                m = {x: t1.v}
                for combo in itertools.product(*(_subst_group(g, m) for g in dep)):
                    eta = t1.zeta.times(*(p.eta for p in combo))
                    if eta is not None:
                        coupled.append(DensityPair(eta, mul(*(p.k for p in combo))))
            groups.append(coupled)
            groups.extend(g for g in r2.groups if not _group_mentions(g, x))

        F = []
        for t1 in r1.F:
            m = {x: t1.v}
            for t2 in r2.F:
                z2 = t2.zeta.substitute(m)
                if z2 is None:
                    continue
                zeta = t1.zeta.times(z2)
                if zeta is not None:
                    F.append(FactorTriple(zeta, mul(t1.l, substitute(t2.l, m)), substitute(t2.v, m)))
        return _Result(delta, gamma, [g for g in groups if not _trivial(g)], F)


def translate(expr, constants=(), taken=()):
    """Quadruple for a closed core expression.

    ``constants`` names program constants: they stay symbolic in the result
    and contribute no sampled variables.
    """
    free = ast.free_variables(expr) - set(constants)
    if free:
        raise CompileError(f"unbound variable {sorted(free)[0]!r}")
    used = {n.name for n in ast.walk(expr) if isinstance(n, (ast.Var, ast.Let))}
    t = _Translator(constants, used | set(constants) | set(taken))
    r = t.tr(expr)

    order = {}
    sites = []
    branches = []
    lifted = set()
    for entry in t.entries:
        if entry.kind == "site":
            order[entry.name] = len(order)
            sites.append(Site(entry.name, entry.dist, entry.exprs, entry.label))
        elif entry.kind == "branch":
            branches.append(entry.exprs[0])
        elif entry.exprs[0] not in lifted:
            lifted.add(entry.exprs[0])
            branches.append(entry.exprs[0])
    # A lifted guard repeating an if predicate needs no bit of its own.
    seen = set()
    unique = []
    for b in branches:
        if b in seen and b in lifted:
            continue
        seen.add(b)
        unique.append(b)

    stray = (r.delta | r.gamma) - order.keys()
    if stray:
        raise CompileError(f"unbound variable {sorted(stray)[0]!r}")
    delta = tuple(sorted(r.delta, key=order.__getitem__))
    gamma = tuple(x for x in delta if x in r.gamma)
    values = dict(constants) if isinstance(constants, dict) else {}
    return Quadruple(delta, gamma, tuple(tuple(g) for g in r.groups), tuple(r.F),
                     tuple(enumerate(unique)), tuple(sites), values)


def compile_program(source, constants=None, source_name="<string>"):
    """Parse, desugar and translate program text.

    ``constants`` maps free names of the program (data, hyper-parameters) to
    numbers.
    """
    constants = dict(constants or {})
    program = source if isinstance(source, ast.Program) else ast.parse_program(
        source, source_name, reserved=constants)
    return translate(program.root, {k: float(v) for k, v in constants.items()})


def compile_file(path, constants=None):
    prog = ast.load_program(path, reserved=constants or {})
    return compile_program(prog, constants)
