"""Indicator guards, products of guards, and decision trees over them."""

from __future__ import annotations

import sys
from collections import Counter
from dataclasses import dataclass

from .symbolic import Lit, evaluate, free_vars, substitute, to_sexpr

GE = "ge"
LT = "lt"


@dataclass(frozen=True)
class Guard:
    """The indicator ``1[expr >= 0]`` (relation GE) or ``1[expr < 0]`` (LT)."""

    expr: object
    relation: str

    def holds(self, value):
        return value >= 0 if self.relation == GE else value < 0

    def evaluate(self, env):
        return self.holds(evaluate(self.expr, env))

    def __str__(self):
        op = ">=" if self.relation == GE else "<"
        return f"1[{to_sexpr(self.expr)} {op} 0]"


def ge(expr):
    return Guard(expr, GE)


def lt(expr):
    return Guard(expr, LT)


class Contradiction(Exception):
    """Raised internally when a product is identically zero."""


@dataclass(frozen=True)
class IndicatorProduct:
    """A finite product of guards; the empty product is the constant 1."""

    guards: tuple = ()

    @classmethod
    def of(cls, *guards):
        """Normalised product, or ``None`` when it is identically zero.

        Literal guards are decided on the spot, repeated guards are kept once,
        and a guard paired with its own negation zeroes the product.
        """
        seen = {}
        for g in guards:
            if isinstance(g.expr, Lit):
                if g.holds(g.expr.value):
                    continue
                return None
            prev = seen.get(g.expr)
            if prev is None:
                seen[g.expr] = g.relation
            elif prev != g.relation:
                return None
        return cls(tuple(Guard(e, r) for e, r in seen.items()))

    def __iter__(self):
        return iter(self.guards)

    def __len__(self):
        return len(self.guards)

    @property
    def is_one(self):
        return not self.guards

    def times(self, *others):
        gs = list(self.guards)
        for o in others:
            gs.extend(o.guards)
        return IndicatorProduct.of(*gs)

    def substitute(self, mapping):
        if not mapping:
            return self
        return IndicatorProduct.of(*(Guard(substitute(g.expr, mapping), g.relation)
                                     for g in self.guards))

    def evaluate(self, env):
        return all(g.evaluate(env) for g in self.guards)

    def free_vars(self):
        return frozenset().union(*(free_vars(g.expr) for g in self.guards))

    def __str__(self):
        return "·".join(str(g) for g in self.guards) if self.guards else "1"


ONE = IndicatorProduct()


@dataclass(frozen=True)
class Split:
    guard: object
    lt: object
    ge: object


@dataclass(frozen=True)
class Leaf:
    entries: tuple


def decision_tree(products):
    """Binary tree over distinct guard expressions that selects the products
    consistent with every guard decided on the path to a leaf.

    Guard expressions are treated as independent booleans, so a leaf holding
    several entries marks an overlap and an empty leaf marks a gap; both are
    only errors if reached at run time.
    """
    reqs = [{g.expr: g.relation for g in p} for p in products]
    order = {}
    for r in reqs:
        for e in r:
            order.setdefault(e, len(order))
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 4 * len(order) + 1000))

    def build(active, assigned):
        counts = Counter()
        for i in active:
            for e in reqs[i]:
                if e not in assigned:
                    counts[e] += 1
        if not counts:
            return Leaf(tuple(active))
        expr = min(counts, key=lambda e: (-counts[e], order[e]))
        lo = [i for i in active if reqs[i].get(expr, LT) == LT]
        hi = [i for i in active if reqs[i].get(expr, GE) == GE]
        inner = assigned | {expr}
        return Split(expr, build(lo, inner), build(hi, inner))

    return build(list(range(len(products))), frozenset())


def tree_depth(tree):
    if isinstance(tree, Leaf):
        return 0
    return 1 + max(tree_depth(tree.lt), tree_depth(tree.ge))


def lookup(tree, value_of):
    """Entries of the leaf reached when ``value_of(expr)`` gives guard values."""
    while isinstance(tree, Split):
        tree = tree.lt if value_of(tree.guard) < 0 else tree.ge
    return tree.entries
