"""Shared checks for the test modules."""

from collections import Counter

import numpy as np

from lfppl.compiler import guard_sexpr
from lfppl.symbolic import Lit, VarRef, substitute, to_sexpr


def normalise(q, include_zero=False):
    """Quadruple as comparable data: fresh names renamed z, z', z'', ... by
    position in delta; D and F become multisets of (guard set, density[, value])."""
    names = {x: VarRef("z" + "'" * i) for i, x in enumerate(q.delta)}

    def g(product):
        return frozenset(guard_sexpr(gd) for gd in product.substitute(names))

    def e(expr):
        return to_sexpr(substitute(expr, names))

    D = Counter((g(p.eta), e(p.k)) for p in q.D if include_zero or p.k != Lit(0.0))
    F = Counter((g(t.zeta), e(t.l), e(t.v)) for t in q.F)
    return {
        "delta": {names[x].name for x in q.delta},
        "gamma": {names[x].name for x in q.gamma},
        "D": D,
        "F": F,
    }


FIG1_GOLDEN = {
    "delta": {"z"},
    "gamma": {"z"},
    "D": Counter({
        (frozenset({"(>= z 0)", "(>= (- 1 z) 0)", "(< (- q z) 0)"}), "(uniform-pdf z 0 1)"): 1,
        (frozenset({"(>= z 0)", "(>= (- 1 z) 0)", "(>= (- q z) 0)"}), "(uniform-pdf z 0 1)"): 1,
    }),
    "F": Counter({
        (frozenset({"(< (- q z) 0)"}), "(normal-pdf y 1 1)", "(if (< (- q z) 0) 1 0)"): 1,
        (frozenset({"(>= (- q z) 0)"}), "(normal-pdf y 0 1)", "(if (< (- q z) 0) 1 0)"): 1,
    }),
}


# Covering boxes for random states, per fixture: (low, high) for every variable.
def covering_box(q):
    lo, hi = [], []
    for x in q.delta:
        site = next(s for s in q.sites if s.name == x)
        if site.dist == "uniform":
            a, b = (p.value for p in site.params)
            pad = 0.25 * (b - a)
            lo.append(a - pad)
            hi.append(b + pad)
        else:
            lo.append(-8.0)
            hi.append(8.0)
    return np.array(lo), np.array(hi)


def random_states(q, n, seed=0):
    lo, hi = covering_box(q)
    return np.random.default_rng(seed).uniform(lo, hi, size=(n, len(lo)))


def interior_states(model, n, margin=1e-3, seed=0, max_draws=10**6):
    """In-support states whose guard expressions all stay ``margin`` away from zero."""
    from lfppl.density import evaluate_batch

    q = model.q
    guards = {g.expr for grp in q.D_groups for p in grp for g in p.eta}
    guards |= {g.expr for t in q.F for g in t.zeta}
    rng = np.random.default_rng(seed)
    lo, hi = covering_box(q)
    out = []
    drawn = 0
    while len(out) < n and drawn < max_draws:
        xs = rng.uniform(lo, hi, size=(4 * n, len(lo)))
        drawn += len(xs)
        env = dict(q.constants)
        env.update((x, xs[:, i]) for i, x in enumerate(q.delta))
        ok = np.ones(len(xs), dtype=bool)
        for e in guards:
            ok &= np.abs(np.broadcast_to(evaluate_batch(e, env), (len(xs),))) > margin
        for row in xs[ok]:
            if np.isfinite(model.log_density(row)):
                out.append(row)
    return np.array(out[:n])
