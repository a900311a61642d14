"""Evaluating the compiled density, its gradient and the branching vector.

Two routes exist.  The module-level functions (``evaluate_density``,
``grad_log_density``, ...) scan the pairs of a quadruple directly and serve as
the reference.  ``Model`` generates straight-line Python for the same
quantities, with a decision tree over guard expressions instead of a scan;
the samplers use it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError, PartitionError, ZeroDensityError
from .partition import GE, Leaf, decision_tree, tree_depth
from .symbolic import (CODEGEN_NAMESPACE, SAFE_NAMESPACE, Lit, PiecewiseValue, VarRef,
                       ZERO, diff, evaluate, log_expr, substitute, to_python)

NEG_INF = -math.inf
MAX_CODEGEN_DEPTH = 80


@dataclass(frozen=True)
class DensityReport:
    log_density: float
    active_D: tuple  # index of the active pair within each D group
    active_F: int
    branching: tuple

    @property
    def zero(self):
        return self.log_density == NEG_INF


def _env(q, state):
    env = dict(q.constants)
    if isinstance(state, dict):
        missing = [x for x in q.delta if x not in state]
        if missing:
            raise EvaluationError(f"state is missing variable {missing[0]!r}")
        env.update((x, float(state[x])) for x in q.delta)
    else:
        if len(state) != len(q.delta):
            raise EvaluationError(f"state has {len(state)} values for {len(q.delta)} variables")
        env.update(zip(q.delta, map(float, state)))
    return env


class _GuardCache(dict):
    def __init__(self, env):
        super().__init__()
        self.env = env

    def holds(self, guard):
        v = self.get(guard.expr)
        if v is None:
            try:
                v = evaluate(guard.expr, self.env)
            except EvaluationError:
                v = math.nan
            self[guard.expr] = v
        return guard.holds(v)

    def product(self, p):
        return all(self.holds(g) for g in p)


def _active(cache, products, what):
    hits = [i for i, p in enumerate(products) if cache.product(p)]
    if len(hits) != 1:
        raise PartitionError(f"{len(hits)} active pairs in {what} (expected exactly one)")
    return hits[0]


def _log_value(e, env):
    if e == ZERO:
        return NEG_INF
    return evaluate(log_expr(e), env)


def evaluate_density(q, state):
    """Log of the unnormalised density at ``state``, found by scanning every pair."""
    env = _env(q, state)
    cache = _GuardCache(env)
    active_D = []
    lp = 0.0
    for gi, group in enumerate(q.D_groups):
        i = _active(cache, [p.eta for p in group], f"D group {gi}")
        active_D.append(i)
        if lp != NEG_INF:
            lp += _log_value(group[i].k, env)
    j = _active(cache, [t.zeta for t in q.F], "F")
    if lp != NEG_INF:
        lp += _log_value(q.F[j].l, env)
    return DensityReport(lp, tuple(active_D), j, branching_vector(q, state))


def log_density(q, state):
    return evaluate_density(q, state).log_density


def evaluate_sym(e, q, state):
    """Numeric value of a symbolic expression at a state of ``q``."""
    return evaluate(e, _env(q, state))


def branching_vector(q, state):
    """One boolean per branch predicate: whether the predicate is below zero."""
    env = _env(q, state)
    bits = []
    for _, e in q.branch_predicates:
        try:
            bits.append(evaluate(e, env) < 0)
        except EvaluationError:
            bits.append(False)
    return tuple(bits)


def grad_log_density(q, state, wrt=None, allow_discontinuous=False):
    """Partial derivatives of the log density within the active partition."""
    wrt = tuple(q.continuous if wrt is None else wrt)
    bad = [x for x in wrt if x not in q.delta]
    if bad:
        raise EvaluationError(f"{bad[0]!r} is not a sampled variable")
    if not allow_discontinuous:
        bad = [x for x in wrt if x in q.gamma]
        if bad:
            raise EvaluationError(f"{bad[0]!r} is a discontinuous variable; no gradient is defined")
    rep = evaluate_density(q, state)
    if rep.zero:
        raise ZeroDensityError("gradient requested at a zero-density state")
    env = _env(q, state)
    terms = [log_expr(g[i].k) for g, i in zip(q.D_groups, rep.active_D)]
    terms.append(log_expr(q.F[rep.active_F].l))
    return {x: math.fsum(evaluate(diff(t, x), env) for t in terms) for x in wrt}


# ---------------------------------------------------------------------------
# vectorised evaluation over many states, for partition checks

_NP_OPS = {
    "+": lambda *a: sum(a[1:], a[0]),
    "-": lambda a, b=None: -a if b is None else a - b,
    "*": lambda *a: np.prod(np.broadcast_arrays(*a), axis=0),
    "/": np.divide,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
}


def evaluate_batch(e, env):
    """Evaluate ``e`` elementwise; ``env`` maps names to arrays or scalars."""
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, VarRef):
        return env[e.name]
    if isinstance(e, PiecewiseValue):
        return np.where(evaluate_batch(e.guard, env) < 0, evaluate_batch(e.then, env),
                        evaluate_batch(e.else_, env))
    args = [evaluate_batch(a, env) for a in e.args]
    with np.errstate(all="ignore"):
        return _NP_OPS[e.op](*args)


def count_active(q, states):
    """How many pairs are active in each D group and in F, for a batch of states.

    ``states`` is an array of shape (n, len(delta)).  Returns arrays of shape
    (n, n_groups) and (n,).  The partition property holds where all are 1.
    """
    states = np.asarray(states, dtype=float)
    env = {k: v for k, v in q.constants.items()}
    env.update((x, states[:, i]) for i, x in enumerate(q.delta))
    n = states.shape[0]
    values = {}

    def holds(g):
        v = values.get(g.expr)
        if v is None:
            v = np.broadcast_to(np.asarray(evaluate_batch(g.expr, env), dtype=float), (n,))
            values[g.expr] = v
        return v >= 0 if g.relation == GE else v < 0

    def product(p):
        out = np.ones(n, dtype=bool)
        for g in p:
            out &= holds(g)
        return out

    d_counts = np.zeros((n, len(q.D_groups)), dtype=int)
    for gi, group in enumerate(q.D_groups):
        for pair in group:
            d_counts[:, gi] += product(pair.eta)
    f_counts = np.zeros(n, dtype=int)
    for t in q.F:
        f_counts += product(t.zeta)
    return d_counts, f_counts


# ---------------------------------------------------------------------------
# generated fast path

def _bind_constants(q, constants):
    mapping = {k: Lit(float(v)) for k, v in constants.items()}
    groups = []
    for g in q.D_groups:
        pairs = []
        for p in g:
            eta = p.eta.substitute(mapping)
            if eta is not None:
                pairs.append((eta, substitute(p.k, mapping)))
        groups.append(pairs)
    factors = []
    for t in q.F:
        zeta = t.zeta.substitute(mapping)
        if zeta is not None:
            factors.append((zeta, substitute(t.l, mapping)))
    preds = [substitute(e, mapping) for _, e in q.branch_predicates]
    return groups, factors, preds


class _Emitter:
    def __init__(self, names):
        self.names = names
        self.lines = []

    def emit(self, depth, text):
        self.lines.append("    " * depth + text)


def _leaf_terms(logk, wrt):
    if logk == Lit(NEG_INF):
        return None
    grads = [diff(logk, x) for x in wrt] if wrt is not None else None
    return logk, grads


class Model:
    """Compiled evaluators for one quadruple.

    States are sequences of floats ordered as ``q.delta``.
    """

    def __init__(self, q, constants=None):
        self.q = q
        self.names = tuple(q.delta)
        self.index = {x: i for i, x in enumerate(self.names)}
        self.continuous = tuple(self.index[x] for x in q.continuous)
        self.discontinuous = tuple(self.index[x] for x in q.gamma)
        self.constants = dict(q.constants, **(constants or {}))
        self._groups, self._factors, self._preds = _bind_constants(q, self.constants)
        self._ids = {x: f"v{i}" for i, x in enumerate(self.names)}
        self._blocks = [[p for p in g] for g in self._groups] + [self._factors]
        self._trees = [decision_tree([eta for eta, _ in b]) for b in self._blocks]
        self._logs = [[log_expr(k) for _, k in b] for b in self._blocks]
        self.log_density = self._build(None)
        self._grad_cache = {}
        self.branching = self._build_branching()

    @property
    def dim(self):
        return len(self.names)

    def _build(self, wrt):
        """Generated ``f(x)``: log density, or (log density, gradient) if ``wrt`` is given."""
        wrt_names = None if wrt is None else [self.names[i] for i in wrt]
        ids = self._ids
        out = _Emitter(ids)
        out.emit(0, "def _f(x):")
        if self.names:
            out.emit(1, ", ".join(ids[x] for x in self.names) + ", = x")
        out.emit(1, "lp = 0.0")
        if wrt_names is not None:
            for j in range(len(wrt_names)):
                out.emit(1, f"g{j} = 0.0")
        zero_ret = "return _NINF" if wrt is None else "return _NINF, None"
        ns = dict(CODEGEN_NAMESPACE, _NINF=NEG_INF, _PartitionError=PartitionError)
        fallback = []

        def leaf_code(block, i, depth):
            terms = _leaf_terms(self._logs[block][i], wrt_names)
            if terms is None:
                out.emit(depth, zero_ret)
                return
            logk, grads = terms
            mark = len(out.lines)
            if logk != ZERO:
                out.emit(depth, f"lp += {to_python(logk, ids)}")
            if grads is not None:
                for j, g in enumerate(grads):
                    if g != ZERO:
                        out.emit(depth, f"g{j} += {to_python(g, ids)}")
            if len(out.lines) == mark:
                out.emit(depth, "pass")

        def walk(block, node, depth):
            if isinstance(node, Leaf):
                if len(node.entries) == 1:
                    leaf_code(block, node.entries[0], depth)
                else:
                    out.emit(depth, f"raise _PartitionError('{len(node.entries)} active pairs in "
                                    f"block {block} (expected exactly one)')")
                return
            out.emit(depth, f"if {to_python(node.guard, ids)} < 0.0:")
            walk(block, node.lt, depth + 1)
            out.emit(depth, "else:")
            walk(block, node.ge, depth + 1)

        for b, tree in enumerate(self._trees):
            if tree_depth(tree) <= MAX_CODEGEN_DEPTH:
                walk(b, tree, 1)
            else:
                fallback.append(b)
                ns[f"_walk{b}"] = self._interpreted_block(b, wrt_names)
                if wrt is None:
                    out.emit(1, f"lp += _walk{b}(x)")
                    out.emit(1, "if lp == _NINF: return _NINF")
                else:
                    out.emit(1, f"_v, _g = _walk{b}(x)")
                    out.emit(1, "if _g is None: return _NINF, None")
                    out.emit(1, "lp += _v")
                    for j in range(len(wrt_names)):
                        out.emit(1, f"g{j} += _g[{j}]")
        if wrt is None:
            out.emit(1, "return lp")
        else:
            out.emit(1, "return lp, [" + ", ".join(f"g{j}" for j in range(len(wrt_names))) + "]")
        exec(compile("\n".join(out.lines), "<lfppl-model>", "exec"), ns)
        return ns["_f"]

    def _lambda(self, e, safe=False):
        ids = self._ids
        args = ", ".join(ids[x] for x in self.names)
        ns = dict(SAFE_NAMESPACE if safe else CODEGEN_NAMESPACE)
        return eval(f"lambda {args}: {to_python(e, ids, safe=safe)}", ns)

    def _interpreted_block(self, b, wrt_names):
        """Tree walk over one block, for trees too deep for nested code."""
        tree = self._trees[b]
        guards = {}
        leaves = {}

        def prepare(node):
            if isinstance(node, Leaf):
                for i in node.entries:
                    if i not in leaves:
                        terms = _leaf_terms(self._logs[b][i], wrt_names)
                        leaves[i] = None if terms is None else (
                            self._lambda(terms[0]),
                            None if terms[1] is None else [self._lambda(g) for g in terms[1]])
                return
            if node.guard not in guards:
                guards[node.guard] = self._lambda(node.guard)
            prepare(node.lt)
            prepare(node.ge)

        prepare(tree)
        with_grad = wrt_names is not None

        def run(x):
            node = tree
            while not isinstance(node, Leaf):
                node = node.lt if guards[node.guard](*x) < 0.0 else node.ge
            if len(node.entries) != 1:
                raise PartitionError(f"{len(node.entries)} active pairs in block {b} (expected exactly one)")
            fns = leaves[node.entries[0]]
            if fns is None:
                return (NEG_INF, None) if with_grad else NEG_INF
            value = fns[0](*x)
            if not with_grad:
                return value
            return value, [g(*x) for g in fns[1]]

        return run

    def _build_branching(self):
        if not self._preds:
            return lambda x: ()
        ids = self._ids
        body = ", ".join(f"{to_python(e, ids, safe=True)} < 0.0" for e in self._preds)
        args = ", ".join(ids[x] for x in self.names)
        ns = dict(SAFE_NAMESPACE)
        f = eval(f"lambda {args}: ({body},)", ns)
        return lambda x: f(*x)

    def value_and_grad(self, x, wrt=None):
        """(log density, gradient list over ``wrt`` indices); (-inf, None) at zero density."""
        wrt = self.continuous if wrt is None else tuple(wrt)
        f = self._grad_cache.get(wrt)
        if f is None:
            f = self._grad_cache[wrt] = self._build(wrt)
        return f(x)

    def grad_log_density(self, x, wrt=None):
        lp, g = self.value_and_grad(x, wrt)
        if g is None:
            raise ZeroDensityError("gradient requested at a zero-density state")
        return g

    def report(self, x):
        return evaluate_density(self.q, self.state_dict(x))

    def state_dict(self, x):
        return dict(zip(self.names, map(float, x)))
