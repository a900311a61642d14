"""Distribution schemas: each density written as guarded smooth pieces.

A schema lists ``(psi, phi)`` pairs over placeholder variables ``x0`` (the
value) and ``x1..xs`` (the parameters).  Zero-density pairs are stored apart
so they can be kept for partition checks and dropped when only the support
matters.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import LFPPLError, EvaluationError
from .partition import ONE, IndicatorProduct, ge, lt
from .symbolic import ZERO, Apply, VarRef, exp_, lit, sub, substitute


def placeholder(i):
    # Substitution is simultaneous, so a user name that looks like a
    # placeholder is never rewritten a second time.
    return VarRef(f"%{i}")


@dataclass(frozen=True)
class DistributionSchema:
    name: str
    arity: int
    pairs: tuple
    zero_pairs: tuple = ()
    sampleable: bool = True

    def all_pairs(self):
        return self.pairs + self.zero_pairs

    def instantiate(self, value, params, include_zero=True):
        """Pairs with ``x0 := value`` and ``x_i := params[i-1]``."""
        if len(params) != self.arity:
            raise LFPPLError(f"{self.name} expects {self.arity} parameters, got {len(params)}")
        mapping = {f"%{i}": e for i, e in enumerate((value, *params))}
        out = []
        for psi, phi in (self.all_pairs() if include_zero else self.pairs):
            psi2 = psi.substitute(mapping)
            if psi2 is not None:
                out.append((psi2, substitute(phi, mapping)))
        return out


def _normal():
    x0, mu, sigma = placeholder(0), placeholder(1), placeholder(2)
    return DistributionSchema("normal", 2, ((ONE, Apply("normal-pdf", (x0, mu, sigma))),))


def _uniform():
    x0, a, b = placeholder(0), placeholder(1), placeholder(2)
    inside = IndicatorProduct.of(ge(sub(x0, a)), ge(sub(b, x0)))
    return DistributionSchema(
        "uniform", 2,
        pairs=((inside, Apply("uniform-pdf", (x0, a, b))),),
        zero_pairs=((IndicatorProduct.of(lt(sub(x0, a))), ZERO),
                    (IndicatorProduct.of(lt(sub(b, x0))), ZERO)))


def _factor():
    return DistributionSchema("factor", 1, ((ONE, exp_(placeholder(1))),), sampleable=False)


def _bernoulli():
    # Mass function on {0, 1}; only meaningful under observe. Sampling sites
    # are rewritten to a uniform draw plus an if before compilation.
    x0, p = placeholder(0), placeholder(1)
    half = sub(x0, lit(0.5))
    return DistributionSchema(
        "bernoulli", 1,
        pairs=((IndicatorProduct.of(ge(half)), p),
               (IndicatorProduct.of(lt(half)), sub(lit(1.0), p))))


_REGISTRY = {s.name: s for s in (_normal(), _uniform(), _factor(), _bernoulli())}


def schema(name):
    try:
        return _REGISTRY[name]
    except KeyError:
        raise LFPPLError(f"unknown distribution {name!r}") from None


def known_distributions():
    return tuple(_REGISTRY)


def forward_sample(dist, params, rng):
    """Draw one value from ``dist`` (a schema or its name) with numeric ``params``."""
    schema_ = schema(dist) if isinstance(dist, str) else dist
    if not schema_.sampleable:
        raise EvaluationError(f"{schema_.name} has no normalised density to sample from")
    if len(params) != schema_.arity:
        raise EvaluationError(f"{schema_.name} expects {schema_.arity} parameters")
    name = schema_.name
    if name == "normal":
        mu, sigma = params
        if not sigma > 0:
            raise EvaluationError(f"normal scale must be positive, got {sigma}")
        return float(rng.normal(mu, sigma))
    if name == "uniform":
        a, b = params
        if not a < b:
            raise EvaluationError(f"uniform bounds must satisfy a < b, got ({a}, {b})")
        return float(rng.uniform(a, b))
    if name == "bernoulli":
        (p,) = params
        if not 0 <= p <= 1:
            raise EvaluationError(f"bernoulli probability out of range: {p}")
        return float(rng.random() < p)
    raise EvaluationError(f"no sampler for {name}")
