import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfppl.distributions import forward_sample, known_distributions, schema
from lfppl.errors import EvaluationError, LFPPLError
from lfppl.partition import ONE
from lfppl.symbolic import Lit, evaluate, to_sexpr, var


def env_for(x0, *params):
    return {f"%{i}": v for i, v in enumerate((x0, *params))}


def active(s, env):
    return [(psi, phi) for psi, phi in s.all_pairs() if psi.evaluate(env)]


def test_registry():
    assert set(known_distributions()) >= {"normal", "uniform", "factor", "bernoulli"}
    with pytest.raises(LFPPLError, match="unknown distribution"):
        schema("poisson")


def test_normal_schema_is_single_unguarded_pair():
    s = schema("normal")
    assert len(s.all_pairs()) == 1
    psi, phi = s.pairs[0]
    assert psi == ONE
    assert to_sexpr(phi) == "(normal-pdf %0 %1 %2)"


def test_uniform_schema_pairs():
    s = schema("uniform")
    assert len(s.pairs) == 1 and len(s.zero_pairs) == 2
    psi, phi = s.pairs[0]
    assert {to_sexpr(g.expr) for g in psi} == {"(- %0 %1)", "(- %2 %0)"}
    assert all(g.relation == "ge" for g in psi)
    assert all(phi == Lit(0.0) for _, phi in s.zero_pairs)


def test_factor_with_zero_weight_is_one_everywhere():
    s = schema("factor")
    for x0 in (-3.0, 0.0, 12.5):
        (psi, phi), = active(s, env_for(x0, 0.0))
        assert evaluate(phi, env_for(x0, 0.0)) == 1.0


@settings(max_examples=300, deadline=None)
@given(x0=st.floats(-20, 20), a=st.floats(-5, 5), width=st.floats(0.01, 10),
       mu=st.floats(-5, 5), sigma=st.floats(0.1, 5), p=st.floats(0, 1))
def test_partition_and_non_negativity(x0, a, width, mu, sigma, p):
    cases = {"normal": (mu, sigma), "uniform": (a, a + width), "factor": (mu,), "bernoulli": (p,)}
    for name, params in cases.items():
        env = env_for(x0, *params)
        hits = active(schema(name), env)
        assert len(hits) == 1
        assert evaluate(hits[0][1], env) >= 0


def test_partition_on_random_box():
    rng = np.random.default_rng(0)
    for x0, a, w in zip(rng.uniform(-10, 10, 10_000), rng.uniform(-3, 3, 10_000), rng.uniform(0.1, 4, 10_000)):
        assert len(active(schema("uniform"), env_for(x0, a, a + w))) == 1


@pytest.mark.parametrize("name, params, lo, hi", [
    ("normal", (0.7, 1.3), -12.0, 12.0),
    ("uniform", (-1.0, 2.5), -3.0, 4.0),
])
def test_normalisation(name, params, lo, hi):
    s = schema(name)
    xs = np.linspace(lo, hi, 200_001)
    vals = []
    for x in xs[::10]:
        env = env_for(float(x), *params)
        vals.append(sum(evaluate(phi, env) for psi, phi in s.pairs if psi.evaluate(env)))
    total = np.trapezoid(vals, xs[::10])
    assert abs(total - 1.0) < 1e-3


def test_instantiate_substitutes_value_and_params():
    pairs = schema("uniform").instantiate(var("z"), [Lit(0.0), Lit(1.0)])
    assert len(pairs) == 3
    assert to_sexpr(pairs[0][1]) == "(uniform-pdf z 0 1)"


def test_forward_sample_uniform_support():
    rng = np.random.default_rng(1)
    draws = [forward_sample("uniform", (0.0, 1.0), rng) for _ in range(10_000)]
    assert min(draws) >= 0 and max(draws) <= 1


def test_forward_sample_normal_mean():
    rng = np.random.default_rng(2)
    n = 100_000
    mean = np.mean([forward_sample("normal", (0.0, 2.0), rng) for _ in range(n)])
    assert abs(mean) < 3 * 2 / math.sqrt(n)


@pytest.mark.parametrize("name, params", [
    ("factor", (0.0,)), ("normal", (0.0, -1.0)), ("uniform", (1.0, 1.0)), ("bernoulli", (1.5,)),
])
def test_forward_sample_errors(name, params):
    with pytest.raises(EvaluationError):
        forward_sample(name, params, np.random.default_rng(0))



def test_instantiate_cannot_capture_user_names():
    # a parameter that happens to be named like a placeholder stays put
    pairs = schema("normal").instantiate(var("z"), [var("%2"), Lit(1.0)])
    assert to_sexpr(pairs[0][1]) == "(normal-pdf z %2 1)"
