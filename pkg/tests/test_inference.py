import math

import numpy as np
import pytest

from lfppl.compiler import compile_program
from lfppl.density import Model
from lfppl.errors import InitializationError, LFPPLError
from lfppl.harness import fixture
from lfppl.inference import (SamplerConfig, SweepStats, coordinatewise, dhmc_step, halfstep1, halfstep2,
                             hmc_step, initial_state, integrate, kinetic, run_chain)

NORMAL = "(sample (normal 0 1))"


def flat_grad(x):
    return [0.0]


def normal_grad(x):
    return [x[0]]


def test_halfstep1_flat():
    x, p = halfstep1([0.3], [2.0], 0.2, flat_grad, (0,))
    assert p == [2.0] and x == pytest.approx([0.5])


def test_halfstep1_normal_at_mode():
    x, p = halfstep1([0.0], [1.0], 0.2, normal_grad, (0,))
    assert p == [1.0] and x == pytest.approx([0.1])


def test_halfstep1_normal_off_mode():
    x, p = halfstep1([1.0], [0.0], 0.2, normal_grad, (0,))
    assert p == pytest.approx([-0.1]) and x == pytest.approx([0.99])


def test_halfstep2_flat():
    x, p = halfstep2([0.3], [2.0], 0.2, flat_grad, (0,))
    assert p == [2.0] and x == pytest.approx([0.5])


def test_halfstep2_normal():
    x, p = halfstep2([0.0], [1.0], 0.2, normal_grad, (0,))
    assert x == pytest.approx([0.1]) and p == pytest.approx([0.99])


def test_composition_is_leapfrog():
    model = Model(compile_program("(let [a (sample (normal 1 2)) b (sample (normal a 0.5))] b)"))
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.normal(size=2).tolist()
        p = rng.normal(size=2).tolist()
        eps = 0.15
        got_x, got_p, _, _ = integrate(model, x, p, [], eps, [()])

        def grad_u(v):
            return [-g for g in model.grad_log_density(v, (0, 1))]

        # textbook leapfrog
        ph = [pi - 0.5 * eps * gi for pi, gi in zip(p, grad_u(x))]
        xn = [xi + eps * pi for xi, pi in zip(x, ph)]
        pn = [pi - 0.5 * eps * gi for pi, gi in zip(ph, grad_u(xn))]
        assert got_x == pytest.approx(xn, abs=1e-12)
        assert got_p == pytest.approx(pn, abs=1e-12)


def two_level(x):
    v = x[0]
    if v < 0 or v > 2:
        return math.inf
    return 0.0 if v < 1 else 0.5


def test_coordinatewise_flat_accepts():
    x, p, _ = coordinatewise([0.2, 1.0], [-0.7], 0.1, lambda v: 0.0, (1,), order=[0])
    assert x == pytest.approx([0.2, 0.9]) and p == [-0.7]


def test_coordinatewise_reflects_off_zero_density():
    x, p, u = coordinatewise([1.95], [3.0], 0.1, two_level, (0,), order=[0])
    assert x == [1.95] and p == [-3.0] and u == 0.5


def test_coordinatewise_two_level_step():
    stats = SweepStats()
    x, p, u = coordinatewise([0.95], [1.0], 0.1, two_level, (0,), masses=[1.0], order=[0], stats=stats)
    assert x == pytest.approx([1.05]) and p == pytest.approx([0.5]) and u == 0.5
    assert stats.accepted == 1 and stats.reflected == 0


def test_coordinatewise_moves_are_mass_times_step():
    rng = np.random.default_rng(1)
    masses = [0.5, 2.0, 1.0]
    for _ in range(200):
        x0 = rng.uniform(-1, 1, 3).tolist()
        p0 = rng.laplace(size=3).tolist()
        for j in range(3):
            x, p, _ = coordinatewise(x0, p0, 0.3, lambda v: abs(v[j]), (0, 1, 2), masses, order=[j])
            assert abs(x[j] - x0[j]) in (0.0, pytest.approx(0.3 * masses[j], abs=1e-15))


def test_coordinatewise_uses_rng_permutation():
    rng = np.random.default_rng(3)
    seen = []

    def u(v):
        seen.append(tuple(v))
        return 0.0

    coordinatewise([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], 0.1, u, (0, 1, 2), rng=rng)
    assert len(seen) == 4


def test_kinetic():
    assert kinetic([1.0, -2.0], [0.5, -1.5], [2.0, 1.0]) == pytest.approx(2.5 + 1.0 + 1.5)


def sweep_energy_check(potential, dim, draw_x, seed, n=1000):
    rng = np.random.default_rng(seed)
    stats = SweepStats()
    worst = 0.0
    idx = tuple(range(dim))
    for _ in range(n):
        x = draw_x(rng)
        p = rng.laplace(size=dim).tolist()
        masses = rng.uniform(0.5, 2.0, dim).tolist()
        h0 = potential(x) + kinetic([], p, masses)
        x1, p1, u1 = coordinatewise(x, p, 0.4, potential, idx, masses, rng=rng, stats=stats)
        worst = max(worst, abs(u1 + kinetic([], p1, masses) - h0))
        assert u1 == potential(x1)
    return worst, stats


def test_energy_conservation_two_level():
    worst, stats = sweep_energy_check(two_level, 1, lambda r: [r.uniform(0, 2)], 5)
    assert worst <= 1e-9
    assert stats.accepted >= 100 and stats.reflected >= 100


def test_energy_conservation_heavytail():
    model = Model(fixture("heavytail", dims=4))

    def u(x):
        return -model.log_density(x)

    worst, stats = sweep_energy_check(u, 4, lambda r: r.uniform(-6, 6, 4).tolist(), 6)
    assert worst <= 1e-9
    assert stats.accepted >= 100 and stats.reflected >= 100


def reversibility_error(model, seed, L=10, eps=0.05):
    rng = np.random.default_rng(seed)
    for _ in range(100):
        x = initial_state(model, rng)
        A, B = model.continuous, model.discontinuous
        p_a = rng.standard_normal(len(A)).tolist()
        p_b = rng.laplace(size=len(B)).tolist()
        orders = [rng.permutation(len(B)) for _ in range(L)]
        try:
            x1, pa1, pb1, _ = integrate(model, x, p_a, p_b, eps, orders)
        except Exception:
            continue
        back = [o[::-1] for o in reversed(orders)]
        x2, pa2, pb2, _ = integrate(model, x1, [-v for v in pa1], [-v for v in pb1], eps, back)
        return (max(abs(a - b) for a, b in zip(x, x2)),
                max([abs(a + b) for a, b in zip(p_a, pa2)] + [abs(a + b) for a, b in zip(p_b, pb2)]))
    raise AssertionError("no trajectory stayed in support")


@pytest.mark.parametrize("name", ["fig1", "gmm", "heavytail"])
def test_integrator_reversibility(name):
    q = fixture(name, dims=3) if name == "heavytail" else fixture(name)
    dx, dp = reversibility_error(Model(q), seed=7)
    assert dx <= 1e-8 and dp <= 1e-8


def test_dhmc_reduces_to_hmc():
    model = Model(compile_program("(let [a (sample (normal 0 1)) b (sample (normal a 2))] (observe (normal b 1) 0.4))"))
    assert model.discontinuous == ()
    cfg_d = SamplerConfig("dhmc", 0.2, 7, 300, 0, 11)
    cfg_h = SamplerConfig("hmc", 0.2, 7, 300, 0, 11)
    a = run_chain(model, cfg_d).samples
    b = run_chain(model, cfg_h).samples
    assert np.max(np.abs(a - b)) <= 1e-12


def test_small_steps_are_almost_always_accepted(gmm):
    model = Model(gmm)
    cfg = SamplerConfig("dhmc", 1e-5, 5, 1000, 0, 2)
    res = run_chain(model, cfg)
    assert res.stats.acceptance_rate >= 0.999


def test_hmc_standard_normal_mean():
    q = compile_program("(let [x (sample (uniform -10 10))] (observe (factor (* -0.5 (* x x))) 0) x)")
    res = run_chain(Model(q), SamplerConfig("hmc", 0.1, 10, 10_000, 500, 4))
    from lfppl.harness import batch_means_se
    x = res.samples[:, 0]
    assert abs(x.mean()) < 3 * batch_means_se(x)
    assert res.stats.acceptance_rate > 0.9


def test_leapfrog_energy_drift_bounded():
    model = Model(compile_program(NORMAL))
    rng = np.random.default_rng(8)
    for _ in range(200):
        x = [rng.normal()]
        p = [rng.normal()]
        h0 = -model.log_density(x) + 0.5 * p[0] ** 2
        x1, p1, _, _ = integrate(model, x, p, [], 0.1, [()] * 10)
        assert abs(-model.log_density(x1) + 0.5 * p1[0] ** 2 - h0) <= 0.1


def test_leapfrog_reversibility():
    model = Model(compile_program(NORMAL))
    x1, p1, _, _ = integrate(model, [0.4], [1.3], [], 0.1, [()] * 10)
    x2, p2, _, _ = integrate(model, x1, [-p1[0]], [], 0.1, [()] * 10)
    assert abs(x2[0] - 0.4) <= 1e-8 and abs(p2[0] + 1.3) <= 1e-8


def test_run_chain_zero_samples(fig1):
    res = run_chain(Model(fig1), SamplerConfig(num_samples=0, burn_in=5))
    assert res.samples.shape == (0, 1)
    assert res.stats.iterations == 5


def test_run_chain_deterministic(fig1):
    cfg = SamplerConfig(num_samples=200, seed=42)
    a = run_chain(Model(fig1), cfg)
    b = run_chain(fig1, cfg)
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(a.branching, b.branching)


def test_chain_visits_both_branches(fig1):
    res = run_chain(Model(fig1), SamplerConfig(num_samples=2000, seed=1))
    assert 0 < res.branching[:, 0].mean() < 1
    assert res.stats.state_crossings > 0 and res.stats.crossings >= res.stats.state_crossings


def test_dhmc_step_result(fig1):
    model = Model(fig1)
    r = dhmc_step(model, [0.3], SamplerConfig(), np.random.default_rng(0))
    assert len(r.x) == 1 and isinstance(r.accepted, bool)
    r = hmc_step(model, [0.3], SamplerConfig(engine="hmc"), np.random.default_rng(0))
    assert len(r.x) == 1


def test_initialisation_failure():
    q = compile_program("(let [x (sample (normal 0 1))] (observe (uniform (+ x 100) (+ x 101)) 0))")
    with pytest.raises(InitializationError):
        run_chain(q, SamplerConfig(num_samples=1, max_init_tries=5))


def test_initial_state_rejected_when_zero_density(fig1):
    with pytest.raises(InitializationError):
        run_chain(fig1, SamplerConfig(num_samples=1), initial=[2.0])


@pytest.mark.parametrize("kwargs", [
    {"engine": "nuts"}, {"epsilon": 0.0}, {"L": 0}, {"num_samples": -1}, {"jitter": 1.0},
    {"masses": {"z1": -1.0}},
])
def test_config_validation(kwargs):
    with pytest.raises(LFPPLError):
        SamplerConfig(**kwargs)


def test_masses_change_step_length(twolevel):
    model = Model(twolevel)
    cfg = SamplerConfig(epsilon=0.1, L=1, num_samples=50, jitter=0.0, masses={"z1": 2.0})
    res = run_chain(model, cfg, initial=[0.5])
    steps = np.abs(np.diff(np.concatenate([[0.5], res.samples[:, 0]])))
    assert np.all(np.isclose(steps, 0.0) | np.isclose(steps, 0.2))
