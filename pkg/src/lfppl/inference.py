"""HMC and discontinuous HMC over compiled programs.

Continuous coordinates (delta minus gamma) get Gaussian momentum and leapfrog
half-steps; discontinuous coordinates (gamma) get Laplace momentum and the
coordinate-wise integrator, which moves one coordinate at a time by a fixed
step and pays for the potential change out of that coordinate's kinetic
energy.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .density import Model
from .distributions import forward_sample
from .errors import EvaluationError, InitializationError, LFPPLError
from .symbolic import evaluate

ENGINES = ("hmc", "dhmc")
_NUMERIC_FAILURES = (EvaluationError, ArithmeticError, ValueError)


@dataclass
class SamplerConfig:
    engine: str = "dhmc"
    epsilon: float = 0.1
    L: int = 10
    num_samples: int = 1000
    burn_in: int = 0
    seed: int = 0
    masses: dict = field(default_factory=dict)
    jitter: float = 0.2
    max_init_tries: int = 100

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise LFPPLError(f"unknown engine {self.engine!r}; expected one of {', '.join(ENGINES)}")
        if not self.epsilon > 0:
            raise LFPPLError("epsilon must be positive")
        if self.L < 1:
            raise LFPPLError("trajectory length L must be at least 1")
        if not 0 <= self.jitter < 1:
            raise LFPPLError("jitter must lie in [0, 1)")
        if self.num_samples < 0 or self.burn_in < 0:
            raise LFPPLError("sample and burn-in counts must be non-negative")
        for name, m in self.masses.items():
            if not m > 0:
                raise LFPPLError(f"mass for {name!r} must be positive")


def step_size(cfg, rng):
    """Step size for one trajectory: epsilon scaled by a uniform draw on [1 - jitter, 1 + jitter].

    With only discontinuous coordinates a fixed step confines each coordinate
    to a lattice through its starting value; the jitter removes that.
    """
    if cfg.jitter == 0:
        return cfg.epsilon
    return cfg.epsilon * rng.uniform(1.0 - cfg.jitter, 1.0 + cfg.jitter)


class _LeftSupport(Exception):
    """The trajectory reached a zero-density state where a gradient was needed."""


# ---------------------------------------------------------------------------
# integrator pieces

def halfstep1(x, p, eps, grad_u, idx):
    """Half kick of the momentum, then half drift of the positions in ``idx``.

    ``grad_u(x)`` returns the gradient of the potential over ``idx``.
    """
    g = grad_u(x)
    h = 0.5 * eps
    p = [pi - h * gi for pi, gi in zip(p, g)]
    x = list(x)
    for i, pi in zip(idx, p):
        x[i] += h * pi
    return x, p


def halfstep2(x, p, eps, grad_u, idx):
    """Half drift of the positions in ``idx``, then half kick of the momentum."""
    h = 0.5 * eps
    x = list(x)
    for i, pi in zip(idx, p):
        x[i] += h * pi
    g = grad_u(x)
    p = [pi - h * gi for pi, gi in zip(p, g)]
    return x, p


@dataclass
class SweepStats:
    accepted: int = 0
    reflected: int = 0


def coordinatewise(x, p, eps, potential, idx, masses=None, order=None, rng=None, u_x=None,
                   stats=None):
    """One sweep of the coordinate-wise integrator over the coordinates ``idx``.

    ``p`` holds the Laplace momenta of ``idx``.  Coordinates are visited in
    ``order`` (positions into ``idx``), or in a random permutation drawn from
    ``rng``.  Returns ``(x, p, potential at the final x)``.
    """
    n = len(idx)
    masses = [1.0] * n if masses is None else masses
    if order is None:
        order = rng.permutation(n) if n else ()
    x = list(x)
    p = list(p)
    u_cur = potential(x) if u_x is None else u_x
    if math.isnan(u_cur):
        raise EvaluationError("potential is NaN")
    if u_cur == math.inf:
        raise _LeftSupport()
    for j in order:
        i = idx[j]
        m = masses[j]
        pj = p[j]
        if pj == 0.0:
            continue
        old = x[i]
        x[i] = old + eps * m * math.copysign(1.0, pj)
        u_new = potential(x)
        if math.isnan(u_new):
            raise EvaluationError("potential is NaN")
        du = u_new - u_cur
        if m * abs(pj) > du:
            # Kinetic energy m|p| pays for the rise in potential.
            p[j] = math.copysign(abs(pj) - du / m, pj)
            u_cur = u_new
            if stats is not None:
                stats.accepted += 1
        else:
            x[i] = old
            p[j] = -pj
            if stats is not None:
                stats.reflected += 1
    return x, p, u_cur


def kinetic(p_gauss, p_laplace=(), masses=None):
    masses = [1.0] * len(p_laplace) if masses is None else masses
    return 0.5 * math.fsum(v * v for v in p_gauss) + math.fsum(m * abs(v) for m, v in zip(masses, p_laplace))


# ---------------------------------------------------------------------------
# transitions

@dataclass
class StepResult:
    x: list
    accepted: bool
    crossings: int = 0
    failed: bool = False
    delta_h: float = math.nan


def _potential(model):
    f = model.log_density

    def u(x):
        return -f(x)
    return u


def _grad_potential(model, idx):
    vg = model.value_and_grad

    def grad_u(x):
        lp, g = vg(x, idx)
        if g is None:
            raise _LeftSupport()
        return [-v for v in g]
    return grad_u


def _mh(rng, h_old, h_new):
    u = rng.random()
    if not math.isfinite(h_new):
        return False
    return u < min(1.0, math.exp(min(0.0, h_old - h_new)))


def _masses_for(model, masses):
    return [float(masses.get(model.names[i], 1.0)) for i in model.discontinuous]


def integrate(model, x, p_a, p_b, eps, orders, masses=None, stats=None):
    """Run ``len(orders)`` DHMC integrator steps from ``(x, p_a, p_b)``.

    Each step is a leapfrog half step on the continuous coordinates, a
    coordinate-wise sweep over the discontinuous ones in the given order,
    and the closing half step.  Returns ``(x, p_a, p_b, crossings)``.
    Running again from the result with both momenta negated and the orders
    reversed (each order reversed too) retraces the path.
    """
    A, B = model.continuous, model.discontinuous
    masses = _masses_for(model, {}) if masses is None else masses
    u = _potential(model)
    grad_u = _grad_potential(model, A)
    xs, p_a, p_b = list(x), list(p_a), list(p_b)
    crossings = 0
    bits = model.branching(xs)
    for order in orders:
        if A:
            xs, p_a = halfstep1(xs, p_a, eps, grad_u, A)
        if B:
            xs, p_b, _ = coordinatewise(xs, p_b, eps, u, B, masses, order=order, stats=stats)
        if A:
            xs, p_a = halfstep2(xs, p_a, eps, grad_u, A)
        new_bits = model.branching(xs)
        crossings += new_bits != bits
        bits = new_bits
    return xs, p_a, p_b, crossings


def dhmc_step(model, x, cfg, rng, stats=None):
    """One DHMC transition from ``x``."""
    A, B = model.continuous, model.discontinuous
    masses = _masses_for(model, cfg.masses)
    u = _potential(model)
    eps = step_size(cfg, rng)
    p_a = rng.standard_normal(len(A)).tolist()
    p_b = rng.laplace(0.0, [1.0 / m for m in masses]).tolist() if B else []
    orders = [rng.permutation(len(B)) if B else () for _ in range(cfg.L)]
    h0 = u(x) + kinetic(p_a, p_b, masses)
    try:
        xs, p_a, p_b, crossings = integrate(model, x, p_a, p_b, eps, orders, masses, stats)
        h1 = u(xs) + kinetic(p_a, p_b, masses)
    except _LeftSupport:
        rng.random()
        return StepResult(list(x), False)
    except _NUMERIC_FAILURES:
        rng.random()
        return StepResult(list(x), False, failed=True)
    if math.isnan(h1):
        rng.random()
        return StepResult(list(x), False, crossings, failed=True)
    ok = _mh(rng, h0, h1)
    return StepResult(xs if ok else list(x), ok, crossings, delta_h=h1 - h0)


def hmc_step(model, x, cfg, rng, stats=None):
    """One standard HMC transition treating every coordinate as continuous."""
    idx = tuple(range(model.dim))
    u = _potential(model)
    grad_u = _grad_potential(model, idx)
    eps = step_size(cfg, rng)
    p = rng.standard_normal(len(idx)).tolist()
    h0 = u(x) + kinetic(p)
    xs = list(x)
    crossings = 0
    bits = model.branching(xs)
    try:
        for _ in range(cfg.L):
            xs, p = halfstep1(xs, p, eps, grad_u, idx)
            xs, p = halfstep2(xs, p, eps, grad_u, idx)
            new_bits = model.branching(xs)
            crossings += new_bits != bits
            bits = new_bits
        h1 = u(xs) + kinetic(p)
    except _LeftSupport:
        rng.random()
        return StepResult(list(x), False, crossings)
    except _NUMERIC_FAILURES:
        rng.random()
        return StepResult(list(x), False, crossings, failed=True)
    if math.isnan(h1):
        rng.random()
        return StepResult(list(x), False, crossings, failed=True)
    ok = _mh(rng, h0, h1)
    return StepResult(xs if ok else list(x), ok, crossings, delta_h=h1 - h0)


# ---------------------------------------------------------------------------
# chains

def initial_state(model, rng, max_tries=100):
    """Forward-sample every sampled variable through the program's prior."""
    q = model.q
    for _ in range(max_tries):
        env = dict(model.constants)
        try:
            for site in q.sites:
                params = [evaluate(e, env) for e in site.params]
                env[site.name] = forward_sample(site.dist, params, rng)
            x = [env[n] for n in model.names]
            if math.isfinite(model.log_density(x)):
                return x
        except _NUMERIC_FAILURES:
            continue
    raise InitializationError(f"no positive-density initial state after {max_tries} forward samples")


@dataclass
class ChainStats:
    engine: str
    iterations: int
    accepted: int
    crossings: int
    state_crossings: int
    failures: int
    wall_time: float
    coordinate_accepted: int = 0
    coordinate_reflected: int = 0

    @property
    def acceptance_rate(self):
        return self.accepted / self.iterations if self.iterations else 0.0

    @property
    def coordinate_acceptance_rate(self):
        n = self.coordinate_accepted + self.coordinate_reflected
        return self.coordinate_accepted / n if n else 0.0

    def to_dict(self):
        return {
            "engine": self.engine,
            "iterations": self.iterations,
            "accepted": self.accepted,
            "acceptance_rate": self.acceptance_rate,
            "crossings": self.crossings,
            "state_crossings": self.state_crossings,
            "failures": self.failures,
            "coordinate_accepted": self.coordinate_accepted,
            "coordinate_reflected": self.coordinate_reflected,
            "coordinate_acceptance_rate": self.coordinate_acceptance_rate,
            "wall_time": self.wall_time,
        }


@dataclass
class ChainResult:
    names: tuple
    samples: np.ndarray
    branching: np.ndarray
    stats: ChainStats
    labels: dict = field(default_factory=dict)

    def column(self, name):
        """Draws of a variable, by sampled name or by the let name it was bound to."""
        if name not in self.names:
            by_label = {v: k for k, v in self.labels.items()}
            if name not in by_label:
                raise KeyError(name)
            name = by_label[name]
        return self.samples[:, self.names.index(name)]


def run_chain(model, cfg, initial=None, rng=None):
    """Run ``cfg.burn_in + cfg.num_samples`` transitions and keep the last ``num_samples``.

    ``model`` is a Model or a Quadruple.  Without ``initial`` the start is
    forward-sampled.  ``rng`` defaults to a generator seeded by ``cfg.seed``.
    """
    if not isinstance(model, Model):
        model = Model(model)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    start = time.perf_counter()
    x = list(map(float, initial)) if initial is not None else initial_state(model, rng, cfg.max_init_tries)
    if not math.isfinite(model.log_density(x)):
        raise InitializationError("initial state has zero density")
    step = dhmc_step if cfg.engine == "dhmc" else hmc_step
    sweep = SweepStats()
    total = cfg.burn_in + cfg.num_samples
    samples = np.empty((cfg.num_samples, model.dim))
    nbits = len(model.branching(x))
    bits_out = np.zeros((cfg.num_samples, nbits), dtype=bool)
    accepted = crossings = state_crossings = failures = 0
    bits = model.branching(x)
    for it in range(total):
        r = step(model, x, cfg, rng, sweep)
        x = r.x
        accepted += r.accepted
        crossings += r.crossings
        failures += r.failed
        new_bits = model.branching(x)
        state_crossings += new_bits != bits
        bits = new_bits
        k = it - cfg.burn_in
        if k >= 0:
            samples[k] = x
            bits_out[k] = bits
    stats = ChainStats(cfg.engine, total, accepted, crossings, state_crossings, failures,
                       time.perf_counter() - start, sweep.accepted, sweep.reflected)
    return ChainResult(model.names, samples, bits_out, stats, model.q.labels)
