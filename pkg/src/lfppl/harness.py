"""Fixture programs, reference posteriors, diagnostics and the two experiments."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import integrate, stats

from .compiler import compile_program
from .density import Model
from .errors import LFPPLError
from .inference import SamplerConfig, run_chain

GMM_DATA = (-2.0, -2.5, -1.7, -1.9, -2.2, 1.5, 2.2, 3.0, 1.2, 2.8)
GMM_PRIOR_MEAN = 0.0
GMM_PRIOR_STD = 2.0
GMM_LIKELIHOOD_STD = 1.0
GMM_WEIGHTS = (0.5, 0.5)

FIXTURES = ("fig1", "gmm", "heavytail", "twolevel")
FIG1_DEFAULTS = {"q": 0.5, "y": 1.0}


def program_text(name):
    """Source of a bundled program."""
    if name not in FIXTURES:
        raise LFPPLError(f"unknown program {name!r}; bundled programs: {', '.join(FIXTURES)}")
    return resources.files("lfppl.programs").joinpath(f"{name}.lfppl").read_text(encoding="utf-8")


def heavytail_source(dims, A=None):
    """Program for the two-level heavy-tailed density in ``dims`` dimensions.

    The closed box |x_d| <= 3 is tested one coordinate at a time by nested
    ifs; leaving it on any side costs a factor exp(-1).  ``A`` defaults to
    the identity.
    """
    if dims < 1:
        raise LFPPLError("dims must be at least 1")
    A = np.eye(dims) if A is None else np.asarray(A, dtype=float)
    if A.shape != (dims, dims):
        raise LFPPLError(f"A must be {dims}x{dims}")
    xs = [f"x{d + 1}" for d in range(dims)]
    terms = []
    for i in range(dims):
        for j in range(dims):
            a = A[i, j]
            if a == 0:
                continue
            prod = f"(* {xs[i]} {xs[j]})" if a == 1 else f"(* {a!r} {xs[i]} {xs[j]})"
            terms.append(prod)
    quad = terms[0] if len(terms) == 1 else "(+ " + " ".join(terms) + ")"
    inside = "(observe (factor (- r)) 0)"
    outside = "(observe (factor (- (- r) 1)) 0)"
    body = inside
    for x in reversed(xs):
        body = f"(if (< (- 3 {x}) 0) {outside} (if (< (- {x} -3) 0) {outside} {body}))"
    binds = "\n      ".join(f"{x} (sample (uniform -6 6))" for x in xs)
    return f"(let [{binds}\n      r (sqrt {quad})]\n  {body}\n  {xs[0]})\n"


def fixture(name, dims=1, A=None, **constants):
    """Compiled quadruple of a bundled program.

    ``fig1`` takes constants q and y (defaults 0.5 and 1.0).  ``heavytail``
    with ``dims == 1`` compiles the one-dimensional listing with constant A;
    larger ``dims`` use :func:`heavytail_source`.
    """
    if name == "fig1":
        return compile_program(program_text(name), {**FIG1_DEFAULTS, **constants}, "fig1.lfppl")
    if name == "heavytail":
        if dims == 1:
            a = 1.0 if A is None else float(np.asarray(A, dtype=float).reshape(-1)[0])
            return compile_program(program_text(name), {"A": a}, "heavytail.lfppl")
        return compile_program(heavytail_source(dims, A), {}, f"heavytail-{dims}d")
    return compile_program(program_text(name), constants, f"{name}.lfppl")


def heavytail_log_density(x, A=None):
    """Reference log density of the heavy-tailed target (up to a constant)."""
    x = np.asarray(x, dtype=float)
    A = np.eye(x.size) if A is None else np.asarray(A, dtype=float)
    norm = np.max(np.abs(x))
    if norm > 6:
        return -math.inf
    val = -math.sqrt(float(x @ A @ x))
    return val if norm <= 3 else val - 1.0


# ---------------------------------------------------------------------------
# reference posteriors

@dataclass
class ReferencePosterior:
    kind: str
    means: dict
    variances: dict
    resolution: int = 0
    weight_sum: float = 1.0


def gmm_grid_reference(resolution=400, bound=6.0, data=GMM_DATA):
    """Posterior of the ordered cluster means by quadrature on a square grid.

    The assignments are summed out exactly per observation, so the grid only
    covers (mu1, mu2).  Means are reported for the smaller and the larger of
    the two cluster means.
    """
    g = np.linspace(-bound, bound, resolution)
    m1, m2 = np.meshgrid(g, g, indexing="ij")
    logp = (stats.norm.logpdf(m1, GMM_PRIOR_MEAN, GMM_PRIOR_STD)
            + stats.norm.logpdf(m2, GMM_PRIOR_MEAN, GMM_PRIOR_STD))
    for y in data:
        logp += np.logaddexp(math.log(GMM_WEIGHTS[0]) + stats.norm.logpdf(y, m1, GMM_LIKELIHOOD_STD),
                             math.log(GMM_WEIGHTS[1]) + stats.norm.logpdf(y, m2, GMM_LIKELIHOOD_STD))
    w = np.exp(logp - logp.max())
    w /= w.sum()
    lo, hi = np.minimum(m1, m2), np.maximum(m1, m2)
    means = {"mu1": float((w * lo).sum()), "mu2": float((w * hi).sum())}
    variances = {"mu1": float((w * (lo - means["mu1"]) ** 2).sum()),
                 "mu2": float((w * (hi - means["mu2"]) ** 2).sum())}
    return ReferencePosterior("grid-quadrature", means, variances, resolution, float(w.sum()))


def fig1_branch_posterior(q=0.5, y=1.0):
    """P(x > q | y) for the bundled branching model, by 1D quadrature over x in [0, 1]."""
    def lik(x):
        return stats.norm.pdf(y, 1.0 if q - x < 0 else 0.0, 1.0)

    true_mass = integrate.quad(lik, q, 1.0)[0] if q < 1 else 0.0
    false_mass = integrate.quad(lik, 0.0, q)[0] if q > 0 else 0.0
    return true_mass / (true_mass + false_mass)


# ---------------------------------------------------------------------------
# diagnostics

def wmae(samples, N=None):
    """Worst mean absolute error (1/N) max_d |sum_{n<=N} x_d^(n)|.

    ``samples`` holds one sequence per dimension.  The target means are zero.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.size == 0:
        raise LFPPLError("wmae needs at least one sample")
    N = arr.shape[1] if N is None else N
    if not 1 <= N <= arr.shape[1]:
        raise LFPPLError(f"N must lie in 1..{arr.shape[1]}")
    return float(np.max(np.abs(arr[:, :N].sum(axis=1))) / N)


def wmae_curve(rows):
    """WMAE(N) for every N, from samples stored one row per draw."""
    rows = np.asarray(rows, dtype=float)
    if rows.size == 0:
        raise LFPPLError("wmae needs at least one sample")
    sums = np.abs(np.cumsum(rows, axis=0)).max(axis=1)
    return sums / np.arange(1, rows.shape[0] + 1)


def canonical_order(mu):
    """Sort each row of cluster-mean draws so that mu1 < mu2."""
    return np.sort(np.asarray(mu, dtype=float), axis=1)


def mse_vs_reference(samples, ref, up_to=None):
    """Running mean squared error of posterior-mean estimates.

    ``samples`` maps variable names to draws (already in canonical order);
    entry n-1 of the result uses the first n draws.
    """
    missing = [k for k in samples if k not in ref.means]
    if missing:
        raise LFPPLError(f"reference has no mean for {missing[0]!r}")
    cols = [np.asarray(v, dtype=float) for v in samples.values()]
    n = min(len(c) for c in cols) if up_to is None else up_to
    counts = np.arange(1, n + 1)
    err = np.zeros(n)
    for name, c in zip(samples, cols):
        running = np.cumsum(c[:n]) / counts
        err += (running - ref.means[name]) ** 2
    return err / len(cols)


def ess(x):
    """Effective sample size by Geyer's initial monotone sequence estimator."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    xc = x - x.mean()
    var = xc @ xc / n
    if var == 0:
        return float(n)
    f = np.fft.rfft(xc, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    total = 0.0
    prev = math.inf
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
    tau = max(2 * total - 1, 1.0 / n)
    return float(n / tau)


def batch_means_se(x, batches=50):
    """Standard error of the mean of a correlated series by batch means."""
    x = np.asarray(x, dtype=float)
    size = x.size // batches
    if size < 1:
        raise LFPPLError("not enough samples for batch means")
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


# ---------------------------------------------------------------------------
# output files

@dataclass
class RunManifest:
    program_path: str
    config: dict
    output_path: str
    diagnostics: dict = field(default_factory=dict)


def write_samples_csv(path, result):
    """Samples with columns in sorted variable order, then the branching bits."""
    order = sorted(range(len(result.names)), key=lambda i: result.names[i])
    header = [result.names[i] for i in order] + [f"b{j}" for j in range(result.branching.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row, bits in zip(result.samples, result.branching):
            w.writerow([repr(float(row[i])) for i in order] + [int(b) for b in bits])


def write_dat(path, columns, header):
    """Whitespace-separated columns with a ``#`` header line (gnuplot style)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in zip(*columns):
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# experiments

SCALES = {
    "desk": {"gmm": {"num_samples": 20_000, "burn_in": 2_000},
             "heavytail": {"dims": 10, "runs": 20, "num_samples": 10_000, "burn_in": 1_000}},
    "full": {"gmm": {"num_samples": 100_000, "burn_in": 10_000},
             "heavytail": {"dims": 500, "runs": 20, "num_samples": 10_000, "burn_in": 1_000}},
}
GMM_SAMPLER = {"epsilon": 0.1, "L": 10}
HEAVYTAIL_SAMPLER = {"epsilon": 0.5, "L": 10}


def gmm_mean_columns(result):
    """Draws of the two cluster means, canonically ordered."""
    return canonical_order(np.column_stack([result.column("mu1"), result.column("mu2")]))


def run_gmm(seed=0, num_samples=20_000, burn_in=2_000, epsilon=None, L=None, resolution=400):
    q = fixture("gmm")
    cfg = SamplerConfig("dhmc", epsilon or GMM_SAMPLER["epsilon"], L or GMM_SAMPLER["L"],
                        num_samples, burn_in, seed)
    result = run_chain(Model(q), cfg)
    mu = gmm_mean_columns(result)
    ref = gmm_grid_reference(resolution)
    mse = mse_vs_reference({"mu1": mu[:, 0], "mu2": mu[:, 1]}, ref)
    return {
        "quadruple": q,
        "config": cfg,
        "result": result,
        "reference": ref,
        "ordered_means": mu.mean(axis=0).tolist(),
        "mse": mse,
    }


def run_heavytail(seed=0, dims=10, runs=20, num_samples=10_000, burn_in=1_000, epsilon=None, L=None):
    """Paired DHMC and HMC chains on the heavy-tailed target, one seed per run."""
    q = fixture("heavytail", dims=dims)
    model = Model(q)
    eps = epsilon or HEAVYTAIL_SAMPLER["epsilon"]
    L = L or HEAVYTAIL_SAMPLER["L"]
    per_engine = {}
    for engine in ("dhmc", "hmc"):
        rows = []
        for r in range(runs):
            cfg = SamplerConfig(engine, eps, L, num_samples, burn_in, seed + r)
            res = run_chain(model, cfg)
            rows.append({
                "seed": seed + r,
                "wmae_curve": wmae_curve(res.samples),
                "acceptance_rate": res.stats.acceptance_rate,
                "coordinate_acceptance_rate": res.stats.coordinate_acceptance_rate,
                "wall_time": res.stats.wall_time,
                "stats": res.stats.to_dict(),
            })
        per_engine[engine] = rows
    return {"quadruple": q, "dims": dims, "epsilon": eps, "L": L, "num_samples": num_samples,
            "runs": per_engine}


def run_experiment(name, seed=0, scale="desk", out=None, dims=None, runs=None, num_samples=None):
    """Run one experiment and, when ``out`` is given, write its artifacts there."""
    if scale not in SCALES:
        raise LFPPLError(f"unknown scale {scale!r}")
    if name not in SCALES[scale]:
        raise LFPPLError(f"unknown experiment {name!r}; expected gmm or heavytail")
    opts = dict(SCALES[scale][name])
    if num_samples is not None:
        opts["num_samples"] = num_samples
    out = Path(out) if out is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    if name == "gmm":
        rep = run_gmm(seed, **opts)
        res = rep["result"]
        report = {
            "experiment": "gmm",
            "seed": seed,
            "config": asdict(rep["config"]),
            "ordered_means": rep["ordered_means"],
            "reference_means": [rep["reference"].means["mu1"], rep["reference"].means["mu2"]],
            "reference_resolution": rep["reference"].resolution,
            "final_mse": float(rep["mse"][-1]) if len(rep["mse"]) else None,
            "ess": [ess(c) for c in gmm_mean_columns(res).T],
            "stats": res.stats.to_dict(),
        }
        if out is not None:
            write_samples_csv(out / "samples.csv", res)
            n = np.arange(1, len(rep["mse"]) + 1)
            write_dat(out / "mse.dat", [n, rep["mse"]], ["samples", "mse"])
    else:
        if dims is not None:
            opts["dims"] = dims
        if runs is not None:
            opts["runs"] = runs
        rep = run_heavytail(seed, **opts)
        summary = {}
        for engine, rows in rep["runs"].items():
            final = [r["wmae_curve"][-1] for r in rows]
            summary[engine] = {
                "median_wmae": float(np.median(final)),
                "wmae": final,
                "mean_acceptance_rate": float(np.mean([r["acceptance_rate"] for r in rows])),
                "mean_coordinate_acceptance_rate": float(np.mean([r["coordinate_acceptance_rate"]
                                                                  for r in rows])),
                "mean_wall_time": float(np.mean([r["wall_time"] for r in rows])),
            }
        report = {"experiment": "heavytail", "seed": seed, "dims": rep["dims"],
                  "epsilon": rep["epsilon"], "L": rep["L"], "runs": opts["runs"],
                  "num_samples": rep["num_samples"], "summary": summary}
        if out is not None:
            for engine, rows in rep["runs"].items():
                curves = np.array([r["wmae_curve"] for r in rows])
                med = np.median(curves, axis=0)
                n = np.arange(1, med.size + 1)
                write_dat(out / f"wmae_samples_{engine}.dat", [n, med], ["samples", "median_wmae"])
                t = n * summary[engine]["mean_wall_time"] / med.size
                write_dat(out / f"wmae_time_{engine}.dat", [t, med], ["seconds", "median_wmae"])
    report["wall_time"] = time.perf_counter() - start
    if out is not None:
        write_json(out / "report.json", report)
    return report
