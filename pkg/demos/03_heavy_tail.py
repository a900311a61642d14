"""DHMC against HMC on a heavy-tailed density with a drop at the box edge.

The density is exp(-sqrt(x'x)) inside |x|_inf <= 3 and exp(-sqrt(x'x) - 1)
out to 6.  Every coordinate is discontinuous.  Worst mean absolute error
(the true mean is zero) is tracked as the number of draws grows.
"""
import numpy as np

from lfppl.harness import run_heavytail

dims = 10
rep = run_heavytail(seed=0, dims=dims, runs=5, num_samples=5_000, burn_in=500)

for engine, rows in rep["runs"].items():
    curves = np.array([r["wmae_curve"] for r in rows])
    med = np.median(curves, axis=0)
    acc = np.mean([r["acceptance_rate"] for r in rows])
    secs = np.mean([r["wall_time"] for r in rows])
    print(f"{engine:5s} acceptance {acc:.3f}  {secs:5.1f}s per chain")
    for n in (100, 1_000, 5_000):
        print(f"      median WMAE at {n:5d} draws: {med[n - 1]:.4f}")
