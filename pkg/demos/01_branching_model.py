"""A uniform draw picks which Gaussian explains one observation.

Walks through compiling the model, looking at the compiled pieces, evaluating
the density by hand and sampling it with DHMC.
"""
import numpy as np

from lfppl import Model, SamplerConfig, compile_program, run_chain
from lfppl.harness import fig1_branch_posterior, program_text

spacer = "-" * 60

source = program_text("fig1")
print(source)

q = compile_program(source, {"q": 0.5, "y": 1.0})
print("sampled variables:", q.delta)
print("discontinuous:    ", q.gamma)

print("\nnonzero sample-density pairs:")
for pair in q.to_dict()["D"]:
    if pair["density"] != "0":
        print("  ", " ".join(pair["guards"]), "->", pair["density"])

print("\nobserve factors:")
for t in q.to_dict()["F"]:
    print("  ", " ".join(t["guards"]), "->", t["density"], " value", t["value"])
print(spacer)

model = Model(q)
for z in (0.3, 0.7, 1.5):
    print(f"log density at z = {z}: {model.log_density([z]):.4f}   branch {model.branching([z])}")
print(spacer)

res = run_chain(model, SamplerConfig("dhmc", epsilon=0.1, L=10, num_samples=10_000, seed=0))
freq = res.branching[:, 0].mean()
print(f"P(z > q | y): chain {freq:.4f}, quadrature {fig1_branch_posterior(0.5, 1.0):.4f}")
print(f"acceptance {res.stats.acceptance_rate:.3f}, "
      f"{res.stats.state_crossings} boundary crossings between kept states")

# the posterior of z is flat on each side of q, with a jump at q
hist, edges = np.histogram(res.samples[:, 0], bins=10, range=(0, 1), density=True)
for lo, h in zip(edges, hist):
    print(f"{lo:4.1f} {'#' * int(40 * h / hist.max())}")
