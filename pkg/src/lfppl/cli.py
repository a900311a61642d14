"""Command line entry point: ``lfppl compile``, ``lfppl sample``, ``lfppl experiment``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict
from pathlib import Path

from .compiler import compile_program
from .density import Model
from .errors import CompileError, DesugarError, LexError, LFPPLError, ParseError
from .harness import RunManifest, ess, run_experiment, write_json, write_samples_csv
from .inference import SamplerConfig, run_chain

EXIT_OK, EXIT_USAGE, EXIT_COMPILE, EXIT_RUNTIME = 0, 1, 2, 3
_COMPILE_ERRORS = (LexError, ParseError, DesugarError, CompileError)


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _Usage(f"{self.prog}: error: {message}")


def _assignment(text):
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    try:
        return name, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"value for {name!r} is not a number: {value!r}") from None


def build_parser():
    p = _Parser(prog="lfppl", description="Compile probabilistic programs and sample from them.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("compile", help="print the compiled quadruple as JSON")
    c.add_argument("file")
    c.add_argument("--const", action="append", type=_assignment, default=[], metavar="NAME=VALUE")
    c.add_argument("--out", help="write the JSON here instead of standard output")

    s = sub.add_parser("sample", help="run HMC or DHMC and write samples as CSV")
    s.add_argument("file")
    s.add_argument("--engine", choices=("hmc", "dhmc"), default="dhmc")
    s.add_argument("--epsilon", type=float, default=0.1)
    s.add_argument("--steps", type=int, default=10, help="leapfrog steps per trajectory (L)")
    s.add_argument("--num-samples", type=int, default=1000)
    s.add_argument("--burn-in", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jitter", type=float, default=0.2,
                   help="relative step-size jitter per trajectory (0 disables)")
    s.add_argument("--out", required=True, help="CSV path; statistics go next to it as .json")
    s.add_argument("--mass", action="append", type=_assignment, default=[], metavar="NAME=VALUE")
    s.add_argument("--const", action="append", type=_assignment, default=[], metavar="NAME=VALUE")

    e = sub.add_parser("experiment", help="reproduce the mixture or heavy-tail experiment")
    e.add_argument("name", choices=("gmm", "heavytail"))
    e.add_argument("--dims", type=int)
    e.add_argument("--runs", type=int)
    e.add_argument("--num-samples", type=int)
    e.add_argument("--scale", choices=("desk", "full"), default="desk")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    return p


def _read(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _Usage(f"lfppl: cannot read {path}: {exc.strerror or exc}") from None


def _compile(args):
    text = _read(args.file)
    try:
        return compile_program(text, dict(args.const), args.file)
    except _COMPILE_ERRORS:
        raise
    except LFPPLError as exc:
        raise CompileError(str(exc)) from exc


def cmd_compile(args):
    text = _compile(args).to_json()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_sample(args):
    q = _compile(args)
    by_label = {v: k for k, v in q.labels.items()}
    masses = {}
    for name, m in args.mass:
        name = by_label.get(name, name)
        if name not in q.gamma:
            raise _Usage(f"lfppl: --mass {name}: not a discontinuous variable")
        masses[name] = m
    try:
        cfg = SamplerConfig(args.engine, args.epsilon, args.steps, args.num_samples, args.burn_in,
                            args.seed, masses, args.jitter)
    except LFPPLError as exc:
        raise _Usage(f"lfppl: {exc}") from None
    result = run_chain(Model(q), cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_samples_csv(out, result)
    diagnostics = dict(result.stats.to_dict())
    if args.num_samples:
        diagnostics["ess"] = {n: ess(result.samples[:, i]) for i, n in enumerate(result.names)}
    manifest = RunManifest(args.file, asdict(cfg), str(out), diagnostics)
    write_json(out.with_suffix(".json"), asdict(manifest) | {"labels": q.labels})


def cmd_experiment(args):
    report = run_experiment(args.name, seed=args.seed, scale=args.scale, out=args.out,
                            dims=args.dims, runs=args.runs, num_samples=args.num_samples)
    if args.name == "gmm":
        print(f"ordered posterior means {report['ordered_means']} "
              f"(grid reference {report['reference_means']})")
    else:
        for engine, s in report["summary"].items():
            print(f"{engine}: median WMAE {s['median_wmae']:.4f}, "
                  f"mean acceptance {s['mean_acceptance_rate']:.3f}")
    print(f"wrote {args.out}")


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except _Usage as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    handler = {"compile": cmd_compile, "sample": cmd_sample, "experiment": cmd_experiment}[args.command]
    try:
        handler(args)
    except _Usage as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except _COMPILE_ERRORS as exc:
        print(f"lfppl: {exc}", file=sys.stderr)
        return EXIT_COMPILE
    except LFPPLError as exc:
        print(f"lfppl: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
