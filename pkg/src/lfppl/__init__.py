"""Compiler and samplers for a small first-order probabilistic language with
piecewise-smooth densities.

Programs are compiled into a finite set of guarded density terms, then sampled
with plain HMC or with a discontinuous HMC variant that moves the discontinuous
coordinates one at a time under Laplace momentum.
"""

from .compiler import Quadruple, compile_file, compile_program, classify_variables
from .density import Model, evaluate_density, grad_log_density, log_density
from .errors import (
    CompileError,
    DesugarError,
    EvaluationError,
    InitializationError,
    LexError,
    LFPPLError,
    ParseError,
    PartitionError,
    ZeroDensityError,
)
from .inference import ChainResult, SamplerConfig, run_chain
from .parser import load_program, parse_program

__version__ = "0.1.0"

__all__ = [
    "ChainResult", "CompileError", "DesugarError", "EvaluationError", "InitializationError",
    "LexError", "LFPPLError", "Model", "ParseError", "PartitionError", "Quadruple",
    "SamplerConfig", "ZeroDensityError", "classify_variables", "compile_file",
    "compile_program", "evaluate_density", "grad_log_density", "load_program",
    "log_density", "parse_program", "run_chain",
]
