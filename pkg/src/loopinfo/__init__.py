"""Exact information accounting for finite-alphabet feedback loops."""

from .errors import (
    BudgetExceeded,
    DanglingReference,
    LoopInfoError,
    ModelError,
    ParseError,
    VariableMissing,
    ZeroMassEvent,
)
from .example1 import Example1Config, beta_sweep, build_example1, closed_forms
from .fsm import compile_fsm, tree_chain_entropies
from .joint import Budget, JointTable, enumerate_factorized, enumerate_joint, sample, simulate
from .measures import (
    conservation_extended,
    cond_entropy,
    directed_information,
    entropy,
    fano_decomposition,
    itl_rate,
    markov_tv,
    massey_conservation,
    mutual_information,
    reverse_directed_information,
)
from .model import (
    Block,
    DerivedSignal,
    ExoGroup,
    ExogenousSpec,
    LookupTable,
    LoopSystem,
    SignalDecl,
    attach_derived,
    build_system,
    check_independence_pattern,
    independent,
)
from .specfile import dump_spec, load_spec, parse_spec
from .theorems import RandomSystemParams, check, generate, sweep

__all__ = [name for name in dir() if not name.startswith("_")]
