"""Minimize Kripke structures and LTSs modulo stuttering-type equivalences.

Supported: divergence-blind stuttering equivalence, stuttering equivalence,
branching bisimulation and divergence-sensitive branching bisimulation.
"""

__version__ = "0.1.0"

from .equiv import (Engine, Equivalence, EquivalenceMismatch, EquivResult, InvalidStateError,
                    NaiveCapExceeded, compare, reduce)
from .estimator import BisimulationReducer
from .fast import FastRefiner, run_refinement
from .model import (FormatError, KripkeStructure, Lts, PartitionMap, parse_aut, parse_kripke,
                    read_system, write_aut, write_kripke, write_system)
from .naive import branching_bisim_relational, stabilize_naive

__all__ = [
    "BisimulationReducer", "Engine", "Equivalence", "EquivalenceMismatch", "EquivResult",
    "FastRefiner", "FormatError", "InvalidStateError", "KripkeStructure", "Lts",
    "NaiveCapExceeded", "PartitionMap", "branching_bisim_relational", "compare", "parse_aut",
    "parse_kripke", "read_system", "reduce", "run_refinement", "stabilize_naive", "write_aut",
    "write_kripke", "write_system",
]
