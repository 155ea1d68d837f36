"""Reduce systems modulo an equivalence and compare states.

Every supported equivalence is computed as divergence-blind stuttering
equivalence on a derived Kripke structure:

==========================  =========================================
equivalence                 derived Kripke structure
==========================  =========================================
``dbs``                     the input itself
``stuttering``              input plus a divergence sink
``branching``               embedding of the LTS
``branching-divergence``    embedding of the LTS with ``div`` loops
==========================  =========================================

The derived structure is SCC-contracted, refined by the chosen engine and
the resulting partition is pulled back to the original states.
"""

from __future__ import annotations

import enum
import os
import time
from dataclasses import dataclass, field
from typing import Optional, Union

from .fast import FastRefiner
from .model import KripkeStructure, Lts, PartitionMap
from .naive import stabilize_naive
from .preprocess import (add_divergence_loops, build_kd, contract_sccs, embed_lts,
                         on_restricted_cycle, tau_divergent)

System = Union[KripkeStructure, Lts]

DEFAULT_NAIVE_CAP = 10_000
NAIVE_CAP_ENV = "STUTTERBISIM_NAIVE_CAP"

METRICS_FIELDS = ("name", "n", "m", "min_n", "min_m", "engine", "seconds")


class Equivalence(str, enum.Enum):
    DBS = "dbs"
    STUTTERING = "stuttering"
    BRANCHING = "branching"
    BRANCHING_DIVERGENCE = "branching-divergence"

    @classmethod
    def parse(cls, name: Union[str, "Equivalence"]) -> "Equivalence":
        """Accept the enum, its value, or the short CLI spellings ``stutter``/``branching-div``."""
        if isinstance(name, cls):
            return name
        aliases = {"stutter": cls.STUTTERING, "branching-div": cls.BRANCHING_DIVERGENCE}
        try:
            return aliases.get(name) or cls(name)
        except ValueError:
            choices = ", ".join([e.value for e in cls] + list(aliases))
            raise ValueError(f"unknown equivalence {name!r}; choose one of {choices}") from None

    @property
    def needs_lts(self) -> bool:
        return self in (Equivalence.BRANCHING, Equivalence.BRANCHING_DIVERGENCE)


class Engine(str, enum.Enum):
    FAST = "fast"
    NAIVE = "naive"


class EquivalenceMismatch(TypeError):
    """The equivalence does not apply to this kind of system."""


class NaiveCapExceeded(RuntimeError):
    """The naive engine was asked to refine a structure above its size cap."""


class InvalidStateError(IndexError):
    pass


def naive_cap_from_env() -> int:
    raw = os.environ.get(NAIVE_CAP_ENV)
    return int(raw) if raw else DEFAULT_NAIVE_CAP


@dataclass(frozen=True)
class RunStats:
    """What the refinement did on the derived, contracted Kripke structure."""

    kripke_states: int
    kripke_transitions: int
    work: Optional[int] = None
    episodes: Optional[int] = None
    max_splitter_hits: Optional[int] = None
    max_winner_hits: Optional[int] = None
    trace: tuple[str, ...] = ()
    events: tuple[tuple, ...] = ()


@dataclass(frozen=True)
class EquivResult:
    classes: PartitionMap
    quotient: System
    equivalence: Equivalence
    engine: Engine
    stats: RunStats = field(compare=False)

    @property
    def n_classes(self) -> int:
        return self.classes.n_classes


def refine_kripke(k: KripkeStructure, engine: Union[str, Engine] = Engine.FAST,
                  naive_cap: Optional[int] = None, debug: bool = False,
                  record: bool = False) -> tuple[PartitionMap, RunStats]:
    """dbs classes of ``k``: contract same-label cycles, refine, pull back.

    ``record`` keeps the fast engine's per-episode trace and split events.
    """
    engine = Engine(engine)
    con = contract_sccs(k)
    c = con.contracted
    if engine is Engine.NAIVE:
        cap = naive_cap_from_env() if naive_cap is None else naive_cap
        if c.n_states > cap:
            raise NaiveCapExceeded(
                f"naive engine refuses {c.n_states} states (cap {cap}; raise it with --naive-cap or {NAIVE_CAP_ENV})")
        part = stabilize_naive(c)
        stats = RunStats(c.n_states, c.n_transitions)
    else:
        refiner = FastRefiner(c, debug=debug, record=record)
        part = refiner.run()
        stats = RunStats(c.n_states, c.n_transitions, refiner.work, refiner.episodes,
                         max(refiner.splitter_hits, default=0), max(refiner.winner_hits, default=0),
                         tuple(refiner.trace), tuple(refiner.events))
    cls = part.class_of
    pulled = PartitionMap.from_keys([cls[x] for x in con.orig_to_new])
    return pulled, stats


def _restrict(part: PartitionMap, n: int) -> PartitionMap:
    return PartitionMap.from_keys(part.class_of[:n])


def classes_of(system: System, eq: Union[str, Equivalence], engine: Union[str, Engine] = Engine.FAST,
               naive_cap: Optional[int] = None, debug: bool = False,
               record: bool = False) -> tuple[PartitionMap, RunStats]:
    eq = Equivalence.parse(eq)
    if eq.needs_lts != isinstance(system, Lts):
        wanted = "an LTS" if eq.needs_lts else "a Kripke structure"
        raise EquivalenceMismatch(f"{eq.value} equivalence needs {wanted}")
    if eq is Equivalence.DBS:
        return refine_kripke(system, engine, naive_cap, debug, record)
    if eq is Equivalence.STUTTERING:
        part, stats = refine_kripke(build_kd(system), engine, naive_cap, debug, record)
        return _restrict(part, system.n_states), stats
    lts = add_divergence_loops(system) if eq is Equivalence.BRANCHING_DIVERGENCE else system
    emb = embed_lts(lts)
    part, stats = refine_kripke(emb.kripke, engine, naive_cap, debug, record)
    return _restrict(part, system.n_states), stats


def kripke_quotient(k: KripkeStructure, classes: PartitionMap) -> KripkeStructure:
    """One state per class, numbered by representative.

    A class gets a self-loop iff it contains a cycle; that keeps the quotient
    total and makes reducing it again the identity.
    """
    reps = sorted(set(classes.class_of))
    index = {r: i for i, r in enumerate(reps)}
    of = [index[c] for c in classes.class_of]
    looping = on_restricted_cycle(k.n_states, k.transitions, lambda s, t: of[s] == of[t])
    trans = set()
    for s, t in k.transitions:
        if of[s] != of[t]:
            trans.add((of[s], of[t]))
    for s in range(k.n_states):
        if looping[s]:
            trans.add((of[s], of[s]))
    labels = tuple(k.labels[r] for r in reps)
    return KripkeStructure(len(reps), k.ap, tuple(sorted(trans)), labels)


def lts_quotient(lts: Lts, classes: PartitionMap, divergence: bool = False) -> Lts:
    """One state per class; inert tau steps vanish except as loops marking divergence."""
    reps = sorted(set(classes.class_of))
    index = {r: i for i, r in enumerate(reps)}
    of = [index[c] for c in classes.class_of]
    trans = set()
    for s, a, t in lts.transitions:
        if a == 0 and of[s] == of[t]:
            continue
        trans.add((of[s], a, of[t]))
    if divergence:
        for s, div in enumerate(tau_divergent(lts)):
            if div:
                trans.add((of[s], 0, of[s]))
    initial = of[lts.initial] if lts.n_states else 0
    return Lts(len(reps), lts.actions, tuple(sorted(trans)), initial)


def reduce(system: System, eq: Union[str, Equivalence], engine: Union[str, Engine] = Engine.FAST,
           naive_cap: Optional[int] = None, debug: bool = False, record: bool = False) -> EquivResult:
    """Minimize ``system`` modulo ``eq``.

    Raises :class:`EquivalenceMismatch` when ``eq`` does not fit the system
    kind and :class:`NaiveCapExceeded` when the naive engine would be too slow.
    """
    eq = Equivalence.parse(eq)
    engine = Engine(engine)
    part, stats = classes_of(system, eq, engine, naive_cap, debug, record)
    if isinstance(system, Lts):
        quotient = lts_quotient(system, part, eq is Equivalence.BRANCHING_DIVERGENCE)
    else:
        quotient = kripke_quotient(system, part)
    return EquivResult(part, quotient, eq, engine, stats)


def check_state(system: System, s: int) -> int:
    if not isinstance(s, int) or isinstance(s, bool) or not 0 <= s < system.n_states:
        raise InvalidStateError(f"state id {s!r} out of range 0..{system.n_states - 1}")
    return s


def compare(system: System, eq: Union[str, Equivalence], s: int, t: int,
            engine: Union[str, Engine] = Engine.FAST, naive_cap: Optional[int] = None) -> bool:
    check_state(system, s)
    check_state(system, t)
    part, _ = classes_of(system, eq, engine, naive_cap)
    return part.same(s, t)


def timed_reduce(system: System, eq, engine=Engine.FAST, naive_cap=None,
                 record: bool = False) -> tuple[EquivResult, float]:
    """``reduce`` plus wall-clock seconds; preprocessing counts, file I/O does not."""
    start = time.perf_counter()
    result = reduce(system, eq, engine, naive_cap, record=record)
    return result, time.perf_counter() - start


def metrics_row(name: str, system: System, result: EquivResult, seconds: float) -> dict:
    return {
        "name": name,
        "n": system.n_states,
        "m": system.n_transitions,
        "min_n": result.quotient.n_states,
        "min_m": result.quotient.n_transitions,
        "engine": result.engine.value,
        "seconds": f"{seconds:.6f}",
    }
