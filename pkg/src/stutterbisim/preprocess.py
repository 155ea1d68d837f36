"""Reductions of every supported equivalence to divergence-blind stuttering.

* :func:`contract_sccs` makes the label partition cycle-free,
* :func:`build_kd` encodes divergence for stuttering equivalence,
* :func:`embed_lts` turns an LTS into a Kripke structure,
* :func:`add_divergence_loops` marks tau-divergent LTS states.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .model import KripkeStructure, Lts, PartitionMap

DIV = "div"
BOTTOM = "⊥"


def scc_ids(n: int, succ: Sequence[Sequence[int]]) -> list[int]:
    """Tarjan's algorithm without recursion.

    Returns a component id per node; ids are assigned in the order components
    are completed (reverse topological order of the condensation).
    """
    index = [-1] * n
    low = [0] * n
    comp = [-1] * n
    on_stack = [False] * n
    stack: list[int] = []
    counter = 0
    n_comps = 0
    for root in range(n):
        if index[root] != -1:
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        work = [(root, 0)]
        while work:
            v, i = work[-1]
            edges = succ[v]
            if i < len(edges):
                work[-1] = (v, i + 1)
                w = edges[i]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
                continue
            work.pop()
            if work:
                u = work[-1][0]
                if low[v] < low[u]:
                    low[u] = low[v]
            if low[v] == index[v]:
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp[w] = n_comps
                    if w == v:
                        break
                n_comps += 1
    return comp


def on_restricted_cycle(n: int, edges, keep) -> list[bool]:
    """Which nodes lie on a cycle of the subgraph of edges ``(s, t)`` with ``keep(s, t)``."""
    succ: list[list[int]] = [[] for _ in range(n)]
    self_loop = [False] * n
    for s, t in edges:
        if keep(s, t):
            if s == t:
                self_loop[s] = True
            else:
                succ[s].append(t)
    comp = scc_ids(n, succ)
    size: dict[int, int] = {}
    for c in comp:
        size[c] = size.get(c, 0) + 1
    return [self_loop[s] or size[comp[s]] > 1 for s in range(n)]


def label_partition(k: KripkeStructure) -> PartitionMap:
    return PartitionMap.from_keys(k.labels)


@dataclass(frozen=True)
class SccContraction:
    contracted: KripkeStructure
    orig_to_new: tuple[int, ...]


def contract_sccs(k: KripkeStructure, pi0: PartitionMap | None = None) -> SccContraction:
    """Collapse every cycle that stays inside one block of ``pi0``.

    New ids follow the least original member of each component.  Edges inside
    a collapsed component become a self-loop, so the result stays total; the
    refinement engines ignore self-loops, which never influence divergence-blind
    stuttering equivalence.
    """
    if pi0 is None:
        pi0 = label_partition(k)
    n = k.n_states
    cls = pi0.class_of
    succ: list[list[int]] = [[] for _ in range(n)]
    for s, t in k.transitions:
        if s != t and cls[s] == cls[t]:
            succ[s].append(t)
    comp = scc_ids(n, succ)
    renumber: dict[int, int] = {}
    orig_to_new = tuple(renumber.setdefault(c, len(renumber)) for c in comp)
    n_new = len(renumber)
    if n_new == n:
        # nothing collapses and ids are unchanged; share the input
        return SccContraction(k, orig_to_new)
    labels: list = [None] * n_new
    for s in range(n):
        if labels[orig_to_new[s]] is None:
            labels[orig_to_new[s]] = k.labels[s]
    seen = set()
    trans = []
    for s, t in k.transitions:
        edge = (orig_to_new[s], orig_to_new[t])
        if edge not in seen:
            seen.add(edge)
            trans.append(edge)
    contracted = KripkeStructure(n_new, k.ap, tuple(trans), tuple(labels))
    return SccContraction(contracted, orig_to_new)


def _fresh(name: str, taken) -> str:
    while name in taken:
        name += "'"
    return name


def build_kd(k: KripkeStructure) -> KripkeStructure:
    """Add a divergence sink ``s_d`` (id ``n``) reached from every state on a same-label cycle."""
    n = k.n_states
    d = _fresh("d", set(k.ap))
    divergent = on_restricted_cycle(n, k.transitions, lambda s, t: k.labels[s] == k.labels[t])
    trans = list(k.transitions)
    trans.extend((s, n) for s in range(n) if divergent[s])
    trans.append((n, n))
    return KripkeStructure(n + 1, k.ap + (d,), tuple(trans), k.labels + (frozenset({d}),))


@dataclass(frozen=True)
class Embedding:
    """Kripke embedding of an LTS.

    Original states keep their ids ``0..orig_states-1``; ``action_states[i]``
    is the ``(action-id, target)`` pair represented by Kripke state
    ``orig_states + i``.
    """

    kripke: KripkeStructure
    orig_states: int
    action_states: tuple[tuple[int, int], ...]


def embed_lts(lts: Lts) -> Embedding:
    n = lts.n_states
    bottom = _fresh(BOTTOM, set(lts.actions))
    pair_id: dict[tuple[int, int], int] = {}
    trans: list[tuple[int, int]] = []
    seen = set()

    def add(s, t):
        if (s, t) not in seen:
            seen.add((s, t))
            trans.append((s, t))

    for s, a, t in sorted(lts.transitions):
        if a == 0:
            add(s, t)
            continue
        key = (a, t)
        x = pair_id.get(key)
        if x is None:
            x = pair_id[key] = n + len(pair_id)
            add(x, t)
        add(s, x)

    has_out = [False] * (n + len(pair_id))
    for s, _ in trans:
        has_out[s] = True
    trans.extend((s, s) for s in range(n) if not has_out[s])

    labels = [frozenset({bottom})] * n
    labels.extend(frozenset({lts.actions[a]}) for a, _ in pair_id)
    ap = tuple(lts.actions[1:]) + (bottom,)
    kripke = KripkeStructure(n + len(pair_id), ap, tuple(trans), tuple(labels))
    return Embedding(kripke, n, tuple(pair_id))


def add_divergence_loops(lts: Lts) -> Lts:
    """Give each state on a tau-cycle a ``div`` self-loop."""
    if DIV in lts.actions:
        raise ValueError(f"action name {DIV!r} is reserved in divergence-sensitive mode")
    divergent = tau_divergent(lts)
    div = len(lts.actions)
    extra = tuple((s, div, s) for s in range(lts.n_states) if divergent[s])
    return Lts(lts.n_states, lts.actions + (DIV,), lts.transitions + extra, lts.initial)


def tau_divergent(lts: Lts) -> list[bool]:
    pairs = [(s, t) for s, a, t in lts.transitions if a == 0]
    return on_restricted_cycle(lts.n_states, pairs, lambda s, t: True)

