"""Reference O(mn) partition refinement and a relational branching bisimulation.

Both are deliberately simple: they serve as oracles for the constellation-based
engine in :mod:`stutterbisim.fast`.  Self-loops are ignored throughout since a
step ``s -> s`` can always be matched by standing still.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .model import KripkeStructure, Lts, PartitionMap
from .preprocess import label_partition


@dataclass
class Graph:
    succ: list[list[int]]
    pred: list[list[int]]

    @classmethod
    def of(cls, k: KripkeStructure) -> "Graph":
        succ: list[list[int]] = [[] for _ in range(k.n_states)]
        pred: list[list[int]] = [[] for _ in range(k.n_states)]
        for s, t in k.transitions:
            if s != t:
                succ[s].append(t)
                pred[t].append(s)
        return cls(succ, pred)


@dataclass
class SimplePartition:
    blocks: list[set[int]]
    block_of: list[int] = field(default_factory=list)

    @classmethod
    def from_map(cls, pi: PartitionMap) -> "SimplePartition":
        index: dict[int, int] = {}
        blocks: list[set[int]] = []
        block_of = []
        for s, c in enumerate(pi.class_of):
            if c not in index:
                index[c] = len(blocks)
                blocks.append(set())
            blocks[index[c]].add(s)
            block_of.append(index[c])
        return cls(blocks, block_of)

    def to_map(self) -> PartitionMap:
        return PartitionMap.from_keys(self.block_of)


def split_set(bprime: Iterable[int], bbold: Iterable[int], k: KripkeStructure,
              graph: Optional[Graph] = None) -> set[int]:
    """States of ``bprime`` that reach ``bbold`` by a path staying in ``bprime``."""
    g = graph or Graph.of(k)
    inside = set(bprime)
    target = set(bbold)
    found = {s for s in inside if s in target or any(t in target for t in g.succ[s])}
    queue = deque(found)
    while queue:
        s = queue.popleft()
        for p in g.pred[s]:
            if p in inside and p not in found:
                found.add(p)
                queue.append(p)
    return found


def cosplit_set(bprime, bbold, k, graph=None) -> set[int]:
    return set(bprime) - split_set(bprime, bbold, k, graph)


def bottom_states(block: Iterable[int], graph: Graph) -> set[int]:
    inside = set(block)
    return {s for s in inside if not any(t in inside for t in graph.succ[s])}


def is_unstable(bprime, bbold, k: KripkeStructure, graph: Optional[Graph] = None) -> bool:
    """Bottom-state instability test; only valid for cycle-free blocks.

    Marks every state with a direct step into ``bbold`` (all of ``bprime``
    when it lies inside ``bbold``) and reports instability iff something is
    marked while some bottom state is not.
    """
    g = graph or Graph.of(k)
    inside = set(bprime)
    target = set(bbold)
    if inside <= target:
        return False
    marked = {s for s in inside if any(t in target for t in g.succ[s])}
    if not marked:
        return False
    return not bottom_states(inside, g) <= marked


def is_unstable_direct(bprime, bbold, k, graph=None) -> bool:
    split = split_set(bprime, bbold, k, graph)
    return bool(split) and bool(set(bprime) - split)


def is_cycle_free(partition: PartitionMap, k: KripkeStructure) -> bool:
    """True iff no block contains a cycle of length >= 2 (self-loops are ignored)."""
    from .preprocess import scc_ids

    cls = partition.class_of
    succ: list[list[int]] = [[] for _ in range(k.n_states)]
    for s, t in k.transitions:
        if s != t and cls[s] == cls[t]:
            succ[s].append(t)
    comp = scc_ids(k.n_states, succ)
    return len(set(comp)) == k.n_states


def _refine_under(part: SimplePartition, splitter: int, g: Graph) -> bool:
    """Replace every block that is unstable under block ``splitter``; report whether any was."""
    block_of = part.block_of
    target = part.blocks[splitter]
    marked: dict[int, set[int]] = {}
    for s in target:
        for p in g.pred[s]:
            b = block_of[p]
            if b != splitter:
                marked.setdefault(b, set()).add(p)
    changed = False
    for b in sorted(marked):
        members = part.blocks[b]
        hit = marked[b]
        if all(s in hit for s in bottom_states(members, g)):
            continue
        split = set(hit)
        queue = deque(hit)
        while queue:
            s = queue.popleft()
            for p in g.pred[s]:
                if block_of[p] == b and p not in split:
                    split.add(p)
                    queue.append(p)
        rest = members - split
        new = len(part.blocks)
        part.blocks[b] = split
        part.blocks.append(rest)
        for s in rest:
            block_of[s] = new
        changed = True
    return changed


def stabilize_naive(k: KripkeStructure, pi0: Optional[PartitionMap] = None,
                    rng: Optional[random.Random] = None,
                    on_round: Optional[Callable[[SimplePartition], None]] = None) -> PartitionMap:
    """Coarsest stable refinement of ``pi0`` (the label partition by default).

    The initial partition must be cycle-free apart from self-loops, i.e. the
    caller has already run :func:`~stutterbisim.preprocess.contract_sccs`.
    Blocks are tried as splitters round-robin in creation order, or in a
    shuffled order per pass when ``rng`` is given.
    """
    g = Graph.of(k)
    part = SimplePartition.from_map(pi0 or label_partition(k))
    while True:
        order = list(range(len(part.blocks)))
        if rng is not None:
            rng.shuffle(order)
        any_split = False
        for b in order:
            if _refine_under(part, b, g):
                any_split = True
                if on_round is not None:
                    on_round(part)
        if not any_split:
            return part.to_map()


def branching_bisim_relational(lts: Lts) -> PartitionMap:
    """Largest branching bisimulation, computed as a relation fixpoint over S x S.

    Rows of the relation are Python ints used as bitsets.  Cost is roughly
    O(n^2 m) per sweep, so keep ``n`` in the low hundreds.
    """
    n = lts.n_states
    full = (1 << n) - 1
    tau_succ: list[list[int]] = [[] for _ in range(n)]
    out: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    pred_by: dict[int, list[int]] = {}  # action -> per-target bitset of a-predecessors
    for s, a, t in lts.transitions:
        out[s].append((a, t))
        if a == 0:
            tau_succ[s].append(t)
        row = pred_by.setdefault(a, [0] * n)
        row[t] |= 1 << s

    tau_pred: list[list[int]] = [[] for _ in range(n)]
    for s in range(n):
        for t in tau_succ[s]:
            tau_pred[t].append(s)
    # co_reach[x]: states that reach x by zero or more tau steps
    co_reach = []
    for x in range(n):
        seen = 1 << x
        queue = [x]
        while queue:
            y = queue.pop()
            for p in tau_pred[y]:
                if not (seen >> p) & 1:
                    seen |= 1 << p
                    queue.append(p)
        co_reach.append(seen)

    def spread(mask: int, table: list[int]) -> int:
        acc = 0
        while mask:
            low = mask & -mask
            acc |= table[low.bit_length() - 1]
            mask ^= low
        return acc

    rel = [full] * n
    while True:
        ok = [full] * n  # ok[s] bit t: every step of s is answered from t
        for s in range(n):
            row = rel[s]
            for a, s2 in out[s]:
                # states t' from which an a-step lands in the class of s2
                answer = spread(rel[s2], pred_by[a]) & row
                good = spread(answer, co_reach)
                if a == 0:
                    good |= rel[s2]
                ok[s] &= good
        new = [0] * n
        for s in range(n):
            mask = rel[s] & ok[s]
            row = 0
            while mask:
                low = mask & -mask
                t = low.bit_length() - 1
                if (ok[t] >> s) & 1:
                    row |= low
                mask ^= low
            new[s] = row
        if new == rel:
            break
        rel = new
    return PartitionMap(tuple((row & -row).bit_length() - 1 for row in rel))
