"""O(m log n) refinement for divergence-blind stuttering equivalence.

The refiner keeps, besides the partition into blocks, a coarser partition into
*constellations* under which the current partition is known to be stable.  A
round (an *episode*) picks a block ``B`` that holds at most half of its
constellation, moves it into a constellation of its own and restores
stability, only ever touching transitions of ``B``, of the smaller half of
each block that gets split, and of states that just became bottom states.

Per block the refiner keeps the state lists ``btm``/``non_btm`` and their
marked counterparts, and a list ``to_constlns`` of :class:`Elem` records, one
per constellation reachable by a non-inert transition, each holding those
transitions.  Every transition refers to a shared :class:`Count` with the
number of transitions from its source into the target's constellation.

Lists that are spliced in O(1) are intrusive doubly linked lists: the
transitions of an element are threaded through the flat arrays ``tnext`` and
``tprev``, elements through ``Elem.prev``/``Elem.next``, the blocks of a
constellation through ``Block.cprev``/``Block.cnext``, and the states of a
block's four state lists through the per-state arrays of :class:`StateLinks`.
This keeps the per block memory small, which is what limits the instance size
in practice, and keeps iteration proportional to the live entries: a Python
dict that lost most of its keys still walks the dead slots.

The input must have a cycle-free initial partition; run
:func:`stutterbisim.preprocess.contract_sccs` first.  Self-loops are dropped.
"""

from __future__ import annotations

import math
from itertools import chain
from typing import Callable, Iterable, Iterator, Optional

from .model import KripkeStructure, PartitionMap
from .preprocess import label_partition

NIL = -1


class InvariantError(AssertionError):
    """Raised by :meth:`FastRefiner.check` when bookkeeping disagrees with a recount."""


class Count:
    __slots__ = ("value",)

    def __init__(self, value: int = 0):
        self.value = value

    def __repr__(self):
        return f"Count({self.value})"


class Constellation:
    """A union of blocks, kept as a linked list from ``head`` to ``tail``."""

    __slots__ = ("id", "head", "tail", "nblocks", "size", "lprev", "lnext", "registry")

    def __init__(self, ident: int):
        self.id = ident
        self.head: Optional[Block] = None
        self.tail: Optional[Block] = None
        self.nblocks = 0
        self.size = 0
        # links in the trivial or non-trivial registry
        self.lprev: Optional[Constellation] = None
        self.lnext: Optional[Constellation] = None
        self.registry: Optional[Registry] = None

    def blocks(self) -> Iterator["Block"]:
        b = self.head
        while b is not None:
            yield b
            b = b.cnext

    def __repr__(self):
        return f"Constellation({self.id}, blocks={[b.id for b in self.blocks()]})"


class Registry:
    """Linked list of constellations: either the trivial or the non-trivial ones."""

    __slots__ = ("name", "head", "tail", "count")

    def __init__(self, name: str):
        self.name = name
        self.head: Optional[Constellation] = None
        self.tail: Optional[Constellation] = None
        self.count = 0

    def append(self, c: Constellation) -> None:
        c.registry = self
        c.lnext = None
        c.lprev = self.tail
        if self.tail is None:
            self.head = c
        else:
            self.tail.lnext = c
        self.tail = c
        self.count += 1

    def remove(self, c: Constellation) -> None:
        if c.lprev is None:
            self.head = c.lnext
        else:
            c.lprev.lnext = c.lnext
        if c.lnext is None:
            self.tail = c.lprev
        else:
            c.lnext.lprev = c.lprev
        c.lprev = c.lnext = c.registry = None
        self.count -= 1

    def __iter__(self) -> Iterator[Constellation]:
        c = self.head
        while c is not None:
            yield c
            c = c.lnext

    def __len__(self) -> int:
        return self.count

    def __contains__(self, c: Constellation) -> bool:
        return c.registry is self


class Elem:
    """Entry of a block's ``to_constlns``: the non-inert transitions into one constellation."""

    __slots__ = ("constln", "block", "head", "count", "twin", "reach", "prev", "next")

    def __init__(self, constln: Constellation, block: "Block"):
        self.constln = constln
        self.block = block
        self.head = NIL
        self.count = 0
        self.twin: Optional[Elem] = None
        # new bottom states of the block with a transition into ``constln``
        self.reach: Optional[dict[int, None]] = None
        self.prev: Optional[Elem] = None
        self.next: Optional[Elem] = None

    def __repr__(self):
        return f"Elem(block={self.block.id}, constln={self.constln.id}, count={self.count})"


class StateLinks:
    """Per-state successor, predecessor and owning-list arrays shared by all :class:`StateList` s."""

    __slots__ = ("nxt", "prv", "where")

    def __init__(self, n: int):
        self.nxt = [NIL] * n
        self.prv = [NIL] * n
        self.where: list[Optional[StateList]] = [None] * n


class StateList:
    """Intrusive list of states; each state sits in at most one list at a time."""

    __slots__ = ("links", "head", "tail", "count")

    def __init__(self, links: StateLinks):
        self.links = links
        self.head = NIL
        self.tail = NIL
        self.count = 0

    def add(self, s: int) -> None:
        links = self.links
        links.where[s] = self
        t = self.tail
        links.prv[s] = t
        links.nxt[s] = NIL
        if t == NIL:
            self.head = s
        else:
            links.nxt[t] = s
        self.tail = s
        self.count += 1

    def remove(self, s: int) -> None:
        links = self.links
        p, q = links.prv[s], links.nxt[s]
        if p == NIL:
            self.head = q
        else:
            links.nxt[p] = q
        if q == NIL:
            self.tail = p
        else:
            links.prv[q] = p
        links.where[s] = None
        self.count -= 1

    def extend(self, other: "StateList") -> None:
        """Append all of ``other``'s states, leaving ``other`` empty."""
        if not other.count:
            return
        links = self.links
        where = links.where
        s = other.head
        while s != NIL:
            where[s] = self
            s = links.nxt[s]
        if self.tail == NIL:
            self.head = other.head
        else:
            links.nxt[self.tail] = other.head
            links.prv[other.head] = self.tail
        self.tail = other.tail
        self.count += other.count
        other.head = other.tail = NIL
        other.count = 0

    def __iter__(self) -> Iterator[int]:
        nxt = self.links.nxt
        s = self.head
        while s != NIL:
            following = nxt[s]
            yield s
            s = following

    def __len__(self) -> int:
        return self.count

    def __contains__(self, s: int) -> bool:
        return self.links.where[s] is self

    def __repr__(self):
        return f"StateList({list(self)})"


class Block:
    """A set of states; the marked lists exist only while states are marked."""

    __slots__ = ("id", "constln", "size", "btm", "non_btm", "mrkd_btm", "mrkd_non_btm",
                 "first", "last", "cprev", "cnext", "in_ref", "c_ref", "co_ref", "new_btm")

    def __init__(self, ident: int, constln: Constellation, links: StateLinks):
        self.id = ident
        self.constln = constln
        self.size = 0
        self.btm = StateList(links)
        self.non_btm = StateList(links)
        self.mrkd_btm: Optional[StateList] = None
        self.mrkd_non_btm: Optional[StateList] = None
        # to_constlns, elements carrying a new-bottom list first
        self.first: Optional[Elem] = None
        self.last: Optional[Elem] = None
        self.cprev: Optional[Block] = None
        self.cnext: Optional[Block] = None
        self.in_ref: Optional[Elem] = None
        self.c_ref: Optional[Elem] = None
        self.co_ref: Optional[Elem] = None
        self.new_btm: Optional[dict[int, None]] = None

    def states(self) -> Iterator[int]:
        nxt = self.btm.links.nxt
        for lst in (self.btm, self.non_btm, self.mrkd_btm, self.mrkd_non_btm):
            if lst is not None:
                s = lst.head
                while s != NIL:
                    following = nxt[s]
                    yield s
                    s = following

    def to_constlns(self) -> Iterator[Elem]:
        e = self.first
        while e is not None:
            yield e
            e = e.next

    def attach(self, e: Elem, front: bool = False) -> None:
        if front:
            e.prev, e.next = None, self.first
            if self.first is None:
                self.last = e
            else:
                self.first.prev = e
            self.first = e
        else:
            e.prev, e.next = self.last, None
            if self.last is None:
                self.first = e
            else:
                self.last.next = e
            self.last = e

    def detach(self, e: Elem) -> None:
        if e.prev is None:
            self.first = e.next
        else:
            e.prev.next = e.next
        if e.next is None:
            self.last = e.prev
        else:
            e.next.prev = e.prev
        e.prev = e.next = None

    def move_front(self, e: Elem) -> None:
        if self.first is not e:
            self.detach(e)
            self.attach(e, front=True)

    def move_back(self, e: Elem) -> None:
        if self.last is not e:
            self.detach(e)
            self.attach(e)

    def __repr__(self):
        return f"Block({self.id}, size={self.size})"


def _mark_into(blk: Block, s: int, bottom: bool) -> None:
    attr = "mrkd_btm" if bottom else "mrkd_non_btm"
    lst = getattr(blk, attr)
    if lst is None:
        lst = StateList(blk.btm.links)
        setattr(blk, attr, lst)
    lst.add(s)


class FastRefiner:
    """Constellation-based partition refinement on a Kripke structure.

    ``debug=True`` recounts every counter, list and size after each public
    operation and raises :class:`InvariantError` on the first discrepancy;
    this costs O(m + n) per operation.
    """

    def __init__(self, k: KripkeStructure, pi0: Optional[PartitionMap] = None, debug: bool = False,
                 record: bool = False):
        self.debug = debug
        self.record = record
        self.n = n = k.n_states
        pi0 = pi0 or label_partition(k)

        src, dst = [], []
        out: list[list[int]] = [[] for _ in range(n)]
        inc: list[list[int]] = [[] for _ in range(n)]
        for s, t in k.transitions:
            if s == t:
                continue
            out[s].append(len(src))
            inc[t].append(len(src))
            src.append(s)
            dst.append(t)
        self.src, self.dst = src, dst
        self.out = [tuple(ts) for ts in out]
        self.inc = [tuple(ts) for ts in inc]
        del out, inc
        self.m = m = len(src)
        self.tnext = [NIL] * m
        self.tprev = [NIL] * m

        self.work = 0
        self.episodes = 0
        self.trace: list[str] = []
        self.events: list[tuple] = []
        self.splits = 0
        self._new_bottom_count = 0
        self.splitter_hits = [0] * n
        self.winner_hits = [0] * n
        self._next_block = 0
        self._next_constln = 0

        self.links = StateLinks(n)
        c0 = self._new_constln()
        self.blocks: list[Block] = []
        self.block: list[Block] = [None] * n  # type: ignore[list-item]
        by_rep: dict[int, Block] = {}
        for s, rep in enumerate(pi0.class_of):
            blk = by_rep.get(rep)
            if blk is None:
                blk = by_rep[rep] = self._new_block(c0)
            self.block[s] = blk
            blk.size += 1

        block = self.block
        self.inert = [0] * n
        self.marked = [False] * n
        self.ccnt: list[Optional[Count]] = [None] * n
        self.cocnt: list[Optional[Count]] = [None] * n
        self.tcnt: list[Count] = [None] * m  # type: ignore[list-item]
        self.telem: list[Optional[Elem]] = [None] * m
        for s in range(n):
            ts = self.out[s]
            cnt = Count(len(ts))
            blk = block[s]
            inert = 0
            for t in ts:
                self.tcnt[t] = cnt
                if block[dst[t]] is blk:
                    inert += 1
                else:
                    e = blk.in_ref
                    if e is None:
                        e = blk.in_ref = self._new_elem(blk, c0)
                    self._push(e, t)
            self.inert[s] = inert
            (blk.non_btm if inert else blk.btm).add(s)

        c0.size = n
        self.nontrivial = Registry("nontrivial")
        self.trivial = Registry("trivial")
        (self.nontrivial if c0.nblocks > 1 else self.trivial).append(c0)
        self.work += n + m
        self._after("init", quiescent=True)

    # -- allocation and list primitives -------------------------------------

    def _new_constln(self) -> Constellation:
        c = Constellation(self._next_constln)
        self._next_constln += 1
        return c

    @staticmethod
    def _add_block(c: Constellation, blk: Block) -> None:
        blk.cnext = None
        blk.cprev = c.tail
        if c.tail is None:
            c.head = blk
        else:
            c.tail.cnext = blk
        c.tail = blk
        c.nblocks += 1

    @staticmethod
    def _remove_block(c: Constellation, blk: Block) -> None:
        if blk.cprev is None:
            c.head = blk.cnext
        else:
            blk.cprev.cnext = blk.cnext
        if blk.cnext is None:
            c.tail = blk.cprev
        else:
            blk.cnext.cprev = blk.cprev
        blk.cprev = blk.cnext = None
        c.nblocks -= 1

    def _new_block(self, constln: Constellation) -> Block:
        blk = Block(self._next_block, constln, self.links)
        self._next_block += 1
        self.blocks.append(blk)
        self._add_block(constln, blk)
        return blk

    @staticmethod
    def _new_elem(blk: Block, constln: Constellation) -> Elem:
        e = Elem(constln, blk)
        blk.attach(e)
        return e

    def _push(self, e: Elem, t: int) -> None:
        h = e.head
        self.tnext[t] = h
        self.tprev[t] = NIL
        if h != NIL:
            self.tprev[h] = t
        e.head = t
        e.count += 1
        self.telem[t] = e

    def _pop(self, e: Elem, t: int) -> None:
        p, q = self.tprev[t], self.tnext[t]
        if p == NIL:
            e.head = q
        else:
            self.tnext[p] = q
        if q != NIL:
            self.tprev[q] = p
        e.count -= 1

    def transitions(self, e: Elem) -> Iterator[int]:
        """The transitions filed under ``e``, most recently filed first."""
        tnext = self.tnext
        t = e.head
        while t != NIL:
            yield t
            t = tnext[t]

    def _sources(self, e: Elem) -> Iterator[int]:
        src, tnext = self.src, self.tnext
        t = e.head
        while t != NIL:
            yield src[t]
            t = tnext[t]

    # -- splitter selection and marking -------------------------------------

    def select_splitter(self):
        """Pick a block holding at most half of a non-trivial constellation.

        Moves it into a fresh trivial constellation and returns
        ``(block, old_constellation, new_constellation)``, or ``None`` when
        every constellation is trivial and the partition is stable.
        """
        big = self.nontrivial.head
        if big is None:
            return None
        blk = big.head
        # of the first two blocks at least one is small enough
        if 2 * blk.size > big.size:
            blk = blk.cnext
        self._remove_block(big, blk)
        big.size -= blk.size
        small = self._new_constln()
        self._add_block(small, blk)
        small.size = blk.size
        blk.constln = small
        self.trivial.append(small)
        if big.nblocks == 1:
            self.nontrivial.remove(big)
            self.trivial.append(big)
        hits = self.splitter_hits
        for s in blk.states():
            hits[s] += 1
        self.work += 2
        self._after("select_splitter", quiescent=True, moved=(blk, big))
        return blk, big, small

    def mark_and_detect(self, splitter: Block, big: Constellation, small: Constellation) -> list[Block]:
        """Mark predecessors of ``splitter``, re-file its incoming transitions and
        return the blocks that must be split, in discovery order."""
        src, inc, out, dst = self.src, self.inc, self.out, self.dst
        block, marked, inert = self.block, self.marked, self.inert
        ccnt, cocnt, tcnt, telem = self.ccnt, self.cocnt, self.tcnt, self.telem
        tnext, tprev, links = self.tnext, self.tprev, self.links
        splittable: list[Block] = []
        work = 0

        for s in splitter.states():
            for t in inc[s]:
                work += 1
                p = src[t]
                bp = block[p]
                if bp is splitter:
                    continue
                co = telem[t]
                if bp.c_ref is None:
                    splittable.append(bp)
                    bp.co_ref = co
                    bp.c_ref = self._new_elem(bp, small)
                if cocnt[p] is None:
                    ccnt[p] = Count(0)
                    cocnt[p] = tcnt[t]
                if not marked[p]:
                    marked[p] = True
                    if inert[p]:
                        bp.non_btm.remove(p)
                        lst = bp.mrkd_non_btm
                        if lst is None:
                            lst = bp.mrkd_non_btm = StateList(links)
                    else:
                        bp.btm.remove(p)
                        lst = bp.mrkd_btm
                        if lst is None:
                            lst = bp.mrkd_btm = StateList(links)
                    lst.add(p)
                c = ccnt[p]
                c.value += 1
                tcnt[t] = c
                cocnt[p].value -= 1
                # move t from the element for big to the one for the splitter
                a, b = tprev[t], tnext[t]
                if a == NIL:
                    co.head = b
                else:
                    tnext[a] = b
                if b != NIL:
                    tprev[b] = a
                co.count -= 1
                e = bp.c_ref
                h = e.head
                tnext[t] = h
                tprev[t] = NIL
                if h != NIL:
                    tprev[h] = t
                e.head = t
                e.count += 1
                telem[t] = e

        # the splitter itself: everything is marked, split only under big \ splitter
        splitter.mrkd_btm = splitter.btm if splitter.btm.count else None
        splitter.mrkd_non_btm = splitter.non_btm if splitter.non_btm.count else None
        splitter.btm, splitter.non_btm = StateList(links), StateList(links)
        splittable.append(splitter)
        splitter.c_ref = splitter.co_ref = None
        for s in splitter.states():
            marked[s] = True
            for t in out[s]:
                work += 1
                target = block[dst[t]]
                where = target.constln
                if where is big:
                    if splitter.c_ref is None:
                        splitter.co_ref = telem[t]
                        splitter.c_ref = splitter.in_ref = self._new_elem(splitter, small)
                elif where is not small:
                    continue
                if cocnt[s] is None:
                    ccnt[s] = Count(0)
                    cocnt[s] = tcnt[t]
                if target is splitter:
                    c = ccnt[s]
                    c.value += 1
                    tcnt[t] = c
                    cocnt[s].value -= 1
        if splitter.c_ref is None:
            # no transition into big \ splitter, so no element for the old constellation
            splitter.in_ref = None

        result = []
        for bp in splittable:
            work += 1
            if bp.btm.count:
                result.append(bp)
                continue
            co = bp.co_ref
            if co is not None and co.count:
                hit = False
                for s in bp.mrkd_btm or ():
                    work += 1
                    c = cocnt[s]
                    if c is None or c.value == 0:
                        hit = True
                        break
                if hit:
                    result.append(bp)
                    continue
            self._unmark(bp)
        self.work += work
        self._after("mark_and_detect", quiescent=False)
        return result

    def _unmark(self, bp: Block) -> None:
        marked, ccnt, cocnt = self.marked, self.ccnt, self.cocnt
        mb, mn = bp.mrkd_btm, bp.mrkd_non_btm
        for s in chain(mb or (), mn or ()):
            marked[s] = False
            ccnt[s] = cocnt[s] = None
        if mb is not None and mb.count:
            self.work += mb.count
            if bp.btm.count:
                bp.btm.extend(mb)
            else:
                bp.btm = mb
        if mn is not None and mn.count:
            self.work += mn.count
            if bp.non_btm.count:
                bp.non_btm.extend(mn)
            else:
                bp.non_btm = mn
        bp.mrkd_btm = bp.mrkd_non_btm = None
        for ref in (bp.c_ref, bp.co_ref):
            if ref is not None and not ref.count:
                if ref is bp.in_ref:
                    bp.in_ref = None
                bp.detach(ref)
        bp.c_ref = bp.co_ref = None

    # -- the two detectors ------------------------------------------------

    def detect1(self, blk: Block, seeds: Iterable[int], limit: int):
        """Generator collecting the states of ``blk`` that reach a seed via inert steps.

        Yields once per seed and per incoming transition examined; returns the
        collected list, or ``None`` as soon as it grows beyond ``limit``.
        """
        block, inc, src = self.block, self.inc, self.src
        found: list[int] = []
        seen: set[int] = set()
        for s0 in seeds:
            yield
            if s0 in seen:
                continue
            seen.add(s0)
            found.append(s0)
            if len(found) > limit:
                return None
            stack = [s0]
            while stack:
                s = stack.pop()
                for t in inc[s]:
                    yield
                    p = src[t]
                    if p not in seen and block[p] is blk:
                        seen.add(p)
                        found.append(p)
                        if len(found) > limit:
                            return None
                        stack.append(p)
        return found

    def detect2(self, blk: Block, seeds: Iterable[int], limit: int, excluded: Callable[[int], bool]):
        """Generator collecting the states of ``blk`` that cannot reach the splitter.

        A predecessor enters the queue with its inert out-degree as priority
        unless ``excluded`` says it steps directly into the splitter; it is
        emitted once the priority drops to zero.  Priorities only ever count
        down, so a dict plus a stack of zero-priority states suffices.
        """
        block, inc, src, inert = self.block, self.inc, self.src, self.inert
        found: list[int] = []
        done: set[int] = set()
        prio: dict[int, int] = {}
        zero: list[int] = []
        rejected: set[int] = set()
        it = iter(seeds)
        while True:
            s = next(it, None)
            if s is None:
                if not zero:
                    return found
                s = zero.pop()
            yield
            done.add(s)
            found.append(s)
            if len(found) > limit:
                return None
            for t in inc[s]:
                yield
                p = src[t]
                if block[p] is not blk:
                    continue
                left = prio.get(p)
                if left is not None:
                    prio[p] = left - 1
                    if left == 1:
                        zero.append(p)
                elif p not in done and p not in rejected:
                    if excluded(p):
                        rejected.add(p)
                        continue
                    left = inert[p] - 1
                    prio[p] = left
                    if left == 0:
                        zero.append(p)

    def lockstep(self, blk: Block, seeds1, seeds2, excluded) -> tuple[int, list[int]]:
        """Run both detectors alternately, one step each, until one finishes within half.

        Returns ``(1, split_states)`` or ``(2, cosplit_states)``; detect1 wins ties.
        """
        limit = blk.size // 2
        g1 = self.detect1(blk, seeds1, limit)
        g2 = self.detect2(blk, seeds2, limit, excluded)
        live1 = live2 = True
        steps = 0
        try:
            while live1 or live2:
                if live1:
                    steps += 1
                    try:
                        next(g1)
                    except StopIteration as stop:
                        if stop.value is not None:
                            return 1, stop.value
                        live1 = False
                if live2:
                    steps += 1
                    try:
                        next(g2)
                    except StopIteration as stop:
                        if stop.value is not None:
                            return 2, stop.value
                        live2 = False
        finally:
            self.work += steps
        raise InvariantError(f"both detectors exceeded half of block {blk.id}")

    @staticmethod
    def _excluded_first(blk: Block):
        lst = blk.mrkd_non_btm
        if lst is None:
            return lambda p: False
        return lst.__contains__

    def _excluded_co(self, blk: Block, big: Constellation):
        block, out, dst, inert, cocnt = self.block, self.out, self.dst, self.inert, self.cocnt
        own = blk.constln is big
        marked_non_btm = blk.mrkd_non_btm or {}

        def excluded(p: int) -> bool:
            if p in marked_non_btm:
                return cocnt[p].value - (inert[p] if own else 0) > 0
            self.work += len(out[p])
            for t in out[p]:
                b = block[dst[t]]
                if b is not blk and b.constln is big:
                    return True
            return False

        return excluded

    def _excluded_into(self, blk: Block, target: Constellation):
        block, out, dst = self.block, self.out, self.dst

        def excluded(p: int) -> bool:
            self.work += len(out[p])
            for t in out[p]:
                b = block[dst[t]]
                if b is not blk and b.constln is target:
                    return True
            return False

        return excluded

    # -- splitting ----------------------------------------------------------

    def _in_elem(self, blk: Block, other: Block) -> Elem:
        e = blk.in_ref
        if e is None:
            e = blk.in_ref = self._new_elem(blk, blk.constln)
            o = other.in_ref
            if o is not None:
                e.twin = o
                o.twin = e
        return e

    def execute_split(self, old: Block, moving: list[int], new_bottoms: dict[int, None],
                      before_cleanup: Optional[Callable[[Block], None]] = None) -> Block:
        """Move ``moving`` (at most half of ``old``) into a new block and fix all bookkeeping.

        States that lose their last inert transition are appended to
        ``new_bottoms``.  ``before_cleanup`` runs while the twin links between
        the two blocks' constellation elements still exist.
        """
        block, inert, marked = self.block, self.inert, self.marked
        out, inc, src, dst, telem = self.out, self.inc, self.src, self.dst, self.telem
        tnext, tprev = self.tnext, self.tprev
        constln = old.constln
        new = self._new_block(constln)
        if constln.nblocks == 2:
            self.trivial.remove(constln)
            self.nontrivial.append(constln)
        hits = self.winner_hits
        for s in moving:
            block[s] = new
            hits[s] += 1
            if marked[s]:
                if inert[s]:
                    old.mrkd_non_btm.remove(s)
                    _mark_into(new, s, False)
                else:
                    old.mrkd_btm.remove(s)
                    _mark_into(new, s, True)
            elif inert[s]:
                old.non_btm.remove(s)
                new.non_btm.add(s)
            else:
                old.btm.remove(s)
                new.btm.add(s)
        new.size = len(moving)
        old.size -= len(moving)

        work = 0
        for s in moving:
            for t in out[s]:
                work += 1
                e = telem[t]
                if e is not None:
                    e2 = e.twin
                    if e2 is None:
                        e2 = self._new_elem(new, e.constln)
                        e.twin, e2.twin = e2, e
                        if e.constln is constln:
                            new.in_ref = e2
                        if e is old.c_ref:
                            new.c_ref = e2
                        if e is old.co_ref:
                            new.co_ref = e2
                    a, b = tprev[t], tnext[t]
                    if a == NIL:
                        e.head = b
                    else:
                        tnext[a] = b
                    if b != NIL:
                        tprev[b] = a
                    e.count -= 1
                elif block[dst[t]] is old:
                    inert[s] -= 1
                    if not inert[s]:
                        new_bottoms[s] = None
                        if marked[s]:
                            new.mrkd_non_btm.remove(s)
                            _mark_into(new, s, True)
                        else:
                            new.non_btm.remove(s)
                            new.btm.add(s)
                    e2 = self._in_elem(new, old)
                else:
                    continue
                h = e2.head
                tnext[t] = h
                tprev[t] = NIL
                if h != NIL:
                    tprev[h] = t
                e2.head = t
                e2.count += 1
                telem[t] = e2
            for t in inc[s]:
                work += 1
                p = src[t]
                if block[p] is not old:
                    continue
                inert[p] -= 1
                if not inert[p]:
                    new_bottoms[p] = None
                    if marked[p]:
                        old.mrkd_non_btm.remove(p)
                        _mark_into(old, p, True)
                    else:
                        old.non_btm.remove(p)
                        old.btm.add(p)
                self._push(self._in_elem(old, new), t)

        if before_cleanup is not None:
            before_cleanup(new)

        e2 = new.first
        while e2 is not None:
            work += 1
            e = e2.twin
            if e is not None:
                if not e.count and e is not old.c_ref and e is not old.co_ref:
                    if e is old.in_ref:
                        old.in_ref = None
                    old.detach(e)
                else:
                    e.twin = None
                e2.twin = None
            e2 = e2.next
        self.work += work
        self._after("execute_split", quiescent=False)
        return new

    def split_under_coconstellation(self, part: Block, big: Constellation,
                                    new_bottoms: dict[int, None]) -> Optional[Block]:
        """Split ``part`` (the half reaching the splitter) under ``big`` minus the splitter."""
        co = part.co_ref
        if co is None or not co.count:
            return None
        cocnt = self.cocnt
        marked_btm = part.mrkd_btm or ()
        if all(cocnt[s] is not None and cocnt[s].value > 0 for s in marked_btm):
            self.work += len(marked_btm)
            return None
        seeds2 = (s for s in marked_btm if cocnt[s] is None or cocnt[s].value == 0)
        side, moving = self.lockstep(part, self._sources(co), seeds2, self._excluded_co(part, big))
        if not moving:
            return None
        new = self.execute_split(part, moving, new_bottoms)
        self._note("cosplit", part, new, moving)
        self._after("split_under_coconstellation", quiescent=False)
        return new

    # -- new bottom states ----------------------------------------------------

    def _file_new_bottom(self, s: int) -> Block:
        blk = self.block[s]
        telem = self.telem
        for t in self.out[s]:
            e = telem[t]
            if e.reach is None:
                e.reach = {}
                blk.move_front(e)
            e.reach[s] = None
        self.work += len(self.out[s]) + 1
        if blk.new_btm is None:
            blk.new_btm = {}
        blk.new_btm[s] = None
        return blk

    def stabilize_new_bottoms(self, new_bottoms: Iterable[int]) -> None:
        """Split blocks with new bottom states until they are stable under every constellation."""
        stack: list[Block] = []
        pending: dict[Block, None] = {}
        for s in new_bottoms:
            pending[self._file_new_bottom(s)] = None
        stack.extend(pending)

        while stack:
            blk = stack.pop()
            if not blk.new_btm:
                continue
            need = len(blk.new_btm)
            # elements with a new-bottom list sit at the front; the first one
            # missing some new bottom state is a constellation to split under
            under = blk.first
            while under is not None:
                self.work += 1
                if under.reach is None or len(under.reach) < need:
                    break
                under = under.next
            if under is None:
                blk.new_btm = None
                e = blk.first
                while e is not None and e.reach is not None:
                    e.reach = None
                    e = e.next
                continue

            reach = under.reach
            seeds2 = (s for s in blk.new_btm if reach is None or s not in reach)
            side, moving = self.lockstep(blk, self._sources(under), seeds2,
                                         self._excluded_into(blk, under.constln))
            if not moving:  # pragma: no cover - both halves are non-empty here
                raise InvariantError("unstable block without a proper split")
            more: dict[int, None] = {}

            def move_reach(new: Block, blk=blk, moving=moving):
                telem = self.telem
                old_btm = blk.new_btm
                gone = 0
                for s in moving:
                    if s not in old_btm:
                        continue
                    del old_btm[s]
                    gone += 1
                    if new.new_btm is None:
                        new.new_btm = {}
                    new.new_btm[s] = None
                    for t in self.out[s]:
                        self.work += 1
                        e2 = telem[t]
                        e = e2.twin
                        if e.reach is not None and s in e.reach:
                            del e.reach[s]
                            if not e.reach:
                                e.reach = None
                                blk.move_back(e)
                            if e2.reach is None:
                                e2.reach = {}
                                new.move_front(e2)
                            e2.reach[s] = None
                if gone > len(old_btm):
                    # dicts keep dead slots; rebuild so later scans see only live keys
                    blk.new_btm = dict.fromkeys(old_btm)

            new = self.execute_split(blk, moving, more, before_cleanup=move_reach)
            self._note("bottom", blk, new, moving)
            for s in more:
                self._file_new_bottom(s)
            self._new_bottom_count += len(more)
            if blk.new_btm:
                stack.append(blk)
            if new.new_btm:
                stack.append(new)
        self._after("stabilize_new_bottoms", quiescent=False)

    # -- driver ---------------------------------------------------------------

    def _split_block(self, bp: Block, big: Constellation) -> None:
        new_bottoms: dict[int, None] = {}
        pieces = [bp]
        part = bp
        if bp.btm.count:
            seeds1 = chain(bp.mrkd_btm or (), bp.mrkd_non_btm or ())
            side, moving = self.lockstep(bp, seeds1, bp.btm, self._excluded_first(bp))
            if moving:
                new = self.execute_split(bp, moving, new_bottoms)
                self._note("split", bp, new, moving)
                pieces.append(new)
                part = new if side == 1 else bp
        extra = self.split_under_coconstellation(part, big, new_bottoms)
        if extra is not None:
            pieces.append(extra)
        for piece in pieces:
            self._unmark(piece)
        self._new_bottom_count += len(new_bottoms)
        self.stabilize_new_bottoms(new_bottoms)

    def _note(self, kind: str, old: Block, new: Block, moving: list[int]) -> None:
        self.splits += 1
        if self.record:
            self.events.append((self.episodes, kind, old.id, new.id, len(moving)))

    def step(self) -> bool:
        """Run one episode; return ``False`` once the partition is stable."""
        chosen = self.select_splitter()
        if chosen is None:
            return False
        splitter, big, small = chosen
        self.episodes += 1
        before = self.splits
        self._new_bottom_count = 0
        for bp in self.mark_and_detect(splitter, big, small):
            self._split_block(bp, big)
        if self.record:
            self.trace.append(f"episode {splitter.id} {big.id} {self.splits - before} {self._new_bottom_count}")
        self._after("episode", quiescent=True)
        return True

    def run(self) -> PartitionMap:
        while self.step():
            pass
        return self.partition()

    def partition(self) -> PartitionMap:
        return PartitionMap.from_keys([b.id for b in self.block])

    def work_bound(self) -> float:
        """``(m + n) * (1 + log2 n)``, the shape of the asymptotic bound."""
        n = max(self.n, 1)
        return (self.m + self.n) * (1 + math.log2(n))

    # -- debugging --------------------------------------------------------------

    def _after(self, op: str, quiescent: bool, moved=None) -> None:
        if self.debug:
            self.check(op, quiescent, moved)

    def check(self, op: str = "check", quiescent: bool = False, moved=None) -> None:
        """Recount every piece of bookkeeping from scratch.

        ``moved=(block, constellation)`` evaluates constellation membership as
        if ``block`` were still in ``constellation``; counters are only brought
        up to date by the marking step that follows splitter selection.
        """

        def fail(msg):
            raise InvariantError(f"after {op}: {msg}")

        block, inert, marked = self.block, self.inert, self.marked
        src, dst, tcnt, telem = self.src, self.dst, self.tcnt, self.telem

        def constln(b: Block) -> Constellation:
            if moved is not None and b is moved[0]:
                return moved[1]
            return b.constln

        members: dict[Block, int] = {}
        for s in range(self.n):
            b = block[s]
            members[b] = members.get(b, 0) + 1
            count = sum(1 for t in self.out[s] if block[dst[t]] is b)
            if inert[s] != count:
                fail(f"inert count of state {s} is {inert[s]}, recount {count}")
            lists = [name for name in ("btm", "non_btm", "mrkd_btm", "mrkd_non_btm")
                     if s in (getattr(b, name) or ())]
            want = ("mrkd_" if marked[s] else "") + ("non_btm" if count else "btm")
            if lists != [want]:
                fail(f"state {s} is in lists {lists}, expected [{want}]")
            if quiescent and (marked[s] or self.ccnt[s] is not None or self.cocnt[s] is not None):
                fail(f"state {s} carries episode temporaries")

        for b in self.blocks:
            listed = sum(len(x or ()) for x in (b.btm, b.non_btm, b.mrkd_btm, b.mrkd_non_btm))
            if not b.size:
                fail(f"empty block {b.id}")
            if not members.get(b, 0) == listed == b.size:
                fail(f"block {b.id} has size {b.size}, lists {listed} states, owns {members.get(b, 0)}")

        constlns = {b.constln for b in self.blocks}
        for c in constlns:
            walked, prev = [], None
            for b in c.blocks():
                if b.cprev is not prev:
                    fail(f"constellation {c.id} has a broken back link")
                walked.append(b)
                prev = b
            if prev is not c.tail or len(walked) != c.nblocks:
                fail(f"constellation {c.id} tail or block count is wrong")
            if any(b.constln is not c for b in walked):
                fail(f"constellation {c.id} lists a foreign block")
            if sum(b.size for b in walked) != c.size:
                fail(f"constellation {c.id} size {c.size}, recount {sum(b.size for b in walked)}")
            want = self.nontrivial if c.nblocks > 1 else self.trivial
            if c.registry is not want:
                fail(f"constellation {c.id} filed wrongly")
        listed_blocks = {b for c in constlns for b in c.blocks()}
        if listed_blocks != set(self.blocks):
            fail("block missing from its constellation")
        for reg in (self.nontrivial, self.trivial):
            walked = list(reg)
            if len(walked) != reg.count or any(c.registry is not reg for c in walked):
                fail(f"{reg.name} registry is inconsistent")
        if {c for reg in (self.nontrivial, self.trivial) for c in reg} != constlns:
            fail("stale constellation registration")

        # counters: one shared Count per (state, target constellation)
        for s in range(self.n):
            groups: dict[Constellation, list[int]] = {}
            for t in self.out[s]:
                groups.setdefault(constln(block[dst[t]]), []).append(t)
            seen_counts = set()
            for c, ts in groups.items():
                objs = {id(tcnt[t]) for t in ts}
                if len(objs) != 1:
                    fail(f"state {s} uses {len(objs)} counters for constellation {c.id}")
                if tcnt[ts[0]].value != len(ts):
                    fail(f"state {s} counter for constellation {c.id} is {tcnt[ts[0]].value}, recount {len(ts)}")
                if objs & seen_counts:
                    fail(f"state {s} shares a counter between constellations")
                seen_counts |= objs

        # transition lists
        filed: dict[int, Elem] = {}
        for b in self.blocks:
            seen_c = set()
            prev = None
            in_front = True
            for e in b.to_constlns():
                if e.prev is not prev:
                    fail(f"to_constlns of block {b.id} has a broken back link")
                prev = e
                if e.block is not b:
                    fail(f"element of block {b.id} owned by block {e.block.id}")
                if e.constln in seen_c:
                    fail(f"block {b.id} has two elements for constellation {e.constln.id}")
                seen_c.add(e.constln)
                ts = list(self.transitions(e))
                if len(ts) != e.count:
                    fail(f"element count {e.count} of block {b.id}, recount {len(ts)}")
                for i, t in enumerate(ts):
                    if self.tprev[t] != (ts[i - 1] if i else NIL):
                        fail(f"transition list of block {b.id} has a broken back link")
                    filed[t] = e
                if e.twin is not None:
                    fail(f"element of block {b.id} keeps a twin link")
                if quiescent and not e.count:
                    fail(f"empty element for constellation {e.constln.id} in block {b.id}")
                if e.reach is not None:
                    if quiescent:
                        fail(f"leftover new-bottom list in block {b.id}")
                    if not in_front:
                        fail(f"element with a new-bottom list behind one without in block {b.id}")
                    for s in e.reach:
                        if block[s] is not b or s not in (b.new_btm or ()):
                            fail(f"new-bottom list of block {b.id} holds foreign state {s}")
                else:
                    in_front = False
            if prev is not b.last:
                fail(f"to_constlns of block {b.id} has a wrong tail")
            own = [e for e in b.to_constlns() if e.constln is constln(b)]
            if (own[0] if own else None) is not b.in_ref:
                fail(f"in-constellation reference of block {b.id} is wrong")
            if quiescent and (b.c_ref or b.co_ref or b.new_btm or b.mrkd_btm or b.mrkd_non_btm):
                fail(f"block {b.id} carries episode temporaries")
        for t in range(self.m):
            sb, tb = block[src[t]], block[dst[t]]
            e = telem[t]
            if sb is tb:
                if e is not None:
                    fail(f"inert transition {t} is filed")
                continue
            if e is None or filed.get(t) is not e:
                fail(f"non-inert transition {t} is not filed")
            if e.block is not sb or e.constln is not constln(tb):
                fail(f"transition {t} filed under the wrong block or constellation")


def run_refinement(k: KripkeStructure, pi0: Optional[PartitionMap] = None, debug: bool = False) -> PartitionMap:
    return FastRefiner(k, pi0, debug=debug).run()
