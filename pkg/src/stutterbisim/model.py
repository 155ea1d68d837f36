"""Kripke structures, labelled transition systems and their text formats.

Two concrete syntaxes are supported:

* Aldebaran ``.aut`` for LTSs::

      des (0,2,2)
      (0,"a",1)
      (1,"tau",0)

* a line-based Kripke format::

      kripke 2 2
      label 0 p,q
      label 1 -
      trans 0 1
      trans 1 1

Both readers accept LF or CRLF line endings; writers emit LF and sort
transitions so that output is deterministic.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

TAU = "tau"
INTERNAL_SPELLINGS = frozenset({"tau", "i"})

Text = Union[bytes, str]


class FormatError(ValueError):
    """Base class for malformed systems, both in files and in constructors."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ParseError(FormatError):
    pass


class StateRangeError(FormatError):
    pass


class DuplicateTransitionError(FormatError):
    pass


class TotalityError(FormatError):
    pass


@dataclass(frozen=True)
class KripkeStructure:
    """A Kripke structure with dense state ids ``0..n_states-1``.

    ``labels[s]`` is the set of atomic propositions holding in ``s``; every
    proposition must appear in ``ap``.  The transition relation must be total.
    """

    n_states: int
    ap: tuple[str, ...]
    transitions: tuple[tuple[int, int], ...]
    labels: tuple[frozenset[str], ...]

    def __post_init__(self):
        object.__setattr__(self, "ap", tuple(self.ap))
        object.__setattr__(self, "transitions", tuple((int(s), int(t)) for s, t in self.transitions))
        shared: dict[frozenset, frozenset] = {}
        object.__setattr__(self, "labels", tuple(
            shared.setdefault(lab, lab) for lab in map(frozenset, self.labels)))
        n = self.n_states
        if n < 0:
            raise FormatError("negative state count")
        if len(self.labels) != n:
            raise FormatError(f"expected {n} labels, got {len(self.labels)}")
        known = set(self.ap)
        if len(known) != len(self.ap):
            raise FormatError("duplicate atomic proposition")
        for s, lab in enumerate(self.labels):
            unknown = lab - known
            if unknown:
                raise FormatError(f"state {s} carries unknown propositions {sorted(unknown)}")
        seen = set()
        has_out = [False] * n
        for s, t in self.transitions:
            if not (0 <= s < n and 0 <= t < n):
                raise StateRangeError(f"transition ({s},{t}) out of range for {n} states")
            if (s, t) in seen:
                raise DuplicateTransitionError(f"duplicate transition ({s},{t})")
            seen.add((s, t))
            has_out[s] = True
        for s in range(n):
            if not has_out[s]:
                raise TotalityError(f"state {s} has no outgoing transition")

    @property
    def n_transitions(self) -> int:
        return len(self.transitions)

    def successors(self) -> list[list[int]]:
        succ: list[list[int]] = [[] for _ in range(self.n_states)]
        for s, t in self.transitions:
            succ[s].append(t)
        return succ

    def canonical(self) -> "KripkeStructure":
        """Same system with transitions sorted and ``ap`` ordered by first use."""
        return parse_kripke(write_kripke(self))


@dataclass(frozen=True)
class Lts:
    """A labelled transition system.

    ``actions[0]`` is always the internal action ``tau``.  ``initial`` is kept
    for round-tripping ``.aut`` files only; reductions ignore it.
    """

    n_states: int
    actions: tuple[str, ...]
    transitions: tuple[tuple[int, int, int], ...]
    initial: int = 0

    def __post_init__(self):
        actions = tuple(self.actions)
        if not actions or actions[0] != TAU:
            raise FormatError("actions must start with the internal action 'tau'")
        if len(set(actions)) != len(actions):
            raise FormatError("duplicate action name")
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "transitions", tuple((int(s), int(a), int(t)) for s, a, t in self.transitions))
        n, k = self.n_states, len(actions)
        if n < 0:
            raise FormatError("negative state count")
        if n and not 0 <= self.initial < n:
            raise StateRangeError(f"initial state {self.initial} out of range")
        seen = set()
        for s, a, t in self.transitions:
            if not (0 <= s < n and 0 <= t < n):
                raise StateRangeError(f"transition ({s},{a},{t}) out of range for {n} states")
            if not 0 <= a < k:
                raise StateRangeError(f"action id {a} out of range")
            if (s, a, t) in seen:
                raise DuplicateTransitionError(f"duplicate transition ({s},{actions[a]},{t})")
            seen.add((s, a, t))

    @property
    def n_transitions(self) -> int:
        return len(self.transitions)

    def named_transitions(self) -> set[tuple[int, str, int]]:
        return {(s, self.actions[a], t) for s, a, t in self.transitions}

    @classmethod
    def from_named(cls, n_states: int, transitions: Iterable[tuple[int, str, int]], initial: int = 0) -> "Lts":
        """Build from ``(src, action-name, dst)`` triples; ``i`` also means tau."""
        index = {TAU: 0}
        actions = [TAU]
        trans = []
        for s, name, t in transitions:
            if name in INTERNAL_SPELLINGS:
                name = TAU
            if name not in index:
                index[name] = len(actions)
                actions.append(name)
            trans.append((s, index[name], t))
        return cls(n_states, tuple(actions), tuple(trans), initial)


@dataclass(frozen=True)
class PartitionMap:
    """Canonical encoding of a partition: each state maps to the least state of its class."""

    class_of: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "class_of", tuple(self.class_of))
        for s, c in enumerate(self.class_of):
            if c > s or self.class_of[c] != c:
                raise ValueError(f"not a canonical partition map at state {s}")

    @classmethod
    def from_keys(cls, keys: Sequence) -> "PartitionMap":
        """States with equal ``keys[s]`` share a class."""
        first: dict = {}
        return cls(tuple(first.setdefault(k, s) for s, k in enumerate(keys)))

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]], n: int) -> "PartitionMap":
        keys = [-1] * n
        for i, block in enumerate(blocks):
            for s in block:
                keys[s] = i
        if -1 in keys:
            raise ValueError(f"state {keys.index(-1)} is in no block")
        return cls.from_keys(keys)

    def __len__(self) -> int:
        return len(self.class_of)

    @property
    def n_classes(self) -> int:
        return sum(1 for s, c in enumerate(self.class_of) if s == c)

    def blocks(self) -> list[list[int]]:
        by_rep: dict[int, list[int]] = {}
        for s, c in enumerate(self.class_of):
            by_rep.setdefault(c, []).append(s)
        return list(by_rep.values())

    def same(self, s: int, t: int) -> bool:
        return self.class_of[s] == self.class_of[t]


# -- text formats ---------------------------------------------------------

_AUT_HEADER = re.compile(r"des\s*\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)\s*$")
_INT = re.compile(r"\s*(\d+)\s*$")


def _lines(text: Text) -> list[str]:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    lines = text.split("\n")
    return [line[:-1] if line.endswith("\r") else line for line in lines]


def _int_field(raw: str, lineno: int) -> int:
    m = _INT.match(raw)
    if not m:
        raise ParseError(f"expected a state number, got {raw.strip()!r}", lineno)
    return int(m.group(1))


def _aut_line(line: str, lineno: int) -> tuple[int, str, int]:
    body = line.strip()
    if not (body.startswith("(") and body.endswith(")")):
        raise ParseError(f"malformed transition {line!r}", lineno)
    body = body[1:-1]
    first, last = body.find(","), body.rfind(",")
    if first < 0 or first == last:
        raise ParseError(f"malformed transition {line!r}", lineno)
    src = _int_field(body[:first], lineno)
    dst = _int_field(body[last + 1:], lineno)
    label = body[first + 1:last].strip()
    if len(label) >= 2 and label[0] == '"' and label[-1] == '"':
        label = label[1:-1]
    elif '"' in label or not label:
        raise ParseError(f"malformed label in {line!r}", lineno)
    return src, label, dst


def parse_aut(text: Text) -> Lts:
    """Parse an Aldebaran file; ``tau`` and ``i`` both denote the internal action."""
    lines = _lines(text)
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ParseError("empty input", 1)
    header = _AUT_HEADER.match(lines[0].strip())
    if not header:
        raise ParseError("expected header 'des (<init>,<m>,<n>)'", 1)
    init, m, n = (int(g) for g in header.groups())
    if n and init >= n:
        raise StateRangeError(f"initial state {init} out of range", 1)

    index = {TAU: 0}
    actions = [TAU]
    trans = []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            raise ParseError("blank line inside transition list", lineno)
        src, label, dst = _aut_line(line, lineno)
        if src >= n or dst >= n:
            raise StateRangeError(f"state id out of range (n={n})", lineno)
        if label in INTERNAL_SPELLINGS:
            label = TAU
        a = index.get(label)
        if a is None:
            a = index[label] = len(actions)
            actions.append(label)
        if (src, a, dst) in seen:
            raise DuplicateTransitionError(f"duplicate transition ({src},{label},{dst})", lineno)
        seen.add((src, a, dst))
        trans.append((src, a, dst))
    if len(trans) != m:
        raise ParseError(f"header announces {m} transitions, found {len(trans)}", 1)
    return Lts(n, tuple(actions), tuple(trans), init)


def _quote(label: str) -> str:
    return '"' + label + '"'


def write_aut(lts: Lts) -> bytes:
    """Serialize with transitions sorted by (src, action name, dst)."""
    rows = sorted((s, lts.actions[a], t) for s, a, t in lts.transitions)
    out = [f"des ({lts.initial},{len(rows)},{lts.n_states})\n"]
    out.extend(f"({s},{_quote(name)},{t})\n" for s, name, t in rows)
    return "".join(out).encode("utf-8")


def parse_kripke(text: Text) -> KripkeStructure:
    lines = [line.strip() for line in _lines(text)]
    numbered = [(i, line) for i, line in enumerate(lines, start=1) if line]
    if not numbered:
        raise ParseError("empty input", 1)
    lineno, header = numbered[0]
    parts = header.split()
    if len(parts) != 3 or parts[0] != "kripke" or not (parts[1].isdigit() and parts[2].isdigit()):
        raise ParseError("expected header 'kripke <n> <m>'", lineno)
    n, m = int(parts[1]), int(parts[2])

    labels: list[frozenset[str] | None] = [None] * n
    ap: dict[str, None] = {}
    trans = []
    seen = set()
    has_out = [False] * n
    for lineno, line in numbered[1:]:
        parts = line.split()
        if parts[0] == "label" and len(parts) in (2, 3):
            state = _int_field(parts[1], lineno)
            if state >= n:
                raise StateRangeError(f"state {state} out of range (n={n})", lineno)
            if labels[state] is not None:
                raise ParseError(f"state {state} labelled twice", lineno)
            props = parts[2] if len(parts) == 3 else "-"
            names = [] if props == "-" else props.split(",")
            if any(not p for p in names):
                raise ParseError(f"malformed proposition list {props!r}", lineno)
            for p in names:
                ap.setdefault(p)
            labels[state] = frozenset(names)
        elif parts[0] == "trans" and len(parts) == 3:
            src, dst = _int_field(parts[1], lineno), _int_field(parts[2], lineno)
            if src >= n or dst >= n:
                raise StateRangeError(f"state id out of range (n={n})", lineno)
            if (src, dst) in seen:
                raise DuplicateTransitionError(f"duplicate transition ({src},{dst})", lineno)
            seen.add((src, dst))
            has_out[src] = True
            trans.append((src, dst))
        else:
            raise ParseError(f"unrecognised line {line!r}", lineno)
    if len(trans) != m:
        raise ParseError(f"header announces {m} transitions, found {len(trans)}", numbered[0][0])
    for s in range(n):
        if labels[s] is None:
            raise ParseError(f"state {s} has no label line")
        if not has_out[s]:
            raise TotalityError(f"state {s} has no outgoing transition")
    return KripkeStructure(n, tuple(ap), tuple(trans), tuple(labels))


def write_kripke(k: KripkeStructure) -> bytes:
    """Serialize with propositions sorted by name and transitions by (src, dst)."""
    out = [f"kripke {k.n_states} {k.n_transitions}\n"]
    for s, lab in enumerate(k.labels):
        props = ",".join(sorted(lab)) if lab else "-"
        out.append(f"label {s} {props}\n")
    out.extend(f"trans {s} {t}\n" for s, t in sorted(k.transitions))
    return "".join(out).encode("utf-8")


def read_system(text: Text) -> Union[KripkeStructure, Lts]:
    """Dispatch on the header: ``des`` means .aut, ``kripke`` the Kripke format."""
    head = text[:64].lstrip()
    if isinstance(head, bytes):
        head = head.decode("utf-8", "replace")
    if head.startswith("des"):
        return parse_aut(text)
    if head.startswith("kripke"):
        return parse_kripke(text)
    raise ParseError("unknown format: expected a 'des' or 'kripke' header", 1)


def write_system(system: Union[KripkeStructure, Lts]) -> bytes:
    if isinstance(system, Lts):
        return write_aut(system)
    return write_kripke(system)
