"""Seeded instance generators: random systems and the two scaling families."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Union

from .model import KripkeStructure, Lts, TAU

SHAPES = ("random", "random-lts", "tau-sequence", "tau-tree")


@dataclass(frozen=True)
class GenSpec:
    """What to generate.

    ``size`` is the state count for random shapes, ``n`` for ``(a.tau)^n``
    sequences and the depth for tau-trees.  ``density`` is the expected
    out-degree of random systems and ``labels`` the number of atomic
    propositions (Kripke) or visible actions (LTS).
    """

    shape: str
    size: int
    seed: int = 0
    density: float = 2.0
    labels: int = 2
    tau_density: float = 0.4

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; choose one of {', '.join(SHAPES)}")
        if self.size < 1:
            raise ValueError("size must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        if self.density < 0 or self.labels < 0 or not 0 <= self.tau_density <= 1:
            raise ValueError("density, labels and tau_density must be non-negative (tau_density at most 1)")

    def build(self) -> Union[KripkeStructure, Lts]:
        if self.shape == "tau-sequence":
            return tau_sequence(self.size)
        if self.shape == "tau-tree":
            return tau_tree(self.size)
        rng = random.Random(self.seed)
        m = round(self.density * self.size)
        if self.shape == "random":
            return random_kripke(rng, self.size, m, self.labels)
        return random_lts(rng, self.size, m, self.labels, self.tau_density)


def tau_sequence(n: int) -> Lts:
    """``s0 -a-> s1 -tau-> s2 -a-> ... -tau-> s2n``: 2n+1 states, minimal form has n+1."""
    trans = []
    for i in range(n):
        trans.append((2 * i, 1, 2 * i + 1))
        trans.append((2 * i + 1, 0, 2 * i + 2))
    return Lts(2 * n + 1, (TAU, "a"), tuple(trans))


def tau_tree(depth: int) -> Lts:
    """Binary tree of tau steps over levels ``0..depth-1``.

    Node ``i`` (heap numbering) has tau children ``2i+1`` and ``2i+2``; each
    node on level ``depth-1`` has one step with its own action ``a<j>`` to a
    fresh leaf on level ``depth``.
    """
    internal = 2 ** depth - 1
    first = 2 ** (depth - 1) - 1
    trans = []
    for i in range(first):
        trans.append((i, 0, 2 * i + 1))
        trans.append((i, 0, 2 * i + 2))
    actions = [TAU]
    for j, node in enumerate(range(first, internal)):
        actions.append(f"a{j}")
        trans.append((node, j + 1, internal + j))
    return Lts(internal + (internal - first), tuple(actions), tuple(trans))


def random_kripke(rng: random.Random, n: int, m: int, n_props: int = 2) -> KripkeStructure:
    """Total random structure with about ``max(m, n)`` transitions and random label sets."""
    ap = tuple("pqrstuvw"[i] if i < 8 else f"p{i}" for i in range(n_props))
    trans = {(s, rng.randrange(n)) for s in range(n)}
    for _ in range(max(0, m - n)):
        trans.add((rng.randrange(n), rng.randrange(n)))
    labels = tuple(frozenset(p for p in ap if rng.random() < 0.5) for _ in range(n))
    return KripkeStructure(n, ap, tuple(sorted(trans)), labels)


def random_lts(rng: random.Random, n: int, m: int, n_actions: int = 2, tau_density: float = 0.4) -> Lts:
    """Random LTS where each transition is tau with probability ``tau_density``."""
    actions = (TAU,) + tuple(chr(ord("a") + i) if i < 26 else f"a{i}" for i in range(n_actions))
    trans = set()
    for _ in range(m):
        if n_actions == 0 or rng.random() < tau_density:
            a = 0
        else:
            a = rng.randint(1, n_actions)
        trans.add((rng.randrange(n), a, rng.randrange(n)))
    return Lts(n, actions, tuple(sorted(trans)))
