import random

import pytest

from stutterbisim.generate import random_kripke, random_lts
from stutterbisim.model import KripkeStructure, Lts


def _lab(*props):
    return frozenset(props)


def three_way_system() -> KripkeStructure:
    """A block that needs a new-bottom split to come apart into three classes.

    Block B' = {n1, n2, n3} (label p) sits above C = {n4} (q) and the splitter
    {n5} (r).

    Ids: n5 = 0, n1 = 1, n2 = 2, n3 = 3, n4 = 4, sink = 5.  n1 and n2 reach C
    directly, n3 is bottom and only reaches n5; n2 also reaches n5 directly.
    """
    trans = ((1, 3), (2, 3), (3, 0), (2, 0), (1, 4), (2, 4), (4, 5), (0, 5), (5, 5))
    labels = (_lab("r"), _lab("p"), _lab("p"), _lab("p"), _lab("q"), _lab("q"))
    return KripkeStructure(6, ("p", "q", "r"), trans, labels)


N1, N2, N3, N4, N5, SINK = 1, 2, 3, 4, 0, 5


@pytest.fixture
def three_way():
    return three_way_system()


def kripke_cases(seed: int, count: int, max_n: int = 50, max_props: int = 3):
    """Seeded random Kripke structures with n <= max_n and m <= 4n."""
    rng = random.Random(seed)
    for _ in range(count):
        n = rng.randint(1, max_n)
        yield random_kripke(rng, n, rng.randint(n, 4 * n), rng.randint(1, max_props))


def lts_cases(seed: int, count: int, max_n: int = 40, max_actions: int = 4, tau_density: float = 0.4):
    rng = random.Random(seed)
    for _ in range(count):
        n = rng.randint(1, max_n)
        yield random_lts(rng, n, rng.randint(0, 3 * n), rng.randint(1, max_actions - 1), tau_density)


def kripke_as_lts(k: KripkeStructure, divergence: bool = False) -> Lts:
    """Independent encoding for oracle checks.

    A step between equally labelled states becomes tau, any other step is
    labelled with the target's label, and each state shows its own label on
    a visible self-loop.  Divergence-blind stuttering equivalence on ``k``
    is branching bisimilarity on this LTS.
    """
    names = {}

    def name(lab):
        return names.setdefault(lab, "L" + ",".join(sorted(lab)))

    triples = []
    for s, t in k.transitions:
        if k.labels[s] == k.labels[t]:
            if s != t:
                triples.append((s, "tau", t))
            elif divergence:
                triples.append((s, "tau", s))
        else:
            triples.append((s, "to" + name(k.labels[t]), t))
    for s in range(k.n_states):
        triples.append((s, "own" + name(k.labels[s]), s))
    return Lts.from_named(k.n_states, triples)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
