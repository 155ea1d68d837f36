"""Benchmark harness: time reductions over instance suites and emit CSV rows."""

from __future__ import annotations

import csv
import gc
import statistics
import sys
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Sequence

from .equiv import METRICS_FIELDS, NaiveCapExceeded, metrics_row, timed_reduce
from .generate import tau_sequence, tau_tree
from .model import read_system

BENCH_FIELDS = METRICS_FIELDS + ("work_units",)

SEQUENCE_SIZES = tuple(2 ** i for i in range(10, 17))
TREE_DEPTHS = tuple(range(10, 21))


def sequence_suite(sizes: Sequence[int] = SEQUENCE_SIZES) -> Iterator[tuple[str, object, str]]:
    for n in sizes:
        yield f"atau_{n}", tau_sequence(n), "branching"


def tree_suite(depths: Sequence[int] = TREE_DEPTHS) -> Iterator[tuple[str, object, str]]:
    for d in depths:
        yield f"tree_{d}", tau_tree(d), "branching"


def files_suite(directory: Path, eq: str = "branching") -> Iterator[tuple[str, object, str]]:
    """Every ``.aut`` file in ``directory``, in name order, reduced modulo ``eq``."""
    for path in sorted(Path(directory).glob("*.aut")):
        yield path.stem, read_system(path.read_bytes()), eq


def time_cell(system, eq: str, engine: str, repeat: int = 1, naive_cap: Optional[int] = None):
    """Median wall time over ``repeat`` runs, with the garbage collector paused."""
    times = []
    result = None
    enabled = gc.isenabled()
    try:
        for _ in range(max(1, repeat)):
            gc.collect()
            gc.disable()
            result, seconds = timed_reduce(system, eq, engine, naive_cap)
            times.append(seconds)
            gc.enable()
    finally:
        if enabled:
            gc.enable()
    return result, statistics.median(times)


def run_bench(instances: Iterable[tuple[str, object, str]], engines: Sequence[str], repeat: int = 1,
              naive_cap: Optional[int] = None,
              on_row: Optional[Callable[[dict], None]] = None) -> list[dict]:
    """Time every (instance, engine) cell; cells over the naive cap are skipped with a note."""
    rows = []
    for name, system, eq in instances:
        for engine in engines:
            try:
                result, seconds = time_cell(system, eq, engine, repeat, naive_cap)
            except NaiveCapExceeded as exc:
                print(f"skip {name}/{engine}: {exc}", file=sys.stderr)
                continue
            row = metrics_row(name, system, result, seconds)
            row["work_units"] = "" if result.stats.work is None else result.stats.work
            rows.append(row)
            if on_row is not None:
                on_row(row)
    return rows


def doubling_ratios(rows: Sequence[dict], engine: str) -> list[tuple[str, str, float]]:
    """``T(next) / T(prev)`` for consecutive rows of one engine, in input order."""
    mine = [r for r in rows if r["engine"] == engine]
    out = []
    for prev, cur in zip(mine, mine[1:]):
        t0, t1 = float(prev["seconds"]), float(cur["seconds"])
        out.append((prev["name"], cur["name"], t1 / t0 if t0 > 0 else float("inf")))
    return out


def csv_writer(stream, fields: Sequence[str] = BENCH_FIELDS) -> csv.DictWriter:
    writer = csv.DictWriter(stream, fieldnames=list(fields), lineterminator="\n")
    writer.writeheader()
    return writer
