"""Deterministic, publicly replayable selection of card indices.

Draws derive from SHA-256 in counter mode: digest(seed | round | counter) is
read as a 256-bit integer and mapped to 1..N by rejection sampling (values in
the partial final block are rejected, so every index is exactly equally
likely). Anyone holding the published seed can recompute every draw; golden
vectors are frozen in the test suite to pin the construction.
"""

from __future__ import annotations

import hashlib
from typing import Iterable, Iterator


class SamplingExhausted(Exception):
    """Every index has been drawn: the sample is the whole population."""


def _digest_int(seed: str, round_id: str, counter: int) -> int:
    material = f"{seed}|{round_id}|{counter}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(material).digest(), "big")


def index_stream(seed: str, round_id: str, n: int) -> Iterator[int]:
    """Unbiased uniform indices in 1..n, in hash-counter order."""
    if n < 1:
        raise ValueError("population must have at least one index")
    span = 1 << 256
    limit = span - span % n
    counter = 0
    while True:
        v = _digest_int(seed, round_id, counter)
        counter += 1
        if v < limit:
            yield 1 + v % n


def draw_indices(
    seed: str,
    round_id: str,
    n: int,
    count: int,
    replacement: bool = False,
    already_drawn: Iterable[int] = (),
) -> list[int]:
    """The round's card draws: `count` indices in 1..n, in draw order.

    Without replacement, indices drawn in earlier rounds (already_drawn) and
    repeats within the stream are skipped. Deterministic for fixed arguments.

    Raises SamplingExhausted if the request cannot be met without replacement;
    at that point the audit has inspected every card and is a full hand count.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return []
    if replacement:
        stream = index_stream(seed, round_id, n)
        return [next(stream) for _ in range(count)]
    taken = set(already_drawn)
    if len(taken) + count > n:
        raise SamplingExhausted(
            f"{count} more draws requested but only {n - len(taken)} of {n} indices remain"
        )
    out: list[int] = []
    for idx in index_stream(seed, round_id, n):
        if idx in taken:
            continue
        taken.add(idx)
        out.append(idx)
        if len(out) == count:
            return out
    raise AssertionError("unreachable: stream is infinite")
