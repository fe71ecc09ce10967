import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import product
from math import comb, factorial

import numpy as np
import pandas as pd

import config
from channels import Trace, canonical, render
from errors import SizeGuardExceeded

logger = logging.getLogger(__name__)


def merge_count(*traces):
    """Upper bound on |Int(y1, ..., yn)|: the multinomial of the trace lengths."""
    lengths = [len(y) for y in traces]
    total = factorial(sum(lengths))
    for k in lengths:
        total //= factorial(k)
    return total


def _check_guard(count, ceiling):
    ceiling = config.size_guard() if ceiling is None else ceiling
    if count > ceiling:
        logger.warning(f"⚠️ Interleaving would enumerate {count} merges (guard {ceiling})")
        raise SizeGuardExceeded(count, ceiling)


@dataclass(frozen=True)
class InterleavingSet:
    sources: tuple
    traces: tuple

    @cached_property
    def _members(self):
        return frozenset(self.traces)

    def __iter__(self):
        return iter(self.traces)

    def __len__(self):
        return len(self.traces)

    def __contains__(self, y):
        return y in self._members


def _merges(a, b):
    """All order-preserving merges of two action tuples."""

    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a):
            return frozenset([b[j:]])
        if j == len(b):
            return frozenset([a[i:]])
        left = {(a[i],) + rest for rest in go(i + 1, j)}
        right = {(b[j],) + rest for rest in go(i, j + 1)}
        return frozenset(left | right)

    return go(0, 0)


def interleave_pair(y1, y2, ceiling=None):
    _check_guard(comb(len(y1) + len(y2), len(y1)), ceiling)
    merged = canonical(Trace(m) for m in _merges(y1.actions, y2.actions))
    return InterleavingSet(((y1,), (y2,)), merged)


def interleave_tuple(ys, ceiling=None):
    """Int(y1, Int(y2, ..., yn)) for a single tuple of traces."""
    ys = tuple(ys)
    _check_guard(merge_count(*ys), ceiling)
    if len(ys) == 1:
        return InterleavingSet(tuple((y,) for y in ys), (ys[0],))
    acc = {ys[-1].actions}
    for y in reversed(ys[:-1]):
        acc = set().union(*(_merges(y.actions, rest) for rest in acc))
    return InterleavingSet(tuple((y,) for y in ys), canonical(Trace(m) for m in acc))


def interleave_sets(Y1, Y2, ceiling=None):
    Y1, Y2 = tuple(Y1), tuple(Y2)
    _check_guard(sum(comb(len(a) + len(b), len(a)) for a, b in product(Y1, Y2)), ceiling)
    merged = set()
    for a, b in product(Y1, Y2):
        merged |= _merges(a.actions, b.actions)
    logger.debug(f"Int over {len(Y1)}x{len(Y2)} pairs -> {len(merged)} traces")
    return InterleavingSet((Y1, Y2), canonical(Trace(m) for m in merged))


def interleave_n(*Ys, ceiling=None):
    """Right fold of the binary set interleaving."""
    if not Ys:
        raise ValueError("interleave_n needs at least one trace set")
    Ys = tuple(tuple(Y) for Y in Ys)
    _check_guard(sum(merge_count(*ys) for ys in product(*Ys)), ceiling)
    acc = tuple(Ys[-1])
    for Y in reversed(Ys[:-1]):
        acc = interleave_sets(Y, acc, ceiling=ceiling).traces
    return InterleavingSet(Ys, canonical(acc))


# --- POS MATRIX & INDEPENDENCE ---

@dataclass(frozen=True, eq=False)
class PosMatrix:
    pairs: tuple
    traces: tuple
    matrix: np.ndarray

    def to_frame(self):
        return pd.DataFrame(self.matrix.astype(int),
                            index=[render(p) for p in self.pairs],
                            columns=[render(y) for y in self.traces])


def pos_matrix(Y1, Y2, ceiling=None):
    """0/1 matrix: entry [(y1, y2), y] is 1 iff y is a merge of y1 and y2."""
    pairs = tuple(product(Y1, Y2))
    _check_guard(sum(comb(len(a) + len(b), len(a)) for a, b in pairs), ceiling)
    merges = {pair: interleave_pair(*pair, ceiling=ceiling) for pair in pairs}
    traces = canonical(y for s in merges.values() for y in s)
    col = {y: j for j, y in enumerate(traces)}
    matrix = np.zeros((len(pairs), len(traces)), dtype=np.int8)
    for i, pair in enumerate(pairs):
        for y in merges[pair]:
            matrix[i, col[y]] = 1
    return PosMatrix(pairs, traces, matrix)


@dataclass(frozen=True)
class Certificate:
    holds: bool
    witness: tuple = None   # (y1, y2, y1', y2', y) when two pairs share a merge


def independence_certificate(Y1, Y2, ceiling=None):
    """Every merge has a unique decomposition, or a witness that it does not."""
    owner = {}
    for y1, y2 in product(Y1, Y2):
        for y in interleave_pair(y1, y2, ceiling=ceiling):
            first = owner.setdefault(y, (y1, y2))
            if first != (y1, y2):
                return Certificate(False, (first[0], first[1], y1, y2, y))
    return Certificate(True)


def disjoint_actions(Y1, Y2):
    """No action occurs in traces of both sets (sufficient for a unique decomposition)."""
    a1 = {a for y in Y1 for a in y}
    a2 = {a for y in Y2 for a in y}
    return not (a1 & a2)


def can_alter_leakage(Y1, Y2, ceiling=None):
    return not independence_certificate(Y1, Y2, ceiling=ceiling).holds
