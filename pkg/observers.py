import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import pandas as pd

import config
from channels import (TAU, Channel, Trace, canonical, matrix_violations, ordered_unique, out,
                      render)
from errors import DimensionMismatch, SolverError, ValidationError
from simplex import INFEASIBLE, LinearProgram, solve_lp

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Observer:
    """Row-stochastic map from output traces to what an attacker sees."""
    outputs: tuple
    views: tuple
    matrix: np.ndarray
    name: str = ""

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        matrix.flags.writeable = False
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "views", tuple(self.views))
        object.__setattr__(self, "matrix", matrix)
        problems = matrix_violations(self.outputs, self.views, matrix)
        if problems:
            raise ValidationError([f"observer {self.name or '?'}: {p}" for p in problems])

    def as_channel(self):
        return Channel(self.outputs, self.views, self.matrix, name=self.name)

    def aligned(self, outputs):
        """Same observer with rows in the given order."""
        outputs = tuple(outputs)
        if outputs == self.outputs:
            return self
        if set(outputs) != set(self.outputs) or len(outputs) != len(self.outputs):
            raise DimensionMismatch(f"observer {self.name or '?'} is defined on a different trace set")
        row = {y: i for i, y in enumerate(self.outputs)}
        return Observer(outputs, self.views, self.matrix[[row[y] for y in outputs]], name=self.name)

    def to_frame(self):
        return pd.DataFrame(self.matrix,
                            index=[render(y) for y in self.outputs],
                            columns=[render(z) for z in self.views])


@dataclass(frozen=True)
class Equivalence:
    name: str
    canonicalize: object

    def equivalent(self, y1, y2):
        return self.canonicalize(y1) == self.canonicalize(y2)

    def classes(self, Y):
        groups = {}
        for y in Y:
            groups.setdefault(self.canonicalize(y), []).append(y)
        return [tuple(g) for g in groups.values()]


def _same(y):
    return y


def _erase_tau(y):
    return Trace(a for a in y if not a.is_tau)


def _erase_names(y):
    return Trace(a if a.is_tau else out("*", a.value) for a in y)


def _one_class(y):
    return "*"


STRONG = Equivalence("strong", _same)
WEAK = Equivalence("weak", _erase_tau)
NAME_BLIND = Equivalence("name-blind", _erase_names)
UNIVERSAL = Equivalence("universal", _one_class)

EQUIVALENCES = {eq.name: eq for eq in (STRONG, WEAK, NAME_BLIND, UNIVERSAL)}


def _ordered(Y):
    Y = tuple(Y)
    return canonical(Y) if all(isinstance(y, Trace) for y in Y) else ordered_unique(Y)


# --- DETERMINISTIC OBSERVERS ---

def det_observer(eq, Y):
    """Deterministic ~-observer: each trace is seen as the canonical form of its class."""
    Y = _ordered(Y)
    labels = [eq.canonicalize(y) for y in Y]
    views = ordered_unique(labels)
    col = {z: j for j, z in enumerate(views)}
    matrix = np.zeros((len(Y), len(views)))
    for i, z in enumerate(labels):
        matrix[i, col[z]] = 1.0
    return Observer(Y, views, matrix, name=eq.name)


def perfect_observer(Y):
    return det_observer(STRONG, Y)


def unit_observer(Y):
    Y = _ordered(Y)
    return Observer(Y, ("unit",), np.ones((len(Y), 1)), name="unit")


def explicit_observer(outputs, views, matrix, name="explicit"):
    return Observer(tuple(outputs), tuple(views), matrix, name=name)


# --- PROBABILISTIC OBSERVERS ---

def _conf_table(alphabet, conf):
    """Per-action outcome lists [(observed action or None, p)]; unlisted actions are seen exactly."""
    table = {}
    for a in alphabet:
        if a in conf:
            dist = conf[a]
            pairs = dist.items() if hasattr(dist, "items") else dist
            table[a] = [(b, float(p)) for b, p in pairs if p > 0]
        else:
            table[a] = [(a, 1.0)]
    return table


def per_action_confusion_observer(Y, conf, name="per-action"):
    """
    Every action of a trace is independently replaced (or deleted, encoded as None)
    according to conf. Observed traces are integer-coded in base |alphabet|+1 so that
    code order equals canonical trace order; rows are accumulated down a prefix trie.
    """
    Y = _ordered(Y)
    alphabet = sorted({a for y in Y for a in y})
    table = _conf_table(alphabet, conf)
    seen = sorted({b for outcomes in table.values() for b, _ in outcomes if b is not None})
    digit = {b: k + 1 for k, b in enumerate(seen)}
    base = len(seen) + 1
    longest = max((len(y) for y in Y), default=0)
    dtype = np.int64 if base ** (longest + 1) < 2 ** 62 else object

    trie = {}
    for i, y in enumerate(Y):
        node = trie
        for a in y:
            node = node.setdefault(a, {})
        node[None] = i

    rows = {}
    stack = [(trie, np.zeros(1, dtype=dtype), np.ones(1))]
    while stack:
        node, codes, probs = stack.pop()
        for a, child in node.items():
            if a is None:
                rows[child] = (codes, probs)
                continue
            parts_c, parts_p = [], []
            for b, p in table[a]:
                parts_c.append(codes if b is None else codes * base + digit[b])
                parts_p.append(probs * p)
            merged, inverse = np.unique(np.concatenate(parts_c), return_inverse=True)
            stack.append((child, merged, np.bincount(inverse.ravel(), weights=np.concatenate(parts_p))))

    all_codes = np.unique(np.concatenate([rows[i][0] for i in range(len(Y))]))
    matrix = np.zeros((len(Y), len(all_codes)))
    for i in range(len(Y)):
        codes, probs = rows[i]
        matrix[i, np.searchsorted(all_codes, codes)] = probs

    letters = {k: b for b, k in digit.items()}
    views = []
    for code in all_codes:
        code, acts = int(code), []
        while code:
            code, d = divmod(code, base)
            acts.append(letters[d])
        views.append(Trace(reversed(acts)))
    logger.debug(f"Per-action observer: {len(Y)} traces -> {len(views)} views")
    return Observer(Y, tuple(views), matrix, name=name)


def _misplacements(y, correct):
    taus = [i for i, a in enumerate(y) if a.is_tau]
    if len(taus) != 1:
        return {y: 1.0}
    visible = [a for a in y if not a.is_tau]
    slot = taus[0]
    wrong = [k for k in range(len(visible) + 1) if k != slot]
    share = (1.0 - correct) / (len(wrong) + 1)
    views = {y: correct}
    for k in wrong:
        moved = Trace(visible[:k] + [TAU] + visible[k:])
        views[moved] = views.get(moved, 0.0) + share
    deleted = Trace(visible)
    views[deleted] = views.get(deleted, 0.0) + share
    return views


def tau_misplacement_observer(Y, correct=0.7):
    """A lone τ is seen at its true position with probability `correct`; the rest is spread
    uniformly over its other positions and over not seeing it at all. Traces with zero or
    several τ's are seen exactly."""
    Y = _ordered(Y)
    rows = [_misplacements(y, correct) for y in Y]
    views = canonical(z for r in rows for z in r)
    col = {z: j for j, z in enumerate(views)}
    matrix = np.zeros((len(Y), len(views)))
    for i, r in enumerate(rows):
        for z, p in r.items():
            matrix[i, col[z]] += p
    return Observer(Y, views, matrix, name="tau-misplacement")


# --- PREDICATES & ORDER ---

def is_deterministic_observer(o, tol=config.STOCHASTIC_TOL):
    m = o.matrix
    return bool(np.all((np.abs(m) <= tol) | (np.abs(m - 1.0) <= tol)))


def induced_equivalence(o, tol=config.STOCHASTIC_TOL):
    """Traces are equivalent when their observer rows coincide."""
    labels = list(range(len(o.outputs)))
    for i, j in combinations(range(len(o.outputs)), 2):
        if labels[j] == j and np.allclose(o.matrix[i], o.matrix[j], atol=tol, rtol=0):
            labels[j] = labels[i]
    mapping = {y: labels[i] for i, y in enumerate(o.outputs)}
    return Equivalence(f"induced:{o.name}", mapping.__getitem__)


def refinement_witness(o1, o2):
    """A channel K' with o1 = o2 . K', found by LP feasibility, or None."""
    if set(o1.outputs) != set(o2.outputs):
        raise DimensionMismatch("refinement needs observers on the same trace set")
    o1 = o1.aligned(o2.outputs)
    n2, n1 = len(o2.views), len(o1.views)
    A_eq = np.vstack([np.kron(o2.matrix, np.eye(n1)),
                      np.kron(np.eye(n2), np.ones((1, n1)))])
    b_eq = np.concatenate([o1.matrix.reshape(-1), np.ones(n2)])
    lp = LinearProgram(
        variables=tuple((z2, z1) for z2 in o2.views for z1 in o1.views),
        c=np.zeros(n2 * n1),
        A_eq=A_eq, b_eq=b_eq,
        name=f"refine {o1.name} by {o2.name}",
    )
    sol = solve_lp(lp)
    if sol.status == INFEASIBLE:
        return None
    k = np.clip(sol.x.reshape(n2, n1), 0.0, None)
    residual = np.max(np.abs(o2.matrix @ k - o1.matrix))
    if residual > config.REFINEMENT_TOL:
        raise SolverError(f"refinement LP solution misses o1 by {residual:.3g}")
    k = k / k.sum(axis=1, keepdims=True)
    return Channel(o2.views, o1.views, k, name=f"{o2.name}->{o1.name}")


def make_observer(kind, Y, **params):
    kind = kind.lower()
    if kind == "perfect":
        return perfect_observer(Y)
    if kind in EQUIVALENCES:
        return det_observer(EQUIVALENCES[kind], Y)
    if kind == "unit":
        return unit_observer(Y)
    if kind == "tau-misplacement":
        return tau_misplacement_observer(Y, correct=params.get("correct", 0.7))
    if kind == "per-action":
        return per_action_confusion_observer(Y, params["confusion"])
    raise ValueError(f"unknown observer kind {kind!r}")
