import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import product

import numpy as np
import pandas as pd

import config
from channels import (Channel, EMPTY, Prior, ProbDist, Trace, canonical, product_prior,
                      render, uniform_prior)
from errors import DomainMismatch, InfeasibleSupport, RowSumError, ValidationError
from interleave import interleave_n, interleave_pair, interleave_tuple

logger = logging.getLogger(__name__)

KINDS = ("ds", "fs", "fi")


@dataclass(frozen=True, eq=False)
class Scheduler:
    """For each tuple of source traces, a distribution over their merges."""
    domain: tuple
    rows: dict
    name: str = ""

    @property
    def arity(self):
        return len(self.domain)

    @cached_property
    def sources(self):
        return tuple(product(*self.domain))

    @cached_property
    def outputs(self):
        return interleave_n(*self.domain).traces

    def row(self, *sources):
        return self.rows[tuple(sources)]

    def matrix(self, sources=None, outputs=None):
        sources = self.sources if sources is None else tuple(sources)
        outputs = self.outputs if outputs is None else tuple(outputs)
        col = {y: j for j, y in enumerate(outputs)}
        m = np.zeros((len(sources), len(outputs)))
        for i, src in enumerate(sources):
            for y, p in self.rows[src].items():
                if p:
                    m[i, col[y]] = p
        return m

    def to_frame(self):
        return pd.DataFrame(self.matrix(),
                            index=[render(s) for s in self.sources],
                            columns=[render(y) for y in self.outputs])


def _dist(masses):
    return ProbDist(tuple(masses), list(masses.values()))


def _build(domain, row_fn, name):
    domain = tuple(tuple(Y) for Y in domain)
    rows = {src: _dist(row_fn(*src)) for src in product(*domain)}
    return Scheduler(domain, rows, name)


# --- NAMED SCHEDULERS ---

def make_DS(Y1, Y2):
    return _build((Y1, Y2), lambda y1, y2: {y1 + y2: 1.0}, "ds")


def make_FS(Y1, Y2):
    def row(y1, y2):
        if y1 == y2:
            return {y1 + y2: 1.0}
        masses = defaultdict(float)
        masses[y1 + y2] += 0.5
        masses[y2 + y1] += 0.5
        return masses

    return _build((Y1, Y2), row, "fs")


def _fair_interleaving(a, b, memo):
    """Distribution over merges of action tuples a, b: each step picks a head with probability 1/2."""
    key = (a, b)
    if key in memo:
        return memo[key]
    if not a:
        result = {b: 1.0}
    elif not b:
        result = {a: 1.0}
    else:
        result = defaultdict(float)
        for head, rest in ((a[0], (a[1:], b)), (b[0], (a, b[1:]))):
            for tail, p in _fair_interleaving(*rest, memo).items():
                result[(head,) + tail] += 0.5 * p
        result = dict(result)
    memo[key] = result
    return result


def make_FI(Y1, Y2):
    memo = {}

    def row(y1, y2):
        return {Trace(t): p for t, p in _fair_interleaving(y1.actions, y2.actions, memo).items()}

    return _build((Y1, Y2), row, "fi")


def make_DS_n(*Ys):
    def row(*ys):
        joined = EMPTY
        for y in ys:
            joined = joined + y
        return {joined: 1.0}

    return _build(Ys, row, "ds")


def _flat_fair(parts, memo):
    """Uniform choice among the nonempty remaining traces at every step."""
    if parts in memo:
        return memo[parts]
    live = [i for i, p in enumerate(parts) if p]
    if len(live) <= 1:
        result = {parts[live[0]] if live else (): 1.0}
    else:
        result = defaultdict(float)
        share = 1.0 / len(live)
        for i in live:
            rest = parts[:i] + (parts[i][1:],) + parts[i + 1:]
            for tail, p in _flat_fair(rest, memo).items():
                result[(parts[i][0],) + tail] += share * p
        result = dict(result)
    memo[parts] = result
    return result


def make_FI_n(*Ys):
    memo = {}

    def row(*ys):
        dist = _flat_fair(tuple(y.actions for y in ys), memo)
        return {Trace(t): p for t, p in dist.items()}

    return _build(Ys, row, "fi")


def identity_scheduler(Y):
    return _build((Y,), lambda y: {y: 1.0}, "identity")


def make_scheduler(kind, *Ys):
    kind = kind.lower()
    if len(Ys) == 1:
        return identity_scheduler(Ys[0])
    if kind == "ds":
        return make_DS(*Ys) if len(Ys) == 2 else make_DS_n(*Ys)
    if kind == "fs":
        if len(Ys) != 2:
            raise ValueError("the fair sequential scheduler is binary")
        return make_FS(*Ys)
    if kind == "fi":
        return make_FI(*Ys) if len(Ys) == 2 else make_FI_n(*Ys)
    raise ValueError(f"unknown scheduler kind {kind!r}; expected one of {KINDS}")


def explicit_scheduler(domain, rows, tol=config.STOCHASTIC_TOL, name="explicit"):
    """Validate user- or solver-supplied rows: mass only on feasible merges, rows sum to 1."""
    domain = tuple(tuple(Y) for Y in domain)
    checked = {}
    for src in product(*domain):
        if src not in rows:
            raise ValidationError([f"no scheduler row for {render(src)}"])
        given = rows[src]
        masses = given.as_dict() if isinstance(given, ProbDist) else dict(given)
        feasible = interleave_tuple(src)
        for y, p in masses.items():
            if p < -tol:
                raise RowSumError(f"negative mass {p:.6g} on {y} for {render(src)}")
            if abs(p) > tol and y not in feasible:
                raise InfeasibleSupport(f"mass {p:.6g} on {y}, which is not a merge of {render(src)}")
        total = sum(masses.values())
        if abs(total - 1.0) > tol:
            raise RowSumError(f"row {render(src)} sums to {total:.6g}")
        kept = {y: p for y, p in masses.items() if y in feasible}
        checked[src] = ProbDist(tuple(kept), list(kept.values()), tol=tol)
    return Scheduler(domain, checked, name)


def random_scheduler(rng, *Ys):
    """Dirichlet(1) mass over the merges of every source tuple."""
    def row(*ys):
        merges = interleave_tuple(ys).traces
        return dict(zip(merges, rng.dirichlet(np.ones(len(merges)))))

    return _build(Ys, row, "random")


# --- SCHEDULED COMPOSITION ---

def _check_domain(channels, s):
    if s.arity != len(channels):
        raise DomainMismatch(f"scheduler takes {s.arity} inputs, got {len(channels)} channels")
    for i, (c, Y) in enumerate(zip(channels, s.domain)):
        if set(c.outputs) != set(Y):
            raise DomainMismatch(f"scheduler input {i} does not match the outputs of channel {c.name or i}")


def scheduled_compose(c1, c2, s):
    _check_domain((c1, c2), s)
    sources = tuple(product(c1.outputs, c2.outputs))
    matrix = np.kron(c1.matrix, c2.matrix) @ s.matrix(sources=sources)
    secrets = tuple(product(c1.secrets, c2.secrets))
    return Channel(secrets, s.outputs, matrix, name=f"{s.name}({c1.name}, {c2.name})")


def scheduled_compose_n(channels, s):
    """Flat n-ary composition; secrets are n-tuples."""
    channels = tuple(channels)
    _check_domain(channels, s)
    joint = np.ones((1, 1))
    for c in channels:
        joint = np.kron(joint, c.matrix)
    sources = tuple(product(*(c.outputs for c in channels)))
    secrets = tuple(product(*(c.secrets for c in channels)))
    names = ", ".join(c.name for c in channels)
    return Channel(secrets, s.outputs, joint @ s.matrix(sources=sources), name=f"{s.name}({names})")


# --- COMPOSITION TREES ---

@dataclass(frozen=True)
class Leaf:
    channel: Channel
    prior: Prior = None
    name: str = ""


@dataclass(frozen=True)
class Node:
    scheduler: object   # "ds" | "fs" | "fi" | "min" | Scheduler
    left: object
    right: object
    name: str = ""


def subtree(tree, path):
    for step in path:
        tree = getattr(tree, step)
    return tree


def replace_subtree(tree, path, new):
    if not path:
        return new
    head, rest = path[0], tuple(path[1:])
    return replace(tree, **{head: replace_subtree(getattr(tree, head), rest, new)})


def secret_part(x, path):
    """Component of a nested-pair secret addressed by a left/right path."""
    for step in path:
        x = x[0] if step == "left" else x[1]
    return x


def replace_secret(x, path, value):
    if not path:
        return value
    i = 0 if path[0] == "left" else 1
    parts = list(x)
    parts[i] = replace_secret(x[i], tuple(path[1:]), value)
    return tuple(parts)


def tree_secrets(tree):
    if isinstance(tree, Leaf):
        return tree.channel.secrets
    return tuple(product(tree_secrets(tree.left), tree_secrets(tree.right)))


def tree_prior(tree):
    """Product of the leaf priors; uniform where a leaf has none."""
    if isinstance(tree, Leaf):
        return tree.prior if tree.prior is not None else uniform_prior(tree.channel.secrets)
    return product_prior(tree_prior(tree.left), tree_prior(tree.right))


def compose_tree(tree):
    if isinstance(tree, Leaf):
        return tree.channel
    left, right = compose_tree(tree.left), compose_tree(tree.right)
    s = tree.scheduler
    if isinstance(s, str):
        if s == "min":
            raise ValueError(f"node {tree.name or '?'} still needs a synthesized scheduler")
        s = make_scheduler(s, left.outputs, right.outputs)
    composed = scheduled_compose(left, right, s)
    logger.debug(f"Composed node {tree.name or s.name}: {len(composed.secrets)}x{len(composed.outputs)}")
    return replace(composed, name=tree.name) if tree.name else composed


# --- PREDICATES ---

def is_deterministic_scheduler(s, tol=config.STOCHASTIC_TOL):
    return all(np.max(dist.mass) >= 1.0 - tol for dist in s.rows.values())


def _class_mass(dist, eq):
    masses = defaultdict(float)
    for y, p in dist.items():
        masses[eq.canonicalize(y)] += p
    return masses


def _same_classes(m1, m2, tol):
    return all(abs(m1.get(k, 0.0) - m2.get(k, 0.0)) <= tol for k in set(m1) | set(m2))


def is_sim_blind(s, eq, tol=config.STOCHASTIC_TOL):
    """(y1 ~ y1' and y2 ~ y2') iff S(y1, y2) and S(y1', y2') put equal mass on every ~-class."""
    sources = s.sources
    keys = [tuple(eq.canonicalize(y) for y in src) for src in sources]
    masses = [_class_mass(s.rows[src], eq) for src in sources]
    for i in range(len(sources)):
        for j in range(i + 1, len(sources)):
            if (keys[i] == keys[j]) != _same_classes(masses[i], masses[j], tol):
                return False
    return True
