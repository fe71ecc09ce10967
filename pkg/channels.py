import logging
import re
from dataclasses import dataclass, field
from functools import cached_property, total_ordering
from itertools import product

import numpy as np
import pandas as pd

import config
from errors import DimensionMismatch, SeparatorClash, ValidationError

logger = logging.getLogger(__name__)


# --- ACTIONS & TRACES ---

@total_ordering
@dataclass(frozen=True)
class Action:
    """Silent action (empty name and value) or an output m<v>."""
    name: str = ""
    value: str = ""

    def __post_init__(self):
        if bool(self.name) != bool(self.value):
            raise ValueError(f"output action needs both a name and a value, got {self.name!r}<{self.value!r}>")

    @property
    def is_tau(self):
        return not self.name

    def sort_key(self):
        return (0, "", "") if self.is_tau else (1, self.name, self.value)

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    def __str__(self):
        return "tau" if self.is_tau else f"{self.name}<{self.value}>"


TAU = Action()


def out(name, value):
    return Action(str(name), str(value))


# Reserved for parallel composition; never part of a model alphabet.
SEP = out("sep", "sep")

_ACTION_TOKEN = re.compile(r"^(?:(?P<tau>tau|τ)|(?P<name>[^:<>\s]+)(?::(?P<v1>[^:<>\s]+)|<(?P<v2>[^<>\s]+)>))$")


def parse_action(token):
    m = _ACTION_TOKEN.match(token.strip())
    if not m:
        raise ValueError(f"cannot read action {token!r}; use 'tau', 'name:value' or 'name<value>'")
    if m.group("tau"):
        return TAU
    return out(m.group("name"), m.group("v1") or m.group("v2"))


@total_ordering
@dataclass(frozen=True)
class Trace:
    actions: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))

    @classmethod
    def parse(cls, text):
        """'tau,m1:0' or the rendered 'tau.m1<0>'; '' and '∅' are the empty trace."""
        text = text.strip()
        if text in ("", "∅"):
            return cls()
        return cls(parse_action(tok) for tok in re.split(r"[,.]", text) if tok.strip())

    def __len__(self):
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return Trace(self.actions[item])
        return self.actions[item]

    def __add__(self, other):
        return Trace(self.actions + tuple(other))

    def sort_key(self):
        return (len(self.actions), tuple(a.sort_key() for a in self.actions))

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    def __str__(self):
        return ".".join(str(a) for a in self.actions) if self.actions else "∅"

    def __repr__(self):
        return f"Trace({str(self)!r})"


EMPTY = Trace()


def canonical(traces):
    """Deduplicate and sort traces into the canonical order."""
    return tuple(sorted(set(traces)))


def ordered_unique(items):
    seen = set()
    result = []
    for item in items:
        if item not in seen:
            seen.add(item)
            result.append(item)
    return tuple(result)


def render(label):
    if isinstance(label, tuple):
        return "(" + ", ".join(render(part) for part in label) + ")"
    return str(label)


# --- DISTRIBUTIONS ---

@dataclass(frozen=True, eq=False)
class ProbDist:
    support: tuple
    mass: np.ndarray
    tol: float = field(default=config.STOCHASTIC_TOL, repr=False)

    def __post_init__(self):
        support = tuple(self.support)
        mass = np.array(self.mass, dtype=float).reshape(-1)
        mass.flags.writeable = False
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "mass", mass)

        problems = []
        if len(support) != len(mass):
            problems.append(f"{len(support)} items but {len(mass)} masses")
        if len(set(support)) != len(support):
            problems.append("duplicate items in support")
        if len(mass) and mass.min() < -self.tol:
            problems.append(f"negative mass {mass.min():.6g}")
        total = float(mass.sum())
        if abs(total - 1.0) > self.tol:
            problems.append(f"masses sum to {total:.6g}")
        if problems:
            raise ValidationError(problems)

    @classmethod
    def from_dict(cls, masses, tol=config.STOCHASTIC_TOL):
        return cls(tuple(masses.keys()), list(masses.values()), tol=tol)

    @cached_property
    def _index(self):
        return {item: i for i, item in enumerate(self.support)}

    def __getitem__(self, item):
        i = self._index.get(item)
        return 0.0 if i is None else float(self.mass[i])

    def __len__(self):
        return len(self.support)

    def items(self):
        return zip(self.support, (float(m) for m in self.mass))

    def as_dict(self):
        return dict(self.items())


class Prior(ProbDist):
    """Distribution over the secrets of a channel."""

    @property
    def secrets(self):
        return self.support


def uniform_prior(secrets):
    secrets = tuple(secrets)
    return Prior(secrets, np.full(len(secrets), 1.0 / len(secrets)))


def point_prior(secrets, x):
    secrets = tuple(secrets)
    return Prior(secrets, [1.0 if s == x else 0.0 for s in secrets])


def product_prior(p1, p2):
    return Prior(tuple(product(p1.secrets, p2.secrets)), np.kron(p1.mass, p2.mass))


def diagonal_prior(p):
    """Joint prior on X×X for two components sharing the same secret."""
    secrets = tuple(product(p.secrets, p.secrets))
    mass = np.diag(np.asarray(p.mass)).reshape(-1)
    return Prior(secrets, mass)


# --- CHANNELS ---

def matrix_violations(rows, cols, matrix, tol=config.STOCHASTIC_TOL):
    """Every way (rows, cols, matrix) fails to be a row-stochastic matrix."""
    problems = []
    if len(set(rows)) != len(rows):
        problems.append("duplicate secrets")
    if len(set(cols)) != len(cols):
        problems.append("duplicate outputs")
    if matrix.ndim != 2 or matrix.shape != (len(rows), len(cols)):
        problems.append(f"matrix shape {matrix.shape} does not match {len(rows)} secrets x {len(cols)} outputs")
        return problems
    if not np.all(np.isfinite(matrix)):
        problems.append("matrix contains non-finite entries")
        return problems
    for i, j in zip(*np.nonzero((matrix < -tol) | (matrix > 1 + tol))):
        problems.append(f"entry [{i}, {j}] = {matrix[i, j]:.6g} outside [0, 1]")
    for i, total in enumerate(matrix.sum(axis=1)):
        if abs(total - 1.0) > tol:
            problems.append(f"row {i} sums to {total:.6g}")
    return problems


@dataclass(frozen=True, eq=False)
class Channel:
    secrets: tuple
    outputs: tuple
    matrix: np.ndarray
    name: str = ""

    def __post_init__(self):
        self._freeze(self.secrets, self.outputs, self.matrix)
        problems = matrix_violations(self.secrets, self.outputs, self.matrix)
        if problems:
            label = f"channel {self.name!r}: " if self.name else ""
            raise ValidationError([label + p for p in problems])

    def _freeze(self, secrets, outputs, matrix):
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim == 1 and len(secrets) == 1:
            matrix = matrix.reshape(1, -1)
        matrix.flags.writeable = False
        object.__setattr__(self, "secrets", tuple(secrets))
        object.__setattr__(self, "outputs", tuple(outputs))
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def raw(cls, secrets, outputs, matrix, name=""):
        """Build without validation, e.g. to report on a broken model."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "name", name)
        obj._freeze(secrets, outputs, matrix)
        return obj

    @cached_property
    def secret_index(self):
        return {x: i for i, x in enumerate(self.secrets)}

    @cached_property
    def output_index(self):
        return {y: j for j, y in enumerate(self.outputs)}

    def row(self, x):
        return ProbDist(self.outputs, self.matrix[self.secret_index[x]])

    def __getitem__(self, key):
        x, y = key
        j = self.output_index.get(y)
        return 0.0 if j is None else float(self.matrix[self.secret_index[x], j])

    def reorder_outputs(self, outputs):
        """Same channel with columns in the given order (must be a permutation)."""
        outputs = tuple(outputs)
        if set(outputs) != set(self.outputs) or len(outputs) != len(self.outputs):
            raise DimensionMismatch("output sets differ")
        cols = [self.output_index[y] for y in outputs]
        return Channel(self.secrets, outputs, self.matrix[:, cols], name=self.name)

    def allclose(self, other, atol=config.STOCHASTIC_TOL):
        if tuple(self.secrets) != tuple(other.secrets) or set(self.outputs) != set(other.outputs):
            return False
        return bool(np.allclose(self.matrix, other.reorder_outputs(self.outputs).matrix, atol=atol, rtol=0))

    def to_frame(self):
        return pd.DataFrame(self.matrix,
                            index=[render(x) for x in self.secrets],
                            columns=[render(y) for y in self.outputs])


def validate_channel(c):
    return matrix_violations(c.secrets, c.outputs, c.matrix)


def _canonical_columns(outputs, matrix):
    order = sorted(range(len(outputs)), key=lambda j: outputs[j].sort_key())
    return tuple(outputs[j] for j in order), matrix[:, order]


def parallel_compose(c1, c2):
    """K1 × K2 with each output pair realised as the trace y1.sep.y2."""
    for c in (c1, c2):
        for y in c.outputs:
            if SEP in y.actions:
                raise SeparatorClash(f"separator {SEP} occurs in trace {y} of channel {c.name or '?'}")
    secrets = tuple(product(c1.secrets, c2.secrets))
    outputs = tuple(y1 + Trace((SEP,)) + y2 for y1, y2 in product(c1.outputs, c2.outputs))
    outputs, matrix = _canonical_columns(outputs, np.kron(c1.matrix, c2.matrix))
    return Channel(secrets, outputs, matrix, name=f"({c1.name} x {c2.name})")


def _stage(o):
    """(inputs, outputs, matrix) of an observer or a channel used as a second stage."""
    if hasattr(o, "views"):
        return o.outputs, o.views, o.matrix
    return o.secrets, o.outputs, o.matrix


def cascade_compose(c, o):
    inputs, outputs, matrix = _stage(o)
    if tuple(inputs) != tuple(c.outputs):
        if set(inputs) != set(c.outputs) or len(inputs) != len(c.outputs):
            raise DimensionMismatch(f"cascade interface mismatch: {len(c.outputs)} outputs vs {len(inputs)} inputs")
        position = {y: i for i, y in enumerate(inputs)}
        matrix = matrix[[position[y] for y in c.outputs]]
    name = getattr(o, "name", "")
    return Channel(c.secrets, outputs, c.matrix @ matrix, name=f"{c.name}.{name}" if name else c.name)


def deterministic_channel(secrets, f, name=""):
    secrets = tuple(secrets)
    images = [f(x) for x in secrets]
    if all(isinstance(y, Trace) for y in images):
        outputs = canonical(images)
    else:
        outputs = ordered_unique(images)
    col = {y: j for j, y in enumerate(outputs)}
    matrix = np.zeros((len(secrets), len(outputs)))
    for i, y in enumerate(images):
        matrix[i, col[y]] = 1.0
    return Channel(secrets, outputs, matrix, name=name)


def identity_channel(labels, name=""):
    return deterministic_channel(labels, lambda y: y, name=name)
