import hashlib
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from channels import cascade_compose
from errors import Misalignment, NonConvergence

logger = logging.getLogger(__name__)

LN2 = np.log(2.0)


class Measure(str, Enum):
    MI = "mi"
    SC = "sc"
    MEL = "mel"
    MC = "mc"
    VPRIOR = "vprior"
    VPOST = "vpost"


def _aligned(p, c):
    """Prior masses in the channel's secret order."""
    if tuple(p.secrets) == tuple(c.secrets):
        return np.asarray(p.mass)
    if set(p.secrets) != set(c.secrets) or len(p.secrets) != len(c.secrets):
        raise Misalignment(f"prior secrets do not match channel {c.name or '?'}")
    return np.array([p[x] for x in c.secrets])


def joint_distribution(p, c):
    return _aligned(p, c)[:, None] * c.matrix


def mutual_information(p, c):
    joint = joint_distribution(p, c)
    marginal = joint.sum(axis=0)
    rows, cols = np.nonzero(joint > 0)
    terms = joint[rows, cols] * np.log2(c.matrix[rows, cols] / marginal[cols])
    return float(terms.sum())


def shannon_capacity(c, tol=1e-9, max_iter=100_000):
    """Blahut–Arimoto from the uniform input; stops once the capacity bounds are within tol bits."""
    C = c.matrix[:, c.matrix.sum(axis=0) > 0]
    m = C.shape[0]
    logC = np.log(np.where(C > 0, C, 1.0))
    r = np.full(m, 1.0 / m)
    lower = upper = 0.0
    for it in range(1, max_iter + 1):
        q = r @ C
        logq = np.log(np.where(q > 0, q, 1.0))
        D = np.sum(C * (logC - logq), axis=1)
        weights = r * np.exp(D)
        lower = np.log(weights.sum()) / LN2
        upper = D.max() / LN2
        if upper - lower < tol:
            logger.debug(f"Blahut–Arimoto converged in {it} iterations")
            return float(max(lower, 0.0))
        r = weights / weights.sum()
    raise NonConvergence(float(lower), float(upper), max_iter)


def prior_vulnerability(p):
    return float(np.max(p.mass))


def posterior_vulnerability(p, c):
    return float(joint_distribution(p, c).max(axis=0).sum())


def min_entropy_leakage(p, c):
    return float(np.log2(posterior_vulnerability(p, c)) - np.log2(prior_vulnerability(p)))


def min_capacity(c):
    return float(np.log2(c.matrix.max(axis=0).sum()))


def evaluate(measure, p, c):
    measure = Measure(measure)
    if measure is Measure.MI:
        return mutual_information(p, c)
    if measure is Measure.SC:
        return shannon_capacity(c)
    if measure is Measure.MEL:
        return min_entropy_leakage(p, c)
    if measure is Measure.MC:
        return min_capacity(c)
    if measure is Measure.VPRIOR:
        return prior_vulnerability(p)
    return posterior_vulnerability(p, c)


def observed(measure, p, c, o):
    """Leakage through the observer: the measure of the cascade K.O."""
    return evaluate(measure, p, cascade_compose(c, o))


# --- REPORTS ---

@dataclass(frozen=True)
class LeakageReport:
    measure: Measure
    value: float
    digest: str


def inputs_digest(p, c, o=None):
    h = hashlib.sha256()
    h.update(repr(c.secrets).encode())
    h.update(repr(tuple(str(y) for y in c.outputs)).encode())
    h.update(np.ascontiguousarray(c.matrix).tobytes())
    if p is not None:
        h.update(np.ascontiguousarray(p.mass).tobytes())
    if o is not None:
        h.update(repr(tuple(str(z) for z in o.views)).encode())
        h.update(np.ascontiguousarray(o.matrix).tobytes())
    return h.hexdigest()


def leakage_report(measure, p, c, o=None):
    measure = Measure(measure)
    value = evaluate(measure, p, c) if o is None else observed(measure, p, c, o)
    return LeakageReport(measure, value, inputs_digest(p, c, o)[:16])
