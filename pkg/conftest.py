import json

import numpy as np
import pytest

from channels import TAU, Channel, Prior, Trace, out

SECRETS = ((0, 0), (0, 1), (1, 0), (1, 1))
EXAMPLE_MASS = (0.15, 0.20, 0.30, 0.35)


def T(*actions):
    return Trace(actions)


def table_traces(name):
    """[m<0>, tau.m<0>, m<1>, tau.m<1>] for output name m."""
    return (T(out(name, 0)), T(TAU, out(name, 0)), T(out(name, 1)), T(TAU, out(name, 1)))


@pytest.fixture
def k1():
    return Channel((0, 1), table_traces("m1"), [[0.5, 0, 0, 0.5], [0, 0.5, 0.5, 0]], name="k1")


@pytest.fixture
def k2():
    return Channel((0, 1), table_traces("m2"), [[0, 0.5, 0.5, 0], [0.5, 0, 0, 0.5]], name="k2")


@pytest.fixture
def example_prior():
    return Prior(SECRETS, EXAMPLE_MASS)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def random_channel(rng, secrets, outputs, sparsity=0.0):
    secrets, outputs = tuple(secrets), tuple(outputs)
    m = rng.dirichlet(np.ones(len(outputs)), size=len(secrets))
    if sparsity:
        m = m * (rng.random(m.shape) >= sparsity)
        for i in np.nonzero(m.sum(axis=1) == 0)[0]:
            m[i, rng.integers(len(outputs))] = 1.0
        m = m / m.sum(axis=1, keepdims=True)
    return Channel(secrets, outputs, m)


def random_prior(rng, secrets):
    secrets = tuple(secrets)
    return Prior(secrets, rng.dirichlet(np.ones(len(secrets))))


def _action_json(a):
    return "tau" if a.is_tau else {"out": {"name": a.name, "value": a.value}}


@pytest.fixture
def tables_model(tmp_path):
    """Model document with both table channels, the example prior and a S_DS tree."""
    def channel_json(name, rows):
        return {"secrets": [0, 1],
                "traces": [[_action_json(a) for a in y] for y in table_traces(name)],
                "matrix": rows}

    doc = {
        "channels": {
            "k1": channel_json("m1", [[0.5, 0, 0, 0.5], [0, 0.5, 0.5, 0]]),
            "k2": channel_json("m2", [[0, 0.5, 0.5, 0], [0.5, 0, 0, 0.5]]),
        },
        "priors": {"p": {"secrets": [list(x) for x in SECRETS], "mass": list(EXAMPLE_MASS)}},
        "observers": {"w": {"kind": "weak"}},
        "trees": {"k": {"node": {"scheduler": "ds", "left": {"leaf": "k1"}, "right": {"leaf": "k2"}}}},
        "requests": [
            {"command": "measure", "measure": "mel", "channel": "k", "prior": "p"},
            {"command": "interleave", "y1": ["tau,m1:0"], "y2": ["m2:0"]},
        ],
    }
    path = tmp_path / "tables.json"
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return path
