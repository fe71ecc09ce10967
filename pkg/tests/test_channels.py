import numpy as np
import pytest

from channels import (EMPTY, SEP, TAU, Channel, Prior, Trace, cascade_compose, deterministic_channel,
                      diagonal_prior, out, parallel_compose, point_prior, product_prior,
                      uniform_prior, validate_channel)
from conftest import T, random_channel, table_traces
from errors import DimensionMismatch, SeparatorClash, ValidationError
from measures import min_entropy_leakage, mutual_information
from observers import WEAK, det_observer, perfect_observer, unit_observer


# --- traces ---

def test_trace_order_is_length_then_tau_first():
    a, b = out("m", 0), out("m", 1)
    traces = [T(b), T(a, a), EMPTY, T(TAU, b), T(a), T(TAU)]
    assert sorted(traces) == [EMPTY, T(TAU), T(a), T(b), T(TAU, b), T(a, a)]


def test_trace_order_is_deterministic(rng):
    alphabet = [TAU, out("m1", 0), out("m1", 1), out("m2", 0)]
    for _ in range(50):
        traces = {Trace(alphabet[i] for i in rng.integers(0, 4, size=rng.integers(0, 4))) for _ in range(10)}
        first = sorted(traces)
        assert sorted(reversed(first)) == first
        assert all(x < y for x, y in zip(first, first[1:]))


def test_trace_parse_and_render():
    y = Trace.parse("tau,m1:0")
    assert y == T(TAU, out("m1", 0))
    assert str(y) == "tau.m1<0>"
    assert Trace.parse(str(y)) == y
    assert Trace.parse("∅") == EMPTY


def test_partial_action_is_rejected():
    with pytest.raises(ValueError):
        out("m", "")


# --- validation ---

def test_identity_is_valid():
    c = Channel((0, 1), (T(out("m", 0)), T(out("m", 1))), np.eye(2))
    assert validate_channel(c) == []


def test_bad_row_sum_is_reported():
    c = Channel.raw((0,), (T(out("m", 0)), T(out("m", 1))), [[0.5, 0.6]])
    assert "row 0 sums to 1.1" in validate_channel(c)


def test_constructor_rejects_invalid_matrix():
    with pytest.raises(ValidationError) as e:
        Channel((0, 1), (T(out("m", 0)),), [[1.0], [0.7]])
    assert any("row 1" in v for v in e.value.violations)


def test_table_channel_is_valid(k1, k2):
    assert validate_channel(k1) == []
    assert validate_channel(k2) == []


# --- parallel composition ---

def test_parallel_row_of_tables(k1, k2):
    c = parallel_compose(k1, k2)
    m10, tm11 = T(out("m1", 0)), T(TAU, out("m1", 1))
    tm20, m21 = T(TAU, out("m2", 0)), T(out("m2", 1))
    row = c.row((0, 0))
    for y1 in (m10, tm11):
        for y2 in (tm20, m21):
            assert row[y1 + T(SEP) + y2] == pytest.approx(0.25)
    assert sum(row.mass) == pytest.approx(1.0)


def test_parallel_with_unit_channel_keeps_matrix(k1):
    unit = Channel((0,), (EMPTY,), [[1.0]])
    c = parallel_compose(k1, unit)
    assert c.secrets == ((0, 0), (1, 0))
    relabelled = {y + T(SEP): j for j, y in enumerate(k1.outputs)}
    for y, j in relabelled.items():
        assert np.allclose(c.matrix[:, c.output_index[y]], k1.matrix[:, j])


def test_parallel_mutual_information(k1, k2, example_prior):
    c = parallel_compose(k1, k2)
    assert mutual_information(example_prior, c) == pytest.approx(1.926, abs=1e-3)
    assert min_entropy_leakage(example_prior, c) == pytest.approx(1.515, abs=1e-3)


def test_parallel_rejects_separator():
    c = Channel((0,), (T(SEP),), [[1.0]])
    with pytest.raises(SeparatorClash):
        parallel_compose(c, c)


def test_parallel_rows_are_stochastic(rng):
    ys = [T(out("a", i)) for i in range(3)]
    for _ in range(200):
        c1 = random_channel(rng, range(2), ys)
        c2 = random_channel(rng, range(3), ys[:2])
        c = parallel_compose(c1, c2)
        assert np.allclose(c.matrix.sum(axis=1), 1.0, atol=1e-9)


# --- cascade ---

def test_cascade_with_weak_observer_hides_the_secret(k1):
    c = cascade_compose(k1, det_observer(WEAK, k1.outputs))
    assert np.allclose(c.matrix, 0.5)


def test_cascade_with_identity_and_unit(k1):
    assert cascade_compose(k1, perfect_observer(k1.outputs)).allclose(k1)
    unit = cascade_compose(k1, unit_observer(k1.outputs))
    assert unit.matrix.shape == (2, 1)
    assert np.allclose(unit.matrix, 1.0)


def test_cascade_dimension_mismatch(k1, k2):
    with pytest.raises(DimensionMismatch):
        cascade_compose(k1, perfect_observer(k2.outputs))


def test_cascade_is_associative(rng):
    ys = [T(out("a", i)) for i in range(3)]
    zs = [T(out("z", i)) for i in range(4)]
    for _ in range(200):
        a = random_channel(rng, range(3), ys)
        b = random_channel(rng, ys, zs)
        c = random_channel(rng, zs, range(2))
        left = cascade_compose(cascade_compose(a, b), c)
        right = cascade_compose(a, cascade_compose(b, c))
        assert np.allclose(left.matrix, right.matrix, atol=1e-9)


# --- priors ---

def test_product_prior():
    assert np.allclose(product_prior(uniform_prior(range(2)), uniform_prior(range(2))).mass, 0.25)
    p = product_prior(Prior((0, 1), (0.3, 0.7)), Prior(("x",), (1.0,)))
    assert p.secrets == ((0, "x"), (1, "x"))
    assert np.allclose(p.mass, (0.3, 0.7))
    assert np.allclose(product_prior(uniform_prior(range(8)), uniform_prior(range(8))).mass, 1 / 64)


def test_diagonal_prior():
    d = diagonal_prior(uniform_prior(range(2)))
    assert d.as_dict() == {(0, 0): 0.5, (0, 1): 0.0, (1, 0): 0.0, (1, 1): 0.5}
    assert diagonal_prior(point_prior(range(3), 2))[(2, 2)] == 1.0
    d8 = diagonal_prior(uniform_prior(range(8)))
    assert all(d8[(x, x)] == pytest.approx(1 / 8) for x in range(8))
    assert sum(d8.mass) == pytest.approx(1.0)


def test_prior_must_sum_to_one():
    with pytest.raises(ValidationError):
        Prior((0, 1), (0.5, 0.6))


# --- deterministic channels ---

def test_voter_channel_is_identity():
    c = deterministic_channel((0, 1), lambda k: T(out("m", k)))
    assert c.outputs == (T(out("m", 0)), T(out("m", 1)))
    assert np.array_equal(c.matrix, np.eye(2))


def test_constant_channel_leaks_nothing():
    c = deterministic_channel(range(4), lambda k: EMPTY)
    assert c.matrix.shape == (4, 1)
    assert min_entropy_leakage(uniform_prior(range(4)), c) == pytest.approx(0.0)
    assert mutual_information(uniform_prior(range(4)), c) == pytest.approx(0.0)


def test_table_traces_are_canonical():
    ys = table_traces("m1")
    assert sorted(ys) == [ys[0], ys[2], ys[1], ys[3]]
