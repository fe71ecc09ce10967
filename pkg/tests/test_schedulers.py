from itertools import product

import numpy as np
import pytest

from channels import EMPTY, SEP, TAU, Trace, out, parallel_compose, product_prior, uniform_prior
from conftest import T, random_channel, random_prior, table_traces
from errors import DomainMismatch, InfeasibleSupport, NonConvergence, RowSumError
from interleave import independence_certificate, interleave_pair
from measures import Measure, evaluate, min_entropy_leakage, mutual_information, observed
from observers import UNIVERSAL, WEAK, det_observer
from schedulers import (Leaf, Node, compose_tree, explicit_scheduler, identity_scheduler,
                        is_deterministic_scheduler, is_sim_blind, make_DS, make_FI, make_FI_n,
                        make_FS, make_scheduler, random_scheduler, scheduled_compose,
                        scheduled_compose_n, tree_prior, tree_secrets)

a, b = out("a", "x"), out("b", "x")
M0 = out("m", 0)


def fi_oracle(y1, y2):
    """Plain recursion on the fair-interleaving clauses, no memo."""
    if not y1:
        return {y2: 1.0}
    if not y2:
        return {y1: 1.0}
    result = {}
    for head, rest in ((y1[0], fi_oracle(y1[1:], y2)), (y2[0], fi_oracle(y1, y2[1:]))):
        for tail, p in rest.items():
            y = T(head) + tail
            result[y] = result.get(y, 0.0) + 0.5 * p
    return result


def test_ds_examples():
    assert make_DS([T(a)], [T(b)]).row(T(a), T(b)).as_dict() == {T(a, b): 1.0}
    assert make_DS([EMPTY], [T(a)]).row(EMPTY, T(a)).as_dict() == {T(a): 1.0}


def test_fs_examples():
    assert make_FS([T(a)], [T(a)]).row(T(a), T(a)).as_dict() == {T(a, a): 1.0}
    assert make_FS([T(a)], [T(b)]).row(T(a), T(b)).as_dict() == {T(a, b): 0.5, T(b, a): 0.5}


def test_fi_examples():
    row = make_FI([T(TAU)], [T(M0)]).row(T(TAU), T(M0))
    assert row.as_dict() == {T(TAU, M0): 0.5, T(M0, TAU): 0.5}
    assert make_FI([T(TAU, TAU)], [T(TAU)]).row(T(TAU, TAU), T(TAU)).as_dict() == {T(TAU, TAU, TAU): 1.0}


def test_fi_matches_unmemoized_recursion(rng):
    alphabet = [TAU, a, b]
    for _ in range(50):
        Y1 = list({Trace(alphabet[i] for i in rng.integers(0, 3, size=rng.integers(0, 4))) for _ in range(3)})
        Y2 = list({Trace(alphabet[i] for i in rng.integers(0, 3, size=rng.integers(0, 4))) for _ in range(3)})
        s = make_FI(Y1, Y2)
        for y1, y2 in product(Y1, Y2):
            expected = fi_oracle(y1, y2)
            got = s.row(y1, y2)
            assert set(y for y, p in got.items() if p > 0) == set(expected)
            for y, p in expected.items():
                assert got[y] == pytest.approx(p, abs=1e-12)


def test_constructor_rows_are_feasible_and_stochastic(rng):
    alphabet = [TAU, a, b]
    for _ in range(200):
        Y1 = list({Trace(alphabet[i] for i in rng.integers(0, 3, size=rng.integers(0, 3))) for _ in range(2)})
        Y2 = list({Trace(alphabet[i] for i in rng.integers(0, 3, size=rng.integers(0, 3))) for _ in range(2)})
        for s in (make_DS(Y1, Y2), make_FS(Y1, Y2), make_FI(Y1, Y2), random_scheduler(rng, Y1, Y2)):
            for (y1, y2), dist in s.rows.items():
                assert sum(dist.mass) == pytest.approx(1.0, abs=1e-9)
                merges = interleave_pair(y1, y2)
                assert all(y in merges for y, p in dist.items() if p > 0)


def test_explicit_scheduler_round_trip_and_errors():
    ds = make_DS([T(a)], [T(b)])
    again = explicit_scheduler(ds.domain, ds.rows)
    assert np.array_equal(again.matrix(), ds.matrix())
    with pytest.raises(InfeasibleSupport):
        explicit_scheduler(([T(a)], [T(b)]), {(T(a), T(b)): {T(out("c", 1), out("d", 1)): 1.0}})
    with pytest.raises(RowSumError):
        explicit_scheduler(([T(a)], [T(b)]), {(T(a), T(b)): {T(a, b): 0.5, T(b, a): 0.4}})


def test_flat_fair_interleaving_rows():
    s = make_FI_n([T(a)], [T(b)], [T(M0)])
    row = s.row(T(a), T(b), T(M0))
    assert len(row) == 6
    assert np.allclose(row.mass, 1 / 6)
    binary = make_FI([T(TAU, a)], [T(b)])
    flat = make_FI_n([T(TAU, a)], [T(b)])
    assert np.allclose(binary.matrix(), flat.matrix())


# --- scheduled composition on the table channels ---

def test_ds_composition_matches_parallel(k1, k2, example_prior):
    c = scheduled_compose(k1, k2, make_DS(k1.outputs, k2.outputs))
    p = parallel_compose(k1, k2)
    assert mutual_information(example_prior, c) == pytest.approx(1.926, abs=1e-3)
    assert min_entropy_leakage(example_prior, c) == pytest.approx(1.515, abs=1e-3)
    assert mutual_information(example_prior, c) == pytest.approx(mutual_information(example_prior, p), abs=1e-9)


def test_fs_composition_matches_parallel(k1, k2, example_prior):
    c = scheduled_compose(k1, k2, make_FS(k1.outputs, k2.outputs))
    p = parallel_compose(k1, k2)
    assert mutual_information(example_prior, c) == pytest.approx(mutual_information(example_prior, p), abs=1e-9)
    assert min_entropy_leakage(example_prior, c) == pytest.approx(min_entropy_leakage(example_prior, p), abs=1e-9)


def test_fi_composition_leaks_less(k1, k2, example_prior):
    c = scheduled_compose(k1, k2, make_FI(k1.outputs, k2.outputs))
    assert mutual_information(example_prior, c) == pytest.approx(1.695, abs=1e-3)
    weak = det_observer(WEAK, c.outputs)
    assert observed(Measure.MEL, example_prior, c, weak) == pytest.approx(0.215, abs=1e-3)


def test_composition_rows_and_outputs(k1, k2, rng):
    for _ in range(200):
        c1 = random_channel(rng, k1.secrets, k1.outputs)
        c2 = random_channel(rng, range(3), k2.outputs)
        s = random_scheduler(rng, c1.outputs, c2.outputs)
        c = scheduled_compose(c1, c2, s)
        assert np.allclose(c.matrix.sum(axis=1), 1.0, atol=1e-9)
        assert len(c.outputs) == 40


def test_domain_mismatch(k1, k2):
    with pytest.raises(DomainMismatch):
        scheduled_compose(k1, k2, make_DS(k1.outputs, k1.outputs))


def test_unit_observer_view_of_any_composition_leaks_nothing(k1, k2, example_prior):
    for kind in ("ds", "fs", "fi"):
        c = scheduled_compose(k1, k2, make_scheduler(kind, k1.outputs, k2.outputs))
        unit = det_observer(UNIVERSAL, c.outputs)
        assert observed(Measure.MEL, example_prior, c, unit) == pytest.approx(0.0, abs=1e-12)


# --- trees ---

def test_single_leaf_tree(k1):
    assert compose_tree(Leaf(k1)) is k1


def test_tree_fold(k1, k2, example_prior):
    tree = Node("fi", Leaf(k1), Leaf(k2))
    direct = scheduled_compose(k1, k2, make_FI(k1.outputs, k2.outputs))
    assert compose_tree(tree).allclose(direct)
    assert tree_secrets(tree) == example_prior.secrets
    assert np.allclose(tree_prior(tree).mass, 0.25)


def test_flat_composition_of_identity(k1):
    c = scheduled_compose_n([k1], identity_scheduler(k1.outputs))
    assert c.secrets == ((0,), (1,))
    assert np.allclose(c.reorder_outputs(k1.outputs).matrix, k1.matrix)


# --- predicates ---

def test_determinism():
    assert is_deterministic_scheduler(make_DS(table_traces("m1"), table_traces("m2")))
    assert is_deterministic_scheduler(make_FS([T(a)], [T(a)]))
    assert not is_deterministic_scheduler(make_FI([T(TAU)], [T(M0)]))


def test_sim_blindness_on_tables():
    Y1, Y2 = table_traces("m1"), table_traces("m2")
    assert is_sim_blind(make_DS(Y1, Y2), WEAK)
    assert is_sim_blind(make_FS(Y1, Y2), WEAK)
    assert not is_sim_blind(make_FI(Y1, Y2), WEAK)
    assert is_sim_blind(make_FI(Y1, Y2), UNIVERSAL)


def _capacity(c):
    try:
        return evaluate(Measure.SC, None, c)
    except NonConvergence as e:
        return e.lower


def test_independent_sets_give_parallel_leakage(rng):
    Y1 = [T(a), T(a, a), T(out("a", "y"))]
    Y2 = [T(b), T(out("b", "y"), b)]
    assert independence_certificate(Y1, Y2).holds
    for case in range(200):
        c1 = random_channel(rng, range(2), Y1, sparsity=0.3)
        c2 = random_channel(rng, range(3), Y2, sparsity=0.3)
        p = random_prior(rng, product(range(2), range(3)))
        s = random_scheduler(rng, Y1, Y2)
        scheduled, par = scheduled_compose(c1, c2, s), parallel_compose(c1, c2)
        for m in (Measure.MI, Measure.MEL, Measure.MC, Measure.VPOST):
            assert evaluate(m, p, scheduled) == pytest.approx(evaluate(m, p, par), abs=1e-9)
        if case < 20:
            assert _capacity(scheduled) == pytest.approx(_capacity(par), abs=1e-6)


def test_blind_schedulers_under_weak_observer(rng, k1, k2):
    Y1, Y2 = k1.outputs, k2.outputs
    ds, fs = make_DS(Y1, Y2), make_FS(Y1, Y2)
    assert is_sim_blind(ds, WEAK) and is_sim_blind(fs, WEAK)
    for _ in range(200):
        c1 = random_channel(rng, range(2), Y1)
        c2 = random_channel(rng, range(2), Y2)
        p = random_prior(rng, product(range(2), range(2)))
        par = parallel_compose(c1, c2)
        o_par = det_observer(WEAK, par.outputs)
        det = scheduled_compose(c1, c2, ds)
        prob = scheduled_compose(c1, c2, fs)
        for m in (Measure.MI, Measure.MEL, Measure.MC):
            reference = observed(m, p, par, o_par)
            assert observed(m, p, det, det_observer(WEAK, det.outputs)) == pytest.approx(reference, abs=1e-9)
            assert observed(m, p, prob, det_observer(WEAK, prob.outputs)) <= reference + 1e-9


def test_parallel_weak_view_separates_components(k1, k2):
    par = parallel_compose(k1, k2)
    views = det_observer(WEAK, par.outputs).views
    assert Trace((out("m1", 0), SEP, out("m2", 1))) in views
    assert len(views) == 4


def test_product_prior_over_tree_secrets(k1, k2):
    tree = Node("ds", Leaf(k1, uniform_prior(k1.secrets)), Leaf(k2))
    assert tree_prior(tree).secrets == product_prior(uniform_prior(k1.secrets), uniform_prior(k2.secrets)).secrets
