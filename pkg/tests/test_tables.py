"""Tables, margins, and exact conditional ensembles."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from icxtest import (
    FeasibilityError,
    Margins,
    MarginError,
    Table2xC,
    alt_log_weight,
    enumerate_tables,
    null_log_prob,
    null_prob_exact,
)

from oracles import (
    all_margins_with_total,
    fraction_prob,
    log_fraction,
    nested_loop_first_rows,
)


def test_margins_validation():
    with pytest.raises(MarginError):
        Margins((3, 4), (2, 2))          # totals disagree
    with pytest.raises(MarginError):
        Margins((3,), (2, 1))            # one row sum
    with pytest.raises(MarginError):
        Margins((-1, 5), (2, 2))
    with pytest.raises(MarginError):
        Margins((2, 2), ())
    with pytest.raises(ValueError):
        Margins((2.5, 1.5), (2, 2))      # non-integer


def test_margins_properties():
    m = Margins((5, 7), (4, 4, 4))
    assert m.N == 12
    assert m.C == 3


def test_table_validation():
    with pytest.raises(ValueError):
        Table2xC.from_rows((1, 2), (3,))
    with pytest.raises(ValueError):
        Table2xC.from_rows((1, -2), (3, 4))
    with pytest.raises(ValueError):
        Table2xC.from_rows((1,), (2,))   # needs two columns
    with pytest.raises(ValueError):
        Table2xC(((1, 2),))              # needs two rows


def test_table_properties(worked_table):
    assert worked_table.C == 4
    assert worked_table.N == 53
    assert worked_table.row_sums == (30, 23)
    assert worked_table.col_sums == (1, 10, 30, 12)
    assert worked_table.first_row == (1, 6, 19, 4)
    assert worked_table.margins == Margins((30, 23), (1, 10, 30, 12))
    assert worked_table.to_array().dtype == np.int64


def test_from_first_row_round_trip(worked_table):
    rebuilt = Table2xC.from_first_row(worked_table.margins, worked_table.first_row)
    assert rebuilt == worked_table
    with pytest.raises(FeasibilityError):
        Table2xC.from_first_row(worked_table.margins, (2, 6, 19, 4))
    with pytest.raises(FeasibilityError):
        Table2xC.from_first_row(worked_table.margins, (2, 6, 19, 3))


def test_json_and_csv_round_trips(worked_table):
    assert Table2xC.from_json(worked_table.to_json()) == worked_table
    assert Table2xC.from_csv(worked_table.to_csv()) == worked_table
    with pytest.raises(ValueError):
        Table2xC.from_json("not json")
    with pytest.raises(ValueError):
        Table2xC.from_json('{"rows": [[1, 2], [3, 4]]}')
    with pytest.raises(ValueError):
        Table2xC.from_csv("1,2\n3,4\n5,6")
    with pytest.raises(ValueError):
        Table2xC.from_csv("1,x\n3,4")


@pytest.mark.parametrize("C", [2, 3])
def test_enumeration_matches_nested_loops_exhaustively(C):
    for N in range(2, 9):
        for rows, cols in all_margins_with_total(N, C):
            ens = enumerate_tables(rows, cols)
            got = [tuple(int(v) for v in r) for r in ens.first_rows]
            assert got == nested_loop_first_rows(rows, cols)
            assert abs(np.exp(ens.log_probs).sum() - 1.0) <= 1e-10


def test_enumeration_is_lexicographic_and_indexable():
    ens = enumerate_tables((6, 7), (4, 5, 4))
    rows = [tuple(int(v) for v in r) for r in ens.first_rows]
    assert rows == sorted(rows)
    for i in (0, len(ens) // 2, len(ens) - 1):
        assert ens.index_of(ens.first_rows[i]) == i
        assert ens.table(i).first_row == rows[i]
    with pytest.raises(FeasibilityError):
        ens.index_of((6, 0, 0))


def test_null_probabilities_match_exact_rationals():
    rng = np.random.default_rng(3)
    ens = enumerate_tables((9, 11), (5, 6, 4, 5))
    m = ens.margins
    for i in rng.choice(len(ens), size=12, replace=False):
        fr = tuple(int(v) for v in ens.first_rows[i])
        exact = fraction_prob(fr, m.row_sums, m.col_sums)
        assert null_prob_exact(fr, m) == exact
        assert_allclose(null_log_prob(fr, m), log_fraction(exact), rtol=1e-12, atol=0)
        assert_allclose(ens.log_probs[i], log_fraction(exact), rtol=1e-10, atol=1e-13)
    assert_allclose(ens.probs.sum(), 1.0, rtol=0, atol=1e-14)


def test_null_log_prob_checks_feasibility():
    m = Margins((4, 4), (3, 3, 2))
    with pytest.raises(FeasibilityError):
        null_log_prob((4, 0, 1), m)      # wrong row total
    with pytest.raises(FeasibilityError):
        null_log_prob((4, 0, 0), m)      # exceeds a column total


def test_alt_probs_reduce_to_null_at_zero_tilt():
    ens = enumerate_tables((5, 6), (4, 4, 3))
    assert_allclose(ens.alt_probs(np.zeros(2)), ens.probs, rtol=0, atol=1e-15)
    tilted = ens.alt_probs((1.3, 0.4))
    assert_allclose(tilted.sum(), 1.0, rtol=0, atol=1e-12)
    # positive tilt on the first column moves mass toward larger first cells
    mean_null = float(ens.probs @ ens.first_rows[:, 0])
    mean_tilt = float(tilted @ ens.first_rows[:, 0])
    assert mean_tilt > mean_null


def test_alt_log_weight_validation():
    with pytest.raises(ValueError):
        alt_log_weight((1, 2, 3), (0.5,))            # needs C-1 components
    with pytest.raises(ValueError):
        alt_log_weight((1, 2, 3), (np.inf, 0.0))
    assert alt_log_weight((2, 3, 1), (0.5, -1.0)) == pytest.approx(-2.0)


def test_ensemble_arrays_are_read_only():
    ens = enumerate_tables((3, 3), (2, 2, 2))
    with pytest.raises(ValueError):
        ens.first_rows[0, 0] = 5
    with pytest.raises(ValueError):
        ens.log_probs[0] = 0.0
