import numpy as np
import pytest

from lpvss import (SelectionBasis, SimilarityTransform, apply_transform,
                   assemble_hankel, greedy_selection, random_stable_model,
                   realize_exact, realize_svd, true_table)
from lpvss.exceptions import MissingKeysError, SelectionError
from lpvss.markov import SubMarkovKey, SubMarkovTable, true_sub_markov
from lpvss.realization import (full_hankel_element_count, required_keys,
                               sub_hankel_element_count)


def _greedy_realize(model, nx, no=None, nr=None, max_depth=2):
    table = true_table(model, max_lag=2 * max_depth)
    sel = greedy_selection(table, nx, no if no else nx, nr if nr else nx,
                           max_depth=max_depth)
    return assemble_hankel(table, sel), sel


class TestCounts:
    def test_benchmark_dimensions(self):
        assert sub_hankel_element_count(ny=2, nu=2, npsi=5, no=10,
                                        nr=10) == 940
        assert full_hankel_element_count(ny=2, nu=2, npsi=5, depth=2) == 7056


class TestSelectionBasis:
    def test_duplicate_columns_rejected(self):
        with pytest.raises(ValueError):
            SelectionBasis(sigma=(((), 0, 0), ((), 0, 0)),
                           nu_sel=(((0, 0, ())),))

    def test_json_round_trip(self):
        sel = SelectionBasis(sigma=(((), 0, 0), ((1,), 2, 1)),
                             nu_sel=((0, 0, ()), (1, 1, (2,))))
        back = SelectionBasis.from_json(sel.to_json())
        assert back == sel

    def test_required_keys_deduplicated(self):
        sel = SelectionBasis(sigma=(((), 0, 0),), nu_sel=((0, 0, ()),))
        keys = required_keys(sel, npsi=1)
        assert len(keys) == len(set(keys))
        assert SubMarkovKey.cab(0, (), 0) in keys  # the plain H entry


class TestAssembly:
    def test_missing_keys_reported_exhaustively(self):
        sel = SelectionBasis(sigma=(((), 0, 0),), nu_sel=((0, 0, ()),))
        table = SubMarkovTable(ny=1, nu=1, npsi=1)
        with pytest.raises(MissingKeysError) as exc:
            assemble_hankel(table, sel)
        assert len(exc.value.keys) == len(required_keys(sel, npsi=1))

    def test_hankel_entries_are_table_lookups(self):
        model = random_stable_model(2, 1, 1, 1, seed=0)
        blocks, sel = _greedy_realize(model, 2)
        table = true_table(model, max_lag=4)
        for r, (i, g, word_r) in enumerate(sel.nu_sel):
            for c, (word_c, b, j) in enumerate(sel.sigma):
                key = SubMarkovKey.cab(g, tuple(word_r) + tuple(word_c), b)
                assert blocks.h[r, c] == table.get(key)[i, j]


class TestRealization:
    def test_exact_round_trip(self):
        model = random_stable_model(3, 2, 2, 2, seed=1)
        blocks, _ = _greedy_realize(model, 3)
        realized = realize_exact(blocks)
        truth = true_table(model, max_lag=3)
        for key in truth.keys():
            np.testing.assert_allclose(true_sub_markov(realized, key),
                                       truth.get(key), atol=1e-8)

    def test_svd_round_trip_and_auto_order(self):
        model = random_stable_model(3, 2, 2, 2, seed=2)
        blocks, _ = _greedy_realize(model, 3, no=5, nr=5)
        realized, sv = realize_svd(blocks, order="auto")
        assert realized.nx == 3
        assert np.all(np.diff(sv) <= 1e-12)  # nonincreasing spectrum
        truth = true_table(model, max_lag=3)
        for key in truth.keys():
            np.testing.assert_allclose(true_sub_markov(realized, key),
                                       truth.get(key), atol=1e-7)

    def test_explicit_order_truncates(self):
        model = random_stable_model(3, 2, 2, 2, seed=3)
        blocks, _ = _greedy_realize(model, 3, no=5, nr=5)
        reduced, _ = realize_svd(blocks, order=2)
        assert reduced.nx == 2

    def test_transform_invariance(self, rng):
        # the realized model depends only on the table, which is invariant
        # under state similarity transforms of the underlying system
        model = random_stable_model(3, 2, 2, 2, seed=4)
        t = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        other = apply_transform(model, SimilarityTransform(t))
        ta = true_table(model, max_lag=4)
        tb = true_table(other, max_lag=4)
        for key in ta.keys():
            np.testing.assert_allclose(ta.get(key), tb.get(key), atol=1e-9)


class TestGreedySelection:
    def test_deterministic(self):
        model = random_stable_model(3, 2, 2, 2, seed=5)
        table = true_table(model, max_lag=4)
        s1 = greedy_selection(table, 3, 6, 6)
        s2 = greedy_selection(table, 3, 6, 6)
        assert s1 == s2

    def test_reaches_requested_rank(self):
        model = random_stable_model(4, 2, 2, 3, seed=6)
        table = true_table(model, max_lag=4)
        sel = greedy_selection(table, 4, 8, 8)
        blocks = assemble_hankel(table, sel)
        assert np.linalg.matrix_rank(blocks.h, tol=1e-10) == 4

    def test_targets_below_state_dimension_rejected(self):
        model = random_stable_model(3, 1, 1, 1, seed=7)
        table = true_table(model, max_lag=4)
        with pytest.raises(SelectionError):
            greedy_selection(table, 3, 2, 2)

    def test_rank_deficient_table_reported(self):
        # a table of zeros cannot support any selection rank
        table = SubMarkovTable(ny=1, nu=1, npsi=1)
        for key in true_table(random_stable_model(2, 1, 1, 1, seed=8),
                              max_lag=4).keys():
            table.set(key, np.zeros((1, 1)))
        with pytest.raises(SelectionError) as exc:
            greedy_selection(table, 2, 3, 3)
        assert exc.value.achieved_rank == 0
