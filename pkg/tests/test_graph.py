"""Adjacency normalization and the CSV loader."""

import numpy as np
import pytest

from trafficgcn.errors import DomainError, ParseError, ShapeError
from trafficgcn.graph import RoadGraph, load_adjacency, normalize_adjacency
from trafficgcn.data import ring_with_chords


class TestNormalize:
    def test_single_node(self):
        out = normalize_adjacency(np.array([[0.0]]))
        np.testing.assert_array_equal(out.data, [[1.0]])

    def test_two_node_line(self):
        # A + I = all ones, degrees (2, 2): every entry 1/2
        out = normalize_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(out.data, np.full((2, 2), 0.5), atol=1e-15)

    def test_regular_graph_closed_form(self):
        # d-regular: every nonzero entry equals 1/(d+1)
        n = 6
        ring = np.zeros((n, n))
        for i in range(n):
            ring[i, (i + 1) % n] = ring[(i + 1) % n, i] = 1.0
        out = normalize_adjacency(ring).data
        nonzero = out[out != 0]
        np.testing.assert_allclose(nonzero, 1.0 / 3.0, atol=1e-15)

    def test_row_sums_one_on_regular_graph(self):
        out = normalize_adjacency(ring_with_chords(8)).data
        np.testing.assert_allclose(out.sum(axis=1), np.ones(8), atol=1e-12)

    def test_zero_pattern_matches_a_plus_identity(self):
        rng = np.random.default_rng(5)
        a = rng.random((7, 7))
        a = (a + a.T) * (rng.random((7, 7)) < 0.4)
        a = np.triu(a, 1) + np.triu(a, 1).T
        out = normalize_adjacency(a).data
        np.testing.assert_array_equal(out != 0, (a + np.eye(7)) != 0)

    def test_symmetric_input_gives_symmetric_output(self):
        rng = np.random.default_rng(11)
        a = rng.random((6, 6))
        a = np.triu(a, 1) + np.triu(a, 1).T
        out = normalize_adjacency(a).data
        assert np.abs(out - out.T).max() < 1e-12

    def test_spectrum_in_unit_interval(self):
        # brute-force eigenvalues on small symmetric instances
        rng = np.random.default_rng(2)
        for n in range(2, 9):
            a = rng.random((n, n)) * (rng.random((n, n)) < 0.5)
            a = np.triu(a, 1) + np.triu(a, 1).T
            eigs = np.linalg.eigvalsh(normalize_adjacency(a).data)
            assert eigs.min() >= -1.0 - 1e-12
            assert eigs.max() <= 1.0 + 1e-12

    def test_rejects_negative_entries(self):
        with pytest.raises(DomainError, match="negative"):
            normalize_adjacency(np.array([[0.0, -1.0], [1.0, 0.0]]))

    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(DomainError, match="diagonal"):
            normalize_adjacency(np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_rejects_non_square(self):
        with pytest.raises(ShapeError):
            normalize_adjacency(np.zeros((2, 3)))

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            normalize_adjacency(np.array([[0.0, np.inf], [1.0, 0.0]]))


class TestRoadGraph:
    def test_weighted_flag(self):
        assert RoadGraph(np.array([[0.0, 0.5], [0.5, 0.0]])).weighted
        assert not RoadGraph(np.array([[0.0, 1.0], [1.0, 0.0]])).weighted

    def test_batched_is_block_diagonal(self):
        g = RoadGraph(np.array([[0.0, 1.0], [1.0, 0.0]]))
        b = g.batched(3).data
        assert b.shape == (6, 6)
        np.testing.assert_array_equal(b[:2, :2], g.a_hat.data)
        np.testing.assert_array_equal(b[2:4, :2], np.zeros((2, 2)))
        assert g.batched(3) is g.batched(3)


class TestLoader:
    def test_zero_matrix_gives_identity(self, tmp_path):
        path = tmp_path / "adj.csv"
        path.write_text("0,0,0\n0,0,0\n0,0,0\n")
        g = load_adjacency(path)
        np.testing.assert_array_equal(g.a_hat.data, np.eye(3))

    def test_ragged_row_cites_location(self, tmp_path):
        path = tmp_path / "adj.csv"
        path.write_text("0,1,0\n1,0,1\n0,1\n")
        with pytest.raises(ParseError, match="row 3"):
            load_adjacency(path)

    def test_non_numeric_cell_cites_location(self, tmp_path):
        path = tmp_path / "adj.csv"
        path.write_text("0,1\nx,0\n")
        with pytest.raises(ParseError, match="row 2, column 1"):
            load_adjacency(path)

    def test_negative_weight_rejected(self, tmp_path):
        path = tmp_path / "adj.csv"
        path.write_text("0,-2\n1,0\n")
        with pytest.raises(DomainError, match="negative"):
            load_adjacency(path)

    def test_two_node_matches_normalization_oracle(self, tmp_path):
        path = tmp_path / "adj.csv"
        path.write_text("0,1\n1,0\n")
        g = load_adjacency(path)
        np.testing.assert_allclose(g.a_hat.data, np.full((2, 2), 0.5), atol=1e-15)

    def test_non_square_rejected(self, tmp_path):
        path = tmp_path / "adj.csv"
        path.write_text("0,1,0\n1,0,1\n")
        with pytest.raises(ShapeError):
            load_adjacency(path)

    def test_input_stored_as_given(self, tmp_path):
        # asymmetric input is not symmetrized
        path = tmp_path / "adj.csv"
        path.write_text("0,1\n0,0\n")
        g = load_adjacency(path)
        np.testing.assert_array_equal(g.adjacency.data, [[0.0, 1.0], [0.0, 0.0]])
