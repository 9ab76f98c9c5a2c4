"""Grid construction, target encoding, heads, and decoding."""

import math

import numpy as np
import pytest

from binreg.binning import (
    BinGrid,
    DiracMixture,
    Histogram,
    build_neighborhood_mixture,
    decode_argmax,
    encode_mixture,
    gaussian_smooth,
    grid_from_text,
    grid_to_text,
    histograms_from_csv,
    histograms_to_csv,
    make_linear_grid,
    make_quantile_grid,
    softmax_head,
    softplus_head,
)


def onehot(k, n, grid=None):
    p = np.zeros(n)
    p[k] = 1.0
    return Histogram(p, grid or unit_grid(n))


def unit_grid(k):
    return BinGrid(np.concatenate([np.arange(k, dtype=float), [np.inf]]))


class TestBinGrid:
    def test_minimal_linear_grid(self):
        grid = make_linear_grid(0.0, 1.0, 2)
        np.testing.assert_array_equal(grid.edges, [0.0, 1.0, np.inf])
        assert grid.K == 2

    def test_hundred_bin_convention(self):
        # 99 equal finite bins over the sample range plus a catch-all to +inf
        grid = make_linear_grid(0.0, 98.0, 100)
        assert grid.K == 100
        widths = np.diff(grid.edges[:-1])
        np.testing.assert_allclose(widths, 98.0 / 99.0, rtol=1e-12)
        assert grid.edges[-2] == 98.0 and np.isinf(grid.edges[-1])

    def test_first_width_matches_formula(self):
        grid = make_linear_grid(-math.pi / 2, math.pi / 2, 100)
        assert grid.edges[1] - grid.edges[0] == pytest.approx(math.pi / 99, rel=1e-12)

    @pytest.mark.parametrize("lo,hi,k", [(np.nan, 1, 4), (0, np.inf, 4), (1, 0, 4), (0, 1, 1)])
    def test_linear_grid_rejects(self, lo, hi, k):
        with pytest.raises(ValueError):
            make_linear_grid(lo, hi, k)

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            BinGrid(np.array([0.0, 0.0, 1.0]))
        with pytest.raises(ValueError):
            BinGrid(np.array([0.0, 1.0]))
        with pytest.raises(ValueError):
            BinGrid(np.array([0.0, np.inf, 1.0, 2.0]))

    def test_edges_are_immutable(self):
        grid = make_linear_grid(0, 1, 4)
        with pytest.raises(ValueError):
            grid.edges[0] = -1.0


class TestQuantileGrid:
    def test_median_edge_of_integer_ramp(self):
        # linear interpolation of the empirical CDF of 1..100 puts the
        # median at 50.5
        grid = make_quantile_grid(np.arange(1.0, 101.0), 2)
        assert grid.edges[1] == pytest.approx(50.5, abs=1e-9)

    def test_equal_mass_bins_on_uniform_samples(self):
        rng = np.random.default_rng(7)
        samples = rng.uniform(0, 1, size=10000)
        grid = make_quantile_grid(samples, 4)
        counts = np.histogram(samples, bins=grid.edges)[0]
        np.testing.assert_allclose(counts / samples.size, 0.25, atol=0.05)

    def test_empirical_mass_scales_with_n(self):
        rng = np.random.default_rng(11)
        k = 8
        samples = rng.normal(size=20000)
        grid = make_quantile_grid(samples, k)
        counts = np.histogram(samples, bins=grid.edges)[0]
        # 1/K +- O(1/sqrt(n))
        assert np.abs(counts / samples.size - 1.0 / k).max() < 5.0 / math.sqrt(samples.size)

    def test_constant_samples_rejected(self):
        with pytest.raises(ValueError):
            make_quantile_grid(np.full(100, 3.0), 2)

    def test_nonfinite_samples_rejected(self):
        with pytest.raises(ValueError):
            make_quantile_grid(np.array([0.0, np.nan, 1.0]), 2)


class TestEncodeMixture:
    def test_dirac_at_bin_center_is_onehot(self):
        grid = make_linear_grid(0, 10, 11)
        center = 0.5 * (grid.edges[3] + grid.edges[4])
        h = encode_mixture(grid, DiracMixture.dirac(center))
        np.testing.assert_array_equal(h.probs, onehot(3, 11).probs)

    def test_two_equal_components(self):
        grid = make_linear_grid(0, 10, 11)
        mix = DiracMixture.equal_weight([1.5, 7.5])
        h = encode_mixture(grid, mix)
        assert h.probs[1] == 0.5 and h.probs[7] == 0.5

    def test_interior_edge_goes_right(self):
        grid = make_linear_grid(0, 10, 11)
        h = encode_mixture(grid, DiracMixture.dirac(float(grid.edges[4])))
        assert h.probs[4] == 1.0

    def test_below_grid_clamps_to_first_bin(self):
        grid = make_linear_grid(0, 10, 11)
        h = encode_mixture(grid, DiracMixture.dirac(-5.0))
        assert h.probs[0] == 1.0

    def test_mass_conserved_exactly(self):
        rng = np.random.default_rng(3)
        grid = make_linear_grid(-1, 1, 16)
        for _ in range(50):
            n = rng.integers(1, 6)
            w = rng.dirichlet(np.ones(n))
            mix = DiracMixture(rng.uniform(-2, 2, n), w)
            h = encode_mixture(grid, mix)
            assert abs(h.probs.sum() - w.sum()) <= 1e-12


class TestNeighborhoodMixture:
    def test_center_and_equal_neighbors(self):
        mix = build_neighborhood_mixture(10.0, [12.0, 14.0], 0.8)
        np.testing.assert_array_equal(mix.values, [10.0, 12.0, 14.0])
        np.testing.assert_allclose(mix.weights, [0.8, 0.1, 0.1], atol=1e-15)

    def test_empty_neighbors_pure_dirac(self):
        mix = build_neighborhood_mixture(3.0, [], 0.4)
        assert mix.components == [(3.0, 1.0)]

    def test_duplicate_value_encodes_onehot(self):
        mix = build_neighborhood_mixture(5.0, [5.0], 0.8)
        grid = make_linear_grid(0, 10, 11)
        h = encode_mixture(grid, mix)
        np.testing.assert_array_equal(h.probs, onehot(5, 11).probs)

    @pytest.mark.parametrize("w", [0.0, 1.5, -0.2])
    def test_weight_out_of_range(self, w):
        with pytest.raises(ValueError):
            build_neighborhood_mixture(0.0, [1.0], w)


class TestGaussianSmooth:
    def test_sigma_zero_is_identity(self):
        h = onehot(2, 8)
        assert gaussian_smooth(h, 0.0) is h

    def test_symmetric_bell_around_center(self):
        k = 101
        h = gaussian_smooth(onehot(50, k), 4.0)
        for d in range(1, 17):
            assert abs(h.probs[50 - d] - h.probs[50 + d]) <= 1e-12
        assert np.argmax(h.probs) == 50

    def test_mass_conserved_at_boundary(self):
        h = gaussian_smooth(onehot(0, 32), 2.0)
        assert h.probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_argmax_preserved_away_from_boundary(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            k = int(rng.integers(32, 80))
            sigma = float(rng.uniform(0.5, 3.0))
            margin = int(math.ceil(4 * sigma))
            mode = int(rng.integers(margin, k - margin))
            h = gaussian_smooth(onehot(mode, k), sigma)
            assert int(np.argmax(h.probs)) == mode

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            gaussian_smooth(onehot(0, 4), -1.0)


class TestHeads:
    def test_softmax_uniform_for_equal_logits(self):
        grid = unit_grid(5)
        h = softmax_head(np.full(5, 1.7), grid)
        np.testing.assert_allclose(h.probs, 0.2, atol=1e-15)

    def test_softmax_known_value(self):
        h = softmax_head([0.0, math.log(3.0)], unit_grid(2))
        np.testing.assert_allclose(h.probs, [0.25, 0.75], atol=1e-12)

    def test_softmax_shift_invariance(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=9)
        a = softmax_head(z, unit_grid(9)).probs
        b = softmax_head(z + 123.456, unit_grid(9)).probs
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_softplus_uniform_for_equal_logits(self):
        h = softplus_head(np.full(4, -2.0), unit_grid(4))
        np.testing.assert_allclose(h.probs, 0.25, atol=1e-15)

    def test_softplus_zero_logits(self):
        h = softplus_head([0.0, 0.0], unit_grid(2))
        np.testing.assert_allclose(h.probs, [0.5, 0.5], atol=1e-15)

    def test_softplus_proportional_to_scalar_softplus(self):
        expected = np.array(
            [math.log(2.0), math.log(1.0 + math.e), math.log(1.0 + math.e**2)]
        )
        expected /= expected.sum()
        h = softplus_head([0.0, 1.0, 2.0], unit_grid(3))
        np.testing.assert_allclose(h.probs, expected, atol=1e-12)

    def test_heads_always_valid_histograms(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            k = int(rng.integers(2, 32))
            z = rng.normal(scale=rng.uniform(0.1, 50), size=k)
            for head in (softmax_head, softplus_head):
                h = head(z, unit_grid(k))
                assert np.all(h.probs > 0)
                assert abs(h.probs.sum() - 1.0) <= 1e-9

    def test_nonfinite_logits_rejected(self):
        for head in (softmax_head, softplus_head):
            with pytest.raises(ValueError):
                head([0.0, np.nan], unit_grid(2))


class TestDecode:
    def test_onehot_decodes_to_bin_center(self):
        grid = make_linear_grid(0, 10, 11)
        assert decode_argmax(onehot(4, 11, grid)) == pytest.approx(
            0.5 * (grid.edges[4] + grid.edges[5])
        )

    def test_uniform_ties_break_low(self):
        grid = make_linear_grid(0, 3, 4)
        h = Histogram(np.full(4, 0.25), grid)
        assert decode_argmax(h) == pytest.approx(0.5)

    def test_simple_two_bin_case(self):
        grid = BinGrid(np.array([0.0, 1.0, 2.0]))
        h = Histogram(np.array([0.3, 0.7]), grid)
        assert decode_argmax(h) == pytest.approx(1.5)

    def test_infinite_last_bin_returns_left_edge(self):
        grid = make_linear_grid(0, 10, 11)
        assert decode_argmax(onehot(10, 11, grid)) == 10.0

    def test_invariant_under_rescale_then_renormalize(self):
        rng = np.random.default_rng(8)
        grid = make_linear_grid(-2, 2, 12)
        for _ in range(50):
            p = rng.dirichlet(np.ones(12))
            scaled = p * rng.uniform(0.1, 100)
            scaled /= scaled.sum()
            assert decode_argmax(Histogram(p, grid)) == decode_argmax(
                Histogram(scaled, grid)
            )


class TestHistogramInvariants:
    def test_rejects_bad_vectors(self):
        grid = unit_grid(3)
        with pytest.raises(ValueError):
            Histogram(np.array([0.5, 0.6, 0.1]), grid)
        with pytest.raises(ValueError):
            Histogram(np.array([-0.1, 0.6, 0.5]), grid)
        with pytest.raises(ValueError):
            Histogram(np.array([0.5, 0.5]), grid)

    def test_mixture_invariants(self):
        with pytest.raises(ValueError):
            DiracMixture(np.array([]), np.array([]))
        with pytest.raises(ValueError):
            DiracMixture(np.array([1.0]), np.array([0.5]))
        with pytest.raises(ValueError):
            DiracMixture(np.array([np.inf]), np.array([1.0]))


class TestSerialization:
    def test_grid_text_round_trip(self):
        grid = make_linear_grid(-1.25, 3.5, 7)
        text = grid_to_text(grid)
        assert text.splitlines()[0] == "edge -1.25"
        assert text.splitlines()[-1] == "edge inf"
        back = grid_from_text(text)
        np.testing.assert_array_equal(back.edges, grid.edges)

    def test_histogram_csv_round_trip(self):
        grid = make_linear_grid(0, 1, 4)
        rng = np.random.default_rng(1)
        hists = [Histogram(rng.dirichlet(np.ones(4)), grid) for _ in range(3)]
        text = histograms_to_csv(hists)
        back = histograms_from_csv(text, grid)
        for a, b in zip(hists, back):
            np.testing.assert_array_equal(a.probs, b.probs)

    def test_bad_grid_line_rejected(self):
        with pytest.raises(ValueError):
            grid_from_text("edge 0\nvertex 1\n")
