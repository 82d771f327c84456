import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothmc.manifold import generate_matrix
from smoothmc.rng import Rng
from smoothmc.sampling import (WITH_REPLACEMENT, WITHOUT_REPLACEMENT, ObservationSet, build_R,
                               empirical_delta, observations_from_masked, observe,
                               read_observations, sample_masks, write_observations)


class TestSampleMasks:
    @pytest.mark.parametrize("mode", [WITH_REPLACEMENT, WITHOUT_REPLACEMENT])
    def test_single_cell(self, mode):
        assert sample_masks(1, 1, 1, mode, Rng(0)).tolist() == [[0, 0]]

    def test_exhaustive_subset(self):
        masks = sample_masks(2, 2, 4, WITHOUT_REPLACEMENT, Rng(0))
        assert sorted(map(tuple, masks.tolist())) == [(0, 0), (0, 1), (1, 0), (1, 1)]

    def test_uniform_frequencies(self):
        N = 100_000
        masks = sample_masks(5, 5, N, WITH_REPLACEMENT, Rng(17))
        freq = np.bincount(masks[:, 0] * 5 + masks[:, 1], minlength=25) / N
        bound = 3 * math.sqrt(0.04 * 0.96 / N)
        assert np.all(np.abs(freq - 1 / 25) <= bound)

    def test_without_replacement_distinct(self):
        masks = sample_masks(7, 9, 50, WITHOUT_REPLACEMENT, Rng(2))
        assert len(set(map(tuple, masks.tolist()))) == 50

    def test_errors(self):
        with pytest.raises(ValueError):
            sample_masks(2, 2, 5, WITHOUT_REPLACEMENT, Rng(0))
        with pytest.raises(ValueError):
            sample_masks(2, 2, 0, WITH_REPLACEMENT, Rng(0))
        with pytest.raises(ValueError):
            sample_masks(2, 2, 1, "stratified", Rng(0))


class TestObserve:
    def test_noiseless(self, np_rng):
        M = np_rng.standard_normal((4, 6))
        masks = sample_masks(4, 6, 30, WITH_REPLACEMENT, Rng(1))
        obs = observe(M, masks, 0.0)
        np.testing.assert_array_equal(obs.y, M[masks[:, 0], masks[:, 1]])

    def test_gaussian_moments(self):
        N = 100_000
        M = np.zeros((3, 3))
        obs = observe(M, sample_masks(3, 3, N, WITH_REPLACEMENT, Rng(1)), 1.0, Rng(2))
        assert abs(obs.y.mean()) <= 4 / math.sqrt(N)
        assert abs(obs.y.var(ddof=1) - 1.0) <= 0.05

    def test_single_entry_repeated(self):
        obs = observe([[7.0]], sample_masks(1, 1, 3, WITH_REPLACEMENT, Rng(0)), 0.0)
        assert obs.y.tolist() == [7.0, 7.0, 7.0]
        assert obs.mode == WITH_REPLACEMENT

    def test_bad_sigma_and_index(self):
        with pytest.raises(ValueError):
            observe(np.eye(2), [[0, 0]], -1.0)
        with pytest.raises(ValueError):
            observe(np.eye(2), [[2, 0]], 0.0)

    def test_determinism(self, np_rng):
        M = np_rng.standard_normal((6, 5))

        def draw():
            g = Rng(8)
            return observe(M, sample_masks(6, 5, 40, WITH_REPLACEMENT, g.spawn(0)), 0.7, g.spawn(1))

        a, b = draw(), draw()
        for field in ("rows", "cols", "y"):
            assert getattr(a, field).tobytes() == getattr(b, field).tobytes()


class TestObservationSet:
    def test_rejects_duplicates_without_replacement(self):
        with pytest.raises(ValueError):
            ObservationSet(2, 2, [0, 0], [1, 1], [1.0, 2.0], mode=WITHOUT_REPLACEMENT)

    def test_rejects_out_of_bounds_and_empty(self):
        with pytest.raises(ValueError):
            ObservationSet(2, 2, [2], [0], [1.0])
        with pytest.raises(ValueError):
            ObservationSet(2, 2, [], [], [])

    def test_from_masked(self):
        X = np.array([[1.0, np.nan], [np.nan, 4.0]])
        obs = observations_from_masked(X)
        assert obs.N == 2 and obs.mode == WITHOUT_REPLACEMENT
        assert obs.masks() == [(0, 0), (1, 1)]


class TestBuildR:
    def test_single_cell(self):
        R = build_R(ObservationSet(1, 1, [0], [0], [7.0]))
        np.testing.assert_array_equal(R, [[7.0]])

    def test_scaling(self):
        R = build_R(ObservationSet(2, 2, [0], [0], [1.0]))
        np.testing.assert_array_equal(R, [[4.0, 0.0], [0.0, 0.0]])

    def test_repeated_cells_accumulate(self):
        R = build_R(ObservationSet(2, 2, [0, 0], [0, 0], [1.0, 3.0]))
        assert R[0, 0] == (4 / 2) * 4
        assert np.count_nonzero(R) == 1

    def test_unbiased(self):
        n = p = 4
        M, _ = generate_matrix(n, p, 2, rng=Rng(3))
        reps, N = 10_000, 12
        acc = np.zeros((n, p))
        acc2 = np.zeros((n, p))
        g = Rng(4)
        for r in range(reps):
            sub = g.spawn(r)
            obs = observe(M, sample_masks(n, p, N, WITH_REPLACEMENT, sub.spawn(0)), 0.5, sub.spawn(1))
            R = build_R(obs)
            acc += R
            acc2 += R * R
        mean = acc / reps
        se = np.sqrt((acc2 / reps - mean**2) / reps)
        assert np.all(np.abs(mean - M) <= 4 * se)


def test_second_moment_identity_by_enumeration(np_rng):
    for _ in range(5):
        n, p = np_rng.integers(1, 6, size=2)
        M = np_rng.standard_normal((n, p))
        avg = sum(M[i, j] ** 2 for i, j in itertools.product(range(n), range(p))) / (n * p)
        assert avg == pytest.approx(np.sum(M * M) / (n * p), rel=1e-13)


class TestEmpiricalDelta:
    def test_full_sampling_noiseless_is_zero(self, np_rng):
        M = np_rng.standard_normal((3, 4))
        obs = observe(M, sample_masks(3, 4, 12, WITHOUT_REPLACEMENT, Rng(0)), 0.0)
        np.testing.assert_allclose(empirical_delta(obs, M), 0.0, atol=1e-15)

    def test_scalar(self):
        obs = ObservationSet(1, 1, [0], [0], [7.0])
        assert empirical_delta(obs, [[7.0]]).tolist() == [[0.0]]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            empirical_delta(ObservationSet(1, 1, [0], [0], [7.0]), np.zeros((2, 2)))

    def test_monte_carlo_mean_zero(self):
        n, p, N, reps = 3, 4, 20, 1000
        M = Rng(5).normal(n * p).reshape(n, p)
        deltas = np.empty((reps, n, p))
        g = Rng(6)
        for r in range(reps):
            sub = g.spawn(r)
            obs = observe(M, sample_masks(n, p, N, WITH_REPLACEMENT, sub.spawn(0)), 1.0, sub.spawn(1))
            deltas[r] = empirical_delta(obs, M)
        se = deltas.std(axis=0, ddof=1) / math.sqrt(reps)
        assert np.all(np.abs(deltas.mean(axis=0)) <= 4 * se)


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        M = Rng(1).normal(30).reshape(5, 6) * 1e-7
        obs = observe(M, sample_masks(5, 6, 25, WITH_REPLACEMENT, Rng(2)), 0.3, Rng(3), seed=42)
        csv_path, sidecar = write_observations(obs, tmp_path / "obs.csv")
        assert csv_path.read_text().splitlines()[0] == "row,col,y"
        back = read_observations(csv_path)
        assert back == obs
        assert back.y.tobytes() == obs.y.tobytes()
        assert back.seed == 42 and back.sigma == 0.3

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
    def test_round_trip_any_float(self, tmp_path_factory, values):
        d = tmp_path_factory.mktemp("obs")
        k = len(values)
        obs = ObservationSet(1, k, np.zeros(k, dtype=int), np.arange(k), values,
                             mode=WITHOUT_REPLACEMENT)
        write_observations(obs, d / "o.csv")
        assert read_observations(d / "o.csv").y.tobytes() == obs.y.tobytes()

    def test_header_and_count_checked(self, tmp_path):
        obs = ObservationSet(1, 1, [0], [0], [1.0])
        path, sidecar = write_observations(obs, tmp_path / "o.csv")
        path.write_text("i,j,v\n0,0,1.0\n")
        with pytest.raises(ValueError):
            read_observations(path)
        path.write_text("row,col,y\n0,0,1.0\n0,0,2.0\n")
        with pytest.raises(ValueError):
            read_observations(path)
