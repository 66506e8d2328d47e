import numpy as np
import pytest

from partfill.sampling import (
    farthest_point_sample,
    make_sample,
    merge_and_sample,
    minimum_density_sample,
    sphere_split,
)


def random_cloud(n, seed, scale=1.0):
    return (np.random.default_rng(seed).random((n, 3)) * 2 - 1) * scale


def seed_with_first_index(cloud, wanted):
    """Find a seed whose uniform first draw lands on `wanted` (for pinned cases)."""
    for seed in range(10_000):
        if int(np.random.default_rng(seed).integers(len(cloud))) == wanted:
            return seed
    raise AssertionError("no seed found")


class TestSphereSplit:
    def test_hand_case(self):
        cloud = np.array([[0.0, 0, 0], [1.0, 0, 0]])
        inside, outside = sphere_split(cloud, (0, 0, 0), 0.5)
        assert np.array_equal(inside, [[0, 0, 0]])
        assert np.array_equal(outside, [[1, 0, 0]])

    def test_boundary_point_goes_inside(self):
        cloud = np.array([[0.5, 0, 0]])
        inside, outside = sphere_split(cloud, (0, 0, 0), 0.5)
        assert len(inside) == 1 and len(outside) == 0

    def test_radius_larger_than_diameter(self):
        cloud = random_cloud(64, 0)
        inside, outside = sphere_split(cloud, (0, 0, 0), 10.0)
        assert len(inside) == 64 and len(outside) == 0

    def test_partition_preserves_multiset(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            cloud = rng.random((2048, 3)) * 2 - 1
            center = cloud[rng.integers(2048)]
            r = rng.uniform(0.05, 0.9)
            inside, outside = sphere_split(cloud, center, r)
            assert len(inside) + len(outside) == 2048
            merged = np.vstack([inside, outside])
            assert np.array_equal(np.sort(merged, axis=0), np.sort(cloud, axis=0))
            if len(inside):
                assert np.linalg.norm(inside - center, axis=1).max() <= r + 1e-12
            if len(outside):
                assert np.linalg.norm(outside - center, axis=1).min() > r

    def test_radius_must_be_positive(self):
        with pytest.raises(ValueError):
            sphere_split(random_cloud(8, 0), (0, 0, 0), 0.0)


class TestMakeSample:
    def test_sizes(self):
        sample = make_sample(random_cloud(8192, 1), 0.35, seed=0)
        assert sample.complete.shape == (2048, 3)
        assert sample.partial.shape == (2048, 3)
        assert sample.missing.shape == (1024, 3)

    def test_split_witness_invariants(self):
        sample = make_sample(random_cloud(8192, 2), 0.35, seed=3)
        d_missing = np.linalg.norm(sample.missing - sample.center, axis=1)
        d_partial = np.linalg.norm(sample.partial - sample.center, axis=1)
        assert d_missing.max() <= sample.radius + 1e-12
        assert d_partial.min() > sample.radius

    def test_deterministic(self):
        cloud = random_cloud(8192, 3)
        a = make_sample(cloud, 0.35, seed=17)
        b = make_sample(cloud, 0.35, seed=17)
        assert np.array_equal(a.complete, b.complete)
        assert np.array_equal(a.partial, b.partial)
        assert np.array_equal(a.missing, b.missing)
        assert np.array_equal(a.center, b.center)

    def test_missing_drawn_only_from_inside(self):
        cloud = random_cloud(8192, 4)
        sample = make_sample(cloud, 0.4, seed=9)
        inside, _ = sphere_split(cloud, sample.center, sample.radius)
        inside_set = {tuple(p) for p in inside}
        assert all(tuple(p) in inside_set for p in sample.missing)

    def test_radius_range_validated(self):
        with pytest.raises(ValueError):
            make_sample(random_cloud(8192, 0), 1.5, seed=0)

    def test_degenerate_cloud_exhausts_retries(self):
        # every point identical: the outside side is always empty
        cloud = np.zeros((8192, 3))
        with pytest.raises(RuntimeError, match="16 attempts"):
            make_sample(cloud, 0.5, seed=0)


def brute_force_fps_from(cloud, first, k):
    """Independent oracle: greedy max-min from a fixed start, by full scan."""
    chosen = [first]
    while len(chosen) < k:
        best_i, best_d = None, -1.0
        for i in range(len(cloud)):
            if i in chosen:
                continue
            d = min(np.linalg.norm(cloud[i] - cloud[j]) for j in chosen)
            if d > best_d:
                best_i, best_d = i, d
        chosen.append(best_i)
    return chosen


class TestFarthestPointSample:
    def test_k_equals_n_returns_whole_cloud(self):
        cloud = random_cloud(32, 7)
        pts, idx = farthest_point_sample(cloud, 32, seed=0)
        assert sorted(idx) == list(range(32))
        assert np.array_equal(np.sort(pts, axis=0), np.sort(cloud, axis=0))

    def test_collinear_hand_case(self):
        # from x=0: farthest is x=4; then x=2 maximizes min distance (2 vs 1)
        cloud = np.array([[float(x), 0, 0] for x in range(5)])
        seed = seed_with_first_index(cloud, 0)
        _, idx = farthest_point_sample(cloud, 3, seed=seed)
        assert list(idx) == [0, 4, 2]
        assert brute_force_fps_from(cloud, 0, 3) == [0, 4, 2]

    def test_max_min_optimality_every_step(self):
        for trial in range(20):
            cloud = random_cloud(100, 50 + trial)
            _, idx = farthest_point_sample(cloud, 16, seed=trial)
            for t in range(1, 16):
                selected = cloud[idx[:t]]
                dmin = np.linalg.norm(cloud[:, None, :] - selected[None, :, :], axis=2).min(axis=1)
                dmin[idx[:t]] = -np.inf
                assert dmin[idx[t]] >= dmin.max() - 1e-12

    def test_coverage_radius_non_increasing(self):
        cloud = random_cloud(256, 11)
        coverages = []
        for k in range(1, 65):
            pts, _ = farthest_point_sample(cloud, k, seed=5)
            dmin = np.linalg.norm(cloud[:, None, :] - pts[None, :, :], axis=2).min(axis=1)
            coverages.append(dmin.max())
        assert all(b <= a + 1e-12 for a, b in zip(coverages, coverages[1:]))

    def test_k_out_of_range(self):
        with pytest.raises(ValueError):
            farthest_point_sample(random_cloud(8, 0), 9, seed=0)

    def test_deterministic(self):
        cloud = random_cloud(512, 13)
        _, a = farthest_point_sample(cloud, 64, seed=21)
        _, b = farthest_point_sample(cloud, 64, seed=21)
        assert np.array_equal(a, b)

    def test_duplicates_never_repicked(self):
        cloud = np.repeat(random_cloud(4, 3), 4, axis=0)
        _, idx = farthest_point_sample(cloud, 16, seed=1)
        assert len(set(idx)) == 16


def gaussian_density(cloud, selected_idx, sigma):
    sel = cloud[selected_idx]
    d2 = ((cloud[:, None, :] - sel[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-d2 / (2 * sigma * sigma)).sum(axis=1)


class TestMinimumDensitySample:
    def test_k1_is_seeded_draw(self):
        cloud = random_cloud(64, 1)
        pts, idx = minimum_density_sample(cloud, 1, sigma=0.05, seed=3)
        expected = int(np.random.default_rng(3).integers(64))
        assert idx[0] == expected and np.array_equal(pts[0], cloud[expected])

    def test_two_clusters_second_pick_crosses(self):
        rng = np.random.default_rng(0)
        a = rng.random((20, 3)) * 0.01
        b = rng.random((20, 3)) * 0.01 + 10.0  # separation >> sigma
        cloud = np.vstack([a, b])
        seed = seed_with_first_index(cloud, 5)  # first pick inside cluster A
        _, idx = minimum_density_sample(cloud, 2, sigma=0.05, seed=seed)
        assert idx[0] == 5 and idx[1] >= 20
        # brute force: every cross-cluster candidate has (numerically) zero
        # density, so the chosen one must be the global arg-min
        density = gaussian_density(cloud, idx[:1], 0.05)
        density[idx[0]] = np.inf
        assert density[idx[1]] == density.min()

    def test_min_density_optimality_every_step(self):
        for trial in range(10):
            cloud = random_cloud(80, 90 + trial)
            _, idx = minimum_density_sample(cloud, 12, sigma=0.3, seed=trial)
            for t in range(1, 12):
                density = gaussian_density(cloud, idx[:t], 0.3)
                density[idx[:t]] = np.inf
                assert density[idx[t]] <= density.min() + 1e-12

    def test_sigma_to_zero_tie_breaks_lowest_index(self):
        cloud = random_cloud(32, 2)
        seed = seed_with_first_index(cloud, 7)
        _, idx = minimum_density_sample(cloud, 3, sigma=1e-12, seed=seed)
        # all unselected densities are exactly 0, so picks walk the lowest indices
        assert list(idx) == [7, 0, 1]

    def test_parameter_validation(self):
        cloud = random_cloud(8, 0)
        with pytest.raises(ValueError):
            minimum_density_sample(cloud, 9, sigma=0.1, seed=0)
        with pytest.raises(ValueError):
            minimum_density_sample(cloud, 2, sigma=0.0, seed=0)


class TestMergeAndSample:
    def setup_method(self):
        self.partial = random_cloud(2048, 31)
        self.predicted = random_cloud(1024, 32, scale=0.5)

    def test_output_size_and_labels(self):
        out = merge_and_sample(self.partial, self.predicted, 2048, "ifps", seed=0)
        assert out.points.shape == (2048, 3)
        assert set(np.unique(out.labels)) <= {0, 1}
        assert out.labels.shape == (2048,)

    def test_label_fidelity_matches_source_indices(self):
        for method in ("ifps", "mds"):
            out = merge_and_sample(self.partial, self.predicted, 512, method, seed=4)
            assert np.array_equal(out.labels, (out.source_indices >= 2048).astype(np.int64))
            merged = np.vstack([self.partial, self.predicted])
            assert np.array_equal(out.points, merged[out.source_indices])

    def test_deterministic(self):
        a = merge_and_sample(self.partial, self.predicted, 2048, "ifps", seed=9)
        b = merge_and_sample(self.partial, self.predicted, 2048, "ifps", seed=9)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.source_indices, b.source_indices)

    def test_oversized_request_rejected(self):
        with pytest.raises(ValueError):
            merge_and_sample(self.partial, self.predicted, 3073, "ifps", seed=0)

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError, match="unknown sampling method"):
            merge_and_sample(self.partial, self.predicted, 64, "random", seed=0)

    def test_survivor_labels_consistent_when_predicted_dropped(self):
        # predicted points far away and dense: selection may drop most of
        # them, but every survivor's label must still match its origin
        predicted = np.full((1024, 3), 0.001) + random_cloud(1024, 40, scale=1e-4)
        out = merge_and_sample(self.partial, predicted, 2048, "ifps", seed=2)
        merged = np.vstack([self.partial, predicted])
        for i in range(0, 2048, 97):
            src = out.source_indices[i]
            assert out.labels[i] == (1 if src >= 2048 else 0)
            assert np.array_equal(out.points[i], merged[src])
