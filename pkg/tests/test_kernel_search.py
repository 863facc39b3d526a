import numpy as np
import pytest

from gpdeform.core_types import DisplacementObservation
from gpdeform.errors import InsufficientDataError
from gpdeform.gp import KernelSpec, build_gram
from gpdeform.kernel_search import (
    CVResult,
    SearchGrid,
    choose_protocol,
    cv_error,
    default_grid,
    grid_search,
    make_folds,
)


def smooth_field_observations(seed, n=20, sill=4.0, r_eff=30.0):
    """Seeded observations drawn from a known smooth GP field."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 80, (n, 3))
    kernel = KernelSpec.from_effective_range("gaussian", sill, r_eff)
    K = build_gram(kernel, X) + 1e-10 * np.eye(n)
    L = np.linalg.cholesky(K)
    D = L @ rng.standard_normal((n, 3))
    return [DisplacementObservation(X[i], D[i]) for i in range(n)], kernel


class TestChooseProtocol:
    def test_paper_counts(self):
        assert choose_protocol(12) == "loo"
        assert choose_protocol(123) == "kfold5"

    def test_boundary(self):
        assert choose_protocol(49) == "loo"
        assert choose_protocol(50) == "kfold5"

    def test_too_few(self):
        with pytest.raises(InsufficientDataError):
            choose_protocol(1)


class TestFolds:
    def test_loo_folds(self):
        folds = make_folds(6, "loo")
        assert len(folds) == 6
        assert sorted(int(f[0]) for f in folds) == list(range(6))

    def test_kfold_partition_and_determinism(self):
        a = make_folds(57, "kfold5", seed=7)
        b = make_folds(57, "kfold5", seed=7)
        assert len(a) == 5
        assert sorted(np.concatenate(a).tolist()) == list(range(57))
        for fa, fb in zip(a, b):
            np.testing.assert_array_equal(fa, fb)
        c = make_folds(57, "kfold5", seed=8)
        assert any(not np.array_equal(fa, fc) for fa, fc in zip(a, c))


class TestCvError:
    def test_zero_displacements_zero_error(self, rng):
        X = rng.uniform(0, 50, (10, 3))
        obs = [DisplacementObservation(x, np.zeros(3)) for x in X]
        k = KernelSpec("gaussian", 1.0, 100.0)
        err, _ = cv_error(k, obs, "loo")
        assert err == pytest.approx(0.0, abs=1e-12)

    def test_prior_reversion_two_far_landmarks(self):
        k = KernelSpec("gaussian", 1.0, 1.0)  # effective range ~1.7mm
        obs = [
            DisplacementObservation([0, 0, 0], [1.0, 2.0, 2.0]),
            DisplacementObservation([1000, 0, 0], [3.0, 0.0, 4.0]),
        ]
        err, folds = cv_error(k, obs, "loo")
        assert folds[0] == pytest.approx(3.0, abs=1e-9)  # ||(1,2,2)||
        assert folds[1] == pytest.approx(5.0, abs=1e-9)  # ||(3,0,4)||
        assert err == pytest.approx(4.0, abs=1e-9)

    def test_matched_kernel_beats_mismatched(self):
        obs, true_kernel = smooth_field_observations(seed=5)
        mismatched = KernelSpec(true_kernel.family, true_kernel.sill,
                                true_kernel.param / 100**2)  # range 100x too small
        err_good, _ = cv_error(true_kernel, obs, "loo")
        err_bad, _ = cv_error(mismatched, obs, "loo")
        assert err_good < err_bad

    def test_loo_permutation_invariant(self, rng):
        obs, kernel = smooth_field_observations(seed=9, n=12)
        err_a, _ = cv_error(kernel, obs, "loo")
        perm = rng.permutation(12)
        err_b, _ = cv_error(kernel, [obs[i] for i in perm], "loo")
        assert err_a == pytest.approx(err_b, rel=1e-10)


class TestGridSearch:
    def test_single_candidate(self):
        obs, kernel = smooth_field_observations(seed=2, n=10)
        result = grid_search(SearchGrid((kernel,)), obs)
        assert result.selected == kernel
        assert result.selected_index == 0

    def test_matched_kernel_selected(self):
        obs, true_kernel = smooth_field_observations(seed=5)
        mismatched = KernelSpec(true_kernel.family, true_kernel.sill,
                                true_kernel.param / 100**2)
        result = grid_search(SearchGrid((mismatched, true_kernel)), obs)
        assert result.selected == true_kernel

    def test_duplicate_candidates_first_wins(self):
        obs, kernel = smooth_field_observations(seed=3, n=8)
        result = grid_search(SearchGrid((kernel, kernel, kernel)), obs)
        assert result.selected_index == 0

    def test_selected_is_argmin_of_reported_errors(self):
        obs, _ = smooth_field_observations(seed=11, n=15)
        result = grid_search(default_grid(obs), obs)
        finite = [e for e in result.errors if not np.isnan(e)]
        assert result.errors[result.selected_index] == min(finite)

    def test_superset_never_worse(self):
        obs, _ = smooth_field_observations(seed=13, n=15)
        small = default_grid(obs)
        extra = KernelSpec("gaussian", 1.0, 1.0, 0.5)
        big = SearchGrid(small.candidates + (extra,))
        err_small = grid_search(small, obs).errors
        err_big = grid_search(big, obs).errors
        sel_small = min(e for e in err_small if not np.isnan(e))
        sel_big = min(e for e in err_big if not np.isnan(e))
        assert sel_big <= sel_small + 1e-12

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            SearchGrid(())

    def test_result_serializable(self):
        obs, _ = smooth_field_observations(seed=1, n=10)
        doc = grid_search(default_grid(obs), obs).to_dict()
        assert doc["protocol"] == "loo"
        assert len(doc["candidates"]) == 30  # 2 families x 5 ranges x 3 nuggets
