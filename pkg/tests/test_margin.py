import math

import numpy as np
import pytest

from ntklab import (Dataset, Ntk1Kernel, SimplexWeights, ValidationError,
                    eigen_margin_lower_bound, gram, make_xor2, margin_objective,
                    random_label_experiment, solve_margin, witness_margins,
                    witness_supnorm_check)
from ntklab.kernels import LinearKernel

from oracles import exact_min_margin, grid_min_margin


def antipodal_pair():
    X = np.array([[1.0, 0.0], [-1.0, 0.0]])
    return Dataset.from_arrays(X, np.array([1.0, -1.0]))


def random_instance(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    y = rng.choice([-1.0, 1.0], size=n)
    return Dataset.from_arrays(X, y)


class TestObjective:
    def test_linear_kernel_hand_value(self):
        ds = antipodal_pair()
        g = gram(LinearKernel(), ds)
        assert margin_objective(np.array([0.5, 0.5]), g, ds.y) == pytest.approx(1.0)

    def test_ntk1_hand_value(self):
        ds = antipodal_pair()
        g = gram(Ntk1Kernel(), ds)
        assert margin_objective(np.array([0.5, 0.5]), g, ds.y) == pytest.approx(0.25)

    def test_vertex_gives_diagonal(self):
        ds = random_instance(4, 3, 0)
        g = gram(Ntk1Kernel(), ds)
        q = np.zeros(4)
        q[0] = 1.0
        assert margin_objective(q, g, ds.y) == pytest.approx(g.matrix[0, 0])

    def test_simplex_weights_validated(self):
        with pytest.raises(ValidationError):
            SimplexWeights(np.array([0.7, 0.7]))
        with pytest.raises(ValidationError):
            SimplexWeights(np.array([1.2, -0.2]))


class TestSolver:
    def test_constant_objective_instance(self):
        ds = antipodal_pair()
        res = solve_margin(gram(LinearKernel(), ds), ds.y)
        assert res.gamma == pytest.approx(1.0, abs=1e-9)
        assert res.converged

    def test_ntk1_two_points(self):
        ds = antipodal_pair()
        res = solve_margin(gram(Ntk1Kernel(), ds), ds.y)
        assert res.gamma == pytest.approx(0.5, abs=1e-9)
        np.testing.assert_allclose(res.q_star.q, [0.5, 0.5], atol=1e-7)

    def test_single_point(self):
        ds = Dataset.from_arrays(np.array([[1.0, 0.0]]), np.array([-1.0]))
        res = solve_margin(gram(Ntk1Kernel(), ds), ds.y)
        assert res.gamma == pytest.approx(math.sqrt(0.5), abs=1e-12)

    def test_agrees_with_grid_and_enumeration(self):
        for seed in range(5):
            n = 3 + seed % 4
            ds = random_instance(n, 4, 100 + seed)
            g = gram(Ntk1Kernel(), ds)
            res = solve_margin(g, ds.y, tol=1e-10)
            exact = exact_min_margin(g.matrix, ds.y)
            grid = grid_min_margin(g.matrix, ds.y, resolution=2e-3)
            assert res.gamma == pytest.approx(exact, abs=1e-6)
            assert abs(res.gamma - grid) <= 1e-3

    def test_vanilla_variant_agrees_when_converged(self):
        ds = random_instance(4, 3, 7)
        g = gram(Ntk1Kernel(), ds)
        pw = solve_margin(g, ds.y, tol=1e-7)
        va = solve_margin(g, ds.y, tol=1e-7, variant="vanilla", max_iters=500_000)
        assert abs(pw.gamma - va.gamma) <= 1e-3

    def test_objective_monotone(self):
        ds = random_instance(6, 4, 9)
        g = gram(Ntk1Kernel(), ds)
        res = solve_margin(g, ds.y, record_objective=True)
        assert np.all(np.diff(res.objective_trace) <= 1e-14)

    def test_label_flip_invariance(self):
        ds = random_instance(6, 4, 13)
        g = gram(Ntk1Kernel(), ds)
        a = solve_margin(g, ds.y, tol=1e-10)
        b = solve_margin(g, -ds.y, tol=1e-10)
        assert a.gamma == pytest.approx(b.gamma, abs=1e-9)

    def test_non_convergence_reported(self):
        ds = random_instance(6, 4, 17)
        g = gram(Ntk1Kernel(), ds)
        res = solve_margin(g, ds.y, tol=1e-14, max_iters=2)
        assert not res.converged
        assert res.iterations == 2
        assert np.isfinite(res.duality_gap)

    def test_tie_breaks_to_lowest_index(self):
        # Identical duplicated points: gradient ties everywhere at start.
        K = np.full((3, 3), 0.5)
        res = solve_margin(K, np.array([1.0, 1.0, 1.0]), max_iters=5)
        assert res.gamma == pytest.approx(math.sqrt(0.5), abs=1e-9)

    def test_zero_margin_duplicated_point_opposite_labels(self):
        X = np.array([[1.0, 0.0], [1.0, 0.0]])
        ds = Dataset.from_arrays(X, np.array([1.0, -1.0]))
        res = solve_margin(gram(Ntk1Kernel(), ds), ds.y)
        assert res.gamma <= 1e-8


class TestWitness:
    def test_hand_margins_two_points(self):
        ds = antipodal_pair()
        g = gram(Ntk1Kernel(), ds)
        res = solve_margin(g, ds.y)
        margins = witness_margins(res, g, ds.y)
        np.testing.assert_allclose(margins, [0.5, 0.5], atol=1e-7)

    def test_single_point_margin(self):
        ds = Dataset.from_arrays(np.array([[0.0, 1.0]]), np.array([1.0]))
        g = gram(Ntk1Kernel(), ds)
        res = solve_margin(g, ds.y)
        assert witness_margins(res, g, ds.y)[0] == pytest.approx(math.sqrt(0.5), abs=1e-12)

    def test_margins_cover_gamma_on_random_instance(self):
        ds = random_instance(6, 5, 19)
        g = gram(Ntk1Kernel(), ds)
        res = solve_margin(g, ds.y, tol=1e-8)
        assert np.min(witness_margins(res, g, ds.y)) >= res.gamma - 1e-3

    def test_degenerate_margin_refused(self):
        X = np.array([[1.0, 0.0], [1.0, 0.0]])
        ds = Dataset.from_arrays(X, np.array([1.0, -1.0]))
        g = gram(Ntk1Kernel(), ds)
        res = solve_margin(g, ds.y)
        with pytest.raises(ValidationError):
            witness_margins(res, g, ds.y)

    def test_supnorm_vertex_weights(self):
        ds = Dataset.from_arrays(np.array([[1.0, 0.0]]), np.array([1.0]))
        g = gram(Ntk1Kernel(), ds)
        res = solve_margin(g, ds.y)
        sup = witness_supnorm_check(res, ds, 500, np.random.default_rng(0))
        assert sup <= 1.0 + 1e-9

    def test_supnorm_antipodal_half(self):
        ds = antipodal_pair()
        g = gram(Ntk1Kernel(), ds)
        res = solve_margin(g, ds.y)
        sup = witness_supnorm_check(res, ds, 2000, np.random.default_rng(1))
        assert sup <= 0.5 + 1e-9

    def test_supnorm_random_instance(self):
        ds = random_instance(6, 4, 23)
        g = gram(Ntk1Kernel(), ds)
        res = solve_margin(g, ds.y)
        sup = witness_supnorm_check(res, ds, 10_000, np.random.default_rng(2))
        assert sup <= 1.0 + 1e-9


class TestEigenFloor:
    def test_orthogonal_points(self):
        X = np.eye(4)
        ds = Dataset.from_arrays(X, np.array([1.0, -1.0, 1.0, -1.0]))
        g = gram(Ntk1Kernel(), ds)
        assert eigen_margin_lower_bound(g, ds.y) == pytest.approx(math.sqrt(0.5 / 4.0), abs=1e-12)

    def test_rank_deficient_floor_zero(self):
        X = np.array([[1.0, 0.0], [1.0, 0.0]])
        g = gram(Ntk1Kernel(), Dataset.from_arrays(X, np.array([1.0, -1.0])))
        assert eigen_margin_lower_bound(g) == 0.0

    def test_solver_respects_floor(self):
        for seed in (29, 31, 37):
            ds = random_instance(7, 5, seed)
            g = gram(Ntk1Kernel(), ds)
            res = solve_margin(g, ds.y, tol=1e-10)
            assert res.gamma >= eigen_margin_lower_bound(g, ds.y) - 1e-8


class TestRandomLabels:
    def test_single_point_margin_fixed(self):
        ds = Dataset.from_arrays(np.array([[1.0, 0.0]]), np.array([1.0]))
        out = random_label_experiment(ds, trials=4, seed=0)
        np.testing.assert_allclose(out["gammas"], math.sqrt(0.5), atol=1e-12)

    def test_reproducible(self):
        ds = make_xor2(4, mode="exhaustive")
        a = random_label_experiment(ds, trials=3, seed=5)
        b = random_label_experiment(ds, trials=3, seed=5)
        np.testing.assert_array_equal(a["gammas"], b["gammas"])

    def test_threads_do_not_change_results(self):
        ds = make_xor2(4, mode="exhaustive")
        a = random_label_experiment(ds, trials=6, seed=5, threads=1)
        b = random_label_experiment(ds, trials=6, seed=5, threads=4)
        np.testing.assert_array_equal(a["gammas"], b["gammas"])
