import itertools

import numpy as np
import pytest
from scipy.cluster import hierarchy
from scipy.spatial.distance import squareform

from strfkit.errors import ConvergenceWarning, DegenerateAxis, InvalidInput
from strfkit.gaborkit import ModulationPoint
from strfkit.taskdist import (
    TaskPopulation,
    cost_matrix,
    linkage,
    linkage_with_table,
    normalize_populations,
    pairwise_distances,
    population_distance,
    sinkhorn,
)


def pop(name, rows, weights=None):
    points = tuple(
        ModulationPoint(sigma_t_s=r[0], sigma_f_oct=r[1], omega=r[2], Omega=r[3])
        for r in rows
    )
    return TaskPopulation(task_name=name, points=points, weights=weights)


def random_pop(rng, name, n, shift=0.0):
    rows = np.column_stack(
        [
            rng.uniform(0.02, 0.2, n),
            rng.uniform(0.05, 0.3, n),
            rng.normal(shift, 5.0, n),
            np.abs(rng.normal(0.5, 0.3, n)),
        ]
    )
    return pop(name, rows)


class TestNormalization:
    def test_single_population_zscored(self, rng):
        p = random_pop(rng, "a", 20)
        (norm,), frame = normalize_populations([p])
        mat = norm.matrix()
        assert np.abs(mat.mean(axis=0)).max() < 1e-9
        assert np.abs(mat.std(axis=0) - 1).max() < 1e-9
        assert frame.degenerate_axes == ()

    def test_scale_invariance(self, rng):
        p = random_pop(rng, "a", 12)
        rows = p.matrix()
        scaled_rows = rows.copy()
        scaled_rows[:, 2] *= 1000.0
        (n1,), _ = normalize_populations([p])
        (n2,), _ = normalize_populations([pop("a", scaled_rows)])
        assert np.abs(n1.matrix() - n2.matrix()).max() < 1e-9

    def test_pooled_moments_hand_computed(self):
        a = pop("a", [[1, 0, 0, 0], [3, 0, 0, 0], [5, 0, 2, 1]])
        b = pop("b", [[7, 0, 4, 1], [9, 0, 6, 1], [11, 0, 8, 1]])
        with pytest.warns(DegenerateAxis):
            (na, nb), frame = normalize_populations([a, b])
        assert frame.means[0] == pytest.approx(6.0)  # mean of 1,3,5,7,9,11
        assert frame.stds[0] == pytest.approx(np.sqrt(np.mean((np.arange(1, 12, 2) - 6.0) ** 2)))
        assert frame.means[2] == pytest.approx(10 / 3)
        assert 1 in frame.degenerate_axes  # sigma_f axis constant at 0
        assert na.matrix()[0, 1] == a.matrix()[0, 1] - frame.means[1]  # unscaled

    def test_weights_untouched(self, rng):
        w = np.array([0.7, 0.2, 0.1])
        p = pop("a", rng.uniform(0, 1, (3, 4)), weights=w)
        (norm,), _ = normalize_populations([p])
        assert np.array_equal(norm.weights, w)

    def test_invalid_weights_rejected(self, rng):
        rows = rng.uniform(0, 1, (3, 4))
        with pytest.raises(InvalidInput):
            pop("a", rows, weights=np.array([0.5, 0.5, 0.5]))
        with pytest.raises(InvalidInput):
            pop("a", rows, weights=np.array([1.5, -0.5, 0.0]))


class TestCostMatrix:
    def test_identical_populations_zero_diagonal(self, rng):
        a = random_pop(rng, "a", 6)
        M = cost_matrix(a, a)
        assert np.abs(np.diag(M)).max() == 0.0

    def test_singleton_distance(self):
        a = pop("a", [[0, 0, 0, 0]])
        b = pop("b", [[0, 0, 3, 0]])
        assert cost_matrix(a, b) == pytest.approx(np.array([[3.0]]))

    def test_matches_double_loop_oracle(self, rng):
        a, b = random_pop(rng, "a", 5), random_pop(rng, "b", 7)
        M = cost_matrix(a, b)
        A, B = a.matrix(), b.matrix()
        for i in range(5):
            for j in range(7):
                assert M[i, j] == pytest.approx(np.linalg.norm(A[i] - B[j]), rel=1e-12)


class TestSinkhorn:
    def test_identical_singletons_distance_zero(self):
        a = pop("a", [[0.1, 0.2, 5.0, 1.0]])
        res = population_distance(a, a)
        assert res.distance == 0.0
        assert res.plan == pytest.approx(np.array([[1.0]]))

    def test_forced_plan_singletons(self):
        a = pop("a", [[0, 0, 0, 0]])
        b = pop("b", [[0, 0, 3, 0]])
        res = population_distance(a, b)
        assert res.distance == pytest.approx(3.0, abs=1e-12)

    def test_small_lambda_matches_assignment_oracle(self, rng):
        n = 4
        a, b = random_pop(rng, "a", n), random_pop(rng, "b", n, shift=3.0)
        (na, nb), _ = normalize_populations([a, b])
        M = cost_matrix(na, nb)
        res = sinkhorn(M, na.weights, nb.weights, lam=1e-3)
        brute = min(
            sum(M[i, p[i]] for i in range(n)) / n
            for p in itertools.permutations(range(n))
        )
        assert res.converged
        assert abs(res.distance - brute) < 1e-3

    def test_marginals_within_tolerance(self, rng):
        a, b = random_pop(rng, "a", 10), random_pop(rng, "b", 14, shift=1.0)
        (na, nb), _ = normalize_populations([a, b])
        res = population_distance(na, nb)
        assert res.converged
        assert np.abs(res.plan.sum(axis=1) - na.weights).max() < 1e-6
        assert np.abs(res.plan.sum(axis=0) - nb.weights).max() < 1e-6

    def test_different_cardinalities_comparable(self, rng):
        a, b = random_pop(rng, "a", 24), random_pop(rng, "b", 64, shift=0.5)
        (na, nb), _ = normalize_populations([a, b])
        res = population_distance(na, nb)
        assert np.isfinite(res.distance)
        assert res.marginal_error < 1e-6

    def test_symmetry_both_orders(self, rng):
        a, b = random_pop(rng, "a", 8), random_pop(rng, "b", 11, shift=1.0)
        (na, nb), _ = normalize_populations([a, b])
        M = cost_matrix(na, nb)
        d_ab = sinkhorn(M, na.weights, nb.weights).distance
        d_ba = sinkhorn(M.T, nb.weights, na.weights).distance
        assert abs(d_ab - d_ba) < 1e-6

    def test_transport_cost_monotone_in_lambda(self, rng):
        a, b = random_pop(rng, "a", 9), random_pop(rng, "b", 9, shift=2.0)
        (na, nb), _ = normalize_populations([a, b])
        M = cost_matrix(na, nb)
        costs = [
            sinkhorn(M, na.weights, nb.weights, lam=lam).distance
            for lam in (1e-3, 1e-2, 1e-1)
        ]
        assert costs[0] <= costs[1] <= costs[2]

    def test_entropy_term_rides_along(self, rng):
        a, b = random_pop(rng, "a", 5), random_pop(rng, "b", 5, shift=1.0)
        (na, nb), _ = normalize_populations([a, b])
        res = population_distance(na, nb, lam=0.1)
        assert res.regularized_objective < res.distance  # cost - lam*h(P)

    def test_iteration_cap_warns_not_raises(self, rng):
        a, b = random_pop(rng, "a", 6), random_pop(rng, "b", 6, shift=2.0)
        (na, nb), _ = normalize_populations([a, b])
        M = cost_matrix(na, nb)
        with pytest.warns(ConvergenceWarning):
            res = sinkhorn(M, na.weights, nb.weights, lam=1e-3, max_iter=3)
        assert not res.converged
        assert res.iterations_used == 3

    def test_negative_cost_rejected(self):
        with pytest.raises(InvalidInput):
            sinkhorn(np.array([[-1.0]]), np.ones(1), np.ones(1))

    def test_large_lambda_uses_linear_domain(self, rng):
        a, b = random_pop(rng, "a", 5), random_pop(rng, "b", 5)
        (na, nb), _ = normalize_populations([a, b])
        M = cost_matrix(na, nb)
        res = sinkhorn(M, na.weights, nb.weights, lam=1.0)
        assert res.converged
        assert res.marginal_error < 1e-9


class TestPairwise:
    def test_symmetric_with_small_self_distance(self, rng):
        pops = [random_pop(rng, f"t{i}", 8, shift=float(i)) for i in range(3)]
        normalized, _ = normalize_populations(pops)
        D = pairwise_distances(normalized)
        assert np.abs(D - D.T).max() < 1e-6
        assert np.abs(np.diag(D)).max() < 1e-3

    def test_between_population_orders_by_geometry(self, rng):
        # collinear populations: A at 0, B at 2, C at 6 along omega
        rows = lambda c: [[0.1, 0.1, c + 0.01 * i, 0.2] for i in range(6)]
        pops = [pop("A", rows(0.0)), pop("B", rows(2.0)), pop("C", rows(6.0))]
        normalized, _ = normalize_populations(pops)
        D = pairwise_distances(normalized)
        assert D[0, 2] >= max(D[0, 1], D[1, 2])

    def test_needs_two_populations(self, rng):
        with pytest.raises(InvalidInput):
            pairwise_distances([random_pop(rng, "a", 4)])


class TestLinkage:
    def test_two_tasks_single_merge(self):
        D = np.array([[0.0, 2.5], [2.5, 0.0]])
        root = linkage(D, ["a", "b"])
        assert root.merge_height == 2.5
        assert sorted(root.leaf_names()) == ["a", "b"]

    def test_three_tasks_clear_separation(self):
        D = np.array([[0.0, 1.0, 10.0], [1.0, 0.0, 10.0], [10.0, 10.0, 0.0]])
        root = linkage(D, ["A", "B", "C"])
        assert root.merge_height == pytest.approx(10.0)
        first, second = root.children
        pair = first if not first.is_leaf else second
        assert sorted(pair.leaf_names()) == ["A", "B"]
        assert pair.merge_height == pytest.approx(1.0)

    def test_matches_scipy_average_linkage(self, rng):
        n = 5
        X = rng.standard_normal((n, 3))
        D = np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1))
        np.fill_diagonal(D, 0.0)
        _, table = linkage_with_table(D, list("abcde"))
        expected = hierarchy.linkage(squareform(D), method="average")
        assert table[:, 2] == pytest.approx(expected[:, 2], rel=1e-12)
        assert table[:, 3] == pytest.approx(expected[:, 3])

    def test_heights_nondecreasing(self, rng):
        n = 7
        X = rng.standard_normal((n, 4))
        D = np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1))
        np.fill_diagonal(D, 0.0)
        _, table = linkage_with_table(D, [f"t{i}" for i in range(n)])
        assert np.all(np.diff(table[:, 2]) >= -1e-12)

    def test_deterministic_on_ties(self):
        D = np.ones((4, 4)) - np.eye(4)  # all pairs tied
        r1, t1 = linkage_with_table(D, ["a", "b", "c", "d"])
        r2, t2 = linkage_with_table(D, ["a", "b", "c", "d"])
        assert r1.to_dict() == r2.to_dict()
        assert np.array_equal(t1, t2)
        assert tuple(t1[0][:2]) == (0, 1)  # lexicographic tie-break

    def test_asymmetric_matrix_rejected(self):
        with pytest.raises(InvalidInput):
            linkage(np.array([[0.0, 1.0], [2.0, 0.0]]), ["a", "b"])

    def test_json_round_trip_structure(self):
        D = np.array([[0.0, 1.0, 4.0], [1.0, 0.0, 4.0], [4.0, 4.0, 0.0]])
        doc = linkage(D, ["x", "y", "z"]).to_dict()
        assert doc["size"] == 3
        assert len(doc["children"]) == 2
