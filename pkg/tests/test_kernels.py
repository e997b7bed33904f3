"""Backend parity and solver correctness for the matching kernels."""

import numpy as np
import pytest

from chromm.kernels import reference

from oracles import brute_force_assignment

try:
    from chromm.kernels import _native
except ImportError:
    _native = None

BACKENDS = [reference] if _native is None else [reference, _native]


def _dustbin_problem(rng, p, c, gamma=1.0):
    dist = rng.uniform(0.0, 2.0, (p, c))
    cost = np.full((p + 1, c + 1), gamma)
    cost[:p, :c] = dist
    cost[p, c] = 0.0
    row_mass = np.ones(p + 1)
    row_mass[p] = c
    col_mass = np.ones(c + 1)
    col_mass[c] = p
    return cost, row_mass, col_mass


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.BACKEND_NAME)
class TestPerBackend:
    def test_token_distances(self, impl, rng):
        a = rng.normal(size=(4, 16))
        b = rng.normal(size=(6, 16))
        expected = np.linalg.norm(a[:, None] - b[None, :], axis=2)
        assert np.abs(impl.token_distance_matrix(a, b) - expected).max() < 1e-12

    def test_sinkhorn_marginals_converged_case(self, impl, rng):
        # well-separated costs (the tracking regime) converge quickly
        for _ in range(20):
            cost, row_mass, col_mass = _dustbin_problem(rng, 3, 3)
            cost[:3, :3] = np.where(np.eye(3, dtype=bool), 0.05, 5.0)
            plan, iterations, converged = impl.sinkhorn_plan(cost, row_mass, col_mass,
                                                             0.05, 200, 1e-6)
            assert converged
            assert np.abs(plan.sum(axis=1) - row_mass).max() < 1e-5
            assert np.abs(plan.sum(axis=0) - col_mass).max() < 1e-5

    def test_sinkhorn_column_marginals_always_tight(self, impl, rng):
        # the column update runs last, so column sums are exact even when the
        # iteration cap is hit
        for _ in range(10):
            cost, row_mass, col_mass = _dustbin_problem(rng, 3, 4)
            plan, _it, _conv = impl.sinkhorn_plan(cost, row_mass, col_mass,
                                                  0.05, 50, 1e-12)
            assert np.abs(plan.sum(axis=0) - col_mass).max() < 1e-9

    def test_sinkhorn_nonconvergence_flag(self, impl, rng):
        cost, row_mass, col_mass = _dustbin_problem(rng, 3, 3)
        plan, iterations, converged = impl.sinkhorn_plan(cost, row_mass, col_mass,
                                                         0.05, 2, 1e-12)
        assert not converged
        assert iterations == 2
        assert np.isfinite(plan).all()

    def test_assignment_matches_brute_force(self, impl, rng):
        for _ in range(300):
            n = int(rng.integers(1, 7))
            m = int(rng.integers(1, 7))
            cost = rng.uniform(0.0, 10.0, (n, m))
            rows, cols = impl.solve_assignment(cost)
            assert len(rows) == min(n, m)
            assert len(set(rows.tolist())) == len(rows)
            assert len(set(cols.tolist())) == len(cols)
            _pairs, best = brute_force_assignment(cost)
            total = cost[rows, cols].sum()
            assert abs(total - best) < 1e-9

    def test_assignment_empty(self, impl):
        rows, cols = impl.solve_assignment(np.zeros((0, 3)))
        assert len(rows) == 0 and len(cols) == 0

    def test_joint_pair_cost(self, impl, rng):
        wa = rng.normal(size=(5, 24, 3))
        wb = rng.normal(size=(5, 24, 3))
        ca = rng.normal(size=(5, 24, 3))
        cb = rng.normal(size=(5, 24, 3))
        expected = (0.8 * np.linalg.norm(wa - wb, axis=2).mean()
                    + 0.2 * np.linalg.norm(ca - cb, axis=2).mean())
        assert impl.joint_pair_cost(wa, ca, wb, cb, 0.8, 0.2) == pytest.approx(expected, abs=1e-12)

    def test_mean_displacement(self, impl, rng):
        a = rng.normal(size=(24, 3))
        b = rng.normal(size=(24, 3))
        expected = np.linalg.norm(a - b, axis=1).mean()
        assert impl.mean_displacement(a, b) == pytest.approx(expected, abs=1e-12)


@pytest.mark.skipif(_native is None, reason="compiled backend not built")
class TestBackendParity:
    def test_sinkhorn_parity(self, rng):
        for _ in range(50):
            p = int(rng.integers(1, 5))
            c = int(rng.integers(1, 5))
            cost, row_mass, col_mass = _dustbin_problem(rng, p, c)
            plan_py, it_py, conv_py = reference.sinkhorn_plan(cost, row_mass, col_mass,
                                                              0.05, 100, 1e-6)
            plan_cy, it_cy, conv_cy = _native.sinkhorn_plan(cost, row_mass, col_mass,
                                                            0.05, 100, 1e-6)
            assert it_py == it_cy and conv_py == conv_cy
            assert np.abs(plan_py - plan_cy).max() < 1e-9

    def test_assignment_parity(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 8))
            m = int(rng.integers(1, 8))
            cost = rng.uniform(0.0, 10.0, (n, m))
            res_py = reference.solve_assignment(cost)
            res_cy = _native.solve_assignment(cost)
            assert np.array_equal(res_py[0], res_cy[0])
            assert np.array_equal(res_py[1], res_cy[1])

    def test_cost_kernels_parity(self, rng):
        wa, ca, wb, cb = rng.normal(size=(4, 7, 24, 3))
        assert reference.joint_pair_cost(wa, ca, wb, cb, 0.8, 0.2) == pytest.approx(
            _native.joint_pair_cost(wa, ca, wb, cb, 0.8, 0.2), abs=1e-12
        )
        assert reference.mean_displacement(wa[0], wb[0]) == pytest.approx(
            _native.mean_displacement(wa[0], wb[0]), abs=1e-12
        )
        a = rng.normal(size=(5, 64))
        b = rng.normal(size=(3, 64))
        assert np.abs(reference.token_distance_matrix(a, b)
                      - _native.token_distance_matrix(a, b)).max() < 1e-12
