import numpy as np
import pytest
from helpers import fd_drm_factor_grads, fd_drm_score_grad, rel_err

from drmrec.factors import FactorModel, init_model
from drmrec.objectives import (drm_factor_grads, drm_loss,
                               drm_loss_and_score_grad, drm_loss_many,
                               drm_score_grad, drm_workspace, hinge_gradients,
                               hinge_loss, mse_loss, phi_weight,
                               relaxed_objective)
from drmrec.relaxed_sort import weighted_truncated_sum


class TestPhiWeight:
    def test_worked_example_log_31(self):
        # N=100, 10 negatives, 3 of them inside the indicator margin
        neg = np.array([-0.4, -0.45, -0.5] + [-0.6] * 7)
        value = phi_weight(0.5, neg, 100)
        assert value == pytest.approx(np.log(31.0), abs=1e-12)

    def test_all_negatives_violating(self):
        neg = np.full(8, 2.0)
        assert phi_weight(0.0, neg, 500) == pytest.approx(np.log(501.0),
                                                          abs=1e-12)

    def test_no_violations_gives_zero(self):
        assert phi_weight(5.0, np.array([-5.0, -6.0]), 100) == 0.0

    def test_indicator_boundary_counts(self):
        # 1 - pos + neg == 0 sits inside the indicator
        assert phi_weight(1.0, np.array([0.0]), 10) == pytest.approx(
            np.log(11.0), abs=1e-12)

    def test_empty_negatives_rejected(self):
        with pytest.raises(ValueError):
            phi_weight(0.5, np.array([]), 10)


class TestHinge:
    def test_worked_example(self):
        assert hinge_loss(0.5, 0.2, 1.0, 1.0) == pytest.approx(0.7, abs=1e-15)

    def test_satisfied_margin_is_free(self):
        assert hinge_loss(2.0, 0.0, 1.0, 3.7) == 0.0

    def test_phi_scales_linearly(self):
        assert hinge_loss(0.5, 0.2, 1.0, 2.0) == pytest.approx(1.4, abs=1e-15)

    def _fd_check(self, kind, rng, margin=1.0):
        m = init_model(3, 6, 4, seed=int(rng.integers(1e6)), score_kind=kind)
        u, i, j = 1, 2, 5
        s_i, s_j = m.score(u, i), m.score(u, j)
        if margin - s_i + s_j <= 0.05:  # keep clear of the hinge kink
            return False
        phi = 1.3
        ga, gbi, gbj = hinge_gradients(m, u, i, j, margin, phi)
        h = 1e-6

        def loss():
            return hinge_loss(m.score(u, i), m.score(u, j), margin, phi)

        for mat, row, grad in ((m.user_factors, u, ga),
                               (m.item_factors, i, gbi),
                               (m.item_factors, j, gbj)):
            for c in range(m.dim):
                orig = mat[row, c]
                mat[row, c] = orig + h
                up = loss()
                mat[row, c] = orig - h
                down = loss()
                mat[row, c] = orig
                fd = (up - down) / (2 * h)
                assert abs(grad[c] - fd) <= 1e-6 * max(abs(grad[c]), abs(fd),
                                                       1e-8)
        return True

    def test_gradients_match_finite_differences(self, rng):
        for kind in ("dot", "neg-l2"):
            checked = 0
            while checked < 25:
                checked += self._fd_check(kind, rng)

    def test_inactive_margin_gives_zero_gradients(self):
        users = np.array([[1.0, 0.0]])
        items = np.array([[1.0, 0.0], [-1.0, 0.0]])
        m = FactorModel(users, items, "dot")
        ga, gbi, gbj = hinge_gradients(m, 0, 0, 1, margin=1.0, phi=2.0)
        assert (ga == 0).all() and (gbi == 0).all() and (gbj == 0).all()

    def test_boundary_is_inactive(self):
        # margin - s_i + s_j == 0 exactly: subgradient convention picks 0
        users = np.array([[1.0]])
        items = np.array([[1.0], [0.0]])
        m = FactorModel(users, items, "dot")
        ga, _, _ = hinge_gradients(m, 0, 0, 1, margin=1.0, phi=1.0)
        assert (ga == 0).all()


class TestDrmLoss:
    def test_zero_when_relevance_equals_relaxed_sum(self, rng):
        s = rng.normal(size=6)
        w = np.ones(3)
        y = weighted_truncated_sum(s, w, 1.0)
        assert drm_loss(y, s, w, 1.0) == 0.0

    def test_small_when_relevance_marks_top_k_at_low_tau(self, rng):
        s = rng.permutation(np.linspace(0, 1, 8))
        y = np.zeros(8)
        y[np.argsort(-s)[:3]] = 1.0
        assert drm_loss(y, s, np.ones(3), 1e-3) < 1e-6

    def test_batch_matches_scalar(self, rng):
        y = (rng.random(5) < 0.5).astype(float)
        rows = rng.normal(size=(4, 5))
        w = rng.uniform(0.5, 1.5, size=2)
        batch = drm_loss_many(y, rows, w, 0.7)
        for b in range(4):
            assert batch[b] == drm_loss(y, rows[b], w, 0.7)

    def test_argument_validation(self):
        with pytest.raises(ValueError):
            drm_loss(np.ones(3), np.ones(3), np.ones(4), 1.0)  # K > n
        with pytest.raises(ValueError):
            drm_loss(np.ones(2), np.ones(3), np.ones(2), 1.0)  # length clash
        with pytest.raises(ValueError):
            drm_loss(np.ones(3), np.ones(3), np.ones(2), 1e-9)  # tau floor


class TestWorkspaceInvariants:
    def test_h_matrix_rows_sum_to_zero_and_symmetry(self, rng):
        for _ in range(30):
            n = int(rng.integers(2, 12))
            s = rng.normal(size=n)
            k = int(rng.integers(1, n + 1))
            ws = drm_workspace(s, np.ones(k), float(rng.uniform(0.1, 3)))
            for rank in range(1, k + 1):
                h = ws.h_matrix(rank)
                assert np.allclose(h, h.T, atol=1e-15)
                assert np.abs(h.sum(axis=1)).max() < 1e-9

    def test_r_matrix_structure_exact(self, rng):
        for _ in range(30):
            n = int(rng.integers(2, 10))
            s = rng.normal(size=n)
            ws = drm_workspace(s, np.ones(1), 1.0)
            r = ws.r_matrix
            for j in range(n):
                off = sum(r[j, l] for l in range(n) if l != j)
                assert r[j, j] == -off  # diagonal exactly cancels the row
            # off-diagonals are pairwise score-order signs
            assert set(np.unique(r[~np.eye(n, dtype=bool)])) <= {-1.0, 0.0, 1.0}

    def test_tied_scores_use_zero_sign(self):
        ws = drm_workspace(np.array([0.5, 0.5, 1.0]), np.ones(2), 1.0)
        assert ws.sgn[0, 1] == 0.0 and ws.sgn[1, 0] == 0.0
        assert ws.r_matrix[0, 0] == 1.0  # only the comparison against 1.0

    def test_dense_formula_equals_optimized_gradient(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 9))
            k = int(rng.integers(1, n + 1))
            tau = float(rng.uniform(0.2, 2.0))
            s = rng.normal(size=n)
            y = (rng.random(n) < 0.4).astype(float)
            w = rng.uniform(0.1, 1.0, size=k)
            ws = drm_workspace(s, w, tau)
            q = w @ ws.rows
            resid = y - q
            dense = np.zeros(n)
            for rank in range(1, k + 1):
                w_mat = (ws.h_matrix(rank) @ (ws.d_matrix(rank)
                                              + ws.r_matrix)).T
                dense += w[rank - 1] * (w_mat @ resid)
            dense *= -2.0 / tau
            np.testing.assert_allclose(drm_score_grad(y, s, w, tau), dense,
                                       atol=1e-12)

    def test_gradient_finite_at_exact_ties(self):
        s = np.array([0.3, 0.3, 0.9, 0.1])
        y = np.array([1.0, 0.0, 1.0, 0.0])
        _, g = drm_loss_and_score_grad(y, s, np.ones(2), 0.5)
        assert np.isfinite(g).all()


class TestScoreGradientFiniteDifferences:
    def test_matches_fd_across_temperatures(self, rng):
        for tau in (0.1, 1.0, 10.0):
            for _ in range(25):
                n = int(rng.integers(3, 11))
                s = rng.permutation(np.linspace(0.0, 1.0, n))
                s = s + rng.uniform(-2e-4, 2e-4, size=n)
                y = np.zeros(n)
                y[rng.choice(n, size=max(1, n // 3), replace=False)] = 1.0
                k = int(rng.integers(1, n + 1))
                w = rng.uniform(0.2, 1.5, size=k)
                g = drm_score_grad(y, s, w, tau)
                fd = fd_drm_score_grad(y, s, w, tau)
                assert rel_err(g, fd).max() < 1e-3

    def test_scaled_weights_scale_the_relaxed_objective(self, rng):
        s = rng.normal(size=7)
        y = (rng.random(7) < 0.5).astype(float)
        w = rng.uniform(0.1, 1.0, size=4)
        base = relaxed_objective(y, s, w, 0.8)
        assert relaxed_objective(y, s, 3.0 * w, 0.8) == pytest.approx(
            3.0 * base, rel=1e-12)


class TestFactorGradients:
    def test_match_finite_differences_both_kinds(self, rng):
        for kind in ("dot", "neg-l2"):
            for _ in range(10):
                n, d = int(rng.integers(3, 8)), int(rng.integers(2, 6))
                model = init_model(3, 20, d, seed=int(rng.integers(1e6)),
                                   score_kind=kind)
                items = rng.choice(20, size=n, replace=False)
                y = np.zeros(n)
                y[rng.choice(n, size=max(1, n // 3), replace=False)] = 1.0
                w = np.ones(int(rng.integers(1, n + 1)))
                _, ga, gi = drm_factor_grads(model, 1, items, y, w, 1.0)
                fga, fgi = fd_drm_factor_grads(
                    model.user_factors[1], model.item_factors[items], kind,
                    y, w, 1.0)
                assert rel_err(ga, fga).max() < 1e-3
                assert rel_err(gi, fgi).max() < 1e-3

    def test_loss_value_consistent_with_drm_loss(self, rng):
        model = init_model(2, 10, 3, seed=5)
        items = np.arange(6)
        y = np.array([1.0, 1.0, 0, 0, 0, 0])
        w = np.ones(3)
        loss, _, _ = drm_factor_grads(model, 0, items, y, w, 1.0)
        assert loss == drm_loss(y, model.score_list(0, items), w, 1.0)


class TestBoundAndRelaxedObjective:
    def test_relaxed_objective_consistent_with_truncated_sum(self, rng):
        s = rng.normal(size=9)
        y = (rng.random(9) < 0.4).astype(float)
        w = rng.uniform(0.2, 1.0, size=5)
        q = weighted_truncated_sum(s, w, 0.6)
        assert relaxed_objective(y, s, w, 0.6) == pytest.approx(float(y @ q),
                                                                abs=1e-12)

    def test_lower_bound_holds(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 20))
            s = rng.normal(size=n) * float(rng.uniform(0.5, 3))
            y = (rng.random(n) < 0.5).astype(float)
            k = int(rng.integers(1, n + 1))
            w = rng.uniform(0.0, 1.5, size=k)
            tau = float(rng.uniform(0.05, 5))
            gap = (relaxed_objective(y, s, w, tau)
                   + 0.5 * drm_loss(y, s, w, tau))
            assert gap >= -1e-12


class TestMse:
    def test_value_and_gradient(self):
        y = np.array([1.0, 0.0, 1.0])
        s = np.array([0.5, 0.5, 0.5])
        value, grad = mse_loss(y, s)
        assert value == pytest.approx(0.75, abs=1e-15)
        np.testing.assert_allclose(grad, [-1.0, 1.0, -1.0], atol=1e-15)

    def test_gradient_is_exact_for_quadratic(self, rng):
        y = rng.normal(size=6)
        s = rng.normal(size=6)
        _, grad = mse_loss(y, s)
        h = 1e-6
        for c in range(6):
            e = np.zeros(6)
            e[c] = h
            fd = (mse_loss(y, s + e)[0] - mse_loss(y, s - e)[0]) / (2 * h)
            assert grad[c] == pytest.approx(fd, rel=1e-9, abs=1e-9)
