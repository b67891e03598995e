import numpy as np
import pytest

from pppm import ConfigurationError, DiffMode, SimulationBox, estimate_kspace_error, plan_params, select_alpha

# frozen: (1.35 + 0.15 * ln(1e4)) / 5, mpmath 30 digits
ALPHA_5_1E4 = 0.546310211159285482082158974562

BOX = SimulationBox([12.0, 12.0, 12.0])


class TestSelectAlpha:
    def test_worked_example(self):
        assert select_alpha(5.0, 1e-4) == pytest.approx(ALPHA_5_1E4, abs=1e-12)

    def test_inverse_cutoff_scaling(self):
        assert select_alpha(10.0, 1e-4) == pytest.approx(0.5 * select_alpha(5.0, 1e-4))

    def test_domain(self):
        with pytest.raises(ValueError):
            select_alpha(5.0, float(np.exp(9)))
        with pytest.raises(ValueError):
            select_alpha(-1.0, 1e-4)
        with pytest.raises(ValueError):
            select_alpha(5.0, 0.0)


class TestEstimator:
    def test_decreasing_in_each_dim(self):
        base = estimate_kspace_error((20, 20, 20), BOX, 0.8, 5, 400, 400.0)
        assert estimate_kspace_error((40, 20, 20), BOX, 0.8, 5, 400, 400.0) < base
        assert estimate_kspace_error((20, 40, 20), BOX, 0.8, 5, 400, 400.0) < base
        assert estimate_kspace_error((20, 20, 40), BOX, 0.8, 5, 400, 400.0) < base

    def test_decreasing_in_order(self):
        errs = [estimate_kspace_error((24, 24, 24), BOX, 0.8, order, 400, 400.0)
                for order in (3, 5, 7)]
        assert errs[2] < errs[1] < errs[0]

    def test_positive_and_finite(self):
        err = estimate_kspace_error((16, 16, 16), BOX, 1.0, 7, 100, 100.0)
        assert 0 < err < np.inf


class TestPlanParams:
    def plan(self, **over):
        kw = dict(cutoff=3.0, accuracy=1e-4, order=7, mode=DiffMode.IK)
        kw.update(over)
        return plan_params(BOX, 512, 512.0, **kw)

    def test_deterministic(self):
        assert self.plan() == self.plan()

    def test_mode_blind_by_default(self):
        p_ik = self.plan(mode=DiffMode.IK)
        p_ad = self.plan(mode=DiffMode.AD)
        assert p_ik.alpha == p_ad.alpha
        assert p_ik.grid_dims == p_ad.grid_dims

    def test_ik_relaxation_optional(self):
        relaxed = plan_params(BOX, 512, 512.0, cutoff=3.0, accuracy=1e-4,
                              order=7, mode=DiffMode.IK, ik_grid_relaxation=4.0)
        strict = self.plan(mode=DiffMode.IK)
        assert np.prod(relaxed.grid_dims) <= np.prod(strict.grid_dims)

    def test_smaller_cutoff_means_finer_grid(self):
        fine = self.plan(cutoff=3.0)
        coarse = self.plan(cutoff=5.0)
        assert np.prod(fine.grid_dims) > np.prod(coarse.grid_dims)

    def test_grid_nonincreasing_in_cutoff(self):
        sizes = [np.prod(self.plan(cutoff=c).grid_dims) for c in (3.0, 4.0, 5.0, 5.9)]
        assert all(a >= b for a, b in zip(sizes, sizes[1:]))

    def test_overrides_bypass_estimation(self):
        p = self.plan(alpha=0.77, grid_dims=(20, 22, 24), grid_bump=False)
        assert p.alpha == 0.77
        assert p.grid_dims == (20, 22, 24)

    def test_inconsistent_override(self):
        with pytest.raises(ConfigurationError):
            self.plan(grid_dims=(6, 20, 20))

    def test_cutoff_beyond_box(self):
        with pytest.raises(ConfigurationError):
            self.plan(cutoff=6.5)

    def test_bump_rule_applied(self):
        # force a grid whose raw selection lands on a multiple of 16
        p = self.plan(grid_dims=None, accuracy=1e-4)
        assert all(d % 16 != 0 for d in p.grid_dims)
