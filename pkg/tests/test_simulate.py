import numpy as np
import pytest

from fcrn.simulate import (ANCHOR_COLUMNS, BSplineBasis, SimConfig, apply_mar,
                           bspline_design, bspline_eval, gen_functional,
                           gen_outcomes, gen_tabular, simulate)


class TestBSplineBasis:
    def test_partition_of_unity(self):
        basis = BSplineBasis()
        rng = np.random.RandomState(0)
        taus = rng.uniform(0, 1, size=1000)
        design = bspline_design(basis, taus)
        assert np.allclose(design.sum(axis=1), 1.0, atol=1e-12)

    def test_clamped_endpoints(self):
        basis = BSplineBasis()
        left = bspline_eval(basis, 0.0)
        right = bspline_eval(basis, 1.0)
        assert left[0] == pytest.approx(1.0)
        assert np.all(left[1:] == 0.0)
        assert right[-1] == pytest.approx(1.0)
        assert np.all(right[:-1] == 0.0)

    def test_nonnegative(self):
        basis = BSplineBasis()
        design = bspline_design(basis, np.linspace(0, 1, 201))
        assert np.all(design >= 0.0)

    def test_local_support(self):
        # a cubic basis function is nonzero on at most degree+1 knot spans
        basis = BSplineBasis()
        design = bspline_design(basis, np.linspace(0, 1, 401))
        active = (design > 1e-12).sum(axis=1)
        assert np.all(active <= basis.degree + 1)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            bspline_eval(BSplineBasis(), 1.5)


class TestTabular:
    def test_shapes(self):
        X, hidden = gen_tabular(500, np.random.RandomState(1))
        assert X.shape == (500, 10)
        assert hidden.shape == (500, 5)

    def test_visible_moments(self):
        X, _ = gen_tabular(200000, np.random.RandomState(2))
        # first normal column: mean 0.2, sd 1
        assert X[:, 0].mean() == pytest.approx(0.2, abs=0.02)
        assert X[:, 0].std() == pytest.approx(1.0, abs=0.02)
        # first uniform column: range [-1, 1]
        assert X[:, 5].min() >= -1.0 and X[:, 5].max() <= 1.0
        assert X[:, 5].mean() == pytest.approx(0.0, abs=0.02)

    def test_hidden_features_are_the_documented_nonlinearities(self):
        X, hidden = gen_tabular(50, np.random.RandomState(3))
        assert np.allclose(hidden[:, 0], X[:, 0] ** 2)
        assert np.allclose(hidden[:, 1], X[:, 2] ** 2)
        assert np.allclose(hidden[:, 2], X[:, 5] ** 2)
        assert np.allclose(hidden[:, 3], X[:, 0] * X[:, 6])
        assert np.allclose(hidden[:, 4], X[:, 1] * X[:, 8])


class TestFunctional:
    def test_shapes(self):
        config = SimConfig(n=40, n_train=30, n_test=10)
        X, _ = gen_tabular(40, np.random.RandomState(4))
        taus, curves = gen_functional(40, np.random.RandomState(4), config, X=X)
        assert taus.shape == (51,)
        assert curves.shape == (3, 40, 51)

    def test_coupling_shifts_curves(self):
        config = SimConfig(n=200, n_train=150, n_test=50)
        X, _ = gen_tabular(200, np.random.RandomState(5))
        _, with_c = gen_functional(200, np.random.RandomState(6), config, X=X)
        config0 = SimConfig(n=200, n_train=150, n_test=50,
                            curve_covariate_coupling=0.0)
        _, without = gen_functional(200, np.random.RandomState(6), config0, X=X)
        diff = with_c[0] - without[0]
        # the shift is deterministic in X, so it correlates with x0
        start_diff = diff[:, 0]
        r = np.corrcoef(start_diff, X[:, 0])[0, 1]
        assert abs(r) > 0.9


class TestOutcomes:
    def test_all_causes_represented(self):
        config = SimConfig()
        X, hidden = gen_tabular(5000, np.random.RandomState(7))
        time, cause = gen_outcomes(X, hidden, np.random.RandomState(7), config)
        time = np.minimum(time, config.max_time)
        cause = np.where(time >= config.max_time, 0, cause)
        fracs = [np.mean(cause == m) for m in (0, 1, 2)]
        assert all(f >= 0.05 for f in fracs)
        assert np.all(time > 0.0)

    def test_zero_coefficient_independence(self):
        # with all coefficients zero, event times are independent of X:
        # correlation with every covariate should be near zero
        config = SimConfig(coef_cause1=(0.0,) * 15, coef_cause2=(0.0,) * 15)
        X, hidden = gen_tabular(20000, np.random.RandomState(8))
        time, _ = gen_outcomes(X, hidden, np.random.RandomState(8), config)
        for j in range(10):
            r = np.corrcoef(np.log(time), X[:, j])[0, 1]
            assert abs(r) < 0.03

    def test_larger_risk_score_shortens_cause1_times(self):
        config = SimConfig()
        X, hidden = gen_tabular(20000, np.random.RandomState(9))
        time, cause = gen_outcomes(X, hidden, np.random.RandomState(9), config)
        eta1 = np.hstack([X, hidden]) @ np.asarray(config.coef_cause1)
        sel = cause == 1
        r = np.corrcoef(eta1[sel], np.log(time[sel]))[0, 1]
        assert r < -0.1


class TestMar:
    def test_zero_rate(self):
        X, _ = gen_tabular(100, np.random.RandomState(10))
        mask = apply_mar(X, 0.0, np.random.RandomState(10))
        assert not mask.any()

    def test_overall_rate_calibration(self):
        X, _ = gen_tabular(100000, np.random.RandomState(11))
        for rate in (0.25, 0.5):
            mask = apply_mar(X, rate, np.random.RandomState(11))
            assert mask.mean() == pytest.approx(rate, abs=0.01)

    def test_anchors_never_masked(self):
        X, _ = gen_tabular(5000, np.random.RandomState(12))
        mask = apply_mar(X, 0.5, np.random.RandomState(12))
        for j in ANCHOR_COLUMNS:
            assert not mask[:, j].any()

    def test_missingness_depends_on_anchors(self):
        # chi-square style check: split on the median of anchor score and
        # compare missing rates; MCAR would make them equal
        X, _ = gen_tabular(20000, np.random.RandomState(13))
        mask = apply_mar(X, 0.25, np.random.RandomState(13))
        z = X[:, list(ANCHOR_COLUMNS)]
        z = (z - z.mean(axis=0)) / z.std(axis=0)
        score = z.sum(axis=1)
        hi = mask[score > np.median(score)].mean()
        lo = mask[score <= np.median(score)].mean()
        assert hi - lo > 0.1

    def test_invalid_rate_rejected(self):
        X, _ = gen_tabular(10, np.random.RandomState(14))
        with pytest.raises(ValueError):
            apply_mar(X, 1.0, np.random.RandomState(14))


class TestSimulatePipeline:
    def test_split_sizes_and_ids_disjoint(self):
        train, test, manifest = simulate(SimConfig(n=100, n_train=80, n_test=20,
                                                   functional=False))
        assert len(train) == 80 and len(test) == 20
        assert not {s.id for s in train} & {s.id for s in test}

    def test_determinism(self):
        cfg = SimConfig(n=60, n_train=50, n_test=10, missing_rate=0.25)
        t1, e1, m1 = simulate(cfg)
        t2, e2, m2 = simulate(cfg)
        assert m1 == m2
        for a, b in zip(t1 + e1, t2 + e2):
            assert a.id == b.id and a.time == b.time and a.cause == b.cause
            assert np.array_equal(a.x, b.x, equal_nan=True)
            for ca, cb in zip(a.curves, b.curves):
                assert np.array_equal(ca.values, cb.values)

    def test_missing_cells_are_nan_and_flagged(self):
        train, test, _ = simulate(SimConfig(n=100, n_train=80, n_test=20,
                                            functional=False, missing_rate=0.3))
        for s in train + test:
            assert np.array_equal(np.isnan(s.x), s.missing_mask)

    def test_manifest_contents(self):
        cfg = SimConfig(n=100, n_train=80, n_test=20, functional=False,
                        missing_rate=0.25)
        _, _, manifest = simulate(cfg)
        assert manifest["config"]["n"] == 100
        assert 0.15 < manifest["realized_missing_rate"] < 0.35
        assert sum(manifest["cause_counts"].values()) == 100

    def test_times_within_horizon(self):
        train, test, _ = simulate(SimConfig(n=200, n_train=150, n_test=50,
                                            functional=False))
        for s in train + test:
            assert 0.0 < s.time <= 100.0
            assert s.cause in (0, 1, 2)

    def test_bad_split_rejected(self):
        with pytest.raises(ValueError):
            simulate(SimConfig(n=100, n_train=90, n_test=20))
