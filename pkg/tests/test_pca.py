import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hullopt import geometry, parents, pca
from hullopt.errors import (
    FitError, FormatError, GridMismatchError, InsufficientParentsError, RankDeficiencyWarning,
)
from hullopt.geometry import OffsetGrid


class TestFit:
    def test_compression_is_orthonormal(self, pca_model):
        W = pca_model.compression
        assert W.shape == (800, 3)
        assert np.allclose(W.T @ W, np.eye(3), atol=1e-10)

    def test_explained_variance_descends_and_sums_to_one(self, pca_model):
        ev = pca_model.explained_variance
        assert np.all(np.diff(ev) <= 0)
        assert np.all((ev >= 0) & (ev <= 1))
        assert ev.sum() == pytest.approx(1.0, abs=1e-10)

    def test_partial_variance_below_one(self, bundle):
        ev = pca.fit(bundle, 2).explained_variance
        assert ev.size == 2 and ev.sum() < 1.0

    def test_d_bounded_by_parent_count(self, bundle):
        with pytest.raises(FitError):
            pca.fit(bundle, 4)
        with pytest.raises(InsufficientParentsError):
            pca.fit(bundle[:1])

    def test_identical_parents_are_rank_deficient(self):
        g = geometry.wigley_grid()
        with pytest.warns(RankDeficiencyWarning), pytest.raises(FitError):
            pca.fit([g, g])

    def test_duplicate_parent_reduces_d(self, bundle):
        with pytest.warns(RankDeficiencyWarning):
            m = pca.fit([*bundle, bundle[0]], "max")
        assert m.d == 3

    def test_template_mismatch(self, bundle):
        with pytest.raises(GridMismatchError):
            pca.fit([bundle[0].grid, geometry.wigley_grid(41, 20)])

    @pytest.mark.parametrize("perm", [(3, 2, 1, 0), (1, 3, 0, 2), (2, 0, 3, 1)])
    def test_parent_order_does_not_change_model(self, bundle, pca_model, perm):
        model = pca.fit([bundle[i] for i in perm], 3)
        assert pca.dumps(model) == pca.dumps(pca_model)


class TestRoundTrip:
    def test_parents_reconstruct_losslessly(self, bundle, pca_model):
        for p in bundle:
            back = pca.reconstruct(pca_model, pca.compress(pca_model, p.grid))
            assert np.max(np.abs(back.offsets - p.grid.offsets)) <= 1e-9

    def test_compress_matches_stored_parent_scores(self, bundle, pca_model):
        got = np.array([pca.compress(pca_model, p.grid) for p in bundle])
        stored = pca_model.parent_scores
        # stored scores are in canonical parent order; compare as sets of rows
        for row in got:
            assert np.min(np.max(np.abs(stored - row), axis=1)) <= 1e-10

    def test_mean_hull_has_zero_scores(self, pca_model):
        assert np.allclose(pca.compress(pca_model, pca_model.mean_grid()), 0.0, atol=1e-12)
        back = pca.reconstruct(pca_model, np.zeros(3), clamp=False)
        assert np.allclose(back.offsets, pca_model.mean_grid().offsets, atol=1e-15)

    def test_error_non_increasing_in_d(self, bundle):
        models = [pca.fit(bundle, d) for d in (1, 2, 3)]
        for p in bundle:
            errs = [
                np.max(np.abs(pca.reconstruct(m, pca.compress(m, p.grid), clamp=False).offsets - p.grid.offsets))
                for m in models
            ]
            assert errs[0] >= errs[1] - 1e-12 >= errs[2] - 2e-12

    @settings(max_examples=30, deadline=None)
    @given(
        a=st.floats(-3, 3), b=st.floats(-3, 3),
        l1=st.lists(st.floats(-2, 2), min_size=3, max_size=3),
        l2=st.lists(st.floats(-2, 2), min_size=3, max_size=3),
    )
    def test_reconstruction_is_affine(self, pca_model, a, b, l1, l2):
        l1, l2 = np.array(l1), np.array(l2)
        mu = pca_model.means.reshape(pca_model.grid_shape)

        def lin(lam):
            return pca.reconstruct(pca_model, lam, clamp=False).offsets - mu

        lhs = lin(a * l1 + b * l2)
        assert np.allclose(lhs, a * lin(l1) + b * lin(l2), atol=1e-10)
        # compress is the adjoint of the linear part
        g = OffsetGrid(pca_model.stations, pca_model.waterlines, lhs + mu)
        assert np.allclose(pca.compress(pca_model, g), a * l1 + b * l2, atol=1e-10)


class TestScaling:
    def test_extreme_parents_scale_to_zero_and_one(self, pca_model):
        scaled = pca.scale_scores(pca_model, pca_model.parent_scores)
        assert np.allclose(scaled.min(axis=0), 0.0, atol=1e-14)
        assert np.allclose(scaled.max(axis=0), 1.0, atol=1e-14)

    def test_fullest_parent_has_largest_first_score(self, bundle, pca_model):
        lam1 = {p.name: pca.scale_scores(pca_model, pca.compress(pca_model, p.grid))[0] for p in bundle}
        assert lam1["series60_cb070"] == pytest.approx(1.0)
        assert lam1["wigley"] == pytest.approx(0.0, abs=1e-12)
        assert lam1["wigley"] < lam1["s175_container"] < lam1["series60_cb060"] < lam1["series60_cb070"]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
    def test_unscale_inverts_scale(self, pca_model, raw):
        raw = np.array(raw)
        assert np.allclose(pca.unscale_scores(pca_model, pca.scale_scores(pca_model, raw)), raw, rtol=0, atol=1e-12)

    def test_score_vector(self):
        v = pca.ScoreVector.from_values([0.1, 0.5, 1.0], 3)
        assert np.asarray(v).tolist() == [0.1, 0.5, 1.0]
        with pytest.raises(ValueError):
            pca.ScoreVector.from_values([0.1, 1.5, 0.0], 3)
        with pytest.raises(ValueError):
            pca.ScoreVector.from_values([0.1, 0.5], 3)


class TestSampling:
    def test_same_seed_same_hull(self, pca_model):
        a = pca.sample_hull(pca_model, seed=7)
        b = pca.sample_hull(pca_model, seed=7)
        assert a.grid == b.grid and a.length == b.length and a.length_to_beam == b.length_to_beam

    def test_samples_stay_in_bounds(self):
        bounds = pca.default_bounds(3)
        for s in range(200):
            p, L = pca.sample_params(bounds, pca.DEFAULT_LENGTH_RANGE, s)
            assert np.all(p >= bounds[:, 0]) and np.all(p <= bounds[:, 1])
            assert 150.0 <= L <= 350.0

    def test_collapsed_bounds_return_parent(self, bundle, pca_model):
        p = bundle[2]
        lam = pca.scale_scores(pca_model, pca.compress(pca_model, p.grid))
        params = np.concatenate([lam, [p.length_to_beam, p.beam_to_draft]])
        bounds = np.column_stack([params, params])
        hull = pca.sample_hull(pca_model, bounds, (200.0, 200.0), seed=3)
        assert np.max(np.abs(hull.grid.offsets - p.grid.offsets)) <= 1e-9
        assert hull.length == 200.0

    def test_example_parameter_set_is_valid(self, pca_model):
        hull = pca.hull_from_params(pca_model, [0.3, 0.2, 0.8, 8.0, 3.0], 200.0)
        assert geometry.validate(hull.grid).valid
        assert geometry.hydrostatics(hull).displaced_volume > 0

    def test_inverted_bounds_rejected(self):
        with pytest.raises(ValueError):
            pca.sample_params([[1.0, 0.0]], (150, 350), 0)


class TestCorrelation:
    def test_first_score_tracks_block_coefficient(self, pca_model):
        hulls = [pca.sample_hull(pca_model, seed=s) for s in range(1000)]
        rep = pca.correlation_report(pca_model, hulls)
        assert abs(rep.fits["lambda1_vs_CB"].r) >= 0.9
        assert rep.to_csv().count("\n") == 1000 + 3

    def test_constant_abscissa_rejected(self):
        with pytest.raises(ValueError):
            pca.linear_fit([0.5, 0.5, 0.5], [1.0, 2.0, 3.0])

    def test_two_points_define_a_line(self):
        assert pca.linear_fit([0.0, 1.0], [1.0, 3.0]).r == pytest.approx(1.0)
        fit = pca.linear_fit([0.0, 1.0], [3.0, 1.0])
        assert fit.r == pytest.approx(-1.0) and fit.slope == pytest.approx(-2.0)


class TestModelFile:
    def test_save_load_round_trip(self, pca_model, tmp_path):
        digest = pca.save(pca_model, tmp_path / "m.json")
        back = pca.load(tmp_path / "m.json")
        assert pca.dumps(back) == pca.dumps(pca_model)
        assert pca.digest(back) == digest

    def test_rejects_other_formats(self, pca_model):
        import json

        data = pca.model_to_dict(pca_model)
        data["flatten_order"] = "waterline-major"
        with pytest.raises(FormatError):
            pca.loads(json.dumps(data))
        with pytest.raises(FormatError):
            pca.loads('{"format": "something-else"}')
