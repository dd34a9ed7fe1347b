"""Estimator facade: sklearn contract, geometry validation, predictions."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from eanet import EANetRegressor
from eanet.data import GenConfig, generate_samples
from eanet.errors import ConfigError
from eanet.validation import check_geometry, ensure_samples


def tiny_estimator(**kw):
    kw.setdefault("image_size", 16)
    kw.setdefault("steps", 3)
    kw.setdefault("batch_size", 2)
    return EANetRegressor(**kw)


@pytest.fixture(scope="module")
def samples():
    cfg = GenConfig(image_size=16, heat_size=1, two_hand_ratio=1.0)
    return generate_samples(cfg, 0, 4)


@pytest.fixture(scope="module")
def fitted(samples):
    return tiny_estimator(seed=1).fit(samples)


class TestSklearnContract:
    def test_get_params_round_trip(self):
        est = EANetRegressor(block_kind="sa_only", steps=12, lr=3e-4)
        params = est.get_params()
        assert params["block_kind"] == "sa_only"
        assert params["steps"] == 12
        rebuilt = EANetRegressor(**params)
        assert rebuilt.get_params() == params

    def test_set_params_chains(self):
        est = EANetRegressor().set_params(ca_variant="none", seed=9)
        assert est.ca_variant == "none"
        assert est.seed == 9

    def test_clone_copies_unfitted_state(self, fitted):
        twin = clone(fitted)
        assert twin.get_params() == fitted.get_params()
        assert not hasattr(twin, "model_")

    def test_predict_before_fit_raises(self, samples):
        with pytest.raises(NotFittedError):
            tiny_estimator().predict(samples)

    def test_fit_returns_self(self, samples):
        est = tiny_estimator(steps=1)
        assert est.fit(samples) is est


class TestFitPredict:
    def test_fitted_attributes(self, fitted):
        assert fitted.n_steps_ == 3
        assert len(fitted.loss_history_) == 3
        assert all(np.isfinite(v) for v in fitted.loss_history_)
        assert fitted.model_.config.image_size == 16

    def test_prediction_shapes(self, fitted, samples):
        preds = fitted.predict(samples)
        assert len(preds) == len(samples)
        for pred in preds:
            assert pred["rel"].shape == (3,)
            for hand in ("left", "right"):
                assert pred[hand]["theta"].shape == (48,)
                assert pred[hand]["beta"].shape == (10,)
                assert pred[hand]["coords"].shape == (21, 3)

    def test_score_is_negative_joint_error(self, fitted, samples):
        score = fitted.score(samples)
        assert np.isfinite(score)
        assert score < 0

    def test_same_seed_fits_identically(self, samples):
        a = tiny_estimator(seed=4).fit(samples)
        b = tiny_estimator(seed=4).fit(samples)
        assert a.loss_history_ == b.loss_history_

    def test_ablation_knobs_reach_the_model(self, samples):
        est = tiny_estimator(steps=1, block_kind="ca_only", ca_variant="tj_tj").fit(samples)
        assert est.model_.config.block_kind == "ca_only"
        assert est.model_.config.ca_variant == "tj_tj"


class TestValidation:
    def test_geometry_mismatch_names_the_field(self, samples):
        est = EANetRegressor(steps=1)  # default 64-pixel grid
        with pytest.raises(ConfigError, match="image_size"):
            est.fit(samples)

    def test_heat_grid_mismatch_names_the_field(self):
        coarse = generate_samples(GenConfig(image_size=16, heat_size=2), 0, 1)
        est = tiny_estimator(steps=1)
        with pytest.raises(ConfigError, match="heat_size"):
            est.fit(coarse)

    def test_empty_and_foreign_inputs_rejected(self):
        with pytest.raises(ConfigError):
            ensure_samples([])
        with pytest.raises(ConfigError, match="not a dataset record"):
            ensure_samples([np.zeros((16, 16, 3))])

    def test_check_geometry_passes_matching_data(self, samples, fitted):
        assert check_geometry(fitted.model_.config, samples) == list(samples)
