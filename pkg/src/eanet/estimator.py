"""Scikit-learn style front door for the whole stack.

EANetRegressor wires together scene records, the network, the training
loop, and the evaluation protocol behind the usual fit/predict/score
surface, so model selection tooling (clone, grid search, pipelines) works
unchanged. X is a sequence of dataset records; y has no role because the
records carry their own supervision.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .hand import default_template
from .metrics import evaluate
from .network import EANet, ModelConfig
from .train import TrainConfig, train
from .validation import check_geometry, ensure_samples


class EANetRegressor(BaseEstimator):
    """Two-hand mesh recovery as an estimator.

    Constructor arguments mirror the ablation axes (block kind, attention
    variant, width) plus the training schedule; they are stored verbatim
    per the scikit-learn contract and only resolved into configs at fit
    time. Fitted state lives in trailing-underscore attributes.
    """

    def __init__(self, block_kind="fuseformer", ca_variant="tj_ts", light=False,
                 adaptation_stages=1, image_size=64, depth_bins=8, steps=300,
                 batch_size=8, lr=1e-4, anneal_factor=0.1, seed=0):
        self.block_kind = block_kind
        self.ca_variant = ca_variant
        self.light = light
        self.adaptation_stages = adaptation_stages
        self.image_size = image_size
        self.depth_bins = depth_bins
        self.steps = steps
        self.batch_size = batch_size
        self.lr = lr
        self.anneal_factor = anneal_factor
        self.seed = seed

    def _model_config(self):
        return ModelConfig(
            image_size=self.image_size,
            depth_bins=self.depth_bins,
            light=self.light,
            block_kind=self.block_kind,
            ca_variant=self.ca_variant,
            adaptation_stages=self.adaptation_stages,
        )

    def _train_config(self):
        return TrainConfig(
            steps=self.steps,
            batch_size=self.batch_size,
            lr=self.lr,
            anneal_factor=self.anneal_factor,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        """Train on dataset records; returns self."""
        samples = ensure_samples(X)
        config = self._model_config()
        check_geometry(config, samples)
        self.template_ = default_template()
        self.model_ = EANet(config, seed=self.seed)
        result = train(self.model_, samples, self._train_config(), template=self.template_)
        self.loss_history_ = result.losses
        self.n_steps_ = len(result.losses)
        return self

    def predict(self, X):
        """Per-record parameter predictions.

        Returns a list of dicts with per-hand "theta", "beta", and 2.5D
        "coords", plus the right-relative-to-left wrist offset "rel".
        """
        check_is_fitted(self, "model_")
        samples = ensure_samples(X)
        check_geometry(self.model_.config, samples)
        preds = []
        for s in samples:
            out = self.model_.forward(s.image)
            pred = {"rel": out.rel.data.copy()}
            for hand in ("left", "right"):
                branch = getattr(out, hand)
                pred[hand] = {
                    "theta": branch.theta.data.copy(),
                    "beta": branch.beta.data.copy(),
                    "coords": branch.coords.data.copy(),
                }
            preds.append(pred)
        return preds

    def score(self, X, y=None):
        """Negative joint error in mm over X (higher is better)."""
        check_is_fitted(self, "model_")
        samples = ensure_samples(X)
        check_geometry(self.model_.config, samples)
        return -evaluate(self.model_, samples, self.template_).mpjpe_all
