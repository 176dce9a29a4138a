"""scikit-learn style front end to the joint reconstruction."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .forward import ViewSet, align_view
from .recon import ReconConfig, reconstruct


class JointReconstructor(TransformerMixin, BaseEstimator):
    """Estimate a volume and per-view poses from a set of views.

    ``fit`` takes a :class:`~spfrecon.forward.ViewSet` or a list of cubic
    volumes plus ``psf``. After fitting, ``volume_`` holds the
    reconstruction, ``poses_`` the pose of every training view and
    ``diagnostics_`` the energy trace and sampler state. ``predict`` estimates
    poses of new views against the fitted volume without updating it, and
    ``transform`` returns those views rotated and shifted back into the
    volume's frame.

    Parameters mirror :class:`~spfrecon.recon.ReconConfig`; ``random_state``
    is its ``seed``.
    """

    def __init__(
        self,
        *,
        mu=None,
        epochs=20,
        M_d=2048,
        M_psi=256,
        N_d=64,
        N_psi=8,
        alpha_r=1.2,
        beta_d=50.0,
        beta_psi=50.0,
        init="random_spectral",
        oversample=2,
        shift_method="cross",
        recenter=True,
        positivity=True,
        predict_epochs=5,
        n_threads=1,
        random_state=0,
    ):
        self.mu = mu
        self.epochs = epochs
        self.M_d = M_d
        self.M_psi = M_psi
        self.N_d = N_d
        self.N_psi = N_psi
        self.alpha_r = alpha_r
        self.beta_d = beta_d
        self.beta_psi = beta_psi
        self.init = init
        self.oversample = oversample
        self.shift_method = shift_method
        self.recenter = recenter
        self.positivity = positivity
        self.predict_epochs = predict_epochs
        self.n_threads = n_threads
        self.random_state = random_state

    def _config(self, **overrides):
        seed = self.random_state
        if seed is None:
            seed = int(np.random.SeedSequence().generate_state(1)[0])
        params = dict(
            mu=self.mu,
            epochs=self.epochs,
            M_d=self.M_d,
            M_psi=self.M_psi,
            N_d=self.N_d,
            N_psi=self.N_psi,
            alpha_r=self.alpha_r,
            beta_d=self.beta_d,
            beta_psi=self.beta_psi,
            init=self.init,
            oversample=self.oversample,
            shift_method=self.shift_method,
            recenter=self.recenter,
            positivity=self.positivity,
            n_threads=self.n_threads,
            seed=int(seed),
        )
        params.update(overrides)
        return ReconConfig(**params)

    def fit(self, X, y=None, *, psf=None, poses=None):
        """Reconstruct from views ``X``; ``poses`` switches to the known-pose mode."""
        views = _as_viewset(X, psf)
        cfg = self._config(known_poses=poses)
        volume, fitted_poses, diagnostics = reconstruct(views, cfg)
        self.volume_ = volume
        self.poses_ = fitted_poses
        self.diagnostics_ = diagnostics
        self.psf_ = views.psf
        self.n_features_in_ = int(np.prod(views.shape))
        return self

    def _check_fitted(self):
        if not hasattr(self, "volume_"):
            raise NotFittedError("call fit before using this estimator")

    def predict(self, X):
        """Poses of the views ``X`` relative to the fitted volume."""
        self._check_fitted()
        views = _as_viewset(X, self.psf_)
        cfg = self._config(mu=0.0, epochs=self.predict_epochs, init=self.volume_)
        _, poses, _ = reconstruct(views, cfg)
        return poses

    def transform(self, X):
        """Views ``X`` aligned to the fitted volume."""
        views = _as_viewset(X, getattr(self, "psf_", None))
        poses = self.predict(views)
        return [align_view(v, p) for v, p in zip(views.views, poses)]

    def fit_transform(self, X, y=None, **fit_params):
        self.fit(X, y, **fit_params)
        return [align_view(v, p) for v, p in zip(_as_viewset(X, self.psf_).views, self.poses_)]


def _as_viewset(X, psf):
    if isinstance(X, ViewSet):
        return X
    if psf is None:
        raise ValueError("a PSF is required when X is not a ViewSet")
    return ViewSet(list(X), psf)
