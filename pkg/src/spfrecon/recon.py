"""Joint estimation of the volume and the view poses by stochastic gradient descent.

One epoch visits every view once in shuffled order. For each view the
orientation is searched on an importance-sampled candidate set (translations
by correlation peak search), then the volume spectrum takes one gradient step on
that view's energy at the winning pose.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import grid
from .exceptions import ShapeError
from .forward import ViewSet, psf_spectrum
from .pose import (
    SamplerState,
    anneal,
    draw_candidate_sets,
    search_orientation,
    update_distributions,
    write_sampler_csv,
)
from .shift import SHIFT_SOLVERS, shifted_energy
from .so3 import Pose, So3Grid
from .validation import check_same_shape, check_spectrum

logger = logging.getLogger(__name__)

STEP_DELTA = 1e-6
INIT_MODES = ("random_spectral", "random_uniform", "zeros")


@dataclass
class ReconConfig:
    """Hyperparameters of :func:`reconstruct`.

    ``mu=None`` selects :func:`default_step_size` for the number of views.
    ``shift_method`` names the translation solver (``"cross"`` for the exact
    least-squares shift, ``"phase"`` for whitened phase correlation). ``init`` is
    ``"random_spectral"`` (uniform random Fourier coefficients),
    ``"random_uniform"`` (uniform random voxels), ``"zeros"`` or a real volume
    used as the starting point. ``oversample`` is the zero-padding factor of
    the spectral rotation. ``recenter`` moves the volume's center of mass
    to the grid center after every epoch when poses are estimated.
    ``positivity`` clips negative voxels after every epoch; the volume is a
    density and unconstrained descent fits noise with negative lobes.
    """

    mu: float = None
    epochs: int = 20
    M_d: int = 2048
    M_psi: int = 256
    N_d: int = 64
    N_psi: int = 8
    alpha_r: float = 1.2
    beta_d: float = 50.0
    beta_psi: float = 50.0
    seed: int = 0
    init: object = "random_spectral"
    oversample: int = 2
    shift_method: str = "cross"
    recenter: bool = True
    positivity: bool = True
    known_poses: list = None
    early_stop_tol: float = None
    n_threads: int = 1
    checkpoint_every: int = None
    checkpoint_callback: object = None
    sampler_csv: str = None

    def __post_init__(self):
        if self.mu is not None and not (np.isfinite(self.mu) and self.mu >= 0):
            raise ValueError(f"mu must be finite and >= 0, got {self.mu!r}")
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise ValueError(f"epochs must be a non-negative integer, got {self.epochs!r}")
        if not 1 <= self.N_d <= self.M_d:
            raise ValueError(f"need 1 <= N_d <= M_d, got N_d={self.N_d}, M_d={self.M_d}")
        if not 1 <= self.N_psi <= self.M_psi:
            raise ValueError(f"need 1 <= N_psi <= M_psi, got N_psi={self.N_psi}, M_psi={self.M_psi}")
        if not self.alpha_r > 1:
            raise ValueError(f"alpha_r must be > 1, got {self.alpha_r!r}")
        if isinstance(self.init, str) and self.init not in INIT_MODES:
            raise ValueError(f"unknown init {self.init!r}, expected one of {INIT_MODES}")
        if self.shift_method not in SHIFT_SOLVERS:
            raise ValueError(f"unknown shift_method {self.shift_method!r}, expected one of {sorted(SHIFT_SOLVERS)}")
        if int(self.oversample) != self.oversample or self.oversample < 1:
            raise ValueError(f"oversample must be a positive integer, got {self.oversample!r}")


@dataclass
class ReconState:
    f_hat: np.ndarray
    sampler: SamplerState
    mu: float
    poses: list
    epoch: int = 0
    energy_trace: list = field(default_factory=list)
    view_energies: np.ndarray = None
    step_energies: list = field(default_factory=list)

    def volume(self):
        return grid.ifft(grid.hermitian_part(self.f_hat), tol=1e-6)


def mass_center(v):
    """Circular center of mass ``(x, y, z)`` of the positive part of ``v``.

    Each coordinate is the phase of the first Fourier harmonic along that
    axis, so mass wrapped across the boundary is handled. ``None`` when
    ``v`` has no positive voxel.
    """
    w = np.maximum(v, 0.0)
    total = w.sum()
    if total <= 0:
        return None
    center = []
    for axis in (2, 1, 0):
        n = v.shape[axis]
        profile = w.sum(axis=tuple(a for a in range(3) if a != axis))
        z = np.sum(profile * np.exp(2j * np.pi * np.arange(n) / n))
        center.append(float(np.mod(np.angle(z) * n / (2 * np.pi), n)) if abs(z) > 1e-12 * total else (n - 1) / 2)
    return np.array(center)


def recenter_spectrum(f_hat):
    """Translate the volume so its circular center of mass sits on the grid center.

    Circular shifts leave every view energy unchanged up to a pose
    translation, but rotations pivot on the grid center, so a drifting
    volume loses mass out of the field of view at large angles.
    """
    v = grid.ifft(grid.hermitian_part(f_hat), tol=1e-6)
    c = mass_center(v)
    if c is None:
        return f_hat
    n = np.array(v.shape[::-1], dtype=float)
    t = (n - 1) / 2 - c
    t = (t + n / 2) % n - n / 2
    return grid.apply_phase_shift(f_hat, tuple(t))


def default_step_size(psf_hat, n_views=1):
    """``0.5 / (n_views * (max |h_hat|^2 + delta))``.

    Each view energy has curvature ``2 |h_hat|^2``, so the sum over all views
    has Lipschitz constant ``2 n_views max |h_hat|^2``. With one view this is
    the largest step that still lands on the minimizer of the best
    transferred frequency; with many views it keeps every step from
    overwriting what the previous views contributed.
    """
    return 0.5 / (n_views * (float(np.max(np.abs(psf_hat) ** 2)) + STEP_DELTA))


def gradient_term(f_hat, psf_hat, y_hat, pose, *, oversample=1):
    """Gradient of ``||y_hat - h_hat rho_t R(f_hat)||^2`` with respect to ``f_hat``.

    Real and imaginary parts are treated as independent coordinates, and
    the result is ``dE/dRe + i dE/dIm``. The transpose of the discrete
    rotation is applied exactly (adjoint of trilinear interpolation), so the
    gradient is consistent with finite differences of the energy
    ``N * grid.energy_term(y_hat, psf_hat, f_hat, pose, oversample=oversample)``.
    """
    f_hat = check_spectrum(f_hat, cubic=True)
    y_hat = check_spectrum(y_hat)
    psf_hat = check_spectrum(psf_hat)
    check_same_shape(f_hat, y_hat, psf_hat, names=("volume", "view", "psf"))
    d = psf_hat * grid.phase_ramp(f_hat.shape, pose.t)
    rotated = grid.SpectralRotator(f_hat, oversample=oversample)(pose.orientation)
    residual = d * rotated - y_hat
    return 2.0 * grid.rotate_adjoint(np.conj(d) * residual, pose.orientation, oversample=oversample)


def init_state(n_views, shape, psf_hat, cfg, rng):
    if isinstance(cfg.init, str) and cfg.init == "random_spectral":
        f_hat = grid.hermitian_part(rng.uniform(0.0, 1.0, size=shape) + 0j)
    elif isinstance(cfg.init, str):
        f0 = rng.uniform(0.0, 1.0, size=shape) if cfg.init == "random_uniform" else np.zeros(shape)
        f_hat = grid.fft(f0)
    else:
        f0 = np.asarray(cfg.init, dtype=float)
        if f0.shape != shape:
            raise ShapeError(f"initial volume has shape {f0.shape}, views have {shape}")
        f_hat = grid.fft(f0)
    so3_grid = So3Grid(cfg.M_d, cfg.M_psi)
    sampler = SamplerState.uniform(
        n_views,
        so3_grid,
        alpha_r=cfg.alpha_r,
        beta_d=cfg.beta_d,
        beta_psi=cfg.beta_psi,
        N_d=cfg.N_d,
        N_psi=cfg.N_psi,
    )
    mu = default_step_size(psf_hat, n_views) if cfg.mu is None else float(cfg.mu)
    poses = list(cfg.known_poses) if cfg.known_poses is not None else [Pose() for _ in range(n_views)]
    return ReconState(
        f_hat=f_hat,
        sampler=sampler,
        mu=mu,
        poses=poses,
        view_energies=np.full(n_views, np.nan),
    )


def sgd_step(
    state, view, y_hat, psf_hat, rng, *, known_pose=None, n_threads=1, oversample=1, shift_method="cross"
):
    """Pose search for one view, sampler update, then one gradient step on the volume."""
    if known_pose is None:
        I_psi, I_d = draw_candidate_sets(state.sampler, view, rng)
        result = search_orientation(
            state.f_hat,
            psf_hat,
            y_hat,
            I_psi,
            I_d,
            state.sampler.grid,
            shift_solver=SHIFT_SOLVERS[shift_method],
            n_threads=n_threads,
            oversample=oversample,
        )
        update_distributions(state.sampler, view, result)
        pose, energy = result.best_pose, result.best_energy
    else:
        pose = known_pose
        model = grid.SpectralRotator(state.f_hat, psf_hat, oversample=oversample)(pose.orientation)
        energy = shifted_energy(y_hat, model, pose.t)
    if state.mu > 0:
        state.f_hat = state.f_hat - state.mu * gradient_term(
            state.f_hat, psf_hat, y_hat, pose, oversample=oversample
        )
    state.poses[view] = pose
    state.view_energies[view] = energy
    state.step_energies.append(energy)
    return state


def _prepare(views, psf):
    if isinstance(views, ViewSet):
        psf = views.psf if psf is None else psf
        views = views.views
    if psf is None:
        raise ValueError("a PSF is required")
    if len(views) == 0:
        raise ValueError("at least one view is required")
    vs = ViewSet(list(views), psf)
    return [grid.fft(v) for v in vs.views], psf_spectrum(vs.psf), vs.shape


def reconstruct(views, cfg=None, psf=None):
    """Run the full reconstruction.

    ``views`` is a :class:`~spfrecon.forward.ViewSet` or a sequence of
    volumes (then ``psf`` is required). Returns ``(volume, poses,
    diagnostics)`` where ``diagnostics`` holds the per-epoch mean energy
    trace, the final sampler state and the annealing schedule.
    """
    cfg = ReconConfig() if cfg is None else cfg
    y_hats, psf_hat, shape = _prepare(views, psf)
    n_views = len(y_hats)
    if cfg.known_poses is not None and len(cfg.known_poses) != n_views:
        raise ValueError(f"{len(cfg.known_poses)} known poses for {n_views} views")
    rng = np.random.default_rng(cfg.seed)
    state = init_state(n_views, shape, psf_hat, cfg, rng)
    alphas = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_views)
        epoch_energies = []
        for view in order:
            known = cfg.known_poses[view] if cfg.known_poses is not None else None
            sgd_step(
                state,
                int(view),
                y_hats[view],
                psf_hat,
                rng,
                known_pose=known,
                n_threads=cfg.n_threads,
                oversample=cfg.oversample,
                shift_method=cfg.shift_method,
            )
            epoch_energies.append(state.view_energies[view])
        state.f_hat = grid.hermitian_part(state.f_hat)
        if cfg.positivity:
            state.f_hat = grid.fft(np.maximum(state.volume(), 0.0))
        if cfg.recenter and cfg.known_poses is None:
            state.f_hat = recenter_spectrum(state.f_hat)
        state.epoch = epoch + 1
        state.energy_trace.append(float(np.mean(epoch_energies)))
        alphas.append(state.sampler.alpha)
        logger.info("epoch %d: mean energy %.6g, alpha %.4g", state.epoch, state.energy_trace[-1], state.sampler.alpha)
        if cfg.sampler_csv:
            write_sampler_csv(cfg.sampler_csv, state.sampler, state.epoch)
        if cfg.known_poses is None:
            anneal(state.sampler)
        if cfg.checkpoint_every and cfg.checkpoint_callback and state.epoch % cfg.checkpoint_every == 0:
            cfg.checkpoint_callback(state)
        if cfg.early_stop_tol is not None and len(state.energy_trace) > 1:
            prev, cur = state.energy_trace[-2], state.energy_trace[-1]
            if abs(prev - cur) <= cfg.early_stop_tol * abs(prev):
                logger.info("early stop at epoch %d", state.epoch)
                break
    diagnostics = {
        "energy_trace": list(state.energy_trace),
        "alpha": alphas,
        "sampler": state.sampler,
        "view_energies": state.view_energies.copy(),
        "step_energies": list(state.step_energies),
        "mu": state.mu,
        "epochs_run": state.epoch,
        "degenerate_updates": state.sampler.degenerate_updates,
    }
    return state.volume(), list(state.poses), diagnostics
