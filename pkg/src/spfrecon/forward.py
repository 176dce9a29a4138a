"""Forward imaging model and synthetic dataset generation.

A view is ``y = h * T_t(R(f)) + noise``: the particle is rotated about the
grid center, translated by ``t`` voxels, convolved (periodically) with the
PSF and corrupted by i.i.d. Gaussian noise.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from . import grid
from .exceptions import ShapeError
from .so3 import Pose, random_orientation
from .validation import check_cubic, check_random_state, check_same_shape, check_volume


@dataclass(frozen=True)
class PsfSpec:
    """Standard deviations (voxels) of an anisotropic Gaussian PSF elongated along z."""

    sigma_xy: float = 1.5
    sigma_z: float = 5.0

    def __post_init__(self):
        for name in ("sigma_xy", "sigma_z"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and positive, got {value!r}")


@dataclass(frozen=True)
class SimConfig:
    n_views: int = 20
    noise_sigma: float = 0.2
    dol_spots: int = 120
    spot_sigma_range: tuple = (0.02, 0.05)
    spot_intensity_range: tuple = (0.0, 1.0)
    seed: int = 0
    psf: PsfSpec = field(default_factory=PsfSpec)
    # fraction of the grid size
    translation_max: float = 0.1

    def __post_init__(self):
        if int(self.n_views) != self.n_views or self.n_views < 1:
            raise ValueError(f"n_views must be a positive integer, got {self.n_views!r}")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")
        if int(self.dol_spots) != self.dol_spots or self.dol_spots < 0:
            raise ValueError("dol_spots must be a non-negative integer")
        lo, hi = self.spot_sigma_range
        if not 0 < lo <= hi:
            raise ValueError(f"spot_sigma_range must satisfy 0 < lo <= hi, got {self.spot_sigma_range}")
        lo, hi = self.spot_intensity_range
        if not 0 <= lo <= hi <= 1:
            raise ValueError(f"spot_intensity_range must lie in [0, 1], got {self.spot_intensity_range}")
        if not 0 <= self.translation_max < 0.5:
            raise ValueError("translation_max must be in [0, 0.5)")
        if isinstance(self.psf, dict):
            object.__setattr__(self, "psf", PsfSpec(**self.psf))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def scaled(cls, size, reference=50, **overrides):
        """Defaults rescaled from a ``reference``-voxel grid to a ``size``-voxel grid.

        PSF widths scale linearly and the number of defect spots with volume.
        """
        ratio = size / reference
        params = dict(
            psf=PsfSpec(1.5 * ratio, 5.0 * ratio),
            dol_spots=int(round(120 * ratio**3)),
        )
        params.update(overrides)
        return cls(**params)


@dataclass
class ViewSet:
    """Views sharing one PSF; ``info`` carries provenance such as padding applied at load time."""

    views: list
    psf: np.ndarray
    true_poses: list = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.psf = check_volume(self.psf, "psf", cubic=True)
        self.views = [check_volume(v, f"view {i}") for i, v in enumerate(self.views)]
        if not self.views:
            raise ValueError("a ViewSet needs at least one view")
        check_same_shape(self.psf, *self.views)
        if self.true_poses is not None:
            self.true_poses = list(self.true_poses)
            if len(self.true_poses) != len(self.views):
                raise ValueError(
                    f"{len(self.true_poses)} poses for {len(self.views)} views"
                )

    def __len__(self):
        return len(self.views)

    @property
    def shape(self):
        return self.psf.shape


def _centered_coords(n):
    c = n // 2
    return np.arange(n, dtype=float) - c


def gaussian_psf(spec, dims):
    """Unit-sum Gaussian centered on voxel ``n // 2`` of a cubic grid."""
    n = _cubic_size(dims)
    r = _centered_coords(n)
    gxy = np.exp(-(r**2) / (2.0 * spec.sigma_xy**2))
    gz = np.exp(-(r**2) / (2.0 * spec.sigma_z**2))
    psf = gz[:, None, None] * gxy[None, :, None] * gxy[None, None, :]
    return psf / psf.sum()


def _cubic_size(dims):
    if np.isscalar(dims):
        n = int(dims)
    else:
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or len(set(dims)) != 1:
            raise ShapeError(f"dims must be cubic, got {dims}")
        n = dims[0]
    if n < 1:
        raise ShapeError(f"grid size must be positive, got {n}")
    return n


def psf_spectrum(psf):
    """Transfer function of a PSF stored centered on voxel ``n // 2``."""
    psf = check_volume(psf, "psf", cubic=True)
    return grid.fft(np.fft.ifftshift(psf))


def simulate_view(f, psf, pose, noise_sigma=0.0, rng=None):
    """One noisy view of ``f`` at ``pose``; linear in ``f`` when ``noise_sigma == 0``."""
    f = check_volume(f, "volume", cubic=True)
    psf = check_volume(psf, "psf", cubic=True)
    check_same_shape(f, psf, names=("volume", "psf"))
    rotated = grid.rotate(f, pose.orientation)
    y = _blur_and_shift(rotated, psf_spectrum(psf), pose.t)
    if noise_sigma > 0:
        y = y + check_random_state(rng).normal(0.0, noise_sigma, size=y.shape)
    return y


def _blur_and_shift(v, psf_hat, t):
    spectrum = grid.apply_phase_shift(grid.fft(v), t) * psf_hat
    return grid.ifft(spectrum)


def apply_dol_defects(f, cfg, rng):
    """Subtract ``cfg.dol_spots`` random Gaussian spots and clamp at zero."""
    f = check_volume(f, cubic=True)
    if cfg.dol_spots == 0:
        return f.copy()
    rng = check_random_state(rng)
    n = f.shape[0]
    axis = np.arange(n, dtype=float)
    out = f.copy()
    s_lo, s_hi = cfg.spot_sigma_range
    i_lo, i_hi = cfg.spot_intensity_range
    for _ in range(cfg.dol_spots):
        cx, cy, cz = rng.uniform(0.0, n, size=3)
        sigma = rng.uniform(s_lo, s_hi) * n
        amplitude = rng.uniform(i_lo, i_hi)
        gx = np.exp(-((axis - cx) ** 2) / (2 * sigma**2))
        gy = np.exp(-((axis - cy) ** 2) / (2 * sigma**2))
        gz = np.exp(-((axis - cz) ** 2) / (2 * sigma**2))
        out -= amplitude * (gz[:, None, None] * gy[None, :, None] * gx[None, None, :])
    np.maximum(out, 0.0, out=out)
    return out


def random_pose(rng, n, translation_max):
    """Axis uniform on the sphere, angle uniform, translation uniform in a cube."""
    orientation = random_orientation(rng)
    tmax = translation_max * n
    t = rng.uniform(-tmax, tmax, size=3) if tmax > 0 else np.zeros(3)
    return Pose(orientation, tuple(t))


def generate_dataset(f_gt, cfg, poses=None):
    """Simulate ``cfg.n_views`` views of ``f_gt``.

    Each view draws from its own generator spawned from ``cfg.seed``, so the
    result does not depend on the order views are produced. ``poses`` forces
    the ground-truth poses instead of sampling them.
    """
    f_gt = check_volume(f_gt, "ground truth", cubic=True)
    n = f_gt.shape[0]
    psf = gaussian_psf(cfg.psf, n)
    psf_hat = psf_spectrum(psf)
    if poses is not None and len(poses) != cfg.n_views:
        raise ValueError(f"{len(poses)} forced poses for {cfg.n_views} views")
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_views)
    views, true_poses = [], []
    for idx, child in enumerate(children):
        rng = np.random.default_rng(child)
        pose = random_pose(rng, n, cfg.translation_max) if poses is None else poses[idx]
        particle = grid.rotate(f_gt, pose.orientation)
        particle = apply_dol_defects(particle, cfg, rng)
        y = np.maximum(_blur_and_shift(particle, psf_hat, pose.t), 0.0)
        if cfg.noise_sigma > 0:
            y = y + rng.normal(0.0, cfg.noise_sigma, size=y.shape)
        views.append(y)
        true_poses.append(pose)
    return ViewSet(views, psf, true_poses)


def make_phantom(size=50, seed=0, n_blobs=6):
    """Asymmetric sum of anisotropic Gaussian blobs, scaled to ``[0, 1]``.

    Blobs sit within a quarter of the grid size from the center so every
    rotation keeps the particle inside the field of view.
    """
    rng = np.random.default_rng(seed)
    c = (size - 1) / 2.0
    z, y, x = np.meshgrid(*(np.arange(size, dtype=float) - c,) * 3, indexing="ij")
    pts = np.stack([x, y, z], axis=-1)
    vol = np.zeros((size, size, size))
    reach = size / 4.0
    for k in range(n_blobs):
        center = rng.uniform(-1, 1, size=3) * reach * (0.3 if k == 0 else 0.8)
        scales = rng.uniform(0.05, 0.12, size=3) * size
        rot = random_orientation(rng).matrix()
        d = (pts - center) @ rot
        vol += rng.uniform(0.5, 1.0) * np.exp(-0.5 * np.sum((d / scales) ** 2, axis=-1))
    vol -= vol.min()
    return vol / vol.max()


def align_view(view, pose, *, order=1):
    """Undo ``pose`` on a view: translate by ``-t`` then rotate by ``R^T``."""
    view = check_volume(view, cubic=True)
    back = grid.ifft(grid.apply_phase_shift(grid.fft(view), -np.asarray(pose.t)))
    return grid.rotate(back, pose.matrix().T, order=order)

