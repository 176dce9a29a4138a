"""Quality metrics against a ground truth: FSC, conical FSC, 3-D SSIM and MI registration."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from . import grid
from .exceptions import DegenerateInputError
from .shift import cross_correlate
from .so3 import Orientation, Pose, axis_from_angles, fibonacci_axes, geodesic_distance
from .validation import check_cubic, check_same_shape, check_volume

FSC_CUTOFF = 0.143
NYQUIST = 0.5
MI_BINS = 64


def _check_pair(a, b):
    a = check_volume(a, "a", cubic=True)
    b = check_volume(b, "b", cubic=True)
    check_same_shape(a, b, names=("a", "b"))
    return a, b


def _radius_index(n):
    k = np.fft.fftfreq(n) * n
    kz, ky, kx = np.meshgrid(k, k, k, indexing="ij")
    return kx, ky, kz, np.sqrt(kx**2 + ky**2 + kz**2)


def _cutoff_crossing(radii, values, cutoff):
    """First down-crossing of ``cutoff``, linearly interpolated; Nyquist when there is none."""
    for s in range(len(values)):
        if values[s] < cutoff:
            if s == 0:
                return float(radii[0])
            v0, v1 = values[s - 1], values[s]
            frac = (v0 - cutoff) / (v0 - v1)
            return float(radii[s - 1] + frac * (radii[s] - radii[s - 1]))
    return NYQUIST


def _shell_correlation(A, B, shells, n_shells, mask=None):
    w = np.ones(A.shape, dtype=bool) if mask is None else mask
    idx = shells[w]
    cross = np.bincount(idx, (A[w] * np.conj(B[w])).real, minlength=n_shells)[:n_shells]
    pa = np.bincount(idx, np.abs(A[w]) ** 2, minlength=n_shells)[:n_shells]
    pb = np.bincount(idx, np.abs(B[w]) ** 2, minlength=n_shells)[:n_shells]
    count = np.bincount(idx, minlength=n_shells)[:n_shells]
    with np.errstate(invalid="ignore", divide="ignore"):
        values = cross / np.sqrt(pa * pb)
    return values, count


@dataclass
class FscCurve:
    """Shell radii in cycles per voxel, correlation per shell, and the cutoff crossing."""

    radii: np.ndarray
    values: np.ndarray
    cutoff_resolution: float
    cutoff: float = FSC_CUTOFF

    def rows(self):
        return [(float(r), float(v)) for r, v in zip(self.radii, self.values)]


def fsc(a, b, cutoff=FSC_CUTOFF):
    """Fourier shell correlation over integer-radius shells up to Nyquist.

    Each shell value is the real part of the normalized cross-correlation of
    the two spectra. Shells without power in either volume are NaN.
    """
    a, b = _check_pair(a, b)
    n = a.shape[0]
    A, B = grid.fft(a), grid.fft(b)
    *_, r = _radius_index(n)
    n_shells = n // 2 + 1
    shells = np.rint(r).astype(np.int64)
    keep = shells < n_shells
    values, _ = _shell_correlation(A, B, np.where(keep, shells, n_shells), n_shells, keep)
    radii = np.arange(n_shells) / n
    return FscCurve(radii, values, _cutoff_crossing(radii, np.nan_to_num(values, nan=-np.inf), cutoff), cutoff)


@dataclass
class CfscMap:
    """Per-direction cutoff resolution on a ``(phi2, phi1)`` grid; NaN marks undefined directions."""

    phi1: np.ndarray
    phi2: np.ndarray
    resolution: np.ndarray
    cone_half_angle: float
    cutoff: float = FSC_CUTOFF

    def rows(self):
        return [
            (float(p1), float(p2), float(self.resolution[b, a]))
            for b, p2 in enumerate(self.phi2)
            for a, p1 in enumerate(self.phi1)
        ]

    def along(self, direction):
        """Resolution of the grid direction closest to ``direction`` (x, y, z), up to sign."""
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        best, value = -1.0, np.nan
        for b, p2 in enumerate(self.phi2):
            for a, p1 in enumerate(self.phi1):
                c = abs(float(np.dot(axis_from_angles(p1, p2), d)))
                if c > best + 1e-12:
                    best, value = c, self.resolution[b, a]
        return float(value)

    def z_resolution(self):
        return self.along((0.0, 0.0, 1.0))

    def lateral_resolution(self):
        """Mean resolution over the equator (directions perpendicular to z)."""
        j = int(np.argmin(np.abs(self.phi2 - np.pi / 2)))
        return float(np.nanmean(self.resolution[j]))


def conical_fsc(a, b, n_directions=12, cone_half_angle=np.radians(20.0), cutoff=FSC_CUTOFF):
    """Directional FSC: shells restricted to a double cone around each direction.

    Directions form a grid of ``2 * n_directions`` azimuths in ``[0, 2 pi)``
    and ``n_directions + 1`` inclinations in ``[0, pi]``. The cone includes
    the antipodal direction, so antipodal grid points carry the same value.
    A direction whose cone leaves any shell empty is undefined (NaN).
    """
    a, b = _check_pair(a, b)
    if not 0 < cone_half_angle <= np.pi / 2:
        raise ValueError(f"cone_half_angle must be in (0, pi/2], got {cone_half_angle!r}")
    n = a.shape[0]
    A, B = grid.fft(a), grid.fft(b)
    kx, ky, kz, r = _radius_index(n)
    n_shells = n // 2 + 1
    shells = np.rint(r).astype(np.int64)
    in_range = shells < n_shells
    radii = np.arange(n_shells) / n
    phi1 = np.arange(2 * n_directions) * (np.pi / n_directions)
    phi2 = np.arange(n_directions + 1) * (np.pi / n_directions)
    res = np.full((phi2.size, phi1.size), np.nan)
    cos_half = np.cos(cone_half_angle)
    done = np.zeros(res.shape, dtype=bool)
    for jb in range(phi2.size):
        for ja in range(phi1.size):
            if done[jb, ja]:
                continue
            d = axis_from_angles(phi1[ja], phi2[jb])
            proj = np.abs(kx * d[0] + ky * d[1] + kz * d[2])
            mask = in_range & (proj >= cos_half * r - 1e-9)
            values, count = _shell_correlation(A, B, np.where(mask, shells, n_shells), n_shells, mask)
            value = np.nan
            if np.all(count > 0):
                value = _cutoff_crossing(radii, np.nan_to_num(values, nan=-np.inf), cutoff)
            # antipode (phi1 + pi, pi - phi2) has the same double cone
            for jb2, ja2 in {(jb, ja), (phi2.size - 1 - jb, (ja + n_directions) % phi1.size)}:
                res[jb2, ja2] = value
                done[jb2, ja2] = True
            if jb in (0, phi2.size - 1):
                # the poles do not depend on the azimuth
                res[jb, :] = value
                res[phi2.size - 1 - jb, :] = value
                done[jb, :] = done[phi2.size - 1 - jb, :] = True
    return CfscMap(phi1, phi2, res, float(cone_half_angle), cutoff)


def _unit_scale(v):
    v = np.maximum(v, 0.0)
    peak = v.max()
    return v / peak if peak > 0 else v


def ssim3d(a, b, *, sigma=1.5, k1=0.01, k2=0.03):
    """Mean local structural similarity of two volumes with a 3-D Gaussian window.

    Intensities are densities: each volume is clamped at zero and scaled to
    a maximum of 1 (dynamic range 1). Statistics use population moments and
    the mean skips a border of half a window where the window is truncated.
    """
    a = check_volume(a, "a")
    b = check_volume(b, "b")
    check_same_shape(a, b, names=("a", "b"))
    x, y = _unit_scale(a), _unit_scale(b)
    c1, c2 = k1**2, k2**2
    truncate = 3.5

    def smooth(v):
        return ndimage.gaussian_filter(v, sigma=sigma, truncate=truncate, mode="reflect")

    ux, uy = smooth(x), smooth(y)
    vx = smooth(x * x) - ux * ux
    vy = smooth(y * y) - uy * uy
    vxy = smooth(x * y) - ux * uy
    s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / ((ux**2 + uy**2 + c1) * (vx + vy + c2))
    pad = int(truncate * sigma + 0.5)
    if all(d > 2 * pad for d in s.shape):
        s = s[pad:-pad, pad:-pad, pad:-pad]
    return float(s.mean())


def _rank_bins(v, bins):
    """Quantile bin of every voxel; equal values share a bin, so monotone remaps leave it unchanged."""
    flat = v.ravel()
    _, inverse, counts = np.unique(flat, return_inverse=True, return_counts=True)
    if counts.size == 1:
        raise DegenerateInputError("mutual information is undefined for a constant volume")
    below = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return (below[inverse] * bins // flat.size).astype(np.int64)


def mutual_information(a, b, bins=MI_BINS):
    """Mutual information (bits) of the rank-quantized intensities of two volumes."""
    a, b = _check_pair(a, b)
    return _mi_from_bins(_rank_bins(a, bins), _rank_bins(b, bins), bins)


def _mi_from_bins(ia, ib, bins):
    joint = np.bincount(ia * bins + ib, minlength=bins * bins).reshape(bins, bins).astype(float)
    joint /= joint.sum()
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log2(joint[nz] / np.outer(pa, pb)[nz])))


def apply_pose(v, pose):
    """Rotate ``v`` about the grid center, then translate it by ``pose.t`` voxels."""
    rotated = grid.rotate(v, pose.matrix())
    if not np.any(pose.t):
        return rotated
    return grid.ifft(grid.apply_phase_shift(grid.fft(rotated), pose.t), tol=1e-6)


def _coarse_orientations(step_deg):
    step = np.radians(step_deg)
    n_axes = max(1, int(round(4.0 * np.pi / step**2)))
    # (d, psi) and (-d, -psi) coincide, so psi in [0, pi] covers SO(3)
    n_psi = int(round(np.pi / step)) + 1
    psis = np.linspace(0.0, np.pi, n_psi)
    return fibonacci_axes(n_axes), psis


def _downsample(v, size):
    if v.shape[0] <= size:
        return v, 1.0
    factor = size / v.shape[0]
    return ndimage.zoom(v, factor, order=1), (size - 1) / (v.shape[0] - 1)


@dataclass
class Registration:
    pose: Pose
    mutual_information: float
    evaluations: int


def register_to_ground_truth(
    recon, gt, *, step_deg=10.0, coarse_size=16, n_rescore=24, n_starts=4, tol=1e-4, return_details=False
):
    """Find the pose that best maps ``recon`` onto ``gt`` by mutual information.

    An exhaustive search on a ``step_deg`` orientation grid (run on volumes
    downsampled to ``coarse_size``, translations by cross-correlation) seeds
    a coordinate-wise line search over the rotation vector and translation at
    full resolution, which stops once a sweep gains less than ``tol`` bits.
    The ``n_rescore`` best coarse orientations at least two grid steps apart
    are scored again at full resolution and the ``n_starts`` best of those
    seed the line search. Candidates are scored by resampling ``gt`` into the frame of
    ``recon``, so the noise in ``recon`` is never interpolated.

    Returns ``(pose, aligned)`` with ``aligned = apply_pose(recon, pose)``.
    """
    recon, gt = _check_pair(recon, gt)
    _rank_bins(gt, MI_BINS)
    recon_bins = _rank_bins(recon, MI_BINS)
    small_recon, scale = _downsample(recon, coarse_size)
    small_gt, _ = _downsample(gt, coarse_size)
    small_recon_bins = _rank_bins(small_recon, MI_BINS)
    small_recon_hat = grid.fft(small_recon)
    axes, psis = _coarse_orientations(step_deg)

    candidates = []
    for j, d in enumerate(axes):
        for i, psi in enumerate(psis):
            o = Orientation.from_axis_angle(d, psi)
            r = o.matrix()
            rotated = grid.rotate(small_gt, r.T)
            if not np.any(rotated):
                continue
            # recon ~ T_s R^T gt  <=>  gt ~ T_t R recon with t = -R s
            s = cross_correlate(small_recon_hat, grid.fft(rotated), _validate=False).t
            moved = grid.circular_shift(rotated, s)
            try:
                score = _mi_from_bins(small_recon_bins, _rank_bins(moved, MI_BINS), MI_BINS)
            except DegenerateInputError:
                continue
            t = -(r @ np.asarray(s, dtype=float)) / scale
            candidates.append((-score, j, i, o, tuple(t)))
    if not candidates:
        raise DegenerateInputError("no orientation produced a usable overlap")
    candidates.sort(key=lambda c: (c[0], c[1], c[2]))
    distinct = []
    min_sep = 2.0 * np.radians(step_deg)
    for cand in candidates:
        if all(geodesic_distance(cand[3].matrix(), other[3].matrix()) >= min_sep for other in distinct):
            distinct.append(cand)
            if len(distinct) == n_rescore:
                break
    # the coarse grid can misrank near-symmetric poses, so rescore at full size
    recon_hat = grid.fft(recon)
    rescored = []
    for rank, (_, _, _, o, _) in enumerate(distinct):
        r = o.matrix()
        rotated = grid.rotate(gt, r.T)
        s = cross_correlate(recon_hat, grid.fft(rotated), _validate=False).t
        try:
            score = _mi_from_bins(recon_bins, _rank_bins(grid.circular_shift(rotated, s), MI_BINS), MI_BINS)
        except DegenerateInputError:
            continue
        rescored.append((-score, rank, o, tuple(-(r @ np.asarray(s, dtype=float)))))
    rescored.sort(key=lambda c: (c[0], c[1]))
    seeds = rescored[:n_starts] or [(0.0, 0, c[3], c[4]) for c in distinct[:n_starts]]

    evaluations = [0]

    # resample the ground truth into the recon frame: interpolating a noisy
    # recon smooths its noise and biases MI towards off-grid poses
    def objective(params):
        evaluations[0] += 1
        moved = apply_pose(gt, _params_to_pose(params).inverse())
        try:
            return _mi_from_bins(recon_bins, _rank_bins(moved, MI_BINS), MI_BINS)
        except DegenerateInputError:
            return -np.inf

    best_params, best_score = None, -np.inf
    for _, _, o, t in seeds:
        start = np.concatenate([Rotation.from_matrix(o.matrix()).as_rotvec(), t])
        params, score = _coordinate_search(objective, start, tol)
        if score > best_score + 1e-12:
            best_params, best_score = params, score
    pose = _params_to_pose(best_params)
    aligned = apply_pose(recon, pose)
    if return_details:
        return pose, aligned, Registration(pose, best_score, evaluations[0])
    return pose, aligned


def _params_to_pose(params):
    mat = Rotation.from_rotvec(params[:3]).as_matrix()
    return Pose(Orientation.from_matrix(mat), tuple(float(c) for c in params[3:]))


def _coordinate_search(objective, start, tol, max_sweeps=200):
    params = np.asarray(start, dtype=float).copy()
    score = objective(params)
    steps = np.array([np.radians(4.0)] * 3 + [1.0] * 3)
    min_steps = steps / 64.0
    for _ in range(max_sweeps):
        gain = 0.0
        for k in range(params.size):
            for sign in (1.0, -1.0):
                trial = params.copy()
                trial[k] += sign * steps[k]
                value = objective(trial)
                if value > score:
                    gain += value - score
                    params, score = trial, value
                    break
        if gain < tol:
            if np.all(steps <= min_steps):
                break
            steps = steps / 2.0
    return params, score
