"""Dense 3-D grids: FFTs, rotation and translation in the spatial and Fourier domains.

Conventions
-----------
* Arrays are indexed ``[z, y, x]``; vectors (translations, rotation axes) are
  ``(x, y, z)``.
* Angular frequencies are ``omega_k = 2*pi*k/n`` with ``k`` from ``fftfreq``.
* ``apply_phase_shift(s, t)`` is the Fourier counterpart of ``f(x - t)``.
  With the forward DFT kernel ``exp(-i omega x)`` this is multiplication by
  ``exp(-i t . omega)``.
* Rotations act about the geometric center ``(n - 1) / 2`` of each axis, in
  both domains: ``rotate(fft(v), R)`` approximates ``fft(rotate(v, R))``.
"""

from functools import lru_cache

import numpy as np
import scipy.fft
from scipy import ndimage

from . import _kernels
from .exceptions import ShapeError, SymmetryError
from .validation import check_cubic, check_same_shape, check_spectrum, check_volume


def fft(v):
    """Unnormalized forward DFT of a real volume."""
    v = check_volume(v)
    return scipy.fft.fftn(v)


def ifft(s, *, tol=1e-8):
    """``1/N``-normalized inverse DFT, returning the real part.

    Raises SymmetryError when the imaginary residual exceeds ``tol`` times the
    real magnitude, i.e. when ``s`` is not the spectrum of a real volume.
    """
    s = check_spectrum(s)
    out = scipy.fft.ifftn(s)
    im = np.abs(out.imag).max()
    re = np.abs(out.real).max()
    if im > tol * re:
        raise SymmetryError(
            f"spectrum is not Hermitian: max|Im| = {im:.3e}, max|Re| = {re:.3e}"
        )
    return np.ascontiguousarray(out.real)


def angular_frequencies(n):
    return 2.0 * np.pi * np.fft.fftfreq(n)


def flip_frequencies(s):
    """Return ``s(-omega)`` on the FFT grid."""
    out = s[::-1, ::-1, ::-1]
    return np.roll(out, 1, axis=(0, 1, 2))


def hermitian_part(s):
    """Project a spectrum onto the spectra of real volumes."""
    return 0.5 * (s + np.conj(flip_frequencies(s)))


def hermitian_defect(s):
    """``max |s(w) - conj(s(-w))| / max |s|``; 0 for spectra of real volumes."""
    scale = np.abs(s).max()
    if scale == 0:
        return 0.0
    return float(np.abs(s - np.conj(flip_frequencies(s))).max() / scale)


def _axis_phase(n, t, hermitian=True):
    e = np.exp(-1j * t * angular_frequencies(n))
    if hermitian and n % 2 == 0:
        # the Nyquist bin is its own mirror: keep it real so real volumes stay real
        e[n // 2] = np.cos(np.pi * t)
    return e


def phase_factors(shape, t, *, hermitian=True):
    """Separable factors ``(ex, ey, ez)`` with ``ez[:,None,None]*ey[:,None]*ex = exp(-i t.omega)``.

    With ``hermitian=True`` the Nyquist entry of even axes is replaced by its
    real part. That is exact for integer shifts and keeps fractional shifts
    of real volumes real, at the price of not being unitary at that bin.
    """
    nz, ny, nx = shape
    tx, ty, tz = (float(v) for v in t)
    return (
        _axis_phase(nx, tx, hermitian),
        _axis_phase(ny, ty, hermitian),
        _axis_phase(nz, tz, hermitian),
    )


def phase_ramp(shape, t, *, hermitian=True):
    ex, ey, ez = phase_factors(shape, t, hermitian=hermitian)
    return ez[:, None, None] * ey[None, :, None] * ex[None, None, :]


def apply_phase_shift(s, t, *, hermitian=True):
    """Multiply ``s`` by the phase ramp that translates its volume by ``t`` voxels.

    ``hermitian=False`` uses the pure phase ``exp(-i t.omega)`` everywhere,
    so shifts by ``t`` and ``-t`` cancel exactly; see :func:`phase_factors`.
    """
    s = check_spectrum(s)
    if not np.any(np.asarray(t, dtype=float)):
        return s.copy()
    return s * phase_ramp(s.shape, t, hermitian=hermitian)


@lru_cache(maxsize=16)
def _center_ramp(n):
    """``exp(+i omega . c)`` for the grid center ``c = (n-1)/2``; read-only."""
    c = (n - 1) / 2.0
    e = np.exp(1j * c * angular_frequencies(n))
    ramp = e[:, None, None] * e[None, :, None] * e[None, None, :]
    ramp.setflags(write=False)
    return ramp


def centering_ramps(n):
    """``(demod, remod)``: multiply a spectrum by ``demod`` to move the grid center to the origin."""
    demod = _center_ramp(n)
    return demod, np.conj(demod)


def _rotation_matrix(R):
    if hasattr(R, "matrix"):
        return np.asarray(R.matrix(), dtype=float)
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ShapeError(f"rotation must be a 3x3 matrix, got shape {R.shape}")
    return R


def _affine_params(rt, n):
    # rt acts on (x, y, z); ndimage works in (z, y, x) index order
    perm = rt[::-1, ::-1]
    c = np.full(3, (n - 1) / 2.0)
    return perm, c - perm @ c


def rotate(x, R, *, order=1):
    """Rotate a volume (real) or a spectrum (complex) by ``R`` about the grid center.

    ``R`` may be a 3x3 matrix, an :class:`~spfrecon.so3.Orientation` or a
    :class:`~spfrecon.so3.Pose` (only its rotation is used). The output
    voxel at ``p`` samples the input at ``R^T p``; samples falling outside the
    grid read as zero. ``order`` is 1 (trilinear) or 3 (tricubic).
    """
    mat = _rotation_matrix(R)
    if order not in (1, 3):
        raise ValueError(f"order must be 1 or 3, got {order}")
    spectral = np.iscomplexobj(x)
    arr = check_spectrum(x) if spectral else check_volume(x)
    n = check_cubic(arr)
    if np.array_equal(mat, np.eye(3)):
        return arr.copy()
    rt = np.ascontiguousarray(mat.T)
    if not spectral:
        if order == 1:
            return _kernels.rotate_spatial(arr, rt, (n - 1) / 2.0, np.empty_like(arr))
        m, offset = _affine_params(rt, n)
        return ndimage.affine_transform(arr, m, offset=offset, order=3, mode="grid-constant", cval=0.0)
    demod, remod = centering_ramps(n)
    src = arr * demod
    if order == 1:
        return _kernels.rotate_spectrum(src, rt, remod, np.empty_like(src))
    return remod * _rotate_spectrum_cubic(src, rt)


def _rotate_spectrum_cubic(src, rt):
    n = src.shape[0]
    k = np.arange(n) - n // 2
    kz, ky, kx = np.meshgrid(k, k, k, indexing="ij")
    pts = np.stack([kx.ravel(), ky.ravel(), kz.ravel()])
    q = rt @ pts + n // 2
    coords = q[::-1]
    shifted = np.fft.fftshift(src)
    re = ndimage.map_coordinates(shifted.real, coords, order=3, mode="grid-constant", cval=0.0)
    im = ndimage.map_coordinates(shifted.imag, coords, order=3, mode="grid-constant", cval=0.0)
    out = (re + 1j * im).reshape(src.shape)
    return np.fft.ifftshift(out)


def _padded_size(n, oversample):
    return n + 2 * int(round((oversample - 1) * n / 2.0))


def oversampled_source(f_hat, oversample=1):
    """Centered, zero-padded spectrum used as the interpolation source.

    Returns ``(src, scale)``: ``src`` samples the same volume on a finer
    frequency grid of size ``m`` and output frequency ``k`` maps to source
    frequency ``scale * R^T k`` with ``scale = m / n``.
    """
    n = f_hat.shape[0]
    m = _padded_size(n, oversample)
    if m == n:
        return f_hat * centering_ramps(n)[0], 1.0
    p = (m - n) // 2
    vol = np.zeros((m, m, m), dtype=np.complex128)
    vol[p:p + n, p:p + n, p:p + n] = scipy.fft.ifftn(f_hat)
    src = scipy.fft.fftn(vol, overwrite_x=True)
    src *= centering_ramps(m)[0]
    return src, m / n


def oversampled_source_adjoint(g, n):
    """Adjoint of :func:`oversampled_source` with respect to ``f_hat``."""
    m = g.shape[0]
    g = g * centering_ramps(m)[1]
    if m == n:
        return g
    p = (m - n) // 2
    vol = scipy.fft.ifftn(g, overwrite_x=True)[p:p + n, p:p + n, p:p + n]
    return scipy.fft.fftn(vol) * (m**3 / n**3)


def rotate_adjoint(s, R, *, oversample=1):
    """Adjoint of the trilinear spectral rotation (used for gradients).

    With ``oversample > 1`` this is the adjoint of the map
    ``f_hat -> SpectralRotator(f_hat, oversample=oversample)(R)``.
    """
    mat = _rotation_matrix(R)
    s = check_spectrum(s, cubic=True)
    n = s.shape[0]
    m = _padded_size(n, oversample)
    if m == n and np.array_equal(mat, np.eye(3)):
        return s.copy()
    _, remod = centering_ramps(n)
    rt = np.ascontiguousarray(mat.T) * (m / n)
    g = _kernels.rotate_spectrum_adjoint(s, rt, remod, np.empty((m, m, m), dtype=np.complex128))
    return oversampled_source_adjoint(g, n)


class SpectralRotator:
    """Repeatedly evaluate ``weight * rotate(f_hat, R)`` for one fixed spectrum.

    Caches the centered copy of ``f_hat`` so each call costs a single pass.
    ``weight`` defaults to 1 (plain rotation) and is typically the PSF
    spectrum. ``oversample > 1`` interpolates a zero-padded spectrum, which
    is much closer to rotating the volume itself.
    """

    def __init__(self, f_hat, weight=None, *, oversample=1):
        f_hat = check_spectrum(f_hat, cubic=True)
        n = f_hat.shape[0]
        _, remod = centering_ramps(n)
        self.shape = f_hat.shape
        self._src, self._scale = oversampled_source(f_hat, oversample)
        self._weight = remod if weight is None else np.ascontiguousarray(remod * weight)

    def __call__(self, R, out=None):
        rt = np.ascontiguousarray(_rotation_matrix(R).T) * self._scale
        if out is None:
            out = np.empty(self.shape, dtype=np.complex128)
        return _kernels.rotate_spectrum(self._src, rt, self._weight, out)


def energy_term(s_view, psf_hat, f_hat, pose, *, oversample=1):
    """``||y_hat - h_hat rho_t R(f_hat)||^2 / N``: the spatial-domain squared residual.

    ``pose`` is a :class:`~spfrecon.so3.Pose`. ``oversample`` selects the
    spectral rotation as in :class:`SpectralRotator`.
    """
    s_view = check_spectrum(s_view, cubic=True)
    psf_hat = check_spectrum(psf_hat)
    f_hat = check_spectrum(f_hat)
    check_same_shape(s_view, psf_hat, f_hat, names=("view", "psf", "volume"))
    if oversample == 1:
        model = psf_hat * rotate(f_hat, pose.orientation)
    else:
        model = SpectralRotator(f_hat, psf_hat, oversample=oversample)(pose.orientation)
    ex, ey, ez = phase_factors(s_view.shape, pose.t)
    return _kernels.shifted_residual_norm(s_view, model, ex, ey, ez) / s_view.size


def circular_shift(v, t):
    """Integer circular shift so that ``out[x] = v[x - t]`` with ``t = (tx, ty, tz)``."""
    tx, ty, tz = (int(round(c)) for c in t)
    return np.roll(v, (tz, ty, tx), axis=(0, 1, 2))
