"""Translation estimation by normalized phase correlation."""

from dataclasses import dataclass

import numpy as np
import scipy.fft

from . import _kernels
from .exceptions import DegenerateInputError
from .grid import phase_factors
from .validation import check_same_shape, check_spectrum


@dataclass(frozen=True)
class CorrelationPeak:
    """Integer translation ``t = (tx, ty, tz)`` such that ``y ~ T_t(b)``."""

    t: tuple
    score: float


def _signed_index(idx, n):
    return idx - n if idx > n // 2 else idx


def phase_correlate(y_hat, b_hat, *, _validate=True):
    """Locate the peak of the normalized cross-power spectrum of ``y`` and ``b``.

    Returns the signed integer shift, each component in ``(-n/2, n/2]``.
    """
    if _validate:
        y_hat = check_spectrum(y_hat)
        b_hat = check_spectrum(b_hat)
        check_same_shape(y_hat, b_hat, names=("y_hat", "b_hat"))
    cross = np.empty_like(y_hat)
    peak = _kernels.normalized_cross_power(y_hat, b_hat, cross)
    if peak == 0.0:
        if not np.any(b_hat):
            raise DegenerateInputError("reference spectrum is identically zero")
        raise DegenerateInputError("view spectrum is identically zero")
    return _peak(scipy.fft.ifftn(cross, overwrite_x=True).real)


def cross_correlate(y_hat, b_hat, *, _validate=True):
    """Integer shift maximizing the plain cross-correlation of ``y`` and ``b``.

    For circular integer shifts ``||y - T_t b||^2 = ||y||^2 + ||b||^2 - 2 corr(t)``,
    so the peak is the exact least-squares shift. Unlike
    :func:`phase_correlate` it does not whiten the spectra, which keeps
    frequencies that carry no signal (beyond the PSF cutoff) from adding noise.
    """
    if _validate:
        y_hat = check_spectrum(y_hat)
        b_hat = check_spectrum(b_hat)
        check_same_shape(y_hat, b_hat, names=("y_hat", "b_hat"))
    if not np.any(b_hat):
        raise DegenerateInputError("reference spectrum is identically zero")
    if not np.any(y_hat):
        raise DegenerateInputError("view spectrum is identically zero")
    return _peak(scipy.fft.ifftn(y_hat * np.conj(b_hat)).real)


def _peak(corr):
    flat = int(np.argmax(corr))
    iz, iy, ix = np.unravel_index(flat, corr.shape)
    nz, ny, nx = corr.shape
    t = (_signed_index(int(ix), nx), _signed_index(int(iy), ny), _signed_index(int(iz), nz))
    return CorrelationPeak(t, float(corr.flat[flat]))


SHIFT_SOLVERS = {"phase": phase_correlate, "cross": cross_correlate}


def shifted_energy(y_hat, b_hat, t):
    """``||y_hat - rho_t b_hat||^2 / N``, the spatial squared residual after shifting ``b`` by ``t``."""
    ex, ey, ez = phase_factors(y_hat.shape, t)
    return _kernels.shifted_residual_norm(y_hat, b_hat, ex, ey, ez) / y_hat.size

