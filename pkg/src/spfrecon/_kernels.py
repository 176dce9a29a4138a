"""Compiled inner loops: trilinear rotation, its adjoint, and the phase-shift residual.

Arrays are indexed ``[z, y, x]``; coordinate vectors are ``(x, y, z)``.
``rt`` is always the transpose of the rotation matrix, so that output voxel
``p`` reads the source at ``rt @ p``.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def rotate_spatial(src, rt, center, out):
    n0, n1, n2 = src.shape
    for iz in range(n0):
        pz = iz - center
        for iy in range(n1):
            py = iy - center
            for ix in range(n2):
                px = ix - center
                qx = rt[0, 0] * px + rt[0, 1] * py + rt[0, 2] * pz + center
                qy = rt[1, 0] * px + rt[1, 1] * py + rt[1, 2] * pz + center
                qz = rt[2, 0] * px + rt[2, 1] * py + rt[2, 2] * pz + center
                x0 = int(np.floor(qx))
                y0 = int(np.floor(qy))
                z0 = int(np.floor(qz))
                fx = qx - x0
                fy = qy - y0
                fz = qz - z0
                acc = src[0, 0, 0] * 0.0
                for dz in range(2):
                    z = z0 + dz
                    if z < 0 or z >= n0:
                        continue
                    wz = fz if dz == 1 else 1.0 - fz
                    for dy in range(2):
                        y = y0 + dy
                        if y < 0 or y >= n1:
                            continue
                        wy = fy if dy == 1 else 1.0 - fy
                        for dx in range(2):
                            x = x0 + dx
                            if x < 0 or x >= n2:
                                continue
                            wx = fx if dx == 1 else 1.0 - fx
                            acc += wz * wy * wx * src[z, y, x]
                out[iz, iy, ix] = acc
    return out


@njit(cache=True, inline="always")
def _signed(i, n):
    return i if i < (n + 1) // 2 else i - n


@njit(cache=True, inline="always")
def _wrap(i, n):
    return i + n if i < 0 else i


@njit(cache=True, nogil=True)
def _edge_sample(src, qx, qy, qz, x0, y0, z0, lo, hi):
    n = src.shape[0]
    fx = qx - x0
    fy = qy - y0
    fz = qz - z0
    acc = 0j
    for dz in range(2):
        z = z0 + dz
        if z < lo or z > hi:
            continue
        wz = fz if dz == 1 else 1.0 - fz
        for dy in range(2):
            y = y0 + dy
            if y < lo or y > hi:
                continue
            wy = fy if dy == 1 else 1.0 - fy
            for dx in range(2):
                x = x0 + dx
                if x < lo or x > hi:
                    continue
                wx = fx if dx == 1 else 1.0 - fx
                acc += wz * wy * wx * src[_wrap(z, n), _wrap(y, n), _wrap(x, n)]
    return acc


@njit(cache=True, nogil=True, fastmath=True)
def rotate_spectrum(src, rt, weight, out):
    """``out[k] = weight[k] * interp(src, rt @ k)`` over signed frequencies.

    ``src`` (size ``m``) and ``out`` (size ``n``) are in FFT layout (DC at
    index 0); ``m >= n`` allows sampling an oversampled spectrum, in which
    case ``rt`` carries the factor ``m / n``. Source frequencies outside the
    signed range ``[-(m//2), (m-1)//2]`` read as zero.
    """
    n = out.shape[0]
    m = src.shape[0]
    lo = -(m // 2)
    hi = (m - 1) // 2
    h = (n + 1) // 2
    for iz in range(n):
        kz = iz if iz < h else iz - n
        for iy in range(n):
            ky = iy if iy < h else iy - n
            bx = rt[0, 1] * ky + rt[0, 2] * kz
            by = rt[1, 1] * ky + rt[1, 2] * kz
            bz = rt[2, 1] * ky + rt[2, 2] * kz
            for ix in range(n):
                kx = ix if ix < h else ix - n
                qx = bx + rt[0, 0] * kx
                qy = by + rt[1, 0] * kx
                qz = bz + rt[2, 0] * kx
                # |q| <= sqrt(3) m / 2 < m, so the shifted truncation is a floor
                x0 = int(qx + m) - m
                y0 = int(qy + m) - m
                z0 = int(qz + m) - m
                if lo <= x0 < hi and lo <= y0 < hi and lo <= z0 < hi:
                    fx = qx - x0
                    fy = qy - y0
                    fz = qz - z0
                    gx = 1.0 - fx
                    gy = 1.0 - fy
                    gz = 1.0 - fz
                    xa = _wrap(x0, m)
                    xb = _wrap(x0 + 1, m)
                    ya = _wrap(y0, m)
                    yb = _wrap(y0 + 1, m)
                    za = _wrap(z0, m)
                    zb = _wrap(z0 + 1, m)
                    s = src[za, ya, xa]
                    t = src[za, ya, xb]
                    c00r = s.real * gx + t.real * fx
                    c00i = s.imag * gx + t.imag * fx
                    s = src[za, yb, xa]
                    t = src[za, yb, xb]
                    c01r = s.real * gx + t.real * fx
                    c01i = s.imag * gx + t.imag * fx
                    s = src[zb, ya, xa]
                    t = src[zb, ya, xb]
                    c10r = s.real * gx + t.real * fx
                    c10i = s.imag * gx + t.imag * fx
                    s = src[zb, yb, xa]
                    t = src[zb, yb, xb]
                    c11r = s.real * gx + t.real * fx
                    c11i = s.imag * gx + t.imag * fx
                    ar = (c00r * gy + c01r * fy) * gz + (c10r * gy + c11r * fy) * fz
                    ai = (c00i * gy + c01i * fy) * gz + (c10i * gy + c11i * fy) * fz
                    acc = complex(ar, ai)
                elif x0 < lo - 1 or x0 > hi or y0 < lo - 1 or y0 > hi or z0 < lo - 1 or z0 > hi:
                    acc = 0j
                else:
                    acc = _edge_sample(src, qx, qy, qz, x0, y0, z0, lo, hi)
                out[iz, iy, ix] = weight[iz, iy, ix] * acc
    return out


@njit(cache=True, nogil=True)
def rotate_spectrum_adjoint(v, rt, weight, out):
    """Exact adjoint of :func:`rotate_spectrum` (for real interpolation weights).

    ``out = A^T (conj(weight) * v)`` where ``A`` is the interpolation matrix;
    ``out`` has the source grid size.
    """
    n = v.shape[0]
    m = out.shape[0]
    lo = -(m // 2)
    hi = (m - 1) // 2
    out[:] = 0j
    for iz in range(n):
        kz = _signed(iz, n)
        for iy in range(n):
            ky = _signed(iy, n)
            for ix in range(n):
                kx = _signed(ix, n)
                val = np.conj(weight[iz, iy, ix]) * v[iz, iy, ix]
                qx = rt[0, 0] * kx + rt[0, 1] * ky + rt[0, 2] * kz
                qy = rt[1, 0] * kx + rt[1, 1] * ky + rt[1, 2] * kz
                qz = rt[2, 0] * kx + rt[2, 1] * ky + rt[2, 2] * kz
                x0 = int(qx + m) - m
                y0 = int(qy + m) - m
                z0 = int(qz + m) - m
                fx = qx - x0
                fy = qy - y0
                fz = qz - z0
                for dz in range(2):
                    z = z0 + dz
                    if z < lo or z > hi:
                        continue
                    wz = fz if dz == 1 else 1.0 - fz
                    zi = _wrap(z, m)
                    for dy in range(2):
                        y = y0 + dy
                        if y < lo or y > hi:
                            continue
                        wy = fy if dy == 1 else 1.0 - fy
                        yi = _wrap(y, m)
                        for dx in range(2):
                            x = x0 + dx
                            if x < lo or x > hi:
                                continue
                            wx = fx if dx == 1 else 1.0 - fx
                            xi = _wrap(x, m)
                            out[zi, yi, xi] += wz * wy * wx * val
    return out


@njit(cache=True, nogil=True)
def shifted_residual_norm(y_hat, b_hat, ex, ey, ez):
    """``sum |y_hat - rho * b_hat|^2`` with separable phase ``rho = ez*ey*ex``."""
    n0, n1, n2 = y_hat.shape
    total = 0.0
    for iz in range(n0):
        for iy in range(n1):
            pzy = ez[iz] * ey[iy]
            for ix in range(n2):
                r = y_hat[iz, iy, ix] - pzy * ex[ix] * b_hat[iz, iy, ix]
                total += r.real * r.real + r.imag * r.imag
    return total


@njit(cache=True, nogil=True)
def normalized_cross_power(y_hat, b_hat, out):
    """``out = y * conj(b) / max(|y * conj(b)|, eps)``, eps relative to the peak magnitude."""
    n0, n1, n2 = y_hat.shape
    peak = 0.0
    for iz in range(n0):
        for iy in range(n1):
            for ix in range(n2):
                c = y_hat[iz, iy, ix] * np.conj(b_hat[iz, iy, ix])
                out[iz, iy, ix] = c
                m = abs(c)
                if m > peak:
                    peak = m
    if peak == 0.0:
        return peak
    eps = 1e-12 * peak
    for iz in range(n0):
        for iy in range(n1):
            for ix in range(n2):
                c = out[iz, iy, ix]
                m = abs(c)
                out[iz, iy, ix] = c / (m if m > eps else eps)
    return peak
