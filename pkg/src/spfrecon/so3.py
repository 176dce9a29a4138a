"""Axis-angle orientations, the Fibonacci discretization of SO(3) and its smoothing kernels."""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

TWO_PI = 2.0 * np.pi
GOLDEN_RATIO = (1.0 + np.sqrt(5.0)) / 2.0


def axis_from_angles(phi1, phi2):
    """Unit vector with azimuth ``phi1`` and inclination ``phi2`` (broadcasts)."""
    phi1 = np.asarray(phi1, dtype=float)
    phi2 = np.asarray(phi2, dtype=float)
    return np.stack(
        [np.cos(phi1) * np.sin(phi2), np.sin(phi1) * np.sin(phi2), np.cos(phi2)], axis=-1
    )


def angles_from_axis(d):
    """Inverse of :func:`axis_from_angles` for a single unit vector."""
    d = np.asarray(d, dtype=float)
    d = d / np.linalg.norm(d)
    phi2 = float(np.arccos(np.clip(d[2], -1.0, 1.0)))
    phi1 = float(np.arctan2(d[1], d[0]) % TWO_PI)
    return phi1, phi2


def rodrigues(axis, psi):
    """Rotation matrix of angle ``psi`` about unit vector ``axis``."""
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(psi) * k + (1.0 - np.cos(psi)) * (k @ k)


@dataclass(frozen=True)
class Orientation:
    """Rotation by ``psi`` about the axis with azimuth ``phi1`` and inclination ``phi2``.

    Angles are canonicalized on construction: ``phi1`` and ``psi`` to
    ``[0, 2*pi)``, ``phi2`` to ``[0, pi)``. The south pole (``phi2 == pi``) is
    rewritten as the equivalent rotation about ``+z`` by ``-psi``.
    """

    phi1: float = 0.0
    phi2: float = 0.0
    psi: float = 0.0

    def __post_init__(self):
        phi1, phi2, psi = float(self.phi1), float(self.phi2), float(self.psi)
        if not np.isfinite([phi1, phi2, psi]).all():
            raise ValueError("orientation angles must be finite")
        phi2 = phi2 % TWO_PI
        if phi2 > np.pi:
            phi2 = TWO_PI - phi2
            phi1 += np.pi
        if phi2 >= np.pi:
            phi2, phi1, psi = 0.0, 0.0, -psi
        if phi2 == 0.0:
            phi1 = 0.0
        object.__setattr__(self, "phi1", phi1 % TWO_PI)
        object.__setattr__(self, "phi2", phi2)
        object.__setattr__(self, "psi", psi % TWO_PI)

    @property
    def axis(self):
        return axis_from_angles(self.phi1, self.phi2)

    @classmethod
    def from_axis_angle(cls, axis, psi):
        phi1, phi2 = angles_from_axis(axis)
        return cls(phi1, phi2, psi)

    @classmethod
    def from_matrix(cls, mat):
        rotvec = Rotation.from_matrix(np.asarray(mat, dtype=float)).as_rotvec()
        angle = float(np.linalg.norm(rotvec))
        if angle < 1e-15:
            return cls()
        return cls.from_axis_angle(rotvec / angle, angle)

    def matrix(self):
        return matrix(self)

    def inverse(self):
        return Orientation(self.phi1, self.phi2, -self.psi)


def matrix(o):
    """3x3 rotation matrix of ``o`` (Rodrigues formula)."""
    if o.psi == 0.0:
        return np.eye(3)
    return rodrigues(o.axis, o.psi)


def geodesic_distance(r1, r2):
    """Rotation angle of ``r1^T r2`` in radians."""
    rel = np.asarray(r1, dtype=float).T @ np.asarray(r2, dtype=float)
    return float(Rotation.from_matrix(rel).magnitude())


@dataclass(frozen=True)
class Pose:
    """Orientation plus translation ``t = (tx, ty, tz)`` in voxels."""

    orientation: Orientation = field(default_factory=Orientation)
    t: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        t = tuple(float(v) for v in np.asarray(self.t, dtype=float).reshape(3))
        object.__setattr__(self, "t", t)

    def matrix(self):
        return self.orientation.matrix()

    def inverse(self):
        """Pose undoing ``x -> R x + t``, i.e. ``x -> R^T (x - t)``."""
        r = self.matrix()
        return Pose(self.orientation.inverse(), tuple(-(r.T @ np.asarray(self.t))))

    @classmethod
    def identity(cls):
        return cls()


def fibonacci_angles(n_axes):
    """Azimuths and inclinations of the Fibonacci sphere lattice."""
    if int(n_axes) != n_axes or n_axes < 1:
        raise ValueError(f"n_axes must be a positive integer, got {n_axes!r}")
    j = np.arange(int(n_axes), dtype=float)
    phi1 = np.mod(TWO_PI * j / GOLDEN_RATIO, TWO_PI)
    phi2 = np.arccos(1.0 - (2.0 * j + 1.0) / n_axes)
    return phi1, phi2


def fibonacci_axes(n_axes):
    """``(n_axes, 3)`` array of almost uniformly spread unit vectors."""
    phi1, phi2 = fibonacci_angles(n_axes)
    return axis_from_angles(phi1, phi2)


class So3Grid:
    """Product grid of ``M_d`` Fibonacci axes and ``M_psi`` uniform in-axis angles.

    Orientation ``(i, j)`` rotates by ``psis[i]`` about ``axes[j]``.
    """

    def __init__(self, M_d, M_psi):
        if int(M_psi) != M_psi or M_psi < 1:
            raise ValueError(f"M_psi must be a positive integer, got {M_psi!r}")
        self.M_d = int(M_d)
        self.M_psi = int(M_psi)
        self.phi1, self.phi2 = fibonacci_angles(self.M_d)
        self.axes = axis_from_angles(self.phi1, self.phi2)
        self.psis = TWO_PI * np.arange(self.M_psi) / self.M_psi

    def __len__(self):
        return self.M_d * self.M_psi

    def __repr__(self):
        return f"So3Grid(M_d={self.M_d}, M_psi={self.M_psi})"

    def orientation(self, i, j):
        return Orientation(self.phi1[j], self.phi2[j], self.psis[i])

    def matrix(self, i, j):
        if i == 0:
            return np.eye(3)
        return rodrigues(self.axes[j], self.psis[i])

    def axis_spacing(self):
        """Largest nearest-neighbour angle between axes (radians)."""
        if self.M_d < 2:
            return np.pi
        cos = np.clip(self.axes @ self.axes.T, -1.0, 1.0)
        np.fill_diagonal(cos, -1.0)
        return float(np.arccos(cos.max(axis=1)).max())

    def log_kernel_psi(self, beta_psi, cols=None):
        """``log K^psi`` restricted to columns ``cols`` (all when None)."""
        _check_beta(beta_psi)
        cols = np.arange(self.M_psi) if cols is None else np.asarray(cols)
        diff = self.psis[:, None] - self.psis[None, cols]
        return beta_psi * np.cos(diff)

    def log_kernel_d(self, beta_d, cols=None):
        _check_beta(beta_d)
        cols = np.arange(self.M_d) if cols is None else np.asarray(cols)
        return beta_d * (self.axes @ self.axes[cols].T)


def _check_beta(beta):
    if not beta >= 0:
        raise ValueError(f"kernel concentration must be >= 0, got {beta!r}")


def kernel_psi(i, k, M_psi, beta_psi):
    """``exp(beta_psi * cos(psi_i - psi_k))`` on the uniform angle grid."""
    _check_beta(beta_psi)
    return float(np.exp(beta_psi * np.cos(TWO_PI * (i - k) / M_psi)))


def kernel_d(axis_j, axis_k, beta_d):
    """``exp(beta_d * <d_j, d_k>)``."""
    _check_beta(beta_d)
    return float(np.exp(beta_d * np.dot(axis_j, axis_k)))


def random_orientation(rng):
    """Orientation with axis uniform on the sphere and angle uniform in [0, 2*pi)."""
    z = rng.uniform(-1.0, 1.0)
    phi1 = rng.uniform(0.0, TWO_PI)
    psi = rng.uniform(0.0, TWO_PI)
    return Orientation(phi1, float(np.arccos(z)), psi)
