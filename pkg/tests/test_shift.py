import itertools

import numpy as np
import pytest

from spfrecon import grid
from spfrecon.exceptions import DegenerateInputError
from spfrecon.shift import phase_correlate, shifted_energy

from .conftest import smooth_volume


def brute_force_shift(y_hat, b_hat):
    """Integer ``t`` minimizing ``||y - T_t b||^2``, searched over every shift of the grid."""
    n = y_hat.shape[0]
    rng_t = range(-(n // 2) + 1, n // 2 + 1)
    best, best_e = None, np.inf
    for t in itertools.product(rng_t, repeat=3):
        e = shifted_energy(y_hat, b_hat, t)
        if e < best_e:
            best, best_e = t, e
    return best


def test_no_shift(rng):
    b = grid.fft(rng.normal(size=(8, 8, 8)))
    peak = phase_correlate(b, b)
    assert peak.t == (0, 0, 0)
    assert peak.score == pytest.approx(1.0)


def test_known_shift(rng):
    b = rng.normal(size=(16, 16, 16))
    y = grid.circular_shift(b, (3, -2, 1))
    assert phase_correlate(grid.fft(y), grid.fft(b)).t == (3, -2, 1)


@pytest.mark.parametrize("n", [8, 9])
def test_matches_brute_force(rng, n):
    for _ in range(5):
        b = smooth_volume(n, rng, sigma=1.0)
        t = tuple(int(c) for c in rng.integers(-(n // 2) + 1, n // 2 + 1, size=3))
        y = grid.circular_shift(b, t)
        y_hat, b_hat = grid.fft(y), grid.fft(b)
        found = phase_correlate(y_hat, b_hat).t
        assert found == brute_force_shift(y_hat, b_hat) == t


def test_range_convention():
    n = 8
    b = np.zeros((n, n, n))
    b[0, 0, 0] = 1
    for s in range(n):
        y = grid.circular_shift(b, (s, 0, 0))
        t = phase_correlate(grid.fft(y), grid.fft(b)).t[0]
        assert -n / 2 < t <= n / 2
        assert t % n == s


def test_antisymmetry_and_composition(rng):
    b = smooth_volume(12, rng)
    y = grid.circular_shift(b, (2, 5, -3))
    y_hat, b_hat = grid.fft(y), grid.fft(b)
    t = phase_correlate(y_hat, b_hat).t
    assert phase_correlate(b_hat, y_hat).t == tuple(-c for c in t)
    t1, t2 = (1, -2, 4), (-3, 1, 1)
    got = phase_correlate(grid.fft(grid.circular_shift(b, t1)), grid.fft(grid.circular_shift(b, t2))).t
    assert tuple(c % 12 for c in got) == tuple((a - c) % 12 for a, c in zip(t1, t2))


def test_robust_to_noise():
    n = 32
    base = np.random.default_rng(0)
    b = smooth_volume(n, base, sigma=1.5)
    b = b / b.std()
    hits = 0
    for seed in range(100):
        noise = np.random.default_rng(seed).normal(size=b.shape)
        y = grid.circular_shift(b, (5, 0, 0)) + noise
        hits += phase_correlate(grid.fft(y), grid.fft(b)).t == (5, 0, 0)
    assert hits >= 95


def test_degenerate_inputs(rng):
    b = grid.fft(rng.normal(size=(4, 4, 4)))
    zero = np.zeros((4, 4, 4), dtype=complex)
    with pytest.raises(DegenerateInputError):
        phase_correlate(b, zero)
    with pytest.raises(DegenerateInputError):
        phase_correlate(zero, b)
