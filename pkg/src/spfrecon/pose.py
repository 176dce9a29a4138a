"""Orientation search on importance-sampled subsets of the SO(3) grid.

Each view keeps two sampling distributions, one over the grid axes and one
over the in-axis angles. Candidates are drawn from them, searched
exhaustively (translations solved by a pluggable correlation solver), and the resulting
likelihoods are turned back into smoothed distributions mixed with a
uniform floor whose weight ``alpha`` is annealed between epochs.
"""

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import grid
from .exceptions import DegenerateInputError
from .shift import phase_correlate, shifted_energy
from .so3 import Pose, So3Grid
from .validation import check_random_state, check_spectrum

MAX_REDRAW_ROUNDS = 64


@dataclass
class SamplerState:
    """Per-view sampling distributions over the axis and angle grids.

    ``Q_d[l]`` and ``Q_psi[l]`` are the distributions for view ``l``.
    """

    grid: So3Grid
    Q_d: np.ndarray
    Q_psi: np.ndarray
    alpha: float = 1.0
    alpha_r: float = 1.2
    beta_d: float = 50.0
    beta_psi: float = 50.0
    N_d: int = 64
    N_psi: int = 8
    degenerate_updates: int = 0

    def __post_init__(self):
        if not self.alpha_r > 1:
            raise ValueError(f"alpha_r must be > 1, got {self.alpha_r!r}")
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha!r}")
        if self.beta_d < 0 or self.beta_psi < 0:
            raise ValueError("kernel concentrations must be >= 0")
        if not 1 <= self.N_d <= self.grid.M_d:
            raise ValueError(f"N_d must be in [1, M_d={self.grid.M_d}], got {self.N_d}")
        if not 1 <= self.N_psi <= self.grid.M_psi:
            raise ValueError(f"N_psi must be in [1, M_psi={self.grid.M_psi}], got {self.N_psi}")
        self.Q_d = np.array(self.Q_d, dtype=float, ndmin=2)
        self.Q_psi = np.array(self.Q_psi, dtype=float, ndmin=2)
        if self.Q_d.shape[1] != self.grid.M_d or self.Q_psi.shape[1] != self.grid.M_psi:
            raise ValueError("distribution sizes do not match the grid")
        if self.Q_d.shape[0] != self.Q_psi.shape[0]:
            raise ValueError("Q_d and Q_psi disagree on the number of views")

    @classmethod
    def uniform(cls, n_views, so3_grid, **params):
        q_d = np.full((n_views, so3_grid.M_d), 1.0 / so3_grid.M_d)
        q_psi = np.full((n_views, so3_grid.M_psi), 1.0 / so3_grid.M_psi)
        return cls(so3_grid, q_d, q_psi, **params)

    @property
    def n_views(self):
        return self.Q_d.shape[0]


@dataclass
class OrientationSearchResult:
    """Energies of every evaluated ``(i, j)`` pair and the winning pose.

    Arrays are indexed ``[a, b]`` with ``psi_indices[a]`` and ``axis_indices[b]``.
    """

    psi_indices: np.ndarray
    axis_indices: np.ndarray
    energies: np.ndarray
    translations: np.ndarray
    best: tuple
    best_pose: Pose
    best_energy: float
    likelihoods: np.ndarray = field(init=False)

    def __post_init__(self):
        self.likelihoods = np.exp(-(self.energies - self.energies.min()))

    def energy_map(self):
        return {
            (int(i), int(j)): float(self.energies[a, b])
            for a, i in enumerate(self.psi_indices)
            for b, j in enumerate(self.axis_indices)
        }


def _draw_unique(q, count, rng):
    support = int(np.count_nonzero(q))
    target = min(count, support)
    chosen = []
    seen = set()
    for _ in range(MAX_REDRAW_ROUNDS):
        need = target - len(chosen)
        if need == 0:
            break
        for idx in rng.choice(q.size, size=need, p=q):
            idx = int(idx)
            if idx not in seen:
                seen.add(idx)
                chosen.append(idx)
    else:
        # extremely peaked q: complete with the most probable unseen indices
        for idx in np.argsort(-q, kind="stable"):
            if len(chosen) == target:
                break
            if int(idx) not in seen:
                seen.add(int(idx))
                chosen.append(int(idx))
    return np.sort(np.asarray(chosen, dtype=np.int64))


def draw_candidate_sets(state, view, rng):
    """Draw ``(I_psi, I_d)`` for one view, without duplicates, sorted ascending."""
    rng = check_random_state(rng)
    q_psi = state.Q_psi[view] / state.Q_psi[view].sum()
    q_d = state.Q_d[view] / state.Q_d[view].sum()
    return _draw_unique(q_psi, state.N_psi, rng), _draw_unique(q_d, state.N_d, rng)


def search_orientation(
    f_hat, psf_hat, y_hat, I_psi, I_d, so3_grid, shift_solver=phase_correlate, n_threads=1, oversample=1
):
    """Evaluate every candidate orientation and return the best one.

    For each ``(i, j)`` the rotated, blurred volume is matched to the view by
    ``shift_solver`` and scored with the spatial squared residual. Ties go to
    the lexicographically smallest ``(j, i)``. ``oversample`` is passed to
    :class:`~spfrecon.grid.SpectralRotator`.
    """
    y_hat = check_spectrum(y_hat, cubic=True)
    I_psi = np.asarray(I_psi, dtype=np.int64)
    I_d = np.asarray(I_d, dtype=np.int64)
    if I_psi.size == 0 or I_d.size == 0:
        raise ValueError("candidate sets must be nonempty")
    rotator = grid.SpectralRotator(f_hat, psf_hat, oversample=oversample)
    energies = np.empty((I_psi.size, I_d.size))
    shifts = np.empty((I_psi.size, I_d.size, 3))

    def evaluate(b):
        j = int(I_d[b])
        out = np.empty(y_hat.shape, dtype=np.complex128)
        for a, i in enumerate(I_psi):
            b_hat = rotator(so3_grid.matrix(int(i), j), out)
            try:
                t = shift_solver(y_hat, b_hat).t
            except DegenerateInputError:
                # an all-zero model or view scores the same at every shift
                t = (0, 0, 0)
            shifts[a, b] = t
            energies[a, b] = shifted_energy(y_hat, b_hat, t)

    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            list(pool.map(evaluate, range(I_d.size)))
    else:
        for b in range(I_d.size):
            evaluate(b)

    # lexicographic (j, i) order over the pairs, then first minimum
    order_b = np.argsort(I_d, kind="stable")
    order_a = np.argsort(I_psi, kind="stable")
    ordered = energies[np.ix_(order_a, order_b)].T
    flat = int(np.argmin(ordered))
    bb, aa = np.unravel_index(flat, ordered.shape)
    a, b = order_a[aa], order_b[bb]
    i_best, j_best = int(I_psi[a]), int(I_d[b])
    pose = Pose(so3_grid.orientation(i_best, j_best), tuple(shifts[a, b]))
    return OrientationSearchResult(
        psi_indices=I_psi,
        axis_indices=I_d,
        energies=energies,
        translations=shifts,
        best=(i_best, j_best),
        best_pose=pose,
        best_energy=float(energies[a, b]),
    )


def importance_marginals(likelihoods, q_psi_sampled, q_d_sampled):
    """Importance-sampling estimates of the two marginal likelihoods.

    ``likelihoods[a, b]`` belongs to the ``a``-th sampled angle and ``b``-th
    sampled axis; ``q_*_sampled`` are the proposal probabilities of those
    samples. Each estimate is averaged over the samples, so that under a
    uniform proposal it is an unbiased estimate of ``sum_j p[i, j]``.
    """
    n_psi, n_d = likelihoods.shape
    pi_psi = (likelihoods / q_d_sampled[None, :]).sum(axis=1) / n_d
    pi_d = (likelihoods / q_psi_sampled[:, None]).sum(axis=0) / n_psi
    return pi_psi, pi_d


def _smooth(log_kernel, weights):
    """Normalized ``sum_k K[:, k] w_k`` computed in log space; None if all weights vanish."""
    if not np.any(weights > 0):
        return None
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    log_s = logsumexp(log_kernel + log_w[None, :], axis=1)
    out = np.exp(log_s - logsumexp(log_s))
    return out / out.sum()


def update_distributions(state, view, result):
    """Refresh ``Q_psi[view]`` and ``Q_d[view]`` from a search result (in place)."""
    I_psi, I_d = result.psi_indices, result.axis_indices
    pi_psi, pi_d = importance_marginals(
        result.likelihoods, state.Q_psi[view][I_psi], state.Q_d[view][I_d]
    )
    g = state.grid
    s_psi = _smooth(g.log_kernel_psi(state.beta_psi, I_psi), pi_psi)
    s_d = _smooth(g.log_kernel_d(state.beta_d, I_d), pi_d)
    if s_psi is None or s_d is None:
        state.degenerate_updates += 1
    if s_psi is None:
        s_psi = np.full(g.M_psi, 1.0 / g.M_psi)
    if s_d is None:
        s_d = np.full(g.M_d, 1.0 / g.M_d)
    a = state.alpha
    q_psi = a / g.M_psi + (1.0 - a) * s_psi
    q_d = a / g.M_d + (1.0 - a) * s_d
    state.Q_psi[view] = q_psi / q_psi.sum()
    state.Q_d[view] = q_d / q_d.sum()
    return state


def anneal(state):
    if not state.alpha_r > 1:
        raise ValueError(f"alpha_r must be > 1, got {state.alpha_r!r}")
    state.alpha = state.alpha / state.alpha_r
    return state


def write_sampler_csv(path, state, epoch, append=True):
    """Append one row per (view, distribution, grid index) for ``epoch``."""
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if fh.tell() == 0:
            writer.writerow(["epoch", "view", "alpha", "kind", "index", "probability"])
        for view in range(state.n_views):
            for kind, q in (("d", state.Q_d[view]), ("psi", state.Q_psi[view])):
                for idx, value in enumerate(q):
                    writer.writerow([epoch, view, repr(state.alpha), kind, idx, repr(float(value))])
