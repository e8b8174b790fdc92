"""Eigenbasis time evolution and the infinite-time / time-averaged observables.

States are plain complex numpy vectors over the site basis ``|b_i>``.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.integrate import simpson

from . import kernels
from .errors import ValidationError
from .spectral import EigenSystem

NORM_TOL = 1e-10
DEFAULT_POINTS_PER_PERIOD = 32
_MIN_INTERVALS = 64
_ROW_CHUNK = 1 << 21


def basis_state(n: int, i: int) -> np.ndarray:
    """``|b_i>`` as a complex vector (0-based index)."""
    if not 0 <= i < n:
        raise ValidationError(f"basis index {i} out of range for dimension {n}")
    v = np.zeros(n, dtype=np.complex128)
    v[i] = 1.0
    return v


def check_state(state, n: int) -> np.ndarray:
    state = np.asarray(state, dtype=np.complex128)
    if state.shape != (n,):
        raise ValidationError(f"state has shape {state.shape}, expected ({n},)")
    norm = float(np.vdot(state, state).real)
    if abs(norm - 1.0) > NORM_TOL:
        raise ValidationError(f"state is not normalized (|a|^2 = {norm:.15g})")
    return state


@dataclass(frozen=True, eq=False)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    name: str = "value"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValidationError(f"times {t.shape} and values {v.shape} must be equal-length 1-D")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValidationError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.times.size


@dataclass(frozen=True, eq=False)
class InfiniteTimeProfile:
    site_probs: np.ndarray
    block_alpha: float
    block_beta: float
    ratio: float
    excluded: tuple = field(default=())


def _overlaps(es, state):
    return es.vectors.conj().T @ check_state(state, es.n)


def evolve(es: EigenSystem, a0, t: float) -> np.ndarray:
    """``sum_n exp(-i E_n t) <phi_n|a0> |phi_n>``."""
    a0 = check_state(a0, es.n)
    if t == 0:
        return a0.copy()
    c = es.vectors.conj().T @ a0
    return es.vectors @ (np.exp(-1j * es.energies * t) * c)


def survival_probability(es: EigenSystem, a0, times) -> TimeSeries:
    c = _overlaps(es, a0)
    w = (c.real ** 2 + c.imag ** 2).astype(np.complex128)
    times = np.asarray(times, dtype=float)
    amp = kernels.phase_sum(times, es.energies, w)
    p = np.clip(amp.real ** 2 + amp.imag ** 2, 0.0, 1.0)
    return TimeSeries(times, p, "survival")


def cross_probability(es: EigenSystem, a0, b, times) -> TimeSeries:
    """``|<b|a(t)>|^2`` on ``times``."""
    ca = _overlaps(es, a0)
    cb = _overlaps(es, b)
    w = np.ascontiguousarray(cb.conj() * ca)
    times = np.asarray(times, dtype=float)
    amp = kernels.phase_sum(times, es.energies, w)
    p = np.clip(amp.real ** 2 + amp.imag ** 2, 0.0, 1.0)
    return TimeSeries(times, p, "cross")


def _diagonal_ensemble_pairs(es, ca, cb):
    """``sum_g |<b|P_g|a>|^2`` over degenerate groups (plain sum if nondegenerate)."""
    if not es.degenerate:
        return float(np.sum(np.abs(ca) ** 2 * np.abs(cb) ** 2))
    total = 0.0
    for lo, hi in es.degenerate_groups():
        total += abs(np.vdot(cb[lo:hi], ca[lo:hi])) ** 2
    return float(total)


def infinite_time_joint(es: EigenSystem, a, b) -> float:
    """``N * sum_n |<a|phi_n>|^2 |<phi_n|b>|^2`` (the diagonal-ensemble joint probability)."""
    return es.n * _diagonal_ensemble_pairs(es, _overlaps(es, a), _overlaps(es, b))


def site_probabilities(es: EigenSystem, a0) -> np.ndarray:
    """Infinite-time average of ``|<b_i|a(t)>|^2`` for every site i."""
    c = _overlaps(es, a0)
    if not es.degenerate:
        return (np.abs(es.vectors) ** 2) @ (np.abs(c) ** 2)
    probs = np.zeros(es.n)
    for lo, hi in es.degenerate_groups():
        probs += np.abs(es.vectors[:, lo:hi] @ c[lo:hi]) ** 2
    return probs


def infinite_time_profile(es: EigenSystem, a0, n_alpha: int, exclude=()) -> InfiniteTimeProfile:
    """Per-site and block-averaged infinite-time probabilities.

    ``exclude`` lists site indices left out of the block averages (used for the
    ergodic control, where the initial site's own enhancement is not wanted).
    """
    n = es.n
    if not 1 <= n_alpha < n:
        raise ValidationError(f"n_alpha must lie in [1, {n - 1}], got {n_alpha}")
    probs = site_probabilities(es, a0)
    keep = np.ones(n, dtype=bool)
    keep[list(exclude)] = False
    alpha = probs[:n_alpha][keep[:n_alpha]]
    beta = probs[n_alpha:][keep[n_alpha:]]
    if alpha.size == 0 or beta.size == 0:
        raise ValidationError("exclusions leave an empty block")
    p_alpha = float(alpha.mean())
    p_beta = float(beta.mean())
    ratio = p_alpha / p_beta if p_beta > 0.0 else math.inf
    return InfiniteTimeProfile(probs, p_alpha, p_beta, ratio, tuple(int(i) for i in exclude))


def ipr(state) -> float:
    """``sum_i |<state|b_i>|^4``."""
    p = np.abs(np.asarray(state)) ** 2
    return float(np.dot(p, p))


def ipr_series(es: EigenSystem, a0, times) -> TimeSeries:
    """Instantaneous IPR of ``a(t)`` on ``times``."""
    c = _overlaps(es, a0)
    times = np.asarray(times, dtype=float)
    out = np.empty(times.size)
    step = max(1, _ROW_CHUNK // es.n)
    vt = es.vectors.T
    for lo in range(0, times.size, step):
        t = times[lo:lo + step]
        amps = (np.exp(-1j * np.outer(t, es.energies)) * c) @ vt
        p = amps.real ** 2 + amps.imag ** 2
        out[lo:lo + step] = np.einsum("ij,ij->i", p, p)
    return TimeSeries(times, out, "ipr")


def rho_av(es: EigenSystem, a0, t: float) -> np.ndarray:
    """Site probabilities averaged over ``[0, t]``, in closed form.

    With ``A_in = <b_i|phi_n><phi_n|a0>`` the average is
    ``sum_nm A_in K_nm conj(A_im)`` where ``K_nm = (1 - exp(-i dE t)) / (i dE t)``.
    """
    if not t > 0:
        raise ValidationError(f"averaging time must be positive, got {t}")
    c = _overlaps(es, a0)
    a = es.vectors * c
    k = kernels.averaging_kernel(es.energies, float(t))
    rho = np.einsum("in,in->i", a @ k, a.conj()).real
    return rho


def participation_number_direct(es: EigenSystem, a0, t: float) -> float:
    """``1 / sum_i rho_i^av(t)^2``."""
    rho = rho_av(es, a0, t)
    return 1.0 / float(np.dot(rho, rho))


def participation_number_purity(es: EigenSystem, a0, t: float) -> float:
    """``1 / Tr(rho_bar^2)`` for the time-averaged density matrix over ``[0, t]``.

    Computed in the eigenbasis, where ``rho_bar_nm = c_n conj(c_m) K_nm``.
    """
    if not t > 0:
        raise ValidationError(f"averaging time must be positive, got {t}")
    c = _overlaps(es, a0)
    w = np.abs(c) ** 2
    k = kernels.averaging_kernel(es.energies, float(t))
    return 1.0 / float(w @ (np.abs(k) ** 2) @ w)


def _quadrature_grid(es, t, points_per_period):
    width = float(es.energies[-1] - es.energies[0])
    intervals = _MIN_INTERVALS
    if width > 0:
        period = 2.0 * math.pi / width
        intervals = max(intervals, int(math.ceil(points_per_period * t / period)))
    intervals += intervals % 2
    return np.linspace(0.0, t, intervals + 1)


def participation_number_integral(es: EigenSystem, a0, t: float,
                                  points_per_period: int = DEFAULT_POINTS_PER_PERIOD) -> float:
    """``1 / [(2/t) int_0^t (1 - tau/t) P(tau) dtau]`` by composite Simpson.

    ``P`` is the survival probability; the grid resolves the fastest
    oscillation ``2*pi/(E_max - E_min)`` with ``points_per_period`` samples.
    """
    if not t > 0:
        raise ValidationError(f"averaging time must be positive, got {t}")
    if points_per_period < 20:
        raise ValidationError("points_per_period must be >= 20")
    tau = _quadrature_grid(es, t, points_per_period)
    p = survival_probability(es, a0, tau).values
    inv = 2.0 / t * simpson((1.0 - tau / t) * p, x=tau)
    return 1.0 / inv


def participation_series(es: EigenSystem, a0, times) -> TimeSeries:
    times = np.asarray(times, dtype=float)
    vals = np.array([participation_number_direct(es, a0, t) for t in times])
    return TimeSeries(times, vals, "participation")


def log_time_grid(t_min: float, t_max: float, count: int) -> np.ndarray:
    return np.geomspace(t_min, t_max, count)
