"""Enhancement baselines, the short-time corrected prediction and saturation detection."""

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Sequence
import math

import numpy as np
from scipy.integrate import simpson
from scipy.integrate import cumulative_trapezoid

from .dynamics import (DEFAULT_POINTS_PER_PERIOD, TimeSeries, cross_probability,
                       infinite_time_joint)
from .ensembles import Hamiltonian
from .errors import CutoffError, InsufficientDataError, ValidationError
from .spectral import EigenSystem, heisenberg_time, mean_spacing

DEFAULT_WINDOW_FRACTION = 0.5
DEFAULT_EPSILON = 0.05
MIN_WINDOW_SAMPLES = 10


class SymmetryClass(str, Enum):
    ORTHOGONAL = "orthogonal"  # time-reversal symmetric (GOE)
    UNITARY = "unitary"  # no time-reversal symmetry (GUE)


_FACTORS = {SymmetryClass.ORTHOGONAL: 3.0, SymmetryClass.UNITARY: 2.0}


def rmt_factor(sc) -> float:
    """Infinite-time return enhancement ``P^aa / P^ab`` of the ensemble."""
    return _FACTORS[SymmetryClass(sc)]


def basis_pair_joints(es: EigenSystem, pairs) -> tuple:
    """``(P^aa, P^ab)`` arrays for basis-state pairs ``(a, b)``.

    Uses the nondegenerate diagonal-ensemble formula on the squared
    eigenvector components; falls back to the projector sum otherwise.
    """
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    if es.degenerate:
        from .dynamics import basis_state
        paa = np.array([infinite_time_joint(es, basis_state(es.n, i), basis_state(es.n, i))
                        for i, _ in pairs])
        pab = np.array([infinite_time_joint(es, basis_state(es.n, i), basis_state(es.n, j))
                        for i, j in pairs])
        return paa, pab
    w = np.abs(es.vectors) ** 2
    wa = w[pairs[:, 0]]
    wb = w[pairs[:, 1]]
    paa = es.n * np.einsum("kn,kn->k", wa, wa)
    pab = es.n * np.einsum("kn,kn->k", wa, wb)
    return paa, pab


# ---------------------------------------------------------- Thouless time

class ThoulessEstimate(NamedTuple):
    time: float
    source: str


def _semicircle_radius(block):
    n = block.shape[0]
    return 2.0 * np.linalg.norm(block) / math.sqrt(n)


def thouless_time(h: Hamiltonian) -> ThoulessEstimate:
    """Lower edge of the admissible cutoff window.

    Plain matrices: one period of the full bandwidth. Block models: the
    inverse golden-rule leak rate from alpha into beta, provided the leak
    completes before the Heisenberg time; otherwise the leak is not short-time
    dynamics at all and the alpha block's own relaxation time is used.
    """
    if h.blocks is None:
        return ThoulessEstimate(2.0 * math.pi / (2.0 * _semicircle_radius(h.entries)), "bandwidth")
    na, nb = h.blocks.n_alpha, h.blocks.n_beta
    r_a = _semicircle_radius(h.entries[:na, :na])
    r_b = _semicircle_radius(h.entries[na:, na:])
    rho_a0 = 2.0 * na / (math.pi * r_a)
    rho_b0 = 2.0 * nb / (math.pi * r_b)
    relax = 2.0 * math.pi / (2.0 * r_a)
    v2 = float(np.linalg.norm(h.coupling()) ** 2) / (na * nb)
    t_heis = 2.0 * math.pi * (rho_a0 + rho_b0)
    if v2 > 0.0:
        leak = 1.0 / (2.0 * math.pi * v2 * rho_b0)
        if leak < t_heis:
            return ThoulessEstimate(max(leak, relax), "golden-rule")
    return ThoulessEstimate(relax, "alpha-relaxation")


# ------------------------------------------------------- QB prediction

@dataclass(frozen=True)
class QbPrediction:
    p_rmt: float
    correction: float
    predicted: float
    tau: float
    t_thouless: float
    t_heisenberg: float
    integral_system: float
    integral_reference: float

    def to_dict(self):
        return dict(self.__dict__)


def _rescaled(es: EigenSystem, factor: float) -> EigenSystem:
    return EigenSystem(es.energies * factor, es.vectors, es.degenerate, es.blocks)


def _short_time_integral(es, a, b, tau, symmetric, points_per_period):
    width = float(es.energies[-1] - es.energies[0])
    period = 2.0 * math.pi / width if width > 0 else tau
    span = tau if symmetric else 2.0 * tau
    m = max(64, int(math.ceil(points_per_period * span / period)))
    m += m % 2
    if symmetric:
        t = np.linspace(0.0, tau, m + 1)
        return 2.0 * simpson(cross_probability(es, a, b, t).values, x=t)
    t = np.linspace(-tau, tau, m + 1)
    return simpson(cross_probability(es, a, b, t).values, x=t)


def qb_prediction(es: EigenSystem, a, b, tau: float, reference: Sequence[EigenSystem],
                  t_thouless: Optional[float] = None,
                  points_per_period: int = DEFAULT_POINTS_PER_PERIOD) -> QbPrediction:
    """Baseline joint probability times the ratio of short-time integrals.

    ``reference`` is an ensemble of plain random-matrix eigensystems of the same
    dimension; each is rescaled to the bulk mean level spacing of ``es``
    before its short-time integral is taken. ``t_thouless`` defaults to one
    bandwidth period of ``es``.
    """
    if len(reference) == 0:
        raise ValidationError("reference ensemble is empty")
    t_heis = heisenberg_time(es)
    if t_thouless is None:
        t_thouless = 2.0 * math.pi / float(es.energies[-1] - es.energies[0])
    if not t_thouless < tau < t_heis:
        raise CutoffError(
            f"tau={tau:.6g} outside the admissible window ({t_thouless:.6g}, {t_heis:.6g})")
    # |<b|a(t)>|^2 is even in t for real symmetric Hamiltonians.
    symmetric = not (es.is_complex or any(r.is_complex for r in reference))
    spacing = mean_spacing(es)
    num = _short_time_integral(es, a, b, tau, symmetric, points_per_period)
    dens, joints = [], []
    for ref in reference:
        scaled = _rescaled(ref, spacing / mean_spacing(ref))
        dens.append(_short_time_integral(scaled, a, b, tau, symmetric, points_per_period))
        joints.append(infinite_time_joint(ref, a, b))
    den = float(np.mean(dens))
    if not den > 1e-12 * tau:
        raise CutoffError(f"reference short-time integral vanishes at tau={tau:.6g} (0/0)")
    p_rmt = float(np.mean(joints))
    corr = num / den
    return QbPrediction(p_rmt, corr, p_rmt * corr, float(tau), float(t_thouless),
                        float(t_heis), float(num), den)


# ------------------------------------------------------- saturation

def running_average(ts: TimeSeries) -> TimeSeries:
    """Cumulative time average ``(1/(t-t0)) int_{t0}^t v`` by the trapezoid rule."""
    t, v = ts.times, ts.values
    if t.size < 2:
        return TimeSeries(t, v.copy(), ts.name + "_avg")
    integral = cumulative_trapezoid(v, t, initial=0.0)
    out = np.empty_like(v)
    out[0] = v[0]
    out[1:] = integral[1:] / (t[1:] - t[0])
    return TimeSeries(t, out, ts.name + "_avg")


def _sparse_tables(v):
    mins, maxs = [v], [v]
    span = 1
    while 2 * span <= v.size:
        lo, hi = mins[-1], maxs[-1]
        mins.append(np.minimum(lo[:-span], lo[span:]))
        maxs.append(np.maximum(hi[:-span], hi[span:]))
        span *= 2
    return mins, maxs


def _range_minmax(mins, maxs, lo, hi):
    """Min and max of ``v[lo:hi]`` for index arrays (hi > lo)."""
    length = hi - lo
    level = np.floor(np.log2(length)).astype(int)
    rmin = np.empty(lo.size)
    rmax = np.empty(lo.size)
    for lvl in np.unique(level):
        sel = level == lvl
        s = 1 << lvl
        a, b = lo[sel], hi[sel] - s
        rmin[sel] = np.minimum(mins[lvl][a], mins[lvl][b])
        rmax[sel] = np.maximum(maxs[lvl][a], maxs[lvl][b])
    return rmin, rmax


def detect_saturation(ts: TimeSeries, window_fraction: float = DEFAULT_WINDOW_FRACTION,
                      epsilon: float = DEFAULT_EPSILON,
                      min_samples: int = MIN_WINDOW_SAMPLES) -> Optional[float]:
    """Earliest time from which the series stays flat, or ``None``.

    A window starting at sample ``t_k`` covers ``[t_k, t_k (1 + window_fraction)]``.
    It is flat when ``(max - min) / mean < epsilon``. Only windows that end
    inside the series and hold at least ``min_samples`` samples are judged;
    ``t*`` is the first judged start from which every later judged window is
    flat. Times must be positive.
    """
    if window_fraction <= 0 or epsilon <= 0:
        raise ValidationError("window_fraction and epsilon must be positive")
    t, v = ts.times, ts.values
    if t.size == 0 or t[0] <= 0:
        raise ValidationError("saturation detection needs strictly positive times")
    ends = np.searchsorted(t, t * (1.0 + window_fraction), side="right")
    complete = t * (1.0 + window_fraction) <= t[-1]
    judged = complete & (ends - np.arange(t.size) >= min_samples)
    idx = np.flatnonzero(judged)
    if idx.size == 0:
        raise InsufficientDataError(
            f"no window of relative width {window_fraction} holds {min_samples} samples")
    mins, maxs = _sparse_tables(v)
    lo_v, hi_v = _range_minmax(mins, maxs, idx, ends[idx])
    csum = np.concatenate(([0.0], np.cumsum(v)))
    mean = (csum[ends[idx]] - csum[idx]) / (ends[idx] - idx)
    with np.errstate(divide="ignore", invalid="ignore"):
        spread = (hi_v - lo_v) / np.abs(mean)
    flat = spread < epsilon
    if not flat[-1]:
        return None
    # last failing judged window; saturation starts right after it
    failing = np.flatnonzero(~flat)
    first = 0 if failing.size == 0 else failing[-1] + 1
    return float(t[idx[first]])
