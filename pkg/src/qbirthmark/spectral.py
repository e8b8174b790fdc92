"""Eigendecomposition and spectral characterization of the block models."""

from dataclasses import dataclass
from typing import Optional
import math
import warnings

import numpy as np
from numpy.polynomial import Polynomial
from scipy import stats

from .ensembles import BlockStructure, Hamiltonian
from .errors import InsufficientDataError, SolverError, ValidationError

ORTHO_TOL = 1e-10
RECON_TOL = 1e-8
DEGENERACY_RTOL = 1e-12
UNFOLD_DEGREE = 7
DEFAULT_DISCARD = 0.05
MIN_LEVELS = 50


class DegeneracyWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Ascending energies and the matching orthonormal eigenvector columns."""

    energies: np.ndarray
    vectors: np.ndarray
    degenerate: bool = False
    blocks: Optional[BlockStructure] = None

    def __post_init__(self):
        self.energies.setflags(write=False)
        self.vectors.setflags(write=False)

    @property
    def n(self) -> int:
        return self.energies.size

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.vectors)

    def overlaps(self, state) -> np.ndarray:
        """``<phi_n|state>`` for every eigenstate."""
        state = np.asarray(state)
        if state.shape != (self.n,):
            raise ValidationError(f"state has shape {state.shape}, expected ({self.n},)")
        return self.vectors.conj().T @ state

    def degenerate_groups(self):
        """Index ranges of eigenvalue clusters closer than the degeneracy tolerance."""
        scale = max(1.0, float(np.max(np.abs(self.energies))))
        gaps = np.diff(self.energies) > DEGENERACY_RTOL * scale
        cuts = np.flatnonzero(gaps) + 1
        edges = np.concatenate(([0], cuts, [self.n]))
        return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


@dataclass(frozen=True)
class SpacingSeries:
    values: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))


def _solve_dense(h):
    try:
        return np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"eigensolver did not converge: {exc}") from exc


def eigensolve(h: Hamiltonian, check: bool = True) -> EigenSystem:
    """Full Hermitian eigendecomposition (LAPACK ``*heevd`` via numpy).

    When ``h`` carries block metadata and its coupling block is exactly zero,
    the two blocks are diagonalized separately so eigenvectors live in exactly
    one block.
    """
    entries = h.entries
    n = h.n
    decoupled = h.blocks is not None and not np.any(h.coupling())
    if decoupled:
        na = h.blocks.n_alpha
        ea, va = _solve_dense(entries[:na, :na])
        eb, vb = _solve_dense(entries[na:, na:])
        energies = np.concatenate((ea, eb))
        vectors = np.zeros((n, n), dtype=entries.dtype)
        vectors[:na, :na] = va
        vectors[na:, na:] = vb
        order = np.argsort(energies, kind="stable")
        energies = energies[order]
        vectors = vectors[:, order]
    else:
        energies, vectors = _solve_dense(entries)

    if check:
        ortho = np.max(np.abs(vectors.conj().T @ vectors - np.eye(n)))
        radius = max(1.0, float(np.max(np.abs(energies))))
        recon = np.max(np.abs((vectors * energies) @ vectors.conj().T - entries))
        if ortho > ORTHO_TOL or recon > RECON_TOL * radius:
            raise SolverError(
                f"eigendecomposition residuals too large (orthonormality {ortho:.3g}, "
                f"reconstruction {recon:.3g})", residual=max(ortho, recon / radius))

    es = EigenSystem(energies, vectors, blocks=h.blocks)
    degenerate = len(es.degenerate_groups()) < n
    if degenerate:
        warnings.warn("near-degenerate eigenvalues; diagonal-ensemble sums will use "
                      "degenerate-subspace projectors", DegeneracyWarning, stacklevel=2)
        es = EigenSystem(energies, vectors, True, h.blocks)
    return es


# ------------------------------------------------------------- semicircle

def semicircle_density(x, radius):
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < radius
    out = np.zeros_like(x)
    out[inside] = 2.0 / (np.pi * radius ** 2) * np.sqrt(radius ** 2 - x[inside] ** 2)
    return out


def semicircle_cdf(x, radius):
    u = np.clip(np.asarray(x, dtype=float) / radius, -1.0, 1.0)
    return 0.5 + (u * np.sqrt(1.0 - u * u) + np.arcsin(u)) / np.pi


def density_of_states(es, bins: int = 50, range_=None):
    """Normalized eigenvalue histogram: ``(centers, density)`` with unit integral."""
    if bins < 2:
        raise ValidationError(f"bins must be >= 2, got {bins}")
    energies = es.energies if isinstance(es, EigenSystem) else np.asarray(es, dtype=float)
    lo, hi = (float(energies.min()), float(energies.max())) if range_ is None else map(float, range_)
    width = (hi - lo) / bins
    if not width >= np.finfo(float).tiny or width <= 8 * np.finfo(float).eps * max(abs(lo), abs(hi)):
        raise ValidationError(f"energy range [{lo!r}, {hi!r}] is too narrow for {bins} bins")
    density, edges = np.histogram(energies, bins=bins, range=range_, density=True)
    return 0.5 * (edges[1:] + edges[:-1]), density


def semicircle_deviation(energies, radius, bins: int = 50) -> float:
    """Sup-norm distance between the histogram of ``energies / radius * 2`` and the
    radius-2 semicircle, using bin-averaged semicircle values as reference."""
    x = 2.0 * np.asarray(energies, dtype=float).ravel() / radius
    edges = np.linspace(-2.0, 2.0, bins + 1)
    hist, _ = np.histogram(x, bins=edges)
    hist = hist / (x.size * np.diff(edges))
    expected = np.diff(semicircle_cdf(edges, 2.0)) / np.diff(edges)
    return float(np.max(np.abs(hist - expected)))


# ---------------------------------------------------------- level spacings

def wigner_surmise_pdf(s):
    s = np.asarray(s, dtype=float)
    return 0.5 * np.pi * s * np.exp(-0.25 * np.pi * s * s)


def wigner_surmise_cdf(s):
    s = np.asarray(s, dtype=float)
    return 1.0 - np.exp(-0.25 * np.pi * s * s)


def unfold(energies, discard_fraction: float = DEFAULT_DISCARD, degree: int = UNFOLD_DEGREE):
    """Trim the spectral edges and map levels through a polynomial fit of the staircase."""
    e = np.sort(np.asarray(energies, dtype=float))
    if not 0.0 <= discard_fraction < 0.5:
        raise ValidationError(f"discard_fraction must be in [0, 0.5), got {discard_fraction}")
    cut = int(math.floor(discard_fraction * e.size))
    kept = e[cut:e.size - cut]
    if kept.size < MIN_LEVELS:
        raise InsufficientDataError(
            f"{kept.size} levels left after trimming; need at least {MIN_LEVELS}")
    staircase = np.arange(cut, cut + kept.size, dtype=float)
    fit = Polynomial.fit(kept, staircase, deg=degree)
    return fit(kept)


def level_spacings(es, discard_fraction: float = DEFAULT_DISCARD,
                   degree: int = UNFOLD_DEGREE) -> SpacingSeries:
    energies = es.energies if isinstance(es, EigenSystem) else es
    return SpacingSeries(np.diff(unfold(energies, discard_fraction, degree)))


def ks_to_wigner(spacings) -> float:
    """Kolmogorov-Smirnov distance between spacings and the GOE Wigner surmise."""
    values = spacings.values if isinstance(spacings, SpacingSeries) else spacings
    return float(stats.kstest(np.asarray(values), wigner_surmise_cdf).statistic)


# ----------------------------------------------------------- block weights

def in_out_ratio(es: EigenSystem, n_alpha: int) -> np.ndarray:
    """Per-eigenstate ratio of per-site weight inside alpha to per-site weight in beta.

    Eigenstates with no weight in beta get ``+inf``.
    """
    n = es.n
    if not 1 <= n_alpha < n:
        raise ValidationError(f"n_alpha must lie in [1, {n - 1}], got {n_alpha}")
    w = np.abs(es.vectors) ** 2
    inside = w[:n_alpha].sum(axis=0) / n_alpha
    outside = w[n_alpha:].sum(axis=0) / (n - n_alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = inside / outside
    r[outside == 0.0] = np.inf
    return r


# -------------------------------------------------------- Heisenberg time

def central_window(es, fraction: float = 0.5):
    """Energy interval spanning the central ``fraction`` of the levels (by count)."""
    e = es.energies if isinstance(es, EigenSystem) else np.sort(np.asarray(es, dtype=float))
    lo = int(math.floor(0.5 * (1.0 - fraction) * e.size))
    hi = max(lo, int(math.ceil(0.5 * (1.0 + fraction) * e.size)) - 1)
    return float(e[lo]), float(e[hi])


def mean_spacing(es, window=None) -> float:
    e = es.energies if isinstance(es, EigenSystem) else np.sort(np.asarray(es, dtype=float))
    lo, hi = central_window(e) if window is None else window
    inside = e[(e >= lo) & (e <= hi)]
    if inside.size < 2:
        raise InsufficientDataError(f"window [{lo}, {hi}] holds {inside.size} level(s)")
    spread = inside[-1] - inside[0]
    if not spread > 0.0:
        raise InsufficientDataError(f"levels in window [{lo}, {hi}] are all degenerate")
    return float(spread / (inside.size - 1))


def heisenberg_time(es, window=None) -> float:
    """``2*pi / mean level spacing`` inside ``window`` (default: central half)."""
    return 2.0 * math.pi / mean_spacing(es, window)
