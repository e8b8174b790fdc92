"""Split-operator wavepacket propagation in a Bunimovich stadium.

Units: hbar = m = 1. The stadium is centred at the origin with its straight
segment along x. Arrays are indexed ``[iy, ix]`` on a cell-centred grid that
is mirror symmetric about both axes, so the reflections ``x -> -x`` and
``y -> -y`` are plain array flips.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple
import math

import numpy as np
import scipy.constants as const
import scipy.fft as sfft

from . import kernels
from .dynamics import TimeSeries
from .errors import PropagationError, ValidationError

WALL_FACTOR = 30.0
WALL_SMOOTH_CELLS = 0.0
PHASE_BUDGET = 0.1
DEFAULT_SIGMA = 0.09
DEFAULT_WAVELENGTHS = 40
DEFAULT_LENGTH_UNIT_NM = 25.0


@dataclass(frozen=True)
class StadiumSpec:
    straight_length: float = 2.0
    radius: float = 1.0
    wall_height: Optional[float] = None

    def __post_init__(self):
        if not self.straight_length >= 0:
            raise ValidationError(f"straight_length must be >= 0, got {self.straight_length}")
        if not self.radius > 0:
            raise ValidationError(f"radius must be > 0, got {self.radius}")
        if self.wall_height is not None and not self.wall_height > 0:
            raise ValidationError(f"wall_height must be > 0, got {self.wall_height}")

    @property
    def is_circle(self) -> bool:
        return self.straight_length == 0

    @property
    def area(self) -> float:
        return math.pi * self.radius ** 2 + 2.0 * self.radius * self.straight_length

    @property
    def perimeter(self) -> float:
        return 2.0 * math.pi * self.radius + 2.0 * self.straight_length

    @property
    def length(self) -> float:
        return self.straight_length + 2.0 * self.radius

    def signed_distance(self, x, y):
        """Distance to the boundary, negative inside."""
        cx = np.maximum(np.abs(x) - 0.5 * self.straight_length, 0.0)
        return np.hypot(cx, y) - self.radius


@dataclass(frozen=True)
class GridSpec:
    nx: int = 512
    ny: int = 256
    extent: Tuple[float, float] = (4.8, 2.8)
    dt: Optional[float] = None
    length_unit_nm: float = DEFAULT_LENGTH_UNIT_NM
    mass_electron: float = 1.0

    def __post_init__(self):
        for name in ("nx", "ny"):
            v = getattr(self, name)
            if v < 2 or v & (v - 1):
                raise ValidationError(f"{name} must be a power of two, got {v}")
        if min(self.extent) <= 0:
            raise ValidationError(f"extent must be positive, got {self.extent}")
        if self.dt is not None and not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")

    @property
    def dx(self) -> float:
        return self.extent[0] / self.nx

    @property
    def dy(self) -> float:
        return self.extent[1] / self.ny

    @property
    def time_unit_fs(self) -> float:
        """Femtoseconds per dimensionless time unit (labeling only)."""
        m = self.mass_electron * const.m_e
        return m * (self.length_unit_nm * 1e-9) ** 2 / const.hbar * 1e15


@dataclass(frozen=True)
class WavepacketSpec:
    center: Tuple[float, float]
    wavevector: Tuple[float, float]
    width: float = DEFAULT_SIGMA

    @property
    def k(self) -> float:
        return math.hypot(*self.wavevector)

    @property
    def mean_kinetic_energy(self) -> float:
        # <p^2>/2 for the isotropic Gaussian: k^2/2 + 2 * (1/(2 sigma))^2 / 2
        return 0.5 * self.k ** 2 + 0.25 / self.width ** 2

    @property
    def max_kinetic_energy(self) -> float:
        """Kinetic energy three momentum widths beyond the carrier."""
        return 0.5 * (self.k + 3.0 / (2.0 * self.width)) ** 2

    @classmethod
    def launch(cls, center, angle_deg, k, width=DEFAULT_SIGMA):
        a = math.radians(angle_deg)
        return cls(tuple(map(float, center)), (k * math.cos(a), k * math.sin(a)), width)


def default_k(ss: StadiumSpec, wavelengths: int = DEFAULT_WAVELENGTHS) -> float:
    return 2.0 * math.pi * wavelengths / ss.length


def canonical_launches(ss: StadiumSpec, k: Optional[float] = None,
                       width: float = DEFAULT_SIGMA) -> Dict[str, WavepacketSpec]:
    """The four launch conditions: bouncing ball, horizontal scar, 57 deg, off-centre 123 deg."""
    k = default_k(ss) if k is None else k
    off = (0.35 * ss.straight_length, 0.3 * ss.radius)
    return {
        "bouncing_ball": WavepacketSpec.launch((0.0, 0.0), 90.0, k, width),
        "horizontal_scar": WavepacketSpec.launch((0.0, 0.0), 0.0, k, width),
        "center_57": WavepacketSpec.launch((0.0, 0.0), 57.0, k, width),
        "offcenter_123": WavepacketSpec.launch(off, 123.0, k, width),
    }


def default_dt(ws: WavepacketSpec) -> float:
    return PHASE_BUDGET / ws.max_kinetic_energy


@dataclass(frozen=True, eq=False)
class Domain:
    stadium: StadiumSpec
    grid: GridSpec
    x: np.ndarray
    y: np.ndarray
    potential: np.ndarray
    mask: np.ndarray
    wall_height: float

    @property
    def d_area(self) -> float:
        return self.grid.dx * self.grid.dy

    @property
    def shape(self):
        return self.mask.shape


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def build_domain(ss: StadiumSpec, gs: GridSpec, ws: Optional[WavepacketSpec] = None,
                 smooth_cells: float = WALL_SMOOTH_CELLS) -> Domain:
    """Potential (0 inside, ``V0`` outside) and interior mask.

    ``V0`` is ``ss.wall_height`` or, if unset, ``WALL_FACTOR`` times the mean
    kinetic energy of ``ws``. The wall is a step unless ``smooth_cells`` asks
    for a smoothstep ramp of that many cells outside the boundary. With ``ws``
    given, the box must leave a margin of at least four packet widths around
    the stadium.
    """
    wall = ss.wall_height
    if wall is None:
        if ws is None:
            raise ValidationError("wall_height unset and no wavepacket to derive it from")
        wall = WALL_FACTOR * ws.mean_kinetic_energy
    half_x, half_y = 0.5 * gs.extent[0], 0.5 * gs.extent[1]
    margin = min(half_x - 0.5 * ss.length, half_y - ss.radius)
    need = 4.0 * ws.width if ws is not None else 0.0
    if margin < need or margin <= 0:
        raise ValidationError(
            f"stadium ({ss.length} x {2 * ss.radius}) does not fit in extent {gs.extent} "
            f"with margin {need:.4g} (available {margin:.4g})")
    x = -half_x + (np.arange(gs.nx) + 0.5) * gs.dx
    y = -half_y + (np.arange(gs.ny) + 0.5) * gs.dy
    d = ss.signed_distance(x[None, :], y[:, None])
    if smooth_cells > 0:
        potential = wall * _smoothstep(d / (smooth_cells * max(gs.dx, gs.dy)))
    else:
        potential = np.where(d > 0, wall, 0.0)
    mask = potential == 0.0
    potential.setflags(write=False)
    mask.setflags(write=False)
    return Domain(ss, gs, x, y, potential, mask, float(wall))


def init_wavepacket(ws: WavepacketSpec, domain: Domain) -> np.ndarray:
    """Normalized Gaussian ``exp(-r^2/(4 sigma^2) + i k.r)`` restricted to the interior."""
    gs = domain.grid
    x0, y0 = ws.center
    if not domain.stadium.signed_distance(np.float64(x0), np.float64(y0)) < 0:
        raise ValidationError(f"wavepacket centre {ws.center} is not inside the stadium")
    h = max(gs.dx, gs.dy)
    if ws.width < 8 * h:
        raise ValidationError(f"width {ws.width} spans fewer than 8 grid cells ({h:.4g} each)")
    if ws.k > 0 and 2 * math.pi / ws.k < 8 * h:
        raise ValidationError(f"wavelength {2 * math.pi / ws.k:.4g} spans fewer than 8 grid cells")
    X = domain.x[None, :] - x0
    Y = domain.y[:, None] - y0
    kx, ky = ws.wavevector
    psi = np.exp(-(X * X + Y * Y) / (4.0 * ws.width ** 2)
                 + 1j * (kx * domain.x[None, :] + ky * domain.y[:, None]))
    psi[~domain.mask] = 0.0
    psi /= math.sqrt(float(np.sum(np.abs(psi) ** 2)) * domain.d_area)
    return psi


def wavenumbers(gs: GridSpec):
    kx = 2.0 * math.pi * sfft.fftfreq(gs.nx, d=gs.dx)
    ky = 2.0 * math.pi * sfft.fftfreq(gs.ny, d=gs.dy)
    return kx, ky


class SplitOperator:
    """Strang splitting ``e^{-iV dt/2} e^{-iT dt} e^{-iV dt/2}`` with FFT kinetics."""

    def __init__(self, domain: Domain, dt: float):
        if not dt > 0:
            raise ValidationError(f"dt must be positive, got {dt}")
        self.domain = domain
        self.dt = float(dt)
        kx, ky = wavenumbers(domain.grid)
        k2 = kx[None, :] ** 2 + ky[:, None] ** 2
        self.kinetic_phase = np.exp(-0.5j * self.dt * k2)
        self.half_kick = np.exp(-0.5j * self.dt * domain.potential)
        self.full_kick = self.half_kick * self.half_kick

    def drift(self, psi):
        phi = sfft.fft2(psi, overwrite_x=True)
        phi *= self.kinetic_phase
        return sfft.ifft2(phi, overwrite_x=True)

    def step(self, psi):
        out = self.drift(psi * self.half_kick)
        out *= self.half_kick
        if not np.isfinite(out[0, 0]) or not np.all(np.isfinite(out)):
            raise PropagationError("non-finite amplitude after split-operator step")
        return out


def step(psi, domain: Domain, dt: float):
    """One symmetric split-operator step (stateless convenience wrapper)."""
    return SplitOperator(domain, dt).step(psi)


# ------------------------------------------------------------- densities

@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Time-averaged probability density on the grid, normalized over the mask."""

    values: np.ndarray
    mask: np.ndarray
    window: Tuple[float, float]
    dx: float
    dy: float
    extent: Tuple[float, float]
    leakage: float = 0.0

    @property
    def d_area(self) -> float:
        return self.dx * self.dy

    def mass(self) -> float:
        return float(np.sum(self.values[self.mask]) * self.d_area)


def _density_from_sum(acc, count, domain, window):
    values = np.where(domain.mask, acc / count, 0.0)
    inside = float(values.sum())
    total = float(acc.sum() / count)
    values = values / (inside * domain.d_area)
    return DensityGrid(values, np.asarray(domain.mask), window, domain.grid.dx,
                       domain.grid.dy, domain.grid.extent, leakage=max(0.0, 1.0 - inside / total))


def reflection_average(values: np.ndarray) -> np.ndarray:
    return 0.25 * (values + values[:, ::-1] + values[::-1, :] + values[::-1, ::-1])


def symmetry_error(dg) -> float:
    """L1 distance to the reflection-group average, relative to total mass."""
    v = dg.values if isinstance(dg, DensityGrid) else np.asarray(dg, dtype=float)
    total = float(np.sum(v))
    if total <= 0:
        raise ValidationError("density has no mass")
    return float(np.sum(np.abs(v - reflection_average(v))) / total)


def contrast(dg: DensityGrid) -> float:
    """Coefficient of variation of the density over the interior cells."""
    v = dg.values[dg.mask]
    return float(np.std(v) / np.mean(v))


@dataclass(eq=False)
class StadiumRun:
    density: DensityGrid
    density_full: DensityGrid
    inverse_ipr: TimeSeries
    participation: TimeSeries
    snapshots: Dict[float, np.ndarray] = field(default_factory=dict)
    dt: float = 0.0
    steps: int = 0
    max_norm_drift: float = 0.0
    max_leakage: float = 0.0


def propagate_and_accumulate(ws: WavepacketSpec, ss: StadiumSpec, gs: GridSpec,
                             t_total: float, t_exclude: float = 0.0,
                             record_every: int = 10, snapshot_times=()) -> StadiumRun:
    """Propagate for ``t_total`` and time-average ``|psi|^2``.

    Samples are taken after every step (``t = dt, 2 dt, ..., t_total``).
    ``density`` averages the samples with ``t >= t_exclude``; ``density_full``
    averages all of them. Every ``record_every`` steps the spatial participation
    ratio ``1/sum_c p_c^2`` and the participation number of the running average
    density, ``1/sum_c (rho_c^av)^2``, are recorded with cell probabilities
    ``p_c = |psi_c|^2 dA``.
    """
    if not 0 <= t_exclude < t_total:
        raise ValidationError(f"need 0 <= t_exclude < t_total, got {t_exclude}, {t_total}")
    if record_every < 1:
        raise ValidationError("record_every must be >= 1")
    domain = build_domain(ss, gs, ws)
    dt0 = gs.dt if gs.dt is not None else default_dt(ws)
    steps = max(1, int(math.ceil(t_total / dt0 - 1e-9)))
    dt = t_total / steps
    prop = SplitOperator(domain, dt)
    psi = init_wavepacket(ws, domain)

    snap_steps = {}
    for ts in snapshot_times:
        if not 0 <= ts <= t_total:
            raise ValidationError(f"snapshot time {ts} outside [0, {t_total}]")
        snap_steps.setdefault(int(round(ts / dt)), []).append(float(ts))
    snapshots = {}
    for ts in snap_steps.pop(0, []):
        snapshots[ts] = psi.real.copy()

    acc_full = np.zeros(domain.shape)
    acc_late = np.zeros(domain.shape)
    mask = np.ascontiguousarray(domain.mask)
    d_area = domain.d_area
    first_late = int(math.ceil(t_exclude / dt - 1e-9))
    n_late = 0
    rec_t, rec_ipr, rec_n = [], [], []
    drift = 0.0
    leak = 0.0

    # Potential kicks only change phases, so the two half kicks around each
    # measurement are merged into one full kick; |psi|^2 is unaffected.
    psi = psi * prop.half_kick
    for k in range(1, steps + 1):
        psi = prop.drift(psi)
        late = k >= first_late
        want = k % record_every == 0 or k == steps
        total, outside, ipr, sumsq = kernels.accumulate_density(
            psi, d_area, mask, acc_full, acc_late, late, want)
        if not math.isfinite(total):
            raise PropagationError(f"non-finite norm at step {k} (t={k * dt:.6g})")
        drift = max(drift, abs(total - 1.0))
        leak = max(leak, outside)
        n_late += late
        if want:
            rec_t.append(k * dt)
            rec_ipr.append(1.0 / ipr)
            rec_n.append(k * k / sumsq)
        if k in snap_steps:
            exact = psi * prop.half_kick
            for ts in snap_steps[k]:
                snapshots[ts] = exact.real.copy()
        psi *= prop.half_kick if k == steps else prop.full_kick

    density = _density_from_sum(acc_late, n_late, domain, (first_late * dt, t_total))
    density_full = _density_from_sum(acc_full, steps, domain, (dt, t_total))
    return StadiumRun(density, density_full,
                      TimeSeries(np.array(rec_t), np.array(rec_ipr), "inverse_ipr"),
                      TimeSeries(np.array(rec_t), np.array(rec_n), "participation"),
                      snapshots, dt, steps, drift, leak)
