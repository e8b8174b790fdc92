"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

The public names (``splitmix_uniforms``, ``phase_sum``, ...) dispatch to the
backend chosen in :mod:`qbirthmark._accel`. The ``*_nb`` / ``*_np`` variants
stay importable so tests and ``benchmarks/bench_kernels.py`` can compare them.

Pseudo-random numbers
---------------------
Streams are counter based. A stream is identified by ``(seed, stream_id)``;
its base state is::

    base = mix64(mix64(seed) ^ mix64(stream_id * STREAM_MULT + GOLDEN))

and its k-th 64-bit output (k = 0, 1, ...) is ``mix64(base + (k + 1) * GOLDEN)``
with all arithmetic modulo 2**64. ``mix64`` is the splitmix64 finalizer, so
each stream is exactly the splitmix64 sequence started from ``base``.
Uniforms are ``(z >> 11) * 2**-53``. Normals use Box-Muller (in numpy for
both backends, so they are bit-identical) on consecutive pairs of outputs: pair p uses outputs 2p and 2p+1 and yields the normals
2p (cosine branch) and 2p+1 (sine branch).
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
STREAM_MULT = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO = np.uint64(2)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * math.pi


def mix64(z):
    """splitmix64 finalizer on a ``np.uint64`` scalar or array."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def stream_base(seed, stream_id):
    """Base splitmix state of the stream ``(seed, stream_id)``."""
    s = np.uint64(seed)
    i = np.uint64(stream_id)
    with np.errstate(over="ignore"):
        salt = mix64(i * STREAM_MULT + GOLDEN)
    return np.uint64(mix64(mix64(s) ^ salt))


# ---------------------------------------------------------------- uniforms

def splitmix_uniforms_np(base, start, count):
    k = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = mix64(np.uint64(base) + k * GOLDEN)
    return (z >> _S11).astype(np.float64) * _INV53


@njit
def _mix64_nb(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit
def splitmix_uniforms_nb(base, start, count):
    out = np.empty(count, dtype=np.float64)
    b = np.uint64(base)
    for j in range(count):
        k = np.uint64(start + j) + _ONE
        z = _mix64_nb(b + k * GOLDEN)
        out[j] = np.float64(z >> _S11) * _INV53
    return out


# ----------------------------------------------------------------- normals

def _box_muller(uniforms, start, count):
    """Normals ``start .. start+count-1`` from uniforms that begin at pair ``start // 2``."""
    r = np.sqrt(-2.0 * np.log(1.0 - uniforms[0::2]))
    theta = _TWO_PI * uniforms[1::2]
    z = np.empty(uniforms.size)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    off = start - 2 * (start // 2)
    return z[off:off + count]


def _pair_span(start, count):
    first_pair = start // 2
    last_pair = (start + count - 1) // 2
    return 2 * first_pair, 2 * (last_pair - first_pair + 1)


def splitmix_normals_np(base, start, count):
    if count == 0:
        return np.empty(0)
    return _box_muller(splitmix_uniforms_np(base, *_pair_span(start, count)), start, count)


def splitmix_normals_nb(base, start, count):
    # Only the integer stream is compiled. A compiled Box-Muller loop gets
    # vectorized with libm variants that differ by an ulp between the vector
    # body and the remainder, which would make a slice depend on its offset.
    if count == 0:
        return np.empty(0)
    return _box_muller(splitmix_uniforms_nb(base, *_pair_span(start, count)), start, count)


# --------------------------------------------------------------- phase sum

_PHASE_CHUNK = 1 << 22


def phase_sum_np(times, energies, weights):
    times = np.ascontiguousarray(times, dtype=np.float64)
    energies = np.ascontiguousarray(energies, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.complex128)
    out = np.empty(times.size, dtype=np.complex128)
    step = max(1, _PHASE_CHUNK // max(1, energies.size))
    for lo in range(0, times.size, step):
        t = times[lo:lo + step]
        out[lo:lo + step] = np.exp(-1j * np.outer(t, energies)) @ weights
    return out


@njit
def phase_sum_nb(times, energies, weights):
    nt = times.shape[0]
    ne = energies.shape[0]
    out = np.empty(nt, dtype=np.complex128)
    for k in range(nt):
        t = times[k]
        re = 0.0
        im = 0.0
        for n in range(ne):
            ph = energies[n] * t
            c = math.cos(ph)
            s = math.sin(ph)
            w = weights[n]
            # w * exp(-i ph)
            re += w.real * c + w.imag * s
            im += w.imag * c - w.real * s
        out[k] = complex(re, im)
    return out


# ------------------------------------------------------ averaging kernel

_SMALL_PHASE = 1e-6


def averaging_kernel_np(energies, t):
    e = np.asarray(energies, dtype=np.float64)
    x = (e[:, None] - e[None, :]) * t
    small = np.abs(x) < _SMALL_PHASE
    safe = np.where(small, 1.0, x)
    k = (1.0 - np.exp(-1j * safe)) / (1j * safe)
    series = 1.0 - 0.5j * x - x * x / 6.0
    return np.where(small, series, k)


@njit
def averaging_kernel_nb(energies, t):
    n = energies.shape[0]
    out = np.empty((n, n), dtype=np.complex128)
    for a in range(n):
        for b in range(n):
            x = (energies[a] - energies[b]) * t
            if abs(x) < _SMALL_PHASE:
                out[a, b] = complex(1.0 - x * x / 6.0, -0.5 * x)
            else:
                # (1 - e^{-ix}) / (ix) = sin(x)/x + i (cos(x) - 1)/x
                out[a, b] = complex(math.sin(x) / x, (math.cos(x) - 1.0) / x)
    return out


# ------------------------------------------------- density accumulation

def accumulate_density_np(psi, d_area, mask, acc_full, acc_late, late, want_sumsq):
    p = (psi.real * psi.real + psi.imag * psi.imag) * d_area
    acc_full += p
    if late:
        acc_late += p
    total = p.sum()
    outside = p[~mask].sum()
    ipr = np.dot(p.ravel(), p.ravel())
    sumsq = np.dot(acc_full.ravel(), acc_full.ravel()) if want_sumsq else 0.0
    return total, outside, ipr, sumsq


@njit
def accumulate_density_nb(psi, d_area, mask, acc_full, acc_late, late, want_sumsq):
    ny, nx = psi.shape
    total = 0.0
    outside = 0.0
    ipr = 0.0
    sumsq = 0.0
    for j in range(ny):
        for i in range(nx):
            v = psi[j, i]
            p = (v.real * v.real + v.imag * v.imag) * d_area
            a = acc_full[j, i] + p
            acc_full[j, i] = a
            if late:
                acc_late[j, i] += p
            total += p
            if not mask[j, i]:
                outside += p
            ipr += p * p
            if want_sumsq:
                sumsq += a * a
    return total, outside, ipr, sumsq


if USE_NUMBA:
    splitmix_uniforms = splitmix_uniforms_nb
    splitmix_normals = splitmix_normals_nb
    phase_sum = phase_sum_nb
    averaging_kernel = averaging_kernel_nb
    accumulate_density = accumulate_density_nb
else:
    splitmix_uniforms = splitmix_uniforms_np
    splitmix_normals = splitmix_normals_np
    phase_sum = phase_sum_np
    averaging_kernel = averaging_kernel_np
    accumulate_density = accumulate_density_np
