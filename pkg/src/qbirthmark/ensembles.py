"""Gaussian ensembles and the two block-structured model Hamiltonians.

Variance convention (GOE): off-diagonal entries N(0, 1), diagonal N(0, 2),
so the spectrum fills a semicircle of radius ``2*sqrt(n)``. GUE: off-diagonal
real and imaginary parts N(0, 1/2) each, diagonal N(0, 1); same radius.

Entries are read from the stream in ``np.triu_indices(n)`` order (upper
triangle, row major, diagonal included); for the GUE the imaginary parts of
the strict upper triangle follow.
"""

from dataclasses import dataclass
from typing import Optional
import struct

import numpy as np

from .errors import InvalidCouplingError, InvalidDimensionError, ValidationError
from .rng import RandomStream

ORTHOGONAL = "orthogonal"
UNITARY = "unitary"

_DUMP_MAGIC = b"QBH1"
_FLAG_COMPLEX = 1


@dataclass(frozen=True)
class BlockStructure:
    """alpha block = indices ``[0, n_alpha)``, beta block = the rest."""

    n_alpha: int
    n_beta: int
    kind: str  # "connection" (model A) or "scale" (model B)
    value: float  # N_c for model A, lambda for model B

    @property
    def n(self):
        return self.n_alpha + self.n_beta


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    entries: np.ndarray
    symmetry: str = ORTHOGONAL
    blocks: Optional[BlockStructure] = None

    def __post_init__(self):
        h = self.entries
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise InvalidDimensionError(f"Hamiltonian must be square, got shape {h.shape}")
        if self.blocks is not None and self.blocks.n != h.shape[0]:
            raise ValidationError(
                f"block sizes {self.blocks.n_alpha}+{self.blocks.n_beta} != n={h.shape[0]}")
        h.setflags(write=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.entries)

    def coupling(self) -> np.ndarray:
        """The alpha-beta off-diagonal block ``V``."""
        if self.blocks is None:
            raise ValidationError("Hamiltonian has no block structure")
        na = self.blocks.n_alpha
        return self.entries[:na, na:]

    def is_hermitian(self) -> bool:
        """Exact (bitwise) Hermiticity check."""
        return bool(np.array_equal(self.entries, self.entries.conj().T))


def _check_dim(n):
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidDimensionError(f"dimension must be a positive integer, got {n!r}")
    return int(n)


def _goe_entries(n, rs):
    iu = np.triu_indices(n)
    z = rs.normals(iu[0].size)
    z[iu[0] == iu[1]] *= np.sqrt(2.0)
    h = np.empty((n, n))
    h[iu] = z
    h[iu[1], iu[0]] = z
    return h


def sample_goe(n: int, rs: RandomStream) -> Hamiltonian:
    """Real symmetric GOE matrix (off-diagonal variance 1, diagonal 2)."""
    n = _check_dim(n)
    return Hamiltonian(_goe_entries(n, rs), ORTHOGONAL)


def sample_gue(n: int, rs: RandomStream) -> Hamiltonian:
    """Complex Hermitian GUE matrix (off-diagonal E|h|^2 = 1, diagonal variance 1)."""
    n = _check_dim(n)
    iu = np.triu_indices(n)
    m = iu[0].size
    z = rs.normals(m + n * (n - 1) // 2)
    diag = iu[0] == iu[1]
    re = z[:m] * np.where(diag, 1.0, np.sqrt(0.5))
    im = np.zeros(m)
    im[~diag] = z[m:] * np.sqrt(0.5)
    vals = re + 1j * im
    h = np.empty((n, n), dtype=np.complex128)
    h[iu] = vals
    h[iu[1], iu[0]] = vals.conj()
    return Hamiltonian(h, UNITARY)


def build_model_a(n_alpha: int, n_beta: int, n_c: int, rs: RandomStream) -> Hamiltonian:
    """One GOE draw with the alpha-beta blocks zeroed outside an ``n_c x n_c`` corner.

    The kept corner sits where the blocks meet: rows ``n_alpha-n_c .. n_alpha-1``
    and columns ``n_alpha .. n_alpha+n_c-1`` (plus the transpose).
    """
    n_alpha, n_beta = _check_dim(n_alpha), _check_dim(n_beta)
    if not isinstance(n_c, (int, np.integer)) or not 1 <= n_c <= min(n_alpha, n_beta):
        raise InvalidCouplingError(
            f"n_c must satisfy 1 <= n_c <= min(n_alpha, n_beta) = {min(n_alpha, n_beta)}, got {n_c!r}")
    n_c = int(n_c)
    h = _goe_entries(n_alpha + n_beta, rs)
    keep = h[n_alpha - n_c:n_alpha, n_alpha:n_alpha + n_c].copy()
    h[:n_alpha, n_alpha:] = 0.0
    h[n_alpha - n_c:n_alpha, n_alpha:n_alpha + n_c] = keep
    h[n_alpha:, :n_alpha] = h[:n_alpha, n_alpha:].T
    return Hamiltonian(h, ORTHOGONAL, BlockStructure(n_alpha, n_beta, "connection", n_c))


def build_model_b(n_alpha: int, n_beta: int, lam: float, rs: RandomStream) -> Hamiltonian:
    """One GOE draw with both off-diagonal blocks multiplied by ``lam``."""
    n_alpha, n_beta = _check_dim(n_alpha), _check_dim(n_beta)
    lam = float(lam)
    if not lam >= 0.0 or not np.isfinite(lam):
        raise InvalidCouplingError(f"lambda must be finite and >= 0, got {lam!r}")
    h = _goe_entries(n_alpha + n_beta, rs)
    if lam != 1.0:
        h[:n_alpha, n_alpha:] *= lam
        h[n_alpha:, :n_alpha] = h[:n_alpha, n_alpha:].T
    return Hamiltonian(h, ORTHOGONAL, BlockStructure(n_alpha, n_beta, "scale", lam))


# ------------------------------------------------------------ binary dump

def dump_hamiltonian(h: Hamiltonian, path) -> None:
    """Write ``QBH1`` header (magic, u32 n, u32 flags, u32 reserved) + LE float64 row-major.

    Complex matrices store interleaved (re, im) pairs and set flag bit 0.
    """
    flags = _FLAG_COMPLEX if h.is_complex else 0
    header = _DUMP_MAGIC + struct.pack("<III", h.n, flags, 0)
    dtype = "<c16" if h.is_complex else "<f8"
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(h.entries, dtype=dtype).tobytes())


def load_hamiltonian(path) -> Hamiltonian:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _DUMP_MAGIC:
        raise ValidationError(f"{path}: not a QBH1 file")
    n, flags, _ = struct.unpack("<III", raw[4:16])
    dtype = "<c16" if flags & _FLAG_COMPLEX else "<f8"
    data = np.frombuffer(raw[16:], dtype=dtype)
    if data.size != n * n:
        raise ValidationError(f"{path}: expected {n * n} entries, found {data.size}")
    entries = data.reshape(n, n).astype(np.complex128 if flags & _FLAG_COMPLEX else np.float64)
    return Hamiltonian(entries, UNITARY if flags & _FLAG_COMPLEX else ORTHOGONAL)
