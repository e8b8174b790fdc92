"""Counter-based random streams keyed by ``(seed, stream_id)``."""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ValidationError

_U64_MAX = (1 << 64) - 1


@dataclass(frozen=True)
class RandomStream:
    """An addressable stream of pseudo-random numbers.

    Draws are pure functions of ``(seed, stream_id, start)``: asking for the
    same slice twice returns the same numbers, and there is no hidden state.
    The construction is documented in :mod:`qbirthmark.kernels` and in
    ``docs/rng.md``.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) <= _U64_MAX:
                raise ValidationError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    @property
    def base(self) -> np.uint64:
        return kernels.stream_base(int(self.seed), int(self.stream_id))

    def uniforms(self, count: int, start: int = 0) -> np.ndarray:
        """``count`` uniforms on [0, 1) beginning at output ``start``."""
        return kernels.splitmix_uniforms(self.base, int(start), int(count))

    def normals(self, count: int, start: int = 0) -> np.ndarray:
        """``count`` standard normals beginning at normal index ``start``."""
        return kernels.splitmix_normals(self.base, int(start), int(count))

    def permutation(self, n: int) -> np.ndarray:
        """A random permutation of ``range(n)`` (argsort of uniforms)."""
        return np.argsort(self.uniforms(n), kind="stable")

    def child(self, stream_id: int) -> "RandomStream":
        """Same seed, different stream."""
        return RandomStream(self.seed, stream_id)
