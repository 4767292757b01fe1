"""Interior-time sampling and keyed random streams.

Intermediate evaluation times are drawn from the symmetric density

    rho(z) = z^(-alpha) * (1 - z)^(-alpha) / B(1 - alpha, 1 - alpha),   z in (0, 1),

i.e. a Beta(1 - alpha, 1 - alpha) law with both shape parameters below one.
Sampling against rho compensates the endpoint singularity picked up by the
gradient weight near the left endpoint; the reciprocal density re-weights the
draws back to the uniform time integral.

Randomness is organised as a tree of substreams.  A :class:`StreamKey` is the
64-bit experiment seed plus a path of ``(level, replicate, sign)`` triples;
each key hashes to an independent counter-based (Philox) stream, so any node
of the recursion can derive the generators of its children in O(1) without
coordination, and a fixed seed reproduces every draw bit-for-bit regardless
of scheduling or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .errors import DegenerateInterval, DomainError

__all__ = ["StreamKey", "TimeSampler", "root_key"]


def _zigzag(n: int) -> int:
    # SeedSequence spawn keys must be non-negative.
    return 2 * n if n >= 0 else -2 * n - 1


@dataclass(frozen=True)
class StreamKey:
    """Identifier of one independent substream of an experiment's randomness.

    Two keys with distinct (seed, path) pairs yield statistically independent
    streams; equal keys always reproduce the identical draw sequence.
    """

    seed: int
    path: tuple[tuple[int, int, int], ...] = ()

    def child(self, level: int, replicate: int, sign: int = 1) -> "StreamKey":
        """Derive the child key for one (level, replicate, sign) slot."""
        if sign not in (1, -1):
            raise DomainError(f"sign must be +1 or -1, got {sign}")
        return StreamKey(self.seed, self.path + ((int(level), int(replicate), int(sign)),))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the origin of this key's stream."""
        spawn: list[int] = []
        for level, replicate, sign in self.path:
            spawn.extend((_zigzag(level), _zigzag(replicate), 0 if sign == 1 else 1))
        seq = np.random.SeedSequence(self.seed, spawn_key=tuple(spawn))
        return np.random.Generator(np.random.Philox(seq))


def root_key(seed: int) -> StreamKey:
    """Root of the stream-key tree for a 64-bit experiment seed."""
    return StreamKey(int(seed))


@dataclass(frozen=True)
class TimeSampler:
    """Sampler and density for the symmetric endpoint-singular time law.

    ``alpha`` must lie in [1/2, 1).  ``beta_norm`` caches the normalising
    Beta-function value B(1 - alpha, 1 - alpha).
    """

    alpha: float = 0.5
    beta_norm: float = field(init=False)

    def __post_init__(self) -> None:
        if not (0.5 <= self.alpha < 1.0):
            raise DomainError(f"alpha must lie in [1/2, 1), got {self.alpha}")
        object.__setattr__(
            self, "beta_norm", float(special.beta(1.0 - self.alpha, 1.0 - self.alpha))
        )

    @property
    def shape(self) -> float:
        return 1.0 - self.alpha

    def density(self, z):
        """rho(z) = z^(-alpha) (1-z)^(-alpha) / B(1-alpha, 1-alpha) on (0, 1)."""
        arr = np.asarray(z, dtype=float)
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise DomainError("density argument must lie strictly inside (0, 1)")
        out = arr ** (-self.alpha) * (1.0 - arr) ** (-self.alpha) / self.beta_norm
        return float(out) if np.ndim(z) == 0 else out

    def cdf(self, z):
        """Distribution function of the time law (regularised incomplete Beta)."""
        return stats.beta.cdf(z, self.shape, self.shape)

    def sample_xi(self, gen: np.random.Generator, size: int | None = None):
        """Draw from the time law on the open interval (0, 1).

        With shape parameters below one the Johnk-type generator behind
        ``Generator.beta`` can round to exactly 0.0 or 1.0; those draws would
        blow up the reciprocal-density weight, so they are rejected and
        redrawn (the event has probability zero in exact arithmetic).
        """
        a = self.shape
        if size is None:
            xi = gen.beta(a, a)
            while not 0.0 < xi < 1.0:
                xi = gen.beta(a, a)
            return xi
        xi = gen.beta(a, a, size=size)
        bad = ~((xi > 0.0) & (xi < 1.0))
        while np.any(bad):
            xi[bad] = gen.beta(a, a, size=int(bad.sum()))
            bad = ~((xi > 0.0) & (xi < 1.0))
        return xi

    def sample_time(self, t: float, horizon: float, stream) -> float:
        """Draw an interior time t + (horizon - t) * xi with xi ~ rho."""
        if not t < horizon:
            raise DegenerateInterval(f"need t < horizon, got t={t}, horizon={horizon}")
        gen = stream.generator() if isinstance(stream, StreamKey) else stream
        xi = self.sample_xi(gen)
        r = t + (horizon - t) * xi
        # Guard against rounding onto an endpoint for extreme draws.
        while not t < r < horizon:
            xi = self.sample_xi(gen)
            r = t + (horizon - t) * xi
        return r

    def importance_weight(self, r: float, t: float, horizon: float) -> float:
        """Reciprocal density 1 / rho((r - t) / (horizon - t)) for t < r < horizon."""
        if not t < r < horizon:
            raise DomainError(f"need t < r < horizon, got t={t}, r={r}, horizon={horizon}")
        return 1.0 / self.density((r - t) / (horizon - t))
