"""Reproducible complex Wiener increments for trajectory ensembles.

Each trajectory owns an independent substream derived from (seed,
trajectory_index) through numpy's SeedSequence spawn-key mechanism, so the
noise seen by trajectory i never depends on how many trajectories run, on
scheduling, or on chunking.  A complex increment dxi has independent real and
imaginary parts, each Gaussian with variance dt/2, which gives
E[dxi] = E[dxi^2] = 0 and E[|dxi|^2] = dt.

All draws are counted: ``draws`` is the number of underlying real random
numbers consumed (two per complex increment, one per uniform), which is the
currency of the cost model reported by the benchmark.
"""

import numpy as np

__all__ = ["NoiseStream", "substream", "wiener_increments"]


class NoiseStream:
    """Seeded random stream for one trajectory.

    Attributes
    ----------
    seed:
        Base ensemble seed.
    trajectory_index:
        Index of the trajectory this stream belongs to.
    draws:
        Count of real random numbers consumed so far.
    """

    def __init__(self, seed: int, trajectory_index: int = 0):
        if trajectory_index < 0:
            raise ValueError(f"trajectory_index must be >= 0, got {trajectory_index}")
        self.seed = int(seed)
        self.trajectory_index = int(trajectory_index)
        self._gen = np.random.Generator(
            np.random.PCG64(
                np.random.SeedSequence(entropy=self.seed, spawn_key=(self.trajectory_index,))
            )
        )
        self.draws = 0

    def wiener(self, n_channels: int, dt: float) -> np.ndarray:
        """One time step of complex increments, shape (n_channels,)."""
        z = self._gen.standard_normal(2 * n_channels)
        self.draws += 2 * n_channels
        scale = np.sqrt(0.5 * dt)
        return scale * (z[0::2] + 1j * z[1::2])

    def wiener_block(self, n_steps: int, n_channels: int, dt: float) -> np.ndarray:
        """``n_steps`` consecutive steps at once, shape (n_steps, n_channels).

        Consumes the generator in exactly the same order as ``n_steps``
        successive :meth:`wiener` calls, so blocked and stepwise consumers
        see bitwise-identical noise.
        """
        z = self._gen.standard_normal((n_steps, 2 * n_channels))
        self.draws += 2 * n_channels * n_steps
        scale = np.sqrt(0.5 * dt)
        return scale * (z[:, 0::2] + 1j * z[:, 1::2])

    def uniform(self) -> float:
        """One uniform draw on [0, 1)."""
        self.draws += 1
        return float(self._gen.random())

    def complex_normals(self, n: int) -> np.ndarray:
        """n standard complex Gaussians (components N(0, 1/2) each)."""
        z = self._gen.standard_normal(2 * n)
        self.draws += 2 * n
        return np.sqrt(0.5) * (z[0::2] + 1j * z[1::2])


def substream(seed: int, trajectory_index: int) -> NoiseStream:
    """Independent stream for trajectory ``trajectory_index`` under ``seed``."""
    return NoiseStream(seed, trajectory_index)


def wiener_increments(stream: NoiseStream, n_channels: int, dt: float) -> np.ndarray:
    """Draw one step of complex Wiener increments from ``stream``."""
    if n_channels < 1:
        raise ValueError(f"n_channels must be >= 1, got {n_channels}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return stream.wiener(n_channels, dt)
