"""Seedable random streams, Brownian increments and Euler-Maruyama steps."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

GENERATOR_NAME = "numpy.Philox"

# purpose tags; the integer values are part of the stream key and must not change
PURPOSES = {"macro": 0, "micro": 1, "direct": 2, "amplitude": 3, "test": 4}


class Diverged(ArithmeticError):
    """A state component became non-finite."""

    def __init__(self, step: int, where: str = ""):
        self.step = int(step)
        self.where = where
        super().__init__(f"diverged at step {self.step}" + (f" ({where})" if where else ""))


@dataclass(frozen=True)
class RngStream:
    """Key of an independent substream: ``(seed, purpose, replica, sample, step)``.

    The draws are a pure function of the key; Philox is counter based, so the
    same key gives the same numbers on every platform.
    """

    seed: int
    purpose: str = "macro"
    replica: int = 0
    sample: int = 0
    step: int = 0

    def __post_init__(self):
        if self.purpose not in PURPOSES:
            raise ValueError(f"unknown purpose {self.purpose!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def key(self) -> tuple[int, ...]:
        return (PURPOSES[self.purpose], self.replica, self.sample, self.step)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(ss))

    def child(self, **kw) -> "RngStream":
        return replace(self, **kw)

    def normal(self, size=None) -> np.ndarray:
        return self.generator().standard_normal(size)


def gaussian_draw(stream: RngStream) -> float:
    """First standard normal of ``stream``."""
    return float(stream.generator().standard_normal())


@dataclass(frozen=True)
class BrownianPath:
    dt: float
    increments: np.ndarray

    @classmethod
    def sample(cls, stream: RngStream, n: int, dt: float) -> "BrownianPath":
        if dt <= 0:
            raise ValueError("dt must be positive")
        return cls(dt, np.sqrt(dt) * stream.normal(n))

    def __len__(self) -> int:
        return len(self.increments)


def euler_maruyama_step(state, drift, diffusion, dt: float, noise, step: int = 0):
    """``state + dt * drift + sqrt(dt) * diffusion @ noise``.

    ``diffusion`` may be a scalar, a vector (diagonal noise) or a matrix.
    Raises :class:`Diverged` if the result is not finite.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    diffusion = np.asarray(diffusion, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if diffusion.ndim == 2:
        kick = diffusion @ noise
    else:
        kick = diffusion * noise
    with np.errstate(over="ignore", invalid="ignore"):  # reported through Diverged
        out = np.asarray(state, dtype=float) + dt * np.asarray(drift, dtype=float) + np.sqrt(dt) * kick
    if not np.all(np.isfinite(out)):
        raise Diverged(step)
    return out


def linear_chain(y0, rate: np.ndarray, forcing: np.ndarray) -> np.ndarray:
    """Iterate ``y[l+1] = rate * y[l] + forcing[l]`` along the second-to-last axis.

    ``y0`` has shape ``(..., M)``, ``forcing`` ``(..., P - 1, M)``; returns the
    ``(..., P, M)`` path starting at ``y0``.  Each mode is one IIR filter call.
    """
    y0 = np.asarray(y0, dtype=float)
    forcing = np.asarray(forcing, dtype=float)
    lead = forcing.shape[:-2]
    P = forcing.shape[-2] + 1
    M = forcing.shape[-1]
    out = np.empty(lead + (P, M))
    out[..., 0, :] = y0
    for m in range(M):
        r = float(rate[m])
        zi = (r * np.broadcast_to(y0[..., m], lead))[..., None]
        out[..., 1:, m], _ = lfilter([1.0], [1.0, -r], forcing[..., m], axis=-1, zi=zi)
    return out


def check_finite(path: np.ndarray, where: str = "") -> None:
    """Raise :class:`Diverged` at the first micro step holding a non-finite value."""
    ok = np.isfinite(path)
    if ok.all():
        return
    bad = ~ok.reshape(-1, *path.shape[-2:]).all(axis=(0, 2))
    raise Diverged(int(np.argmax(bad)), where)
