"""Heterogeneous multiscale micro-macro solver for truncated fast-slow systems.

Diffusive scale: the micro solver integrates the auxiliary pair (Y1, Y2) with
the slow state frozen, and the effective drift and diffusion of the slow mode
are read off time averages.  Everything is written in the dimensionless micro
step ``h = dt_micro / eps^2``; eps itself never enters.

Advective scale: the fast system is integrated directly (``h = dt_micro / eps``)
and the slow drift is averaged; the macro solver is forward Euler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numba import njit

from .sde import Diverged, RngStream, check_finite, linear_chain
from .spectral import EigenSpectrum, TruncatedSystem


class StabilityError(ValueError):
    """The micro step violates ``h * lambda < 2`` for some fast mode."""

    def __init__(self, h: float, lam: float, mode: int | None = None):
        self.h = h
        self.lam = lam
        self.mode = mode
        where = f" (mode {mode})" if mode is not None else ""
        super().__init__(
            f"micro step h={h:g} is unstable for eigenvalue {lam:g}{where}: "
            f"need h < {2.0 / lam:g}"
        )


@dataclass(frozen=True)
class HmmParams:
    p: int
    h: float
    K: int = 1
    L: int = 512
    Lp: int = 24
    lT: int = 16
    dt_macro: float = 0.1
    n_macro: int = 10
    epsilon: float | None = None
    include_b1: bool = False

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("h must be positive")
        if min(self.L, self.Lp, self.lT, self.K) < 1:
            raise ValueError("L, Lp, lT and K must all be >= 1")
        if self.dt_macro <= 0 or self.n_macro < 1:
            raise ValueError("need dt_macro > 0 and n_macro >= 1")

    @classmethod
    def from_p(cls, p: int, dt_macro: float = 0.1, n_macro: int = 10, **overrides) -> "HmmParams":
        """Schedule ``h = 2^-p, L = 2^(3p), L' = p 2^p, l_T = 16, K = 1``."""
        if p < 1:
            raise ValueError("p must be a positive integer")
        base = dict(p=p, h=2.0**-p, K=1, L=2 ** (3 * p), Lp=p * 2**p, lT=16,
                    dt_macro=dt_macro, n_macro=n_macro)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    @property
    def horizon(self) -> float:
        return self.dt_macro * self.n_macro


@dataclass
class MicroState:
    Y1: np.ndarray  # (K, M)
    Y2: np.ndarray  # (K, M); unused on the advective scale

    @classmethod
    def zeros(cls, K: int, M: int) -> "MicroState":
        return cls(np.zeros((K, M)), np.zeros((K, M)))


@dataclass(frozen=True)
class EffectiveCoeffs:
    abar: np.ndarray  # (N,)
    sigbar2: np.ndarray  # (N, N)
    clamped: bool = False


@dataclass
class MacroRun:
    times: np.ndarray
    X: np.ndarray  # (n_macro + 1, N)
    abar: np.ndarray  # (n_macro, N)
    sigbar2: np.ndarray  # (n_macro, N, N)
    clamped: np.ndarray  # (n_macro,)
    meta: dict = field(default_factory=dict)

    @property
    def sigbar(self) -> np.ndarray:
        """Scalar effective diffusion per macro step (N = 1)."""
        return np.sqrt(self.sigbar2[:, 0, 0])


def stability_max_step(spectrum: EigenSpectrum | np.ndarray, M: int | None = None) -> float:
    """Largest stable micro step, ``2 / lambda_max`` over the truncated fast modes."""
    if isinstance(spectrum, EigenSpectrum):
        if M is None or M < 1:
            raise ValueError("M must be >= 1")
        fast = spectrum.lambdas[spectrum.null_dim: spectrum.null_dim + M]
    else:
        fast = np.asarray(spectrum)
    return 2.0 / float(np.max(fast))


def check_stability(system: TruncatedSystem, h: float) -> None:
    bad = np.nonzero(h * system.lambdas >= 2.0)[0]
    if bad.size:
        i = int(bad[np.argmax(system.lambdas[bad])])
        raise StabilityError(h, float(system.lambdas[i]), system.modes[i] if system.modes else None)


# ---------------------------------------------------------------------------
# diffusive scale


def micro_solve_diffusive(
    system: TruncatedSystem,
    X,
    params: HmmParams,
    state: MicroState,
    rng: RngStream,
):
    """Run the auxiliary micro system with the slow state frozen at ``X``.

    Returns ``(Y1, Y2, new_state)`` with paths of shape ``(K, lT+L+Lp, M)``
    and ``(K, lT+L, M)``; ``new_state`` holds the final values for the next
    macro step.
    """
    check_stability(system, params.h)
    h, K, M = params.h, params.K, system.M
    P1 = params.lT + params.L + params.Lp
    P2 = params.lT + params.L
    X = np.atleast_1d(np.asarray(X, dtype=float))
    rate = 1.0 - h * system.lambdas

    kicks = np.stack([rng.child(sample=j).normal((P1 - 1, M)) for j in range(K)])
    kicks *= math.sqrt(h) * system.q
    Y1 = linear_chain(state.Y1, rate, kicks)
    check_finite(Y1, "Y1")

    forcing = system.b0(X, Y1[:, : P2 - 1])
    if params.include_b1:
        if params.epsilon is None:
            raise ValueError("include_b1 needs epsilon")
        forcing = forcing + params.epsilon * system.b1(X, Y1[:, : P2 - 1])
    Y2 = linear_chain(state.Y2, rate, h * forcing)
    check_finite(Y2, "Y2")
    return Y1, Y2, MicroState(Y1[:, -1].copy(), Y2[:, -1].copy())


def _lag_window_sum(f: np.ndarray, start: int, L: int, Lp: int) -> np.ndarray:
    """``F[l] = sum_{l'=0}^{Lp} f[l + l']`` for ``l = start .. start+L-1`` (axis 1)."""
    cs = np.cumsum(f, axis=1)
    zero = np.zeros_like(cs[:, :1])
    cs = np.concatenate([zero, cs], axis=1)
    return cs[:, start + Lp + 1: start + L + Lp + 1] - cs[:, start: start + L]


def estimate_effective_coeffs(
    system: TruncatedSystem,
    X,
    params: HmmParams,
    Y1: np.ndarray,
    Y2: np.ndarray,
) -> EffectiveCoeffs:
    """Time-ensemble estimates of the effective drift and squared diffusion."""
    lT, L, Lp, h = params.lT, params.L, params.Lp, params.h
    if Y1.shape[1] < lT + L + Lp or Y2.shape[1] < lT + L:
        raise ValueError("micro paths are shorter than the averaging windows")
    X = np.atleast_1d(np.asarray(X, dtype=float))
    N = system.N
    K = Y1.shape[0]
    w = slice(lT, lT + L)
    Y1 = Y1[:, : lT + L + Lp]

    a0 = system.a0(X, Y1)  # (K, P1, N)
    grad = system._grad_a0(X, Y1)  # (K, P1, N, N+M)
    A1 = system.a1(X, Y1[:, w]).mean(axis=(0, 1))
    A2 = np.einsum("klmj,klj->m", grad[:, w, :, N:], Y2[:, w]) / (K * L)

    Fdx = _lag_window_sum(grad[..., :N], lT, L, Lp)  # (K, L, N, N)
    Fa0 = _lag_window_sum(a0, lT, L, Lp)  # (K, L, N)
    A3 = h * np.einsum("klmi,kli->m", Fdx, a0[:, w]) / (K * L)
    sig2 = 2.0 * h * np.einsum("klm,kli->mi", Fa0, a0[:, w]) / (K * L)

    clamped = False
    if N == 1:
        if sig2[0, 0] < 0:
            sig2 = np.zeros((1, 1))
            clamped = True
    else:
        sym = 0.5 * (sig2 + sig2.T)
        vals, vecs = np.linalg.eigh(sym)
        if np.any(vals < 0):
            clamped = True
            sig2 = (vecs * np.clip(vals, 0, None)) @ vecs.T
    return EffectiveCoeffs(A1 + A2 + A3, sig2, clamped)


Estimator = Callable[[np.ndarray, int], EffectiveCoeffs]


def hmm_macro_run_diffusive(
    system: TruncatedSystem,
    params: HmmParams,
    rng: RngStream,
    X0,
    dW: np.ndarray | None = None,
    estimator: Estimator | None = None,
) -> MacroRun:
    """Euler-Maruyama macro solver with on-the-fly coefficient estimates.

    ``dW`` are the macro Brownian increments (drawn from ``rng`` with purpose
    ``"macro"`` when omitted).  ``estimator(X, n)`` replaces the micro solver,
    mainly for tests.
    """
    check_stability(system, params.h)
    N, n_macro, dt = system.N, params.n_macro, params.dt_macro
    if N != 1:
        raise NotImplementedError("macro solver handles a scalar slow variable only")
    if dW is None:
        dW = math.sqrt(dt) * rng.child(purpose="macro").normal(n_macro)
    dW = np.asarray(dW, dtype=float).reshape(n_macro)

    X = np.empty((n_macro + 1, N))
    X[0] = X0
    abar = np.empty((n_macro, N))
    sig2 = np.empty((n_macro, N, N))
    clamped = np.zeros(n_macro, dtype=bool)
    state = MicroState.zeros(params.K, system.M)
    micro = rng.child(purpose="micro")
    for n in range(n_macro):
        if estimator is None:
            try:
                Y1, Y2, state = micro_solve_diffusive(system, X[n], params, state, micro.child(step=n))
            except Diverged as exc:
                raise Diverged(n, f"micro step {exc.step} {exc.where}".strip()) from exc
            est = estimate_effective_coeffs(system, X[n], params, Y1, Y2)
        else:
            est = estimator(X[n], n)
        abar[n] = est.abar
        sig2[n] = est.sigbar2
        clamped[n] = est.clamped
        X[n + 1] = X[n] + dt * est.abar + math.sqrt(max(float(est.sigbar2[0, 0]), 0.0)) * dW[n]
        if not np.all(np.isfinite(X[n + 1])):
            raise Diverged(n, "macro")
    times = dt * np.arange(n_macro + 1)
    return MacroRun(times, X, abar, sig2, clamped, {"scaling": "diffusive", "p": params.p})


# ---------------------------------------------------------------------------
# advective scale


@njit(cache=True)
def _advective_loop(y0, x, rate, eh, eps_nu, T, kicks):  # pragma: no cover - compiled
    K, P1, M = kicks.shape
    N = x.shape[0]
    n = N + M
    out = np.empty((K, P1 + 1, M))
    u = np.empty(n)
    for j in range(K):
        for m in range(M):
            out[j, 0, m] = y0[j, m]
        for i in range(N):
            u[i] = x[i]
        for l in range(P1):
            for m in range(M):
                u[N + m] = out[j, l, m]
            for m in range(M):
                b = 0.0
                for k in range(n):
                    uk = u[k]
                    if uk != 0.0:
                        for q in range(n):
                            b += T[k, q, N + m] * uk * u[q]
                b += eps_nu * u[N + m]
                out[j, l + 1, m] = rate[m] * u[N + m] + eh * b + kicks[j, l, m]
    return out


def micro_solve_advective(
    system: TruncatedSystem,
    X,
    params: HmmParams,
    state: MicroState,
    rng: RngStream,
):
    """Euler-Maruyama for the fast system at frozen ``X`` (no auxiliary process).

    ``Y[l+1] = Y[l] - h Lambda Y[l] + eps h b(X, Y[l]) + sqrt(h) Q J[l]`` with
    ``h = dt_micro / eps``.  Returns ``(Y, new_state)``, ``Y`` of shape
    ``(K, lT+L, M)``.
    """
    if params.epsilon is None:
        raise ValueError("the advective micro solver needs epsilon")
    check_stability(system, params.h)
    h, K, M, eps = params.h, params.K, system.M, params.epsilon
    P = params.lT + params.L
    X = np.atleast_1d(np.asarray(X, dtype=float))
    kicks = np.stack([rng.child(sample=j).normal((P - 1, M)) for j in range(K)])
    kicks *= math.sqrt(h) * system.q
    Y = _advective_loop(
        np.ascontiguousarray(state.Y1), X, 1.0 - h * system.lambdas, eps * h, eps * system.nu,
        np.ascontiguousarray(system.tensor), kicks,
    )
    check_finite(Y, "Y")
    return Y, replace(state, Y1=Y[:, -1].copy())


def estimate_averaged_drift(system: TruncatedSystem, X, params: HmmParams, Y: np.ndarray) -> np.ndarray:
    """Window average of ``a = a0 + eps a1`` over ``l = lT .. lT+L-1``."""
    w = slice(params.lT, params.lT + params.L)
    X = np.atleast_1d(np.asarray(X, dtype=float))
    a = system.a0(X, Y[:, w]) + params.epsilon * system.a1(X, Y[:, w])
    return a.mean(axis=(0, 1))


def hmm_macro_run_advective(
    system: TruncatedSystem,
    params: HmmParams,
    rng: RngStream,
    X0,
) -> MacroRun:
    """Forward-Euler macro solver driven by averaged micro simulations."""
    check_stability(system, params.h)
    N, n_macro, dt = system.N, params.n_macro, params.dt_macro
    X = np.empty((n_macro + 1, N))
    X[0] = X0
    abar = np.empty((n_macro, N))
    state = MicroState.zeros(params.K, system.M)
    micro = rng.child(purpose="micro")
    for n in range(n_macro):
        try:
            Y, state = micro_solve_advective(system, X[n], params, state, micro.child(step=n))
        except Diverged as exc:
            raise Diverged(n, f"micro step {exc.step} {exc.where}".strip()) from exc
        abar[n] = estimate_averaged_drift(system, X[n], params, Y)
        X[n + 1] = X[n] + dt * abar[n]
        if not np.all(np.isfinite(X[n + 1])):
            raise Diverged(n, "macro")
    times = dt * np.arange(n_macro + 1)
    return MacroRun(
        times, X, abar, np.zeros((n_macro, N, N)), np.zeros(n_macro, dtype=bool),
        {"scaling": "advective", "p": params.p, "epsilon": params.epsilon},
    )
