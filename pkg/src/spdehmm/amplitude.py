"""Analytic coefficients of the effective (averaged / homogenized) equations.

Diffusive scale, one-dimensional kernel: the slow amplitude obeys

    dX = (A X - Bc X^3) dt + sqrt(C + D X^2) dW.

Coefficients are stored in that convention throughout.  The Burgers tables
are usually quoted as ``sigma^2 = 2 (X^2 / 72 + C_M)``, i.e. with the additive
coefficient halved; :attr:`AmplitudeCoeffs.c_reduced` gives that number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .spectral import ModelSpec

DEFAULT_TAIL_TOL = 1e-10


class CenteringError(ValueError):
    """The quadratic slow drift does not average to zero; no diffusive limit."""


@dataclass(frozen=True)
class AmplitudeCoeffs:
    A: float
    Bc: float
    C: float
    D: float
    truncation: int | None = None  # None: infinite series, tail-estimated
    tail_bound: float = 0.0

    def __post_init__(self):
        if self.C < 0 or self.D < 0:
            raise ValueError("noise coefficients must be nonnegative")

    @property
    def c_reduced(self) -> float:
        """Additive coefficient in the ``2 (D/2 X^2 + c)`` form."""
        return 0.5 * self.C

    @property
    def d_reduced(self) -> float:
        return 0.5 * self.D

    def drift(self, X):
        return self.A * X - self.Bc * X**3

    def diffusion(self, X):
        var = self.C + self.D * np.square(X)
        assert not np.any(var < 0), "negative diffusion radicand"
        return np.sqrt(var)


def amplitude_drift_diffusion(coeffs: AmplitudeCoeffs, X):
    """Return ``(A X - Bc X^3, sqrt(C + D X^2))``; works elementwise on arrays."""
    return coeffs.drift(X), coeffs.diffusion(X)


def _fast_arrays(model: ModelSpec, M: int):
    if model.N != 1:
        raise NotImplementedError("scalar amplitude equations only (null_dim == 1)")
    n = M + 1
    if n > model.n_modes:
        raise ValueError(f"model defines only {model.n_modes} modes, need {n}")
    lam = np.array(model.spectrum.lambdas[1:n])
    q2 = np.square(np.array(model.noise.q[1:n]))
    T = model.tensor.dense(n)
    return lam, q2, T


def homog_coeffs_general(model: ModelSpec, M: int) -> AmplitudeCoeffs:
    """Homogenized coefficients of the truncation to fast modes ``2..M+1``."""
    lam, q2, T = _fast_arrays(model, M)
    if np.any(lam <= 0):
        raise ValueError("fast eigenvalues must be positive")
    scale = max(np.max(np.abs(T)), 1.0)
    diag = np.array([T[k, k, 0] for k in range(M + 1)])
    if np.any(np.abs(diag) > 1e-13 * scale):
        bad = int(np.argmax(np.abs(diag))) + 1
        raise CenteringError(f"B[{bad},{bad},1] = {diag[bad - 1]:g} violates the centering condition")

    F = T[1:, 1:, :]  # fast-fast block, global modes 2..M+1
    Bk11 = T[1:, 0, 0]
    B11k = T[0, 0, 1:]
    Bllk = np.einsum("llk->lk", F[:, :, 1:])  # [l, k] = B_{l l k}
    Bkl1 = F[:, :, 0]
    Bk1l = T[1:, 0, 1:]  # [k, l] = B_{k 1 l}
    lk = lam[:, None]
    ll = lam[None, :]

    A = (
        model.nu
        + np.sum(2.0 * Bk11**2 * q2 / lam**2)
        + np.sum(Bk11[:, None] * Bllk.T * q2[None, :] / (lk * ll))
        + np.sum(2.0 * Bkl1 * Bk1l / (lk + ll) * (q2 / lam)[:, None])
    )
    Bc = -np.sum(2.0 * Bk11 * B11k / lam)
    C = np.sum(2.0 * Bkl1**2 * q2[:, None] * q2[None, :] / ((lk + ll) ** 2 * lk))
    D = np.sum(4.0 * Bk11**2 * q2 / lam**2)
    return AmplitudeCoeffs(float(A), float(Bc), float(C), float(D), truncation=M)


# ---------------------------------------------------------------------------
# Burgers series


def _burgers_q(q, ks: np.ndarray) -> np.ndarray:
    if callable(q):
        return np.asarray(q(ks), dtype=float)
    if np.isscalar(q):
        return np.full(ks.shape, float(q))
    arr = np.asarray(q, dtype=float)  # indexed by global mode, arr[0] <-> k = 1
    out = np.zeros(ks.shape)
    inside = ks <= arr.size
    out[inside] = arr[ks[inside] - 1]
    return out


def _burgers_series(q, nu: float, K: int):
    lam = lambda k: k * k - 1.0  # noqa: E731
    ks = np.arange(2, K + 1)
    qk = _burgers_q(q, ks) ** 2
    qk1 = _burgers_q(q, ks + 1) ** 2
    q2 = float(_burgers_q(q, np.array([2]))[0] ** 2)
    lk, lk1 = lam(ks), lam(ks + 1)
    den = (lk + lk1) * lk * lk1
    A = nu + q2 / (8.0 * lam(2) ** 2) + np.sum((ks * lk * qk1 - lk1 * qk * (ks + 1)) / den) / 8.0
    C = np.sum(qk * qk1 / den) / 16.0
    return float(A), float(C), q2


def burgers_homog_coeffs(
    q: float | Sequence[float] | Callable[[np.ndarray], np.ndarray] = 1.0,
    nu: float = 0.0,
    M: int | None = None,
    *,
    q_bound: float | None = None,
    tol: float = DEFAULT_TAIL_TOL,
) -> AmplitudeCoeffs:
    """Closed-form Burgers amplitude coefficients (plain sine basis, ``k^2 - 1``).

    The ``A`` and ``C`` series are summed over ``k = 2..M+1``; their terms
    involve mode ``k + 1`` as well.  ``M=None`` sums until an analytic bound on
    the remainder drops below ``tol``.

    ``q`` is a constant, a sequence indexed by global mode (``q[0]`` is the
    kernel mode) or a callable ``k -> q_k``; callables need ``q_bound`` for
    the infinite series.
    """
    lam2 = 3.0
    tail = 0.0
    if M is not None:
        if M < 1:
            raise ValueError("M must be >= 1")
        K = M + 1
    elif np.isscalar(q):
        # constant forcing: terms cancel down to O(k^-4)
        q0 = float(q) ** 2
        K = 2 + math.ceil((q0 / (16.0 * tol)) ** (1 / 3))
        tail = max(q0 / (16.0 * (K - 1) ** 3), 2.0 * q0**2 / (160.0 * (K - 1) ** 5))
    elif callable(q):
        if q_bound is None:
            raise ValueError("q_bound is required for an infinite series with callable q")
        qm = float(q_bound) ** 2
        K = 2 + math.ceil(math.sqrt(qm / (16.0 * tol)))
        tail = max(qm / (16.0 * (K - 1) ** 2), 2.0 * qm**2 / (160.0 * (K - 1) ** 5))
    else:
        K = len(q)  # all later terms vanish
    A, C, q2 = _burgers_series(q, nu, max(K, 2))
    return AmplitudeCoeffs(
        A=A,
        Bc=1.0 / (4.0 * lam2),
        C=2.0 * C,
        D=q2 / (4.0 * lam2**2),
        truncation=M,
        tail_bound=tail,
    )


def limit_coeffs(model: ModelSpec, cap: int = 64) -> AmplitudeCoeffs:
    """Infinite-mode coefficients for ``model``.

    Burgers uses the closed-form series; other spectra are summed through
    ``cap`` fast modes, the tail estimated from the change since ``cap // 2``.
    """
    from .spectral import burgers_tensor, custom_model, ks_spectrum

    if model.name == "burgers":
        q = model.noise.q
        if len(set(q[1:])) == 1:
            qspec = q[1]
        else:
            qspec = q
        return burgers_homog_coeffs(qspec, model.nu)
    if model.name == "ks":
        q = model.noise.q
        qfull = list(q) + [q[-1] if len(set(q[1:])) == 1 else 0.0] * (cap + 1 - len(q))
        big = custom_model(ks_spectrum(cap).lambdas, qfull[: cap + 1], burgers_tensor(cap).entries, model.nu)
    else:
        big = model
        cap = model.n_modes - 1
    full = homog_coeffs_general(big, cap)
    half = homog_coeffs_general(big, max(cap // 2, 1))
    tail = max(abs(full.A - half.A), abs(full.C - half.C))
    return AmplitudeCoeffs(full.A, full.Bc, full.C, full.D, None, tail)


# ---------------------------------------------------------------------------
# advective scale


@dataclass(frozen=True)
class AveragedCoeffs:
    D_adv: float
    E_adv: float
    nu: float = 0.0

    def drift(self, x):
        return self.D_adv * x**2 + self.nu * x + self.E_adv


def averaged_coeffs(model: ModelSpec, M: int) -> AveragedCoeffs:
    """``dX/dt = D X^2 + nu X + E`` with ``E = sum_k q_k^2 / (2 lam_k) B[k,k,1]``."""
    lam, q2, T = _fast_arrays(model, M)
    E = np.sum(q2 / (2.0 * lam) * np.array([T[k, k, 0] for k in range(1, M + 1)]))
    return AveragedCoeffs(float(T[0, 0, 0]), float(E), float(model.nu))


def _riccati_shift(c: AveragedCoeffs, x0: float):
    # x' = D x^2 + nu x + E  ->  z' = D z^2 + E', z = x + nu / (2D)
    shift = c.nu / (2.0 * c.D_adv)
    return x0 + shift, c.E_adv - c.nu**2 / (4.0 * c.D_adv), shift


def blow_up_time(c: AveragedCoeffs, x0: float) -> float:
    """First time the averaged solution leaves every bounded set (``inf`` if never)."""
    D = c.D_adv
    if D == 0.0:
        return math.inf
    z0, E, _ = _riccati_shift(c, x0)
    if D < 0:  # w = -z solves w' = |D| w^2 - E
        D, E, z0 = -D, -E, -z0
    if E > 0:
        w = math.sqrt(E * D)
        return (math.pi / 2.0 - math.atan(D * z0 / w)) / w
    if E == 0:
        return 1.0 / (D * z0) if z0 > 0 else math.inf
    r = math.sqrt(-E / D)
    if z0 <= r:
        return math.inf
    kappa = (z0 - r) / (z0 + r)
    return -math.log(kappa) / (2.0 * D * r)


def averaged_closed_form(c: AveragedCoeffs, x0: float, t):
    """Exact solution of the averaged equation at time(s) ``t``.

    For ``D, E > 0`` and ``nu = 0`` this is
    ``sqrt(E/D) tan(sqrt(E D) t + arctan(D x0 / sqrt(E D)))``; the other sign
    patterns use the matching affine, rational or hyperbolic forms.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t >= blow_up_time(c, x0)):
        raise ValueError(f"t beyond the blow-up time {blow_up_time(c, x0):.6g}")
    D = c.D_adv
    if D == 0.0:
        if c.nu == 0.0:
            return x0 + c.E_adv * t
        g = np.exp(c.nu * t)
        return x0 * g + c.E_adv * (g - 1.0) / c.nu
    z0, E, shift = _riccati_shift(c, x0)
    sign = 1.0
    if D < 0:
        D, E, z0, sign = -D, -E, -z0, -1.0
    if E > 0:
        w = math.sqrt(E * D)
        z = math.sqrt(E / D) * np.tan(w * t + math.atan(D * z0 / w))
    elif E == 0:
        z = z0 / (1.0 - D * z0 * t)
    else:
        r = math.sqrt(-E / D)
        if z0 + r == 0.0:
            z = np.full(t.shape, -r)
        else:
            g = (z0 - r) / (z0 + r) * np.exp(2.0 * D * r * t)
            z = r * (1.0 + g) / (1.0 - g)
    return sign * z - shift


def ou_stationary_variance(lam: float, q: float, h: float | None = None) -> float:
    """Stationary variance of ``dY = -lam Y dt + q dW``.

    With ``h`` given, the variance of its Euler-Maruyama chain with step ``h``,
    ``q^2 / (lam (2 - lam h))``.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if h is None:
        return q * q / (2.0 * lam)
    if h <= 0 or h * lam >= 2.0:
        raise ValueError(f"unstable chain: h*lam = {h * lam:g} must lie in (0, 2)")
    return q * q / (lam * (2.0 - lam * h))
