"""Spectral description of SPDEs with a quadratic nonlinearity.

Modes carry their global index ``k = 1, 2, ...`` everywhere in this module;
the first ``null_dim`` modes span the kernel of the linear operator (the slow
variables), the remaining ones are fast.  Relabelling of the fast modes as
``y_1, y_2, ...`` only happens when results are displayed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

SQRT_HALF_PI = math.sqrt(math.pi / 2.0)


class Scaling(str, enum.Enum):
    DIFFUSIVE = "diffusive"
    ADVECTIVE = "advective"


class QuadratureError(RuntimeError):
    """Raised when Gauss-Legendre quadrature fails to settle."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual estimate {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class EigenSpectrum:
    lambdas: tuple[float, ...]
    null_dim: int = 1

    def __post_init__(self):
        lam = tuple(float(v) for v in self.lambdas)
        object.__setattr__(self, "lambdas", lam)
        if self.null_dim < 0 or self.null_dim > len(lam):
            raise ValueError("null_dim out of range")
        if any(v != 0.0 for v in lam[: self.null_dim]):
            raise ValueError("kernel modes must have zero eigenvalue")
        if any(v <= 0.0 for v in lam[self.null_dim:]):
            raise ValueError("fast modes must have positive eigenvalues")

    def __len__(self) -> int:
        return len(self.lambdas)

    def __getitem__(self, k: int) -> float:
        """Eigenvalue of global mode ``k`` (1-based)."""
        return self.lambdas[k - 1]


@dataclass(frozen=True)
class NoiseSpectrum:
    q: tuple[float, ...]

    def __post_init__(self):
        q = tuple(float(v) for v in self.q)
        if any(v < 0.0 for v in q):
            raise ValueError("noise amplitudes must be nonnegative")
        object.__setattr__(self, "q", q)

    def __len__(self) -> int:
        return len(self.q)

    def __getitem__(self, k: int) -> float:
        return self.q[k - 1]


@dataclass(frozen=True)
class InteractionTensor:
    """Sparse symmetric coefficients ``B[k, l, m] = <B(e_k, e_l), e_m>``.

    Entries are stored once per unordered pair ``(k, l)`` with ``k <= l``.
    ``basis_scale`` holds the factors ``c_k`` of the basis the entries refer
    to (all ones for an orthonormal basis).
    """

    entries: Mapping[tuple[int, int, int], float]
    n_modes: int
    basis_scale: tuple[float, ...] = ()

    def __post_init__(self):
        canon: dict[tuple[int, int, int], float] = {}
        for (k, l, m), v in self.entries.items():
            if min(k, l, m) < 1 or max(k, l, m) > self.n_modes:
                raise ValueError(f"index {(k, l, m)} outside 1..{self.n_modes}")
            key = (min(k, l), max(k, l), m)
            v = float(v)
            if key in canon and canon[key] != v:
                raise ValueError(f"asymmetric entries for {key}")
            if v != 0.0:
                canon[key] = v
        object.__setattr__(self, "entries", canon)
        scale = tuple(float(c) for c in self.basis_scale) or (1.0,) * self.n_modes
        if len(scale) != self.n_modes:
            raise ValueError("basis_scale length must equal n_modes")
        object.__setattr__(self, "basis_scale", scale)

    @classmethod
    def from_dense(cls, arr: np.ndarray, basis_scale: Sequence[float] = ()) -> "InteractionTensor":
        arr = np.asarray(arr, dtype=float)
        n = arr.shape[0]
        if not np.allclose(arr, arr.transpose(1, 0, 2), rtol=0, atol=0):
            raise ValueError("dense tensor is not symmetric in its first two indices")
        entries = {
            (k + 1, l + 1, m + 1): arr[k, l, m]
            for k, l, m in zip(*np.nonzero(arr))
            if k <= l
        }
        return cls(entries, n, tuple(basis_scale))

    def __call__(self, k: int, l: int, m: int) -> float:
        return self.entries.get((min(k, l), max(k, l), m), 0.0)

    def dense(self, n: int | None = None) -> np.ndarray:
        """Dense array ``T[k-1, l-1, m-1]`` restricted to modes ``1..n``."""
        n = self.n_modes if n is None else n
        if n > self.n_modes:
            raise ValueError(f"tensor only defined through mode {self.n_modes}")
        out = np.zeros((n, n, n))
        for (k, l, m), v in self.entries.items():
            if l <= n and m <= n:
                out[k - 1, l - 1, m - 1] = v
                out[l - 1, k - 1, m - 1] = v
        return out

    def truncate(self, n: int) -> "InteractionTensor":
        return InteractionTensor(
            {key: v for key, v in self.entries.items() if max(key) <= n},
            n,
            self.basis_scale[:n],
        )


@dataclass(frozen=True)
class ModelSpec:
    spectrum: EigenSpectrum
    tensor: InteractionTensor
    noise: NoiseSpectrum
    nu: float = 0.0
    scaling: Scaling = Scaling.DIFFUSIVE
    epsilon: float | None = None
    name: str = "custom"

    def __post_init__(self):
        N = self.spectrum.null_dim
        if any(v != 0.0 for v in self.noise.q[:N]):
            raise ValueError("noise must not act on the kernel modes")
        object.__setattr__(self, "scaling", Scaling(self.scaling))
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @property
    def N(self) -> int:
        return self.spectrum.null_dim

    @property
    def n_modes(self) -> int:
        return min(len(self.spectrum), len(self.noise), self.tensor.n_modes)


# ---------------------------------------------------------------------------
# built-in spectra and tensors


def burgers_spectrum(M: int) -> EigenSpectrum:
    """Dirichlet spectrum of ``d^2/dx^2 + 1`` on ``[0, pi]``: ``k^2 - 1``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    return EigenSpectrum(tuple(float(k * k - 1) for k in range(1, M + 2)), 1)


def ks_spectrum(M: int) -> EigenSpectrum:
    if M < 1:
        raise ValueError("M must be >= 1")
    return EigenSpectrum(tuple(float(k**4 - k**2) for k in range(1, M + 2)), 1)


def burgers_tensor(M: int, normalized: bool = False) -> InteractionTensor:
    """Closed-form tensor of ``B(u, v) = d/dx (u v) / 2`` in the sine basis.

    With ``normalized=True`` the basis is ``sqrt(2/pi) sin(kx)``; otherwise
    the plain ``sin(kx)`` basis, obtained through :func:`basis_rescale`.
    Covers modes ``1..M+1``.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    n = M + 1
    pref = 1.0 / (2.0 * math.sqrt(2.0 * math.pi))
    entries = {}
    for k in range(1, n + 1):
        for l in range(k, n + 1):
            if k + l <= n:
                entries[(k, l, k + l)] = pref * (k + l)
            d = l - k
            if 1 <= d <= n:
                entries[(k, l, d)] = entries.get((k, l, d), 0.0) - pref * d
    tensor = InteractionTensor(entries, n)
    if normalized:
        return tensor
    rescaled, _ = basis_rescale(tensor, NoiseSpectrum((0.0,) * n), (SQRT_HALF_PI,) * n)
    return rescaled


def basis_rescale(
    tensor: InteractionTensor, noise: NoiseSpectrum, c: Sequence[float]
) -> tuple[InteractionTensor, NoiseSpectrum]:
    """Express tensor and noise in the basis ``c_k e_k``.

    ``B_hat[k,l,m] = c_k c_l / c_m * B[k,l,m]`` and ``q_hat_k = c_k q_k``.
    """
    c = tuple(float(v) for v in c)
    if any(v == 0.0 for v in c):
        raise ValueError("basis scale factors must be nonzero")
    n = tensor.n_modes
    if len(c) < n or len(c) < len(noise):
        raise ValueError("not enough scale factors")
    entries = {
        (k, l, m): c[k - 1] * c[l - 1] / c[m - 1] * v
        for (k, l, m), v in tensor.entries.items()
    }
    scale = tuple(s * f for s, f in zip(tensor.basis_scale, c))
    q = tuple(c[k] * v for k, v in enumerate(noise.q))
    return InteractionTensor(entries, n, scale), NoiseSpectrum(q)


# ---------------------------------------------------------------------------
# quadrature oracle


@dataclass(frozen=True)
class SineBasis:
    """``sin(kx)`` on ``[0, pi]``, optionally scaled to unit L2 norm."""

    normalized: bool = True
    domain: tuple[float, float] = (0.0, math.pi)

    @property
    def _amp(self) -> float:
        return math.sqrt(2.0 / math.pi) if self.normalized else 1.0

    def value(self, k: int, x: np.ndarray) -> np.ndarray:
        return self._amp * np.sin(k * x)

    def deriv(self, k: int, x: np.ndarray) -> np.ndarray:
        return self._amp * k * np.cos(k * x)

    def norm2(self, k: int) -> float:
        return 1.0 if self.normalized else math.pi / 2.0


def burgers_nonlinearity(basis: SineBasis, k: int, l: int, x: np.ndarray) -> np.ndarray:
    # d/dx (e_k e_l) / 2 by the product rule
    return 0.5 * (basis.deriv(k, x) * basis.value(l, x) + basis.value(k, x) * basis.deriv(l, x))


def _gauss_legendre(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def tensor_by_quadrature(
    basis: SineBasis,
    nonlinearity: Callable[[SineBasis, int, int, np.ndarray], np.ndarray],
    M: int,
    n_points: int = 64,
    tol: float = 1e-12,
) -> InteractionTensor:
    """Galerkin coefficients ``<B(e_k, e_l), e_m> / <e_m, e_m>`` by quadrature.

    The rule is applied with ``n_points`` and ``2 n_points`` nodes; the
    difference serves as residual estimate.
    """
    n = M + 1
    a, b = basis.domain
    rules = [_gauss_legendre(n_points, a, b), _gauss_legendre(2 * n_points, a, b)]
    results = []
    for x, w in rules:
        em = np.array([basis.value(m, x) / basis.norm2(m) for m in range(1, n + 1)])
        arr = np.zeros((n, n, n))
        for k in range(1, n + 1):
            for l in range(k, n + 1):
                arr[k - 1, l - 1] = em @ (w * nonlinearity(basis, k, l, x))
                arr[l - 1, k - 1] = arr[k - 1, l - 1]
        results.append(arr)
    residual = float(np.max(np.abs(results[1] - results[0])))
    if residual > tol:
        raise QuadratureError("quadrature did not converge", residual)
    arr = results[1]
    arr[np.abs(arr) < tol] = 0.0
    scale = (1.0,) * n if basis.normalized else (SQRT_HALF_PI,) * n
    return InteractionTensor.from_dense(arr, scale)


# ---------------------------------------------------------------------------
# model constructors


def _noise_values(q: str | float | Sequence[float], n: int, N: int = 1) -> NoiseSpectrum:
    if isinstance(q, str):
        if q != "ones":
            raise ValueError(f"unknown noise specification {q!r}")
        vals = [1.0] * n
    elif np.isscalar(q):
        vals = [float(q)] * n
    else:
        vals = [float(v) for v in q]
        if len(vals) == n - N:
            vals = [0.0] * N + vals
        elif len(vals) < n:
            vals = vals + [0.0] * (n - len(vals))
    vals = vals[:n]
    for i in range(N):
        vals[i] = 0.0
    return NoiseSpectrum(tuple(vals))


def burgers_model(M: int, nu: float = 0.0, q="ones", **kw) -> ModelSpec:
    """Dirichlet Burgers model in the plain sine basis, modes ``1..M+1``."""
    return ModelSpec(
        burgers_spectrum(M), burgers_tensor(M), _noise_values(q, M + 1), nu, name="burgers", **kw
    )


def ks_model(M: int, nu: float = 0.0, q="ones", **kw) -> ModelSpec:
    # same nonlinearity and eigenfunctions as Burgers, stiffer spectrum
    return ModelSpec(ks_spectrum(M), burgers_tensor(M), _noise_values(q, M + 1), nu, name="ks", **kw)


def custom_model(
    lambdas: Sequence[float],
    q: Sequence[float],
    entries: Iterable[tuple[int, int, int, float]] | Mapping[tuple[int, int, int], float],
    nu: float = 0.0,
    null_dim: int = 1,
    **kw,
) -> ModelSpec:
    lambdas = list(lambdas)
    if len(lambdas) and lambdas[0] != 0.0 and null_dim == 1:
        # only fast rates given
        lambdas = [0.0] + lambdas
    n = len(lambdas)
    if isinstance(entries, Mapping):
        ent = dict(entries)
    else:
        ent = {(int(k), int(l), int(m)): float(v) for k, l, m, v in entries}
    return ModelSpec(
        EigenSpectrum(tuple(lambdas), null_dim),
        InteractionTensor(ent, n),
        _noise_values(q, n, null_dim),
        nu,
        **kw,
    )


# ---------------------------------------------------------------------------
# truncated fast-slow system


@dataclass(frozen=True)
class TruncatedSystem:
    """Fast-slow SDE system with ``N`` slow and ``M`` fast modes.

    All evaluators broadcast over leading axes: ``x`` has shape ``(..., N)``
    and ``y`` shape ``(..., M)``.
    """

    N: int
    M: int
    lambdas: np.ndarray  # fast rates, diagonal of Lambda_M
    q: np.ndarray  # fast noise amplitudes, diagonal of Q_M
    nu: float
    tensor: np.ndarray = field(repr=False)  # dense (N+M, N+M, N+M)
    modes: tuple[int, ...] = ()  # global indices of the fast modes

    @property
    def lambda_max(self) -> float:
        return float(np.max(self.lambdas))

    def _u(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        lead = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
        return np.concatenate(
            [np.broadcast_to(x, lead + x.shape[-1:]), np.broadcast_to(y, lead + y.shape[-1:])],
            axis=-1,
        )

    def _quad(self, u: np.ndarray, out: slice) -> np.ndarray:
        T = self.tensor[:, :, out]
        return np.einsum("...k,klm,...l->...m", u, T, u, optimize=True)

    def a0(self, x, y) -> np.ndarray:
        return self._quad(self._u(x, y), slice(0, self.N))

    def b0(self, x, y) -> np.ndarray:
        return self._quad(self._u(x, y), slice(self.N, None))

    def a1(self, x, y) -> np.ndarray:
        return self.nu * self._u(x, y)[..., : self.N]

    def b1(self, x, y) -> np.ndarray:
        return self.nu * self._u(x, y)[..., self.N:]

    def _grad_a0(self, x, y) -> np.ndarray:
        # d a0^m / d u_j = 2 sum_k T[k, j, m] u_k, shape (..., N, N+M)
        u = self._u(x, y)
        return 2.0 * np.einsum("...k,kjm->...mj", u, self.tensor[:, :, : self.N], optimize=True)

    def da0_dx(self, x, y) -> np.ndarray:
        return self._grad_a0(x, y)[..., :, : self.N]

    def da0_dy(self, x, y) -> np.ndarray:
        return self._grad_a0(x, y)[..., :, self.N:]


def build_truncated_system(model: ModelSpec, M: int) -> TruncatedSystem:
    N = model.N
    n = N + M
    if n > model.n_modes:
        raise ValueError(
            f"truncation N+M={n} exceeds the {model.n_modes} modes defined by the model"
        )
    return TruncatedSystem(
        N=N,
        M=M,
        lambdas=np.array(model.spectrum.lambdas[N:n]),
        q=np.array(model.noise.q[N:n]),
        nu=float(model.nu),
        tensor=model.tensor.dense(n),
        modes=tuple(range(N + 1, n + 1)),
    )
