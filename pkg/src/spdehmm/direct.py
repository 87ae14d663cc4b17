"""Reference solvers: Euler-Maruyama on amplitude equations, brute-force stiff
integration of the truncated system at finite eps, and field reconstruction."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .amplitude import AmplitudeCoeffs
from .sde import Diverged, RngStream
from .spectral import Scaling, TruncatedSystem

DEFAULT_STEP_BUDGET = 10**9
SERIES_ORDER = ("X_hmm", "X_hom", "X_inf")


class BudgetExceeded(RuntimeError):
    pass


def fmt(v: float) -> str:
    return format(float(v), ".17g")


@dataclass
class Trajectory:
    """Slow-mode series on a shared macro grid."""

    times: np.ndarray
    series: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def columns(self) -> list[str]:
        known = [c for c in SERIES_ORDER if c in self.series]
        return known + sorted(c for c in self.series if c not in SERIES_ORDER)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key in ("config_hash", "seed"):
            if key in self.meta:
                buf.write(f"# {key}={self.meta[key]}\n")
        w = csv.writer(buf, lineterminator="\n")
        cols = self.columns()
        w.writerow(["t"] + cols)
        for i, t in enumerate(self.times):
            w.writerow([fmt(t)] + [fmt(self.series[c][i]) for c in cols])
        return buf.getvalue()


def run_amplitude_em(coeffs: AmplitudeCoeffs, X0: float, dt: float, dW: np.ndarray) -> np.ndarray:
    """``X[n+1] = X[n] + dt a(X[n]) + sigma(X[n]) dW[n]``; returns ``len(dW) + 1`` values.

    ``dW`` may carry extra trailing axes for independent replicas.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    dW = np.asarray(dW, dtype=float)
    X = np.empty((dW.shape[0] + 1,) + dW.shape[1:])
    X[0] = X0
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(dW.shape[0]):
            x = X[n]
            X[n + 1] = x + dt * coeffs.drift(x) + coeffs.diffusion(x) * dW[n]
            if not np.all(np.isfinite(X[n + 1])):
                raise Diverged(n, "amplitude")
    return X


def run_direct_stiff(
    system: TruncatedSystem,
    epsilon: float,
    dt_micro: float,
    T: float,
    rng: RngStream,
    *,
    x0=0.0,
    y0=None,
    replicas: int = 1,
    dt_out: float | None = None,
    scaling: Scaling = Scaling.DIFFUSIVE,
    budget: int = DEFAULT_STEP_BUDGET,
    return_fast: bool = False,
):
    """Euler-Maruyama on the full truncated system at explicit ``epsilon``.

    Returns ``(times, x)`` with ``x`` of shape ``(len(times), replicas, N)``
    sampled every ``dt_out``; with ``return_fast`` also the fast modes.
    Replicas are integrated together, one vectorised step at a time.
    """
    scaling = Scaling(scaling)
    eps = float(epsilon)
    stiff = eps**2 if scaling is Scaling.DIFFUSIVE else eps
    if dt_micro * system.lambda_max / stiff >= 2.0:
        raise ValueError(
            f"dt_micro={dt_micro:g} does not resolve the fast scale: "
            f"need dt_micro < {2.0 * stiff / system.lambda_max:g}"
        )
    dt_out = T if dt_out is None else dt_out
    sub = int(round(dt_out / dt_micro))
    n_out = int(round(T / dt_out))
    if sub < 1 or not math.isclose(sub * dt_micro, dt_out, rel_tol=1e-9):
        raise ValueError("dt_out must be a multiple of dt_micro")
    cost = n_out * sub * (system.N + system.M) * replicas
    if cost > budget:
        raise BudgetExceeded(
            f"{cost:.3g} mode-steps exceed the budget of {budget:.3g}; use the HMM solver instead"
        )

    N, M = system.N, system.M
    x = np.broadcast_to(np.asarray(x0, dtype=float), (replicas, N)).copy()
    y = np.zeros((replicas, M)) if y0 is None else np.broadcast_to(y0, (replicas, M)).astype(float)
    if scaling is Scaling.DIFFUSIVE:
        ca, cl, cn, lin = 1.0 / eps, 1.0 / eps**2, 1.0 / eps, system.nu
    else:
        ca, cl, cn, lin = 1.0, 1.0 / eps, 1.0 / math.sqrt(eps), eps * system.nu
    sq = math.sqrt(dt_micro) * cn * system.q
    xs = np.empty((n_out + 1, replicas, N))
    ys = np.empty((n_out + 1, replicas, M))
    xs[0], ys[0] = x, y
    for i in range(n_out):
        kicks = rng.child(purpose="direct", step=i).normal((sub, replicas, M)) * sq
        for s in range(sub):
            u = np.concatenate([x, y], axis=-1)
            quad = np.einsum("rk,klm,rl->rm", u, system.tensor, u)
            x = x + dt_micro * (ca * quad[:, :N] + lin * x)
            y = y + dt_micro * (-cl * system.lambdas * y + ca * quad[:, N:] + lin * y) + kicks[s]
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise Diverged(i * sub, "direct")
        xs[i + 1], ys[i + 1] = x, y
    times = dt_out * np.arange(n_out + 1)
    if return_fast:
        return times, xs, ys
    return times, xs


def reconstruct_field(X, x_grid, Y=None, modes=None) -> np.ndarray:
    """``u(x, t) = X(t) sin(x) + sum_k Y_k(t) sin(k x)`` on ``[0, pi]``.

    ``X`` has shape ``(n_t,)``; ``Y`` (optional) ``(n_t, M)`` with global mode
    numbers ``modes`` (default ``2..M+1``).  Returns ``(n_t, n_x)``.
    """
    x_grid = np.asarray(x_grid, dtype=float)
    if np.any(x_grid < 0) or np.any(x_grid > math.pi):
        raise ValueError("grid points must lie in [0, pi]")
    X = np.asarray(X, dtype=float).reshape(-1)
    u = X[:, None] * np.sin(x_grid)[None, :]
    if Y is not None:
        Y = np.asarray(Y, dtype=float).reshape(X.size, -1)
        modes = np.arange(2, Y.shape[1] + 2) if modes is None else np.asarray(modes)
        u = u + Y @ np.sin(np.outer(modes, x_grid))
    return u


def field_csv(times, x_grid, u, meta: dict | None = None) -> str:
    buf = io.StringIO()
    for key, val in (meta or {}).items():
        buf.write(f"# {key}={val}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x", "u"])
    for i, t in enumerate(times):
        for j, xv in enumerate(x_grid):
            w.writerow([fmt(t), fmt(xv), fmt(u[i, j])])
    return buf.getvalue()
