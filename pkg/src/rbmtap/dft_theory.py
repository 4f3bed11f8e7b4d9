"""
Large-system predictions for the iteration ``gamma(t) = A f(gamma(t-1))``.

Each component of ``gamma_k(t)`` behaves as a zero-mean Gaussian process with
two-time covariance ``C_k(t, s)``.  The covariances obey a closed recursion
through ``g_k(x) = E[f_k(z) f_k(z')]`` and the coefficients of ``Theta``; its
linearisation around ``C = qhat`` gives the convergence rate ``mu_gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quadrature
from .errors import DomainError, NumericalError, UsageError
from .order_params import (OrderParams, SolverConfig, ThetaCoefficients, solve_rs_fixed_point,
                           theta_analytic)
from .tables import write_csv, write_json

SLACK = 1e-12
MISMATCH_LIMIT = 1e-8    # solver-level disagreement in Theta g(qhat) = qhat
NEAR_CRITICAL = 0.05


def f_k(z, h, chi):
    return np.tanh(h + z) / chi - z


def g_function(x, h: float, chi: float, qhat: float, order: int = 60,
               method: str = "trapezoid"):
    """``E[f(z) f(z')]`` for ``(z, z')`` Gaussian with variances ``qhat``, covariance ``x``.

    ``x`` may be a scalar or an array.  Writing ``z = sqrt(qhat) u`` and
    ``z' = rho u + r v`` with independent standard normals, both one-dimensional
    rules are those of ``quadrature.normal_rule(qhat)``: the poles of ``f(z')``
    in ``u`` or ``v`` are no closer to the real axis than those of ``f(z)``.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < 0) or np.any(xs > qhat):
        raise DomainError(f"covariance must lie in [0, {qhat}], got {xs.min()}..{xs.max()}")
    if qhat == 0:
        out = np.full(xs.shape, f_k(0.0, h, chi) ** 2)
    else:
        u, w = quadrature.normal_rule(qhat, order, method)
        sq = np.sqrt(qhat)
        fz = f_k(sq * u, h, chi)
        rho = xs / sq
        resid = np.sqrt(np.maximum(qhat - rho ** 2, 0.0))
        out = np.empty(xs.shape)
        chunk = max(1, 2_000_000 // (u.size * u.size))
        for i in range(0, xs.size, chunk):
            sl = slice(i, i + chunk)
            # z' = rho u + resid v on an (x, u, v) grid
            zp = rho[sl, None, None] * u[None, :, None] + resid[sl, None, None] * u[None, None, :]
            out[sl] = (f_k(zp, h, chi) @ w) @ (w * fz)
    return float(out[0]) if np.ndim(x) == 0 else out


def g_prime(h: float, chi: float, qhat: float, order: int = 60,
            method: str = "trapezoid") -> float:
    """``E[f'(z)^2]`` with ``f'(z) = tanh'(h + z) / chi - 1``, ``z ~ N(0, qhat)``."""
    if qhat < 0:
        raise DomainError(f"qhat must be nonnegative, got {qhat}")
    return quadrature.expect(lambda y: (quadrature.sech2(y) / chi - 1.0) ** 2, h, qhat,
                             order, method)


class _GCache:
    """``g_k`` values keyed by their exact argument.

    Off-diagonal covariances depend on ``min(t, s)`` only, so every row of the
    recursion repeats arguments of the previous row bit for bit.
    """

    def __init__(self, h, chi, qhat, order):
        self.args = (h, chi, qhat, order)
        self.values: dict[float, float] = {}

    def __call__(self, x: np.ndarray) -> np.ndarray:
        missing = [v for v in np.unique(x).tolist() if v not in self.values]
        if missing:
            new = g_function(np.array(missing), *self.args)
            self.values.update(zip(missing, np.atleast_1d(new).tolist()))
        return np.array([self.values[v] for v in x.tolist()])


@dataclass(frozen=True)
class TwoTimeCovariance:
    """Covariances ``C_k(t, s)`` for ``t, s = 1..T`` (row/column ``t - 1``)."""

    T: int
    C1: np.ndarray
    C2: np.ndarray
    qhat1: float
    qhat2: float

    def block(self, k: int) -> np.ndarray:
        return self.C1 if k == 1 else self.C2

    def at(self, k: int, t: int, s: int) -> float:
        """``C_k(t, s)`` with the boundary ``C(t, 0) = C(0, s) = 0`` and ``C(0, 0) = qhat``."""
        if t == 0 and s == 0:
            return self.qhat1 if k == 1 else self.qhat2
        if t == 0 or s == 0:
            return 0.0
        return float(self.block(k)[t - 1, s - 1])

    def delta(self, k: int) -> np.ndarray:
        """Predicted ``Delta_k(t, t-1) = 2 (qhat_k - C_k(t, t-1))`` for ``t = 1..T``."""
        q = self.qhat1 if k == 1 else self.qhat2
        return np.array([2 * (q - self.at(k, t, t - 1)) for t in range(1, self.T + 1)])

    def to_csv(self, path, comments=None):
        rows = ((t + 1, s + 1, float(self.C1[t, s]), float(self.C2[t, s]))
                for t in range(self.T) for s in range(self.T))
        return write_csv(path, ["t", "s", "C1", "C2"], rows, comments)


def _slack(a, q, caches, op, order):
    """Tolerance for arguments leaving ``[0, qhat]``.

    The order parameters satisfy ``Theta g(qhat) = qhat`` only up to the solver
    residual ``e``; the recursion then settles at a point ``~ e / (1 - mu)``
    away from ``qhat``, which may lie just outside the interval.  Larger
    mismatches mean Theta and the order parameters disagree and get no allowance.
    """
    base = SLACK * np.maximum(q, 1.0)
    gq = np.array([caches[k](np.array([q[k]]))[0] for k in range(2)])
    mismatch = float(np.abs(a @ gq - q).max())
    if not mismatch < MISMATCH_LIMIT:
        return base
    g1p, g2p = g_primes(op, order)
    mu = np.abs(np.linalg.eigvals(a * np.array([g1p, g2p])[None, :])).max()
    if mu >= 1:
        return base
    return base + 10 * mismatch / max(1 - mu, 0.01)


def covariance_recursion(theta: ThetaCoefficients, op: OrderParams, T: int,
                         order: int = 60) -> TwoTimeCovariance:
    if T < 1:
        raise UsageError(f"T must be >= 1, got {T}")
    a = theta.matrix
    if not np.all(np.isfinite(a)):
        raise NumericalError("Theta has non-finite entries")
    q = op.qhats()
    hs, chis = op.fields(), op.chis()
    caches = [_GCache(hs[k], chis[k], q[k], order) for k in range(2)]
    slack = _slack(a, q, caches, op, order)
    C = np.zeros((2, T, T))
    for k in range(2):
        C[k, 0, 0] = q[k]
    for t in range(1, T):
        # row t (time t+1): s = 1..t, previous arguments C(t, s-1) with C(t, 0) = 0
        prev = np.zeros((2, t))
        prev[:, 1:] = C[:, t - 1, :t - 1]
        g = np.empty((2, t))
        for k in range(2):
            arg = prev[k]
            if np.any(arg < -slack[k]) or np.any(arg > q[k] + slack[k]):
                raise NumericalError(
                    f"recursion argument left [0, {q[k]}] at t={t + 1}: "
                    f"range {arg.min()}..{arg.max()}")
            g[k] = caches[k](np.clip(arg, 0.0, q[k]))
        new = a @ g
        C[:, t, :t] = new
        C[:, :t, t] = new
        C[:, t, t] = q
    return TwoTimeCovariance(T, C[0], C[1], float(q[0]), float(q[1]))


@dataclass(frozen=True)
class ConvergenceReport:
    mu_gamma: float
    g1p: float
    g2p: float
    predicted_delta1: np.ndarray = field(default_factory=lambda: np.zeros(0))
    predicted_delta2: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def stable(self) -> bool:
        return self.mu_gamma < 1

    @property
    def near_critical(self) -> bool:
        """Close to ``mu_gamma = 1`` large-time predictions lose accuracy at finite size."""
        return abs(self.mu_gamma - 1) < NEAR_CRITICAL

    def to_dict(self) -> dict:
        return {
            "mu_gamma": self.mu_gamma, "g1p": self.g1p, "g2p": self.g2p,
            "stable": self.stable, "near_critical": self.near_critical,
            "predicted_delta1": [float(v) for v in self.predicted_delta1],
            "predicted_delta2": [float(v) for v in self.predicted_delta2],
        }

    def to_json(self, path, extra=None):
        return write_json(path, {**(extra or {}), **self.to_dict()})


def jacobian(theta: ThetaCoefficients, g1p: float, g2p: float) -> np.ndarray:
    return theta.matrix * np.array([g1p, g2p])[None, :]


def mu_gamma(theta: ThetaCoefficients, g1p: float, g2p: float,
             cov: TwoTimeCovariance | None = None) -> ConvergenceReport:
    """Largest eigenvalue of the linearised covariance recursion."""
    a = theta
    if a.a12 * a.a21 < 0:
        raise DomainError("need a12 * a21 >= 0")
    d1, d2 = g1p * a.a11, g2p * a.a22
    mu = 0.5 * (d1 + d2) + 0.5 * np.sqrt((d1 - d2) ** 2 + 4 * g1p * g2p * a.a12 * a.a21)
    if cov is None:
        return ConvergenceReport(float(mu), g1p, g2p)
    return ConvergenceReport(float(mu), g1p, g2p, cov.delta(1), cov.delta(2))


def g_primes(op: OrderParams, order: int = 60) -> tuple[float, float]:
    return (g_prime(op.h1, op.chi1, op.qhat1, order),
            g_prime(op.h2, op.chi2, op.qhat2, order))


def predict(op: OrderParams, theta: ThetaCoefficients, T: int, order: int = 60):
    """Covariance recursion and convergence report in one call."""
    cov = covariance_recursion(theta, op, T, order)
    return cov, mu_gamma(theta, *g_primes(op, order), cov)


def mu_at_beta(model, alpha: float, h1: float, h2: float, beta: float,
               cfg: SolverConfig | None = None) -> float:
    from .generating import GeneratingFunction

    cfg = cfg or SolverConfig()
    gf = GeneratingFunction.for_model(model, alpha, beta)
    op = solve_rs_fixed_point(gf, h1, h2, cfg=cfg)
    theta = theta_analytic(op, gf)
    return mu_gamma(theta, *g_primes(op, cfg.order)).mu_gamma


def instability_bisection(model, alpha: float, h1: float, h2: float,
                          beta_lo: float, beta_hi: float, tol: float = 1e-6,
                          cfg: SolverConfig | None = None, max_iter: int = 200) -> float:
    """Inverse temperature where ``mu_gamma`` crosses 1, by bisection."""
    mu_lo = mu_at_beta(model, alpha, h1, h2, beta_lo, cfg)
    mu_hi = mu_at_beta(model, alpha, h1, h2, beta_hi, cfg)
    if not (mu_lo < 1 < mu_hi):
        raise UsageError(
            f"invalid bracket: mu({beta_lo})={mu_lo:.6g}, mu({beta_hi})={mu_hi:.6g}")
    lo, hi = beta_lo, beta_hi
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        mu = mu_at_beta(model, alpha, h1, h2, mid, cfg)
        if abs(mu - 1) < tol or hi - lo < 1e-12 * hi:
            break
        if mu < 1:
            lo = mid
        else:
            hi = mid
    return mid
