"""
Replica-symmetric order parameters, the covariance coefficient matrix Theta
and stability diagnostics.

Two solver routes are provided.  ``solve_rs_fixed_point`` works from the
derivatives I'(x), I''(x) of the generating function.  ``solve_green_fixed_point``
only needs the Gramian spectrum and works through its Green functions.  On
exactly degenerate spectra both give the same numbers.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import quadrature
from .ensembles import SpectralData, load_spectrum
from .errors import ConvergenceError, DomainError, SingularThetaError, UsageError
from .generating import GeneratingFunction, GreenFunction

_TAGS = {
    "dtanh": lambda y: quadrature.sech2(y),
    "dtanh_sq": lambda y: quadrature.sech2(y) ** 2,
    "tanh": np.tanh,
    "tanh_sq": lambda y: np.tanh(y) ** 2,
}
_TAGS["tanh'"] = _TAGS["dtanh"]
_TAGS["tanh'^2"] = _TAGS["dtanh_sq"]
_TAGS["tanh^2"] = _TAGS["tanh_sq"]


def gauss_expect(tag: str, h: float, qhat: float, order: int = 60) -> float:
    """Quadrature value of ``E[f(h + sqrt(qhat) u)]`` for a tagged ``f``.

    Tags: ``dtanh`` (tanh'), ``dtanh_sq`` ((tanh')^2), ``tanh``, ``tanh_sq``.
    """
    try:
        func = _TAGS[tag]
    except KeyError:
        raise UsageError(f"unknown integrand tag {tag!r}; choose from {sorted(_TAGS)}") from None
    if qhat < 0:
        raise DomainError(f"qhat must be nonnegative, got {qhat}")
    return quadrature.expect(func, h, qhat, order)


@dataclass(frozen=True)
class SolverConfig:
    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 10_000
    order: int = 60
    # optional starting point (chi1, chi2, qhat1, qhat2); default is the beta -> 0 solution
    init: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise UsageError(f"damping must lie in (0, 1], got {self.damping}")
        if not self.tol > 0 or self.max_iter < 1:
            raise UsageError("tol must be positive and max_iter >= 1")


@dataclass(frozen=True)
class OrderParams:
    chi1: float
    chi2: float
    qhat1: float
    qhat2: float
    psi1: float
    psi2: float
    h1: float
    h2: float
    alpha: float
    route: str = "analytic"
    iterations: int = 0
    residual: float = 0.0
    clamped: int = 0

    @property
    def chi(self) -> float:
        return self.chi1 * self.chi2

    @property
    def lam(self) -> float:
        return self.psi1 * self.psi2 / self.chi

    @property
    def i_prime(self) -> float:
        """I'(chi), recovered from ``psi1 = 1 + chi I'(chi)``."""
        return (self.psi1 - 1.0) / self.chi

    def chis(self):
        return np.array([self.chi1, self.chi2])

    def qhats(self):
        return np.array([self.qhat1, self.qhat2])

    def fields(self):
        return np.array([self.h1, self.h2])

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(chi=self.chi, lam=self.lam)
        return d

    def to_json(self, path=None, **extra) -> str:
        text = json.dumps({**self.to_dict(), **extra}, indent=2, sort_keys=True) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "OrderParams":
        names = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in names})

    @classmethod
    def from_json(cls, path_or_text) -> "OrderParams":
        text = str(path_or_text)
        if not text.lstrip().startswith("{"):
            text = Path(path_or_text).read_text()
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ThetaCoefficients:
    a11: float
    a12: float
    a21: float
    a22: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @classmethod
    def from_matrix(cls, m) -> "ThetaCoefficients":
        m = np.asarray(m, dtype=float)
        return cls(float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1]))


@dataclass(frozen=True)
class StabilityReport:
    r1p: float
    r2p: float
    eta1: float
    eta2: float
    chi2_11: float
    chi2_22: float
    chi2_12: float
    critical: bool = False

    @property
    def at_stable(self) -> bool:
        return self.r1p * self.eta1 < 1 and self.r2p * self.eta2 < 1

    def to_dict(self) -> dict:
        return {**asdict(self), "at_stable": self.at_stable}


def _check_fields(h1, h2):
    if h1 == 0 or h2 == 0:
        raise DomainError("external fields must be nonzero")


def _chi_update(qhat1, qhat2, h1, h2, order):
    return (gauss_expect("dtanh", h1, qhat1, order),
            gauss_expect("dtanh", h2, qhat2, order))


def _initial_state(h1, h2, cfg):
    if cfg.init is not None:
        return np.array(cfg.init, dtype=float)
    return np.array([float(quadrature.sech2(h1)), float(quadrature.sech2(h2)), 0.0, 0.0])


def _damped_solve(sweep, x0, cfg, what):
    """Damped Picard iteration ``x <- (1-eta) x + eta F(x)`` on (chi1, chi2, q1, q2)."""
    x = x0.copy()
    eta = cfg.damping
    clamped = 0
    history = []
    for it in range(1, cfg.max_iter + 1):
        fx = sweep(x)
        res = float(np.max(np.abs(fx - x)))
        history.append(res)
        if res < cfg.tol:
            return x, it, res, clamped
        x = (1 - eta) * x + eta * fx
        if np.any(x[2:] < 0):
            clamped += 1
            x[2:] = np.maximum(x[2:], 0.0)
        if not np.all(np.isfinite(x)):
            break
    raise ConvergenceError(
        f"{what} did not converge in {cfg.max_iter} iterations (residual {history[-1]:.3e})",
        residual=history[-1], trajectory=history,
    )


def solve_rs_fixed_point(gf: GeneratingFunction, h1: float, h2: float,
                         alpha: float | None = None,
                         cfg: SolverConfig | None = None) -> OrderParams:
    """Order parameters from the fixed-point equations in I'(chi), I''(chi)."""
    cfg = cfg or SolverConfig()
    _check_fields(h1, h2)
    if alpha is not None and not np.isclose(alpha, gf.alpha, rtol=1e-12):
        raise UsageError(f"alpha={alpha} disagrees with the generating function ({gf.alpha})")
    a = gf.alpha

    def sweep(x):
        c1, c2, q1, q2 = x
        chi = c1 * c2
        i1, i2 = gf.derivatives(chi)
        p = i1 + chi * i2
        nq1 = c2 ** 2 * (1 - c1) * i2 + (1 - c2) * p
        nq2 = (c1 ** 2 * (1 - c2) * i2 + (1 - c1) * p) / a
        nc1, nc2 = _chi_update(max(q1, 0.0), max(q2, 0.0), h1, h2, cfg.order)
        return np.array([nc1, nc2, nq1, nq2])

    x, it, res, clamped = _damped_solve(sweep, _initial_state(h1, h2, cfg), cfg,
                                        "order-parameter iteration")
    c1, c2, q1, q2 = (float(v) for v in x)
    chi = c1 * c2
    i1 = gf.derivatives(chi)[0]
    psi1 = 1 + chi * i1
    psi2 = 1 + chi * i1 / a
    return OrderParams(c1, c2, q1, q2, psi1, psi2, float(h1), float(h2), a,
                       route="analytic", iterations=it, residual=res, clamped=clamped)


def _as_green(spec, alpha) -> GreenFunction:
    if isinstance(spec, GreenFunction):
        return spec
    if isinstance(spec, SpectralData):
        if alpha is not None and not np.isclose(alpha, spec.alpha, rtol=1e-12):
            raise UsageError(f"alpha={alpha} disagrees with the spectral data ({spec.alpha})")
        return GreenFunction.from_spectral(spec)
    if alpha is None:
        raise UsageError("alpha is required when only eigenvalues are given")
    if isinstance(spec, (str, Path)):
        return GreenFunction(load_spectrum(spec), alpha)
    return GreenFunction(np.asarray(spec, dtype=float), alpha)


def _psis_from_green(g: GreenFunction, chi: float):
    lam = g.solve_lambda(chi)
    return chi / g.wt(lam), chi / g.w(lam), lam


def _theta_green_matrix(c1, c2, psi1, psi2, g: GreenFunction) -> np.ndarray:
    chi = c1 * c2
    lam = psi1 * psi2 / chi
    gw, gwp, gwtp = g.w(lam), g.w_prime(lam), g.wt_prime(lam)
    off = lam * gwp + gw
    return -np.array([
        [psi2 ** 2 / chi ** 2 * gwp + 1, off / c1 ** 2],
        [off / (g.alpha * c2 ** 2), psi1 ** 2 / chi ** 2 * gwtp + 1],
    ])


def _qhat_from_theta(theta, c1, c2):
    v = np.array([(1 - c1) / c1 ** 2, (1 - c2) / c2 ** 2])
    return np.linalg.solve(np.eye(2) + theta, theta @ v)


def solve_green_fixed_point(spec, h1: float, h2: float, alpha: float | None = None,
                            cfg: SolverConfig | None = None) -> OrderParams:
    """Order parameters from the Green functions of a Gramian spectrum.

    ``spec`` may be a :class:`SpectralData`, a :class:`GreenFunction`, an array
    of eigenvalues of ``W^T W`` or the path of a spectrum file.  For each sweep
    ``lam`` (hence ``psi1``, ``psi2``) is the exact root for the current chi.
    """
    cfg = cfg or SolverConfig()
    _check_fields(h1, h2)
    g = _as_green(spec, alpha)

    def sweep(x):
        c1, c2, q1, q2 = x
        psi1, psi2, _ = _psis_from_green(g, c1 * c2)
        theta = _theta_green_matrix(c1, c2, psi1, psi2, g)
        nq1, nq2 = _qhat_from_theta(theta, c1, c2)
        nc1, nc2 = _chi_update(max(q1, 0.0), max(q2, 0.0), h1, h2, cfg.order)
        return np.array([nc1, nc2, nq1, nq2])

    x, it, res, clamped = _damped_solve(sweep, _initial_state(h1, h2, cfg), cfg,
                                        "Green-function order-parameter iteration")
    c1, c2, q1, q2 = (float(v) for v in x)
    psi1, psi2, _ = _psis_from_green(g, c1 * c2)
    return OrderParams(c1, c2, q1, q2, float(psi1), float(psi2), float(h1), float(h2), g.alpha,
                       route="green", iterations=it, residual=res, clamped=clamped)


def solve(gf_or_spec, h1, h2, alpha=None, cfg=None, route="analytic") -> OrderParams:
    """Dispatch to one of the two solver routes."""
    if route == "analytic":
        gf = gf_or_spec
        if isinstance(gf, SpectralData):
            gf = GeneratingFunction.from_spectral(gf)
        return solve_rs_fixed_point(gf, h1, h2, alpha, cfg)
    if route == "green":
        return solve_green_fixed_point(gf_or_spec, h1, h2, alpha, cfg)
    raise UsageError(f"unknown route {route!r}")


def rs_residual(op: OrderParams, gf: GeneratingFunction, order: int = 60) -> np.ndarray:
    """Componentwise violation of the four order-parameter equations."""
    c1, c2, q1, q2 = op.chi1, op.chi2, op.qhat1, op.qhat2
    chi = c1 * c2
    i1, i2 = gf.derivatives(chi)
    p = i1 + chi * i2
    return np.array([
        gauss_expect("dtanh", op.h1, q1, order) - c1,
        gauss_expect("dtanh", op.h2, q2, order) - c2,
        c2 ** 2 * (1 - c1) * i2 + (1 - c2) * p - q1,
        (c1 ** 2 * (1 - c2) * i2 + (1 - c1) * p) / gf.alpha - q2,
    ])


def theta_analytic(op: OrderParams, gf: GeneratingFunction) -> ThetaCoefficients:
    """Coefficient matrix in closed form from I'(chi) and I''(chi)."""
    chi, a = op.chi, gf.alpha
    i1, i2 = gf.derivatives(chi)
    dpsi = i1 + chi * i2
    d = -i1 * (i1 + 2 * chi * i2)
    den = a + chi ** 2 * d - (1 + a) * chi ** 2 * i2
    if not den > 0:
        raise SingularThetaError(f"Theta denominator {den:.3e} <= 0 at chi={chi:.6g}")
    m = np.array([
        [chi ** 2 * (a * i2 - d), a * op.chi2 ** 2 * dpsi],
        [op.chi1 ** 2 * dpsi, chi ** 2 * (i2 - d)],
    ]) / den
    return ThetaCoefficients.from_matrix(m)


def theta_green(op: OrderParams, g: GreenFunction) -> ThetaCoefficients:
    """Coefficient matrix from ``G_W``, ``G_W'`` and ``G_WT'`` at ``lam``."""
    if isinstance(g, SpectralData):
        g = GreenFunction.from_spectral(g)
    return ThetaCoefficients.from_matrix(_theta_green_matrix(op.chi1, op.chi2, op.psi1, op.psi2, g))


def stability_report(op: OrderParams, gf: GeneratingFunction, order: int = 60) -> StabilityReport:
    """AT-type bounds ``R'_k E[tanh'^2] < 1`` and the spin-glass susceptibilities."""
    chi, a = op.chi, gf.alpha
    i1, i2 = gf.derivatives(chi)
    dpsi = i1 + chi * i2
    r1p = op.chi2 / op.chi1 * ((a + chi * i1) * dpsi / (a - chi ** 2 * i2) - i1)
    r2p = op.chi1 / op.chi2 * ((1 + chi * i1) * dpsi / (a - a * chi ** 2 * i2) - i1 / a)
    eta1 = gauss_expect("dtanh_sq", op.h1, op.qhat1, order)
    eta2 = gauss_expect("dtanh_sq", op.h2, op.qhat2, order)

    def sus(eta, rp):
        return eta / (1 - eta * rp) if eta * rp < 1 else np.inf

    x11, x22 = sus(eta1, r1p), sus(eta2, r2p)
    psi1, psi2 = 1 + chi * i1, 1 + chi * i1 / a
    dpsi1, dpsi2 = dpsi, dpsi / a
    gap1, gap2 = psi1 - chi * dpsi1, psi2 - chi * dpsi2
    critical = bool(min(abs(gap1) / psi1, abs(gap2) / psi2) < 1e-8)
    if critical:
        warnings.warn("psi_k = chi psi'_k: cross susceptibility at its critical case", RuntimeWarning)
    if np.isinf(x11) or np.isinf(x22) or critical:
        x12 = np.inf
    else:
        x12 = dpsi1 * (psi1 * psi2 - chi * (psi2 * dpsi1 + psi1 * dpsi2)) / (gap1 * gap2) * x11 * x22
    return StabilityReport(float(r1p), float(r2p), eta1, eta2, float(x11), float(x22), float(x12),
                           critical)
