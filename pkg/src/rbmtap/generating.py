"""
Derivatives of the rectangular spherical generating function I(x) and
Green functions of the coupling spectrum.

Two interchangeable backends provide ``I'(x)`` and ``I''(x)``: closed forms
for the i.i.d. and column-orthogonal ensembles, and a spectrum backend that
solves the stationarity conditions of the variational definition of I on an
empirical Gramian spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .ensembles import SpectralData, load_spectrum
from .errors import DomainError, PoleProximityError, UsageError


class Kind(str, Enum):
    ANALYTIC_IID = "analytic_iid"
    ANALYTIC_COLUMN_ORTHOGONAL = "analytic_column_orthogonal"
    SPECTRUM = "spectrum"


@dataclass(frozen=True)
class GreenFunction:
    """Empirical Green functions of ``W^T W`` (size n2) and ``W W^T`` (size n1)."""

    eigvals_gram: np.ndarray
    alpha: float
    eps_rel: float = 1e-9

    @classmethod
    def from_spectral(cls, spec: SpectralData, **kw) -> "GreenFunction":
        return cls(np.asarray(spec.eigvals_gram, dtype=float), spec.alpha, **kw)

    @classmethod
    def from_file(cls, path, alpha: float, **kw) -> "GreenFunction":
        return cls(load_spectrum(path), alpha, **kw)

    def __post_init__(self):
        d = np.asarray(self.eigvals_gram, dtype=float)
        if d.ndim != 1 or d.size == 0:
            raise UsageError("spectrum must be a nonempty vector")
        if not 0 < self.alpha <= 1:
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        object.__setattr__(self, "eigvals_gram", d)

    @property
    def n2(self) -> int:
        return self.eigvals_gram.size

    @property
    def n1(self) -> int:
        return int(round(self.n2 / self.alpha))

    @property
    def d_max(self) -> float:
        return float(max(self.eigvals_gram.max(), 0.0))

    @property
    def pole_guard(self) -> float:
        """Smallest admissible argument: ``max(d) * (1 + eps_rel)``."""
        return self.d_max * (1.0 + self.eps_rel)

    def _check(self, z):
        z = float(z)
        if not (z > self.pole_guard and z > 0):
            raise PoleProximityError(z, self.d_max, z - self.d_max)
        return z

    def wt(self, z):
        z = self._check(z)
        return float(np.mean(1.0 / (z - self.eigvals_gram)))

    def wt_prime(self, z):
        z = self._check(z)
        return float(-np.mean((z - self.eigvals_gram) ** -2))

    def w(self, z):
        return self.alpha * self.wt(z) + (1 - self.alpha) / z

    def w_prime(self, z):
        return self.alpha * self.wt_prime(z) - (1 - self.alpha) / z ** 2

    def solve_lambda(self, x: float) -> float:
        """Root ``lam > max(d)`` of ``lam * G_WT(lam) * G_W(lam) = x``.

        The left side decreases from +inf to 0 on the domain, so the root is
        unique.  With ``psi1 = x / G_WT(lam)``, ``psi2 = x / G_W(lam)`` this is
        the stationary point of the variational problem defining I(x).
        """
        if not x > 0:
            raise DomainError(f"x must be positive, got {x}")

        def phi(lam):
            return lam * self.wt(lam) * self.w(lam) - x

        if self.d_max > 0:
            lo = np.nextafter(self.pole_guard, np.inf)
        else:
            lo = 0.5 / x    # zero spectrum: the root is 1/x
        if phi(lo) <= 0:
            raise PoleProximityError(lo, self.d_max, lo - self.d_max)
        hi = max(2 * self.d_max, 4.0 / x)
        while phi(hi) > 0:
            hi *= 2
        return brentq(phi, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def green_wt(g: GreenFunction, z: float) -> float:
    return g.wt(z)


def green_wt_prime(g: GreenFunction, z: float) -> float:
    return g.wt_prime(z)


def green_w(g: GreenFunction, z: float) -> float:
    return g.w(z)


def green_w_prime(g: GreenFunction, z: float) -> float:
    return g.w_prime(z)


@dataclass(frozen=True)
class GeneratingFunction:
    kind: Kind
    alpha: float
    beta: float = float("nan")
    eigvals_gram: np.ndarray | None = None
    _green: GreenFunction | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.kind is Kind.SPECTRUM:
            if self.eigvals_gram is None:
                raise UsageError("spectrum backend needs eigenvalues")
            object.__setattr__(self, "_green", GreenFunction(self.eigvals_gram, self.alpha))
        elif not self.beta > 0:
            raise DomainError(f"beta must be positive, got {self.beta}")

    @classmethod
    def iid(cls, alpha, beta):
        return cls(Kind.ANALYTIC_IID, float(alpha), float(beta))

    @classmethod
    def column_orthogonal(cls, alpha, beta):
        return cls(Kind.ANALYTIC_COLUMN_ORTHOGONAL, float(alpha), float(beta))

    @classmethod
    def spectrum(cls, alpha, eigvals_gram):
        return cls(Kind.SPECTRUM, float(alpha), eigvals_gram=np.asarray(eigvals_gram, dtype=float))

    @classmethod
    def from_spectral(cls, spec: SpectralData):
        return cls.spectrum(spec.alpha, spec.eigvals_gram)

    @classmethod
    def for_model(cls, model, alpha, beta):
        from .ensembles import Model

        model = Model.parse(model)
        if model is Model.IID:
            return cls.iid(alpha, beta)
        if model is Model.COLUMN_ORTHOGONAL:
            return cls.column_orthogonal(alpha, beta)
        raise UsageError("no closed form for a custom spectrum; use GeneratingFunction.spectrum")

    @property
    def green(self) -> GreenFunction | None:
        return self._green

    def derivatives(self, x: float) -> tuple[float, float]:
        """``(I'(x), I''(x))``."""
        if not 0 < x <= 1:
            raise DomainError(f"x must lie in (0, 1], got {x}")
        a, b = self.alpha, self.beta
        if self.kind is Kind.ANALYTIC_IID:
            return float(a * b), 0.0
        if self.kind is Kind.ANALYTIC_COLUMN_ORTHOGONAL:
            s = np.sqrt(1 + 4 * a * b * x)
            return float(2 * a * b / (1 + s)), float(-4 * a * a * b * b / (s * (1 + s) ** 2))
        return _spectrum_derivatives(self._green, x)


def _spectrum_derivatives(g: GreenFunction, x: float) -> tuple[float, float]:
    # I'(x) = alpha * mean(d / (lam - d)) / x with lam = psi1 psi2 / x;
    # I'' by implicit differentiation of lam(x).
    d = g.eigvals_gram
    lam = g.solve_lambda(x)
    r = 1.0 / (lam - d)
    s1 = np.mean(d * r)
    s2 = np.mean(d * r * r)
    gwt, gw = g.wt(lam), g.w(lam)
    dphi = gwt * gw + lam * g.wt_prime(lam) * gw + lam * gwt * g.w_prime(lam)
    dlam = 1.0 / dphi
    i1 = g.alpha * s1 / x
    i2 = -g.alpha * (s2 * dlam / x + s1 / x ** 2)
    return float(i1), float(i2)


def i_prime(gf: GeneratingFunction, x: float) -> float:
    return gf.derivatives(x)[0]


def i_second(gf: GeneratingFunction, x: float) -> float:
    return gf.derivatives(x)[1]
