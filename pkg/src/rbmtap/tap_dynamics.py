"""
TAP magnetizations by the iteration ``gamma(t) = A f(gamma(t-1))``.

``A = M^{-1} - I`` with ``M = [[psi1 I, -chi2 W], [-chi1 W^T, psi2 I]]``.  In the
singular basis of ``W`` the inverse splits into independent 2x2 blocks, one per
singular value, plus the scale ``1/psi1`` on the part of ``R^n1`` orthogonal to
the left singular vectors.  Fixed points of the iteration are solutions of the
TAP equations with ``m_k = tanh(h_k + gamma_k)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .ensembles import CouplingMatrix, SpectralData, compute_svd
from .errors import DimensionError, DomainError, InstabilityError, InvertibilityError, UsageError
from .order_params import OrderParams
from .tables import write_csv

DIVERGENCE_NORM = 1e10
M_GUARD = 1 - 1e-12
DENSE_LIMIT = 4000
ENUMERATION_LIMIT = 22


def _as_spectral(w) -> SpectralData:
    if isinstance(w, SpectralData):
        return w
    return compute_svd(w)


def _as_dense(w) -> np.ndarray:
    if isinstance(w, SpectralData):
        return w.reconstruct()
    if isinstance(w, CouplingMatrix):
        return w.entries
    return np.asarray(w, dtype=float)


@dataclass(frozen=True)
class TapOperator:
    spectral: SpectralData
    chi1: float
    chi2: float
    psi1: float
    psi2: float
    p11: np.ndarray = field(init=False, repr=False)
    p12: np.ndarray = field(init=False, repr=False)
    p21: np.ndarray = field(init=False, repr=False)
    p22: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = self.spectral.sigmas
        det = self.psi1 * self.psi2 - self.chi1 * self.chi2 * s ** 2
        if np.any(det <= 0):
            lam = self.psi1 * self.psi2 / (self.chi1 * self.chi2)
            smax2 = float(s.max() ** 2)
            raise InvertibilityError(
                f"lambda = psi1 psi2 / chi = {lam:.10g} does not exceed sigma_max^2 = "
                f"{smax2:.10g} (gap {lam - smax2:.3g})")
        object.__setattr__(self, "p11", self.psi2 / det)
        object.__setattr__(self, "p12", self.chi2 * s / det)
        object.__setattr__(self, "p21", self.chi1 * s / det)
        object.__setattr__(self, "p22", self.psi1 / det)

    @property
    def n1(self) -> int:
        return self.spectral.n1

    @property
    def n2(self) -> int:
        return self.spectral.n2

    @property
    def null_scale(self) -> float:
        return 1.0 / self.psi1

    def solve(self, x1: np.ndarray, x2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``M^{-1} [x1; x2]``; columns of 2-D inputs are treated as separate vectors."""
        u, v = self.spectral.left_basis, self.spectral.right_basis
        c1 = u.T @ x1
        c2 = v.T @ x2
        shape = (-1,) + (1,) * (c1.ndim - 1)
        p11, p12 = self.p11.reshape(shape), self.p12.reshape(shape)
        p21, p22 = self.p21.reshape(shape), self.p22.reshape(shape)
        null = x1 - u @ c1
        y1 = u @ (p11 * c1 + p12 * c2) + null / self.psi1
        y2 = v @ (p21 * c1 + p22 * c2)
        return y1, y2

    def apply(self, x1: np.ndarray, x2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``A [x1; x2]``; two thin-basis rotations each way, O(n1 n2)."""
        if x1.shape[0] != self.n1 or x2.shape[0] != self.n2:
            raise DimensionError(
                f"operator is ({self.n1}, {self.n2}), got vectors {x1.shape}, {x2.shape}")
        y1, y2 = self.solve(x1, x2)
        return y1 - x1, y2 - x2

    def dense(self) -> np.ndarray:
        """Explicit ``(n1 + n2)`` square matrix; for checks on small systems."""
        n1, n2 = self.n1, self.n2
        eye = np.eye(n1 + n2)
        y1, y2 = self.apply(eye[:n1], eye[n1:])
        return np.vstack([y1, y2])

    def blocks(self):
        """``(A11, A12, A21, A22)`` from :meth:`dense`."""
        a = self.dense()
        n1 = self.n1
        return a[:n1, :n1], a[:n1, n1:], a[n1:, :n1], a[n1:, n1:]


def build_operator(spec, op: OrderParams) -> TapOperator:
    return TapOperator(_as_spectral(spec), op.chi1, op.chi2, op.psi1, op.psi2)


@dataclass(frozen=True)
class TapState:
    gamma1: np.ndarray
    gamma2: np.ndarray
    t: int = 0
    seed: int | None = None


def init_state(op: OrderParams, n1: int, n2: int, seed: int) -> TapState:
    """``gamma_k(0) = sqrt(qhat_k) u_k`` with standard normal ``u_k``."""
    if n1 < 1 or n2 < 1:
        raise DimensionError(f"dimensions must be positive, got n1={n1}, n2={n2}")
    if op.qhat1 < 0 or op.qhat2 < 0:
        raise DomainError("qhat must be nonnegative")
    rng = np.random.default_rng(seed)
    g1 = np.sqrt(op.qhat1) * rng.standard_normal(n1)
    g2 = np.sqrt(op.qhat2) * rng.standard_normal(n2)
    return TapState(g1, g2, 0, seed)


def nonlinearity(gamma, h, chi):
    """``f_k(x) = tanh(h_k + x) / chi_k - x``."""
    return np.tanh(h + gamma) / chi - gamma


def step(state: TapState, A: TapOperator, op: OrderParams) -> TapState:
    f1 = nonlinearity(state.gamma1, op.h1, op.chi1)
    f2 = nonlinearity(state.gamma2, op.h2, op.chi2)
    g1, g2 = A.apply(f1, f2)
    if not (np.all(np.isfinite(g1)) and np.all(np.isfinite(g2))):
        raise InstabilityError(f"non-finite iterate at step {state.t + 1}; check mu_gamma")
    return TapState(g1, g2, state.t + 1, state.seed)


@dataclass(frozen=True)
class MagnetizationResult:
    m1: np.ndarray
    m2: np.ndarray
    residual: float
    iters: int


@dataclass(frozen=True)
class RunResult:
    """Output of :func:`run`.

    ``delta1[t-1]`` is ``|gamma_1(t) - gamma_1(t-1)|^2 / n1`` for ``t = 1..iters``.
    ``trajectory`` holds ``gamma(0..iters)`` when requested.
    """

    magnetization: MagnetizationResult
    delta1: np.ndarray
    delta2: np.ndarray
    converged: bool
    state: TapState
    trajectory: list[TapState] | None = None


def magnetizations(state: TapState, op: OrderParams):
    """``m_k = chi_k (gamma_k + f_k(gamma_k)) = tanh(h_k + gamma_k)``."""
    return np.tanh(op.h1 + state.gamma1), np.tanh(op.h2 + state.gamma2)


def run(A: TapOperator, op: OrderParams, T: int, seed: int, tol: float = 1e-20,
        keep_trajectory: bool = False, state: TapState | None = None) -> RunResult:
    """Iterate up to ``T`` steps; stop early once both normalized steps fall below ``tol``.

    ``tol = 0`` runs the full horizon.
    """
    if T < 1:
        raise UsageError(f"T must be >= 1, got {T}")
    state = state or init_state(op, A.n1, A.n2, seed)
    traj = [state] if keep_trajectory else None
    d1, d2 = [], []
    converged = False
    for _ in range(T):
        new = step(state, A, op)
        d1.append(float(np.mean((new.gamma1 - state.gamma1) ** 2)))
        d2.append(float(np.mean((new.gamma2 - state.gamma2) ** 2)))
        state = new
        if traj is not None:
            traj.append(state)
        norm = max(np.abs(state.gamma1).max(), np.abs(state.gamma2).max())
        if norm > DIVERGENCE_NORM:
            raise InstabilityError(
                f"iterate norm {norm:.3g} at step {state.t}; mu_gamma is likely >= 1")
        if d1[-1] < tol and d2[-1] < tol:
            converged = True
            break
    m1, m2 = magnetizations(state, op)
    res = tap_residual(m1, m2, A.spectral, op)
    mag = MagnetizationResult(m1, m2, res, state.t)
    return RunResult(mag, np.array(d1), np.array(d2), converged, state, traj)


def _onsager(op: OrderParams) -> tuple[float, float]:
    ip = op.i_prime
    return op.chi2 * ip, op.chi1 * ip / op.alpha


def tap_residual(m1, m2, W, op: OrderParams) -> float:
    """``max |m_k - tanh(h_k + gamma_k)|`` with ``gamma_1 = W m2 - chi2 I' m1``,
    ``gamma_2 = W^T m1 - chi1 I' m2 / alpha``."""
    m1, m2 = np.asarray(m1, dtype=float), np.asarray(m2, dtype=float)
    if max(np.abs(m1).max(), np.abs(m2).max()) >= M_GUARD:
        raise DomainError("magnetizations at +-1: TAP fields are not finite")
    v1, v2 = _onsager(op)
    if isinstance(W, SpectralData):
        wm2, wtm1 = W.matvec(m2), W.rmatvec(m1)
    else:
        w = _as_dense(W)
        wm2, wtm1 = w @ m2, w.T @ m1
    g1 = wm2 - v1 * m1
    g2 = wtm1 - v2 * m2
    return float(max(np.abs(m1 - np.tanh(op.h1 + g1)).max(),
                     np.abs(m2 - np.tanh(op.h2 + g2)).max()))


@dataclass(frozen=True)
class CrossCorrelations:
    """Linear-response spin statistics at a TAP solution.

    ``cross[i, j]`` approximates ``E[s_1i s_2j]``; ``chi11``, ``chi12``, ``chi21``,
    ``chi22`` are the blocks of the connected covariance.
    """

    cross: np.ndarray
    chi11: np.ndarray
    chi12: np.ndarray
    chi21: np.ndarray
    chi22: np.ndarray


def cross_correlations(m1, m2, W, op: OrderParams,
                       dense_limit: int = DENSE_LIMIT) -> CrossCorrelations:
    """Covariance ``[[Lambda1, -W], [-W^T, Lambda2]]^{-1}`` with
    ``Lambda_k = 1 / (1 - m_k^2) + Onsager_k``."""
    w = _as_dense(W)
    n1, n2 = w.shape
    if n1 + n2 > dense_limit:
        raise UsageError(f"n1 + n2 = {n1 + n2} exceeds the dense limit {dense_limit}")
    m1, m2 = np.asarray(m1, dtype=float), np.asarray(m2, dtype=float)
    if max(np.abs(m1).max(), np.abs(m2).max()) >= M_GUARD:
        raise DomainError("magnetizations at +-1")
    v1, v2 = _onsager(op)
    lam1 = 1.0 / (1.0 - m1 ** 2) + v1
    lam2 = 1.0 / (1.0 - m2 ** 2) + v2
    schur = np.diag(lam2) - (w.T / lam1) @ w
    try:
        np.linalg.cholesky(schur)
    except np.linalg.LinAlgError:
        raise InstabilityError(
            "Lambda2 - W^T Lambda1^{-1} W is not positive definite; "
            "the linear response is at or beyond an instability") from None
    cross = np.linalg.solve(schur.T, (w.T / lam1)).T + np.outer(m1, m2)
    full = np.block([[np.diag(lam1), -w], [-w.T, np.diag(lam2)]])
    cov = np.linalg.inv(full)
    return CrossCorrelations(cross, cov[:n1, :n1], cov[:n1, n1:], cov[n1:, :n1], cov[n1:, n1:])


@dataclass(frozen=True)
class GibbsAverages:
    m1: np.ndarray
    m2: np.ndarray
    cross: np.ndarray


def _spin_table(n):
    return 1.0 - 2.0 * np.array(list(itertools.product((0, 1), repeat=n)), dtype=float)


def exact_enumeration(W, h1, h2, chunk: int = 1 << 12) -> GibbsAverages:
    """Exact Gibbs averages of ``exp(s1^T W s2 + h1.s1 + h2.s2)`` over all ``2^(n1+n2)`` states.

    ``h1``, ``h2`` may be scalars or per-site vectors.
    """
    w = _as_dense(W)
    n1, n2 = w.shape
    if n1 + n2 > ENUMERATION_LIMIT:
        raise UsageError(f"enumeration limited to {ENUMERATION_LIMIT} spins, got {n1 + n2}")
    h1 = np.broadcast_to(np.asarray(h1, dtype=float), (n1,))
    h2 = np.broadcast_to(np.asarray(h2, dtype=float), (n2,))
    s2 = _spin_table(n2)                          # (2^n2, n2)
    s1_all = _spin_table(n1)
    # log-weights are bounded by this shift, which keeps exp() in range
    shift = np.abs(w).sum() + np.abs(h1).sum() + np.abs(h2).sum()
    z = 0.0
    m1 = np.zeros(n1)
    m2 = np.zeros(n2)
    cross = np.zeros((n1, n2))
    base2 = s2 @ h2
    for i in range(0, s1_all.shape[0], chunk):
        s1 = s1_all[i:i + chunk]
        logw = (s1 @ w) @ s2.T + (s1 @ h1)[:, None] + base2[None, :] - shift
        p = np.exp(logw)                          # (chunk, 2^n2)
        p1 = p.sum(axis=1)
        z += p1.sum()
        m1 += s1.T @ p1
        ps2 = p @ s2                              # (chunk, n2)
        m2 += ps2.sum(axis=0)
        cross += s1.T @ ps2
    return GibbsAverages(m1 / z, m2 / z, cross / z)


def write_trajectory(path, result: RunResult, comments=None):
    """Per-step summary rows ``(t, block, n, mean, std, min, max, delta)``."""
    if result.trajectory is None:
        raise UsageError("run was not asked to keep its trajectory")
    rows = []
    for st in result.trajectory:
        for block, g, d in ((1, st.gamma1, result.delta1), (2, st.gamma2, result.delta2)):
            delta = float(d[st.t - 1]) if st.t > 0 else float("nan")
            rows.append((st.t, block, g.size, float(g.mean()), float(g.std()),
                         float(g.min()), float(g.max()), delta))
    return write_csv(path, ["t", "block", "n", "mean", "std", "min", "max", "delta"],
                     rows, comments)
