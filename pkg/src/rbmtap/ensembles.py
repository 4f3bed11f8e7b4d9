"""
Bi-rotation invariant coupling ensembles.

A coupling matrix ``W`` of shape ``(n1, n2)`` with ``n2 <= n1`` is written as
``W = O diag(sigmas) V^T`` with Haar distributed ``O`` (a column frame of
``R^n1``) and ``V`` (orthogonal ``n2 x n2``).  Three ensembles are provided:

* ``iid``: independent Gaussian entries, variance ``beta / n1``
* ``column_orthogonal``: ``W = sqrt(beta) O P``, so ``W^T W = beta I``
* ``custom_spectrum``: prescribed singular values with Haar factors
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError, NumericalError, UsageError

MAGIC = b"BITAPM1\x00"
_HEADER = struct.Struct("<8sII")


class Model(str, Enum):
    IID = "iid"
    COLUMN_ORTHOGONAL = "column_orthogonal"
    CUSTOM_SPECTRUM = "custom_spectrum"

    @classmethod
    def parse(cls, value) -> "Model":
        if isinstance(value, Model):
            return value
        aliases = {"i": cls.IID, "gaussian": cls.IID, "iid_gaussian": cls.IID,
                   "ii": cls.COLUMN_ORTHOGONAL, "orthogonal": cls.COLUMN_ORTHOGONAL,
                   "custom": cls.CUSTOM_SPECTRUM}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise UsageError(f"unknown model {value!r}") from None


@dataclass(frozen=True)
class CouplingMatrix:
    entries: np.ndarray
    beta: float
    model: Model
    seed: int | None = None

    @property
    def n1(self) -> int:
        return self.entries.shape[0]

    @property
    def n2(self) -> int:
        return self.entries.shape[1]

    @property
    def alpha(self) -> float:
        return self.n2 / self.n1


@dataclass(frozen=True)
class SpectralData:
    """Thin SVD ``W = left_basis @ diag(sigmas) @ right_basis.T``."""

    sigmas: np.ndarray
    left_basis: np.ndarray
    right_basis: np.ndarray
    eigvals_gram: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "eigvals_gram", self.sigmas ** 2)

    @property
    def n1(self) -> int:
        return self.left_basis.shape[0]

    @property
    def n2(self) -> int:
        return self.right_basis.shape[0]

    @property
    def alpha(self) -> float:
        return self.n2 / self.n1

    def reconstruct(self) -> np.ndarray:
        return (self.left_basis * self.sigmas) @ self.right_basis.T

    def matvec(self, x2: np.ndarray) -> np.ndarray:
        """``W @ x2`` in O(n1 n2) without forming W."""
        return self.left_basis @ (self.sigmas * (self.right_basis.T @ x2))

    def rmatvec(self, x1: np.ndarray) -> np.ndarray:
        """``W.T @ x1``."""
        return self.right_basis @ (self.sigmas * (self.left_basis.T @ x1))


def _check_dims(n1, n2):
    if int(n1) != n1 or int(n2) != n2:
        raise DimensionError(f"dimensions must be integers, got n1={n1}, n2={n2}")
    if n2 < 1 or n1 < 1:
        raise DimensionError(f"dimensions must be positive, got n1={n1}, n2={n2}")
    if n2 > n1:
        raise DimensionError(f"need n2 <= n1, got n1={n1}, n2={n2}")


def _check_beta(beta):
    if not beta > 0 or not np.isfinite(beta):
        raise DomainError(f"beta must be positive and finite, got {beta}")


def haar_frame(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """First ``k`` columns of a Haar orthogonal ``n x n`` matrix.

    QR of a Gaussian matrix with the signs of ``diag(R)`` fixed to +.
    """
    q, r = np.linalg.qr(rng.standard_normal((n, k)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def sample_iid_gaussian(n1: int, n2: int, beta: float, seed: int) -> CouplingMatrix:
    _check_dims(n1, n2)
    _check_beta(beta)
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((n1, n2)) * np.sqrt(beta / n1)
    return CouplingMatrix(w, float(beta), Model.IID, seed)


def sample_column_orthogonal(n1: int, n2: int, beta: float, seed: int) -> CouplingMatrix:
    _check_dims(n1, n2)
    _check_beta(beta)
    rng = np.random.default_rng(seed)
    w = np.sqrt(beta) * haar_frame(n1, n2, rng)
    return CouplingMatrix(w, float(beta), Model.COLUMN_ORTHOGONAL, seed)


def sample_from_singular_values(n1: int, n2: int, sigmas, seed: int,
                                beta: float = float("nan")) -> CouplingMatrix:
    """``W = O diag(sigmas) V^T`` with independent Haar ``O`` and ``V``.

    ``beta`` is only carried as metadata for this ensemble.
    """
    _check_dims(n1, n2)
    sigmas = np.asarray(sigmas, dtype=float)
    if sigmas.shape != (n2,):
        raise DimensionError(f"expected {n2} singular values, got shape {sigmas.shape}")
    if np.any(sigmas < 0) or not np.all(np.isfinite(sigmas)):
        raise DomainError("singular values must be finite and nonnegative")
    rng = np.random.default_rng(seed)
    o = haar_frame(n1, n2, rng)
    v = haar_frame(n2, n2, rng)
    w = (o * sigmas) @ v.T
    return CouplingMatrix(w, float(beta), Model.CUSTOM_SPECTRUM, seed)


def sample(model, n1: int, n2: int, beta: float, seed: int, sigmas=None) -> CouplingMatrix:
    model = Model.parse(model)
    if model is Model.IID:
        return sample_iid_gaussian(n1, n2, beta, seed)
    if model is Model.COLUMN_ORTHOGONAL:
        return sample_column_orthogonal(n1, n2, beta, seed)
    if sigmas is None:
        raise UsageError("custom_spectrum needs singular values")
    return sample_from_singular_values(n1, n2, sigmas, seed, beta)


def compute_svd(w) -> SpectralData:
    entries = w.entries if isinstance(w, CouplingMatrix) else np.asarray(w, dtype=float)
    if entries.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {entries.shape}")
    _check_dims(*entries.shape)
    if not np.all(np.isfinite(entries)):
        raise NumericalError("coupling matrix has non-finite entries")
    try:
        u, s, vt = np.linalg.svd(entries, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"SVD did not converge for {entries.shape} matrix "
            f"(Frobenius norm {np.linalg.norm(entries):.6g}, "
            f"max |entry| {np.abs(entries).max():.6g})"
        ) from exc
    return SpectralData(s, u, vt.T)


# -- file formats -----------------------------------------------------------

def save_matrix(path, w: CouplingMatrix) -> Path:
    """Binary container plus ``<path>.json`` sidecar with model, beta, seed."""
    path = Path(path)
    entries = np.ascontiguousarray(w.entries, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, w.n1, w.n2))
        fh.write(entries.tobytes(order="C"))
    beta = None if np.isnan(w.beta) else w.beta
    sidecar = {"model": w.model.value, "beta": beta, "seed": w.seed}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def load_matrix(path) -> CouplingMatrix:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise UsageError(f"{path}: file too short for header")
    magic, n1, n2 = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise UsageError(f"{path}: bad magic {magic!r}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * n1 * n2:
        raise UsageError(f"{path}: expected {8 * n1 * n2} data bytes, got {len(body)}")
    entries = np.frombuffer(body, dtype="<f8").reshape(n1, n2).astype(float)
    meta = {"model": Model.CUSTOM_SPECTRUM.value, "beta": None, "seed": None}
    sidecar = Path(str(path) + ".json")
    if sidecar.exists():
        meta.update(json.loads(sidecar.read_text()))
    beta = float("nan") if meta["beta"] is None else float(meta["beta"])
    return CouplingMatrix(entries, beta, Model.parse(meta["model"]), meta["seed"])


def save_spectrum(path, eigvals) -> Path:
    """One eigenvalue of ``W^T W`` per line."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for d in np.asarray(eigvals, dtype=float):
            fh.write(f"{d:.17g}\n")
    return path


def load_spectrum(path) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    vals = np.array([float(ln) for ln in lines if ln and not ln.startswith("#")])
    if vals.size == 0:
        raise UsageError(f"{path}: empty spectrum file")
    return vals
