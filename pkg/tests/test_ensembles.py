import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rbmtap import (DimensionError, DomainError, Model, NumericalError, UsageError, compute_svd,
                    load_matrix, load_spectrum, sample, sample_column_orthogonal,
                    sample_from_singular_values, sample_iid_gaussian, save_matrix, save_spectrum)
from rbmtap.ensembles import MAGIC


def test_iid_trace_matches_alpha_beta():
    w = sample_iid_gaussian(4000, 2000, 2.0, 11)
    assert np.trace(w.entries @ w.entries.T) / 4000 == pytest.approx(1.0, rel=0.05)
    assert w.alpha == 0.5
    assert w.model is Model.IID


def test_iid_entry_variance():
    w = sample_iid_gaussian(3000, 1000, 3.0, 5).entries
    assert w.mean() == pytest.approx(0.0, abs=5 * np.sqrt(3.0 / 3000 / w.size))
    assert w.var() == pytest.approx(3.0 / 3000, rel=0.01)


def test_determinism_small():
    a = sample_iid_gaussian(2, 1, 1.0, 42).entries
    b = sample_iid_gaussian(2, 1, 1.0, 42).entries
    assert a.shape == (2, 1) and np.all(np.isfinite(a))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_iid_gaussian(2, 1, 1.0, 43).entries)


@pytest.mark.parametrize("n1,n2", [(3, 4), (0, 0), (5, 0), (-2, 1)])
def test_bad_dimensions(n1, n2):
    for model in ("iid", "column_orthogonal"):
        with pytest.raises(DimensionError):
            sample(model, n1, n2, 1.0, 0)


def test_bad_beta():
    with pytest.raises(DomainError):
        sample_iid_gaussian(4, 2, 0.0, 0)
    with pytest.raises(DomainError):
        sample_column_orthogonal(4, 2, -1.0, 0)


def test_column_orthogonal_gram():
    w = sample_column_orthogonal(300, 120, 2.5, 3).entries
    assert np.abs(w.T @ w - 2.5 * np.eye(120)).max() <= 1e-10


def test_column_orthogonal_square_is_orthogonal():
    w = sample_column_orthogonal(50, 50, 1.0, 9).entries
    assert abs(np.linalg.det(w)) == pytest.approx(1.0, abs=1e-8)


def test_column_orthogonal_singular_values():
    s = compute_svd(sample_column_orthogonal(1000, 500, 4.0, 1)).sigmas
    assert np.abs(s - 2.0).max() <= 1e-10


def test_haar_columns_rotation_invariant():
    # fixed orthogonal R: entries of R w have the same first two moments as w
    n1, n2, beta = 40, 4, 2.0
    r = np.linalg.qr(np.random.default_rng(0).standard_normal((n1, n1)))[0]
    plain, rotated = [], []
    for seed in range(40):
        col = sample_column_orthogonal(n1, n2, beta, seed).entries[:, 0]
        plain.append(col)
        rotated.append(r @ col)
    plain, rotated = np.concatenate(plain), np.concatenate(rotated)
    se = np.sqrt(beta / n1 / plain.size)
    assert abs(plain.mean() - rotated.mean()) < 6 * se
    # every column has squared norm beta exactly, so second moments agree exactly
    assert np.mean(plain ** 2) == pytest.approx(beta / n1, rel=1e-10)
    assert np.mean(rotated ** 2) == pytest.approx(beta / n1, rel=1e-10)


def test_from_singular_values_zero():
    w = sample_from_singular_values(6, 3, np.zeros(3), 0)
    assert np.array_equal(w.entries, np.zeros((6, 3)))


def test_from_singular_values_round_trip():
    sig = np.array([0.3, 2.0, 1.1, 0.0, 5.0])
    s = compute_svd(sample_from_singular_values(9, 5, sig, 2)).sigmas
    assert np.abs(s - np.sort(sig)[::-1]).max() <= 1e-8


def test_from_singular_values_errors():
    with pytest.raises(DomainError):
        sample_from_singular_values(4, 2, [1.0, -0.5], 0)
    with pytest.raises(DimensionError):
        sample_from_singular_values(4, 2, [1.0, 2.0, 3.0], 0)


def test_constant_singular_values_match_column_orthogonal():
    n1, n2, beta = 60, 20, 3.0
    a = [sample_from_singular_values(n1, n2, np.full(n2, np.sqrt(beta)), s).entries
         for s in range(10)]
    b = [sample_column_orthogonal(n1, n2, beta, 100 + s).entries for s in range(10)]
    for k in (1, 2, 3):
        ma = np.mean([np.trace(np.linalg.matrix_power(w.T @ w, k)) / n2 for w in a])
        mb = np.mean([np.trace(np.linalg.matrix_power(w.T @ w, k)) / n2 for w in b])
        assert ma == pytest.approx(mb, rel=1e-10)
        assert ma == pytest.approx(beta ** k, rel=1e-10)
    # fourth moment of entries: Haar columns, same law
    m4a = np.mean([np.mean(w ** 4) for w in a])
    m4b = np.mean([np.mean(w ** 4) for w in b])
    assert m4a == pytest.approx(m4b, rel=0.1)


def test_iid_singular_values_reproduce_gram_moments():
    n1, n2, beta = 400, 200, 1.5
    direct, resampled = [], []
    for seed in range(10):
        w = sample_iid_gaussian(n1, n2, beta, seed)
        s = compute_svd(w).sigmas
        v = sample_from_singular_values(n1, n2, s, 1000 + seed).entries
        d = sample_iid_gaussian(n1, n2, beta, 2000 + seed).entries
        resampled.append([np.trace(np.linalg.matrix_power(v.T @ v, k)) / n2 for k in (1, 2)])
        direct.append([np.trace(np.linalg.matrix_power(d.T @ d, k)) / n2 for k in (1, 2)])
    direct, resampled = np.array(direct), np.array(resampled)
    se = np.sqrt(direct.var(axis=0) / 10 + resampled.var(axis=0) / 10)
    assert np.all(np.abs(direct.mean(axis=0) - resampled.mean(axis=0)) < 4 * se + 1e-12)
    # Marchenko-Pastur moments: beta, beta^2 (1 + alpha)
    assert direct.mean(axis=0)[0] == pytest.approx(beta, rel=0.02)
    assert direct.mean(axis=0)[1] == pytest.approx(beta ** 2 * 1.5, rel=0.03)


def test_svd_of_column_orthogonal():
    s = compute_svd(sample_column_orthogonal(200, 100, 2.0, 0)).sigmas
    assert np.abs(s - np.sqrt(2.0)).max() <= 1e-10


def test_svd_iid_trace_identity():
    spec = compute_svd(sample_iid_gaussian(2000, 1000, 1.0, 4))
    assert spec.eigvals_gram.mean() == pytest.approx(1.0, rel=0.05)
    assert np.all(np.diff(spec.sigmas) <= 0)


def test_svd_rejects_non_finite():
    w = np.ones((3, 2))
    w[1, 1] = np.nan
    with pytest.raises(NumericalError):
        compute_svd(w)


@pytest.mark.parametrize("model", ["iid", "column_orthogonal", "custom_spectrum"])
def test_round_trip_at_2000(model):
    sig = np.linspace(0.1, 2.0, 1000)
    w = sample(model, 2000, 1000, 1.0, 8, sigmas=sig)
    spec = compute_svd(w)
    err = np.linalg.norm(spec.reconstruct() - w.entries) / np.linalg.norm(w.entries)
    assert err <= 1e-8
    eye = np.eye(1000)
    assert np.abs(spec.left_basis.T @ spec.left_basis - eye).max() <= 1e-8
    assert np.abs(spec.right_basis.T @ spec.right_basis - eye).max() <= 1e-8


@settings(max_examples=30, deadline=None)
@given(n2=st.integers(1, 12), extra=st.integers(0, 12), beta=st.floats(0.01, 50),
       seed=st.integers(0, 2 ** 32 - 1),
       model=st.sampled_from(["iid", "column_orthogonal", "custom_spectrum"]))
def test_round_trip_property(n2, extra, beta, seed, model):
    n1 = n2 + extra
    sig = np.random.default_rng(seed).uniform(0, 3, n2)
    w = sample(model, n1, n2, beta, seed, sigmas=sig)
    spec = compute_svd(w)
    scale = max(np.linalg.norm(w.entries), 1e-300)
    assert np.linalg.norm(spec.reconstruct() - w.entries) / scale <= 1e-8
    assert np.allclose(spec.matvec(np.ones(n2)), w.entries @ np.ones(n2), atol=1e-10 * scale)
    assert np.allclose(spec.rmatvec(np.ones(n1)), w.entries.T @ np.ones(n1), atol=1e-10 * scale)
    # determinism
    assert np.array_equal(sample(model, n1, n2, beta, seed, sigmas=sig).entries, w.entries)


def test_matrix_file_round_trip(tmp_path):
    w = sample_iid_gaussian(7, 3, 2.0, 123)
    path = save_matrix(tmp_path / "w.bin", w)
    raw = path.read_bytes()
    assert raw[:8] == MAGIC and raw[:7] == b"BITAPM1"
    assert int.from_bytes(raw[8:12], "little") == 7
    assert int.from_bytes(raw[12:16], "little") == 3
    assert len(raw) == 16 + 8 * 21
    assert np.frombuffer(raw[16:24], "<f8")[0] == w.entries[0, 0]
    meta = json.loads((tmp_path / "w.bin.json").read_text())
    assert meta == {"model": "iid", "beta": 2.0, "seed": 123}
    back = load_matrix(path)
    assert np.array_equal(back.entries, w.entries)
    assert (back.beta, back.model, back.seed) == (2.0, Model.IID, 123)


def test_matrix_file_errors(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTMAGIC" + bytes(8))
    with pytest.raises(UsageError):
        load_matrix(bad)
    short = tmp_path / "short.bin"
    short.write_bytes(MAGIC + (2).to_bytes(4, "little") + (1).to_bytes(4, "little") + bytes(8))
    with pytest.raises(UsageError):
        load_matrix(short)


def test_spectrum_file_round_trip(tmp_path):
    d = compute_svd(sample_iid_gaussian(30, 10, 1.0, 0)).eigvals_gram
    path = save_spectrum(tmp_path / "s.txt", d)
    assert len(path.read_text().splitlines()) == 10
    assert np.array_equal(load_spectrum(path), d)


def test_model_parse():
    assert Model.parse("ii") is Model.COLUMN_ORTHOGONAL
    assert Model.parse("IID") is Model.IID
    with pytest.raises(UsageError):
        Model.parse("wishart")
