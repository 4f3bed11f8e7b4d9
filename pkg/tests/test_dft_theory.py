import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rbmtap import (ConvergenceReport, DomainError, GeneratingFunction, GreenFunction,
                    NumericalError, UsageError, covariance_recursion, g_function, g_prime,
                    instability_bisection, mu_gamma, predict, solve_green_fixed_point,
                    solve_rs_fixed_point, stability_report, theta_analytic, theta_green)
from rbmtap.dft_theory import f_k, g_primes, jacobian, mu_at_beta
from rbmtap.order_params import ThetaCoefficients
from rbmtap.quadrature import expect

from conftest import solved

# parameter sets spanning both ensembles, weak to near-critical coupling
CASES = [("iid", 0.5), ("iid", 2.0), ("iid", 6.0), ("column_orthogonal", 2.0),
         ("column_orthogonal", 20.0)]


def mc_g(x, h, chi, q, n=10 ** 7, seed=0):
    """Monte Carlo ``E[f(z) f(z')]`` from correlated Gaussian pairs, in chunks."""
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(10):
        u, v = rng.standard_normal((2, n // 10))
        z = np.sqrt(q) * u
        zp = x / np.sqrt(q) * u + np.sqrt(q - x * x / q) * v
        vals.append(f_k(z, h, chi) * f_k(zp, h, chi))
    vals = np.concatenate(vals)
    return vals.mean(), vals.std() / np.sqrt(vals.size)


# -- g functions -------------------------------------------------------------

@pytest.mark.parametrize("model,beta", CASES)
def test_g_at_full_correlation_is_second_moment(model, beta):
    _, op = solved(model, beta)
    for h, chi, q in zip(op.fields(), op.chis(), op.qhats()):
        one_d = expect(lambda z: f_k(z - h, h, chi) ** 2, h, q)
        assert g_function(q, h, chi, q) == pytest.approx(one_d, abs=1e-10, rel=1e-10)


@pytest.mark.parametrize("model,beta", CASES)
def test_g_at_zero_is_squared_mean(model, beta):
    _, op = solved(model, beta)
    for h, chi, q in zip(op.fields(), op.chis(), op.qhats()):
        mean = expect(lambda z: f_k(z - h, h, chi), h, q)
        assert g_function(0.0, h, chi, q) == pytest.approx(mean ** 2, abs=1e-12, rel=1e-10)
        assert g_function(0.0, h, chi, q) > 0


@pytest.mark.parametrize("frac", [0.2, 0.6, 0.95])
def test_g_against_monte_carlo(frac):
    _, op = solved("iid", 2.0)
    for k, (h, chi, q) in enumerate(zip(op.fields(), op.chis(), op.qhats())):
        mean, se = mc_g(frac * q, h, chi, q, seed=k)
        assert abs(g_function(frac * q, h, chi, q) - mean) < 3 * se


def test_g_vectorised_and_degenerate():
    _, op = solved("iid", 2.0)
    h, chi, q = op.h1, op.chi1, op.qhat1
    xs = np.linspace(0, q, 7)
    assert np.allclose(g_function(xs, h, chi, q), [g_function(x, h, chi, q) for x in xs],
                       rtol=1e-14, atol=0)
    assert g_function(0.0, h, 0.3, 0.0) == pytest.approx(f_k(0.0, h, 0.3) ** 2, rel=1e-15)


def test_g_domain():
    with pytest.raises(DomainError):
        g_function(-1e-3, 1.0, 0.3, 1.0)
    with pytest.raises(DomainError):
        g_function(1.001, 1.0, 0.3, 1.0)
    with pytest.raises(DomainError):
        g_prime(1.0, 0.3, -1.0)


@settings(max_examples=25, deadline=None)
@given(h=st.floats(-3, 3).filter(lambda v: abs(v) > 0.05), chi=st.floats(0.05, 1.0),
       q=st.floats(0.05, 20.0))
def test_g_increasing_and_convex(h, chi, q):
    # every Hermite coefficient of g is a square, so g is increasing and convex on [0, q]
    xs = np.linspace(0, q, 9)
    g = g_function(xs, h, chi, q)
    scale = 1e-12 * max(1.0, np.abs(g).max())
    assert np.all(np.diff(g) > -scale)
    assert np.all(np.diff(g, 2) > -scale)
    assert g[0] >= -scale


def test_g_prime_degenerate():
    h = 2.0
    chi = 1 - np.tanh(h) ** 2
    assert g_prime(h, chi, 0.0) == pytest.approx(0.0, abs=1e-24)


@pytest.mark.parametrize("model,beta", CASES)
def test_g_prime_identity_at_self_consistency(model, beta):
    _, op = solved(model, beta)
    for h, chi, q in zip(op.fields(), op.chis(), op.qhats()):
        eta = expect(lambda y: (1 - np.tanh(y) ** 2) ** 2, h, q)
        assert g_prime(h, chi, q) == pytest.approx(eta / chi ** 2 - 1, abs=1e-8)


@pytest.mark.parametrize("model,beta", CASES)
def test_g_prime_is_derivative_at_full_correlation(model, beta):
    _, op = solved(model, beta)
    for h, chi, q in zip(op.fields(), op.chis(), op.qhats()):
        step = 1e-5 * q
        fd = (g_function(q, h, chi, q) - g_function(q - step, h, chi, q)) / step
        assert fd == pytest.approx(g_prime(h, chi, q), rel=1e-4, abs=1e-5)


# -- covariance recursion ----------------------------------------------------

@pytest.fixture(scope="module")
def predictions():
    out = {}
    for model, beta in CASES:
        gf, op = solved(model, beta)
        theta = theta_analytic(op, gf)
        out[model, beta] = (op, theta) + predict(op, theta, 200)
    return out


@pytest.mark.parametrize("model,beta", CASES)
def test_fixed_variance_identity(model, beta):
    gf, op = solved(model, beta)
    a = theta_analytic(op, gf).matrix
    g = [g_function(q, h, c, q) for h, c, q in zip(op.fields(), op.chis(), op.qhats())]
    assert np.allclose(a @ g, op.qhats(), rtol=0, atol=1e-6)


@pytest.mark.parametrize("model,beta", CASES)
def test_recursion_diagonal_and_symmetry(predictions, model, beta):
    op, _, cov, _ = predictions[model, beta]
    for k, q in ((1, op.qhat1), (2, op.qhat2)):
        c = cov.block(k)
        assert np.abs(np.diag(c) - q).max() < 1e-10
        assert np.array_equal(c, c.T)


@pytest.mark.parametrize("model,beta", CASES)
def test_recursion_off_diagonals_increase(predictions, model, beta):
    op, _, cov, rep = predictions[model, beta]
    assert rep.stable
    for k, q in ((1, op.qhat1), (2, op.qhat2)):
        c = cov.block(k)
        for lag in range(1, 30):
            band = np.diag(c, -lag)
            # once the band reaches q to machine precision it can no longer increase
            live = q - band > 1e-12 * q
            assert np.all(np.diff(band)[live[1:]] > 0)
            assert np.all(band[live] < q)
            assert np.all(band <= q * (1 + 1e-12))


def test_recursion_boundary_and_accessors(predictions):
    op, _, cov, _ = predictions["iid", 2.0]
    assert cov.at(1, 0, 0) == op.qhat1
    assert cov.at(2, 0, 5) == 0.0 and cov.at(1, 3, 0) == 0.0
    assert cov.at(2, 4, 2) == cov.C2[3, 1]
    assert np.allclose(cov.delta(1), 2 * (op.qhat1 - np.r_[0.0, np.diag(cov.C1, -1)]))


def test_recursion_first_row():
    # C(2, 1) = a_k1 g1(0) + a_k2 g2(0), since C(1, 0) = 0
    gf, op = solved("iid", 2.0)
    theta = theta_analytic(op, gf)
    cov = covariance_recursion(theta, op, 3)
    g0 = [g_function(0.0, h, c, q) for h, c, q in zip(op.fields(), op.chis(), op.qhats())]
    assert np.allclose([cov.C1[1, 0], cov.C2[1, 0]], theta.matrix @ g0, rtol=1e-14)


def test_recursion_weak_coupling():
    gf = GeneratingFunction.iid(0.5, 1e-6)
    op = solve_rs_fixed_point(gf, 2.0, 1.0)
    cov = covariance_recursion(theta_analytic(op, gf), op, 10)
    assert np.abs(cov.C1).max() < 1e-5 and np.abs(cov.C2).max() < 1e-5


def test_recursion_errors():
    _, op = solved("iid", 2.0)
    with pytest.raises(NumericalError, match="left"):
        covariance_recursion(ThetaCoefficients(10.0, 10.0, 10.0, 10.0), op, 5)
    with pytest.raises(NumericalError):
        covariance_recursion(ThetaCoefficients(np.inf, 0.0, 0.0, 0.0), op, 5)
    with pytest.raises(UsageError):
        covariance_recursion(ThetaCoefficients(0.1, 0.1, 0.1, 0.1), op, 0)


@pytest.mark.parametrize("model,beta,t", [("iid", 6.0, 40), ("iid", 7.0, 55),
                                          ("column_orthogonal", 20.0, 40),
                                          ("column_orthogonal", 25.0, 40)])
def test_rate_law(model, beta, t):
    gf, op = solved(model, beta)
    theta = theta_analytic(op, gf)
    cov, rep = predict(op, theta, t + 2)
    for k in (1, 2):
        d = cov.delta(k)
        assert d[t] / d[t - 1] == pytest.approx(rep.mu_gamma, rel=0.01)


def test_theta_paths_give_the_same_covariances():
    beta = 20.0
    gf = GeneratingFunction.column_orthogonal(0.5, beta)
    ana = solve_rs_fixed_point(gf, 2.0, 1.0)
    g = GreenFunction(np.full(64, beta), 0.5)
    grn = solve_green_fixed_point(g, 2.0, 1.0)
    a = covariance_recursion(theta_analytic(ana, gf), ana, 40)
    b = covariance_recursion(theta_green(grn, g), grn, 40)
    assert np.abs(a.C1 - b.C1).max() < 1e-6 and np.abs(a.C2 - b.C2).max() < 1e-6


# -- convergence rate --------------------------------------------------------

@pytest.mark.parametrize("model,beta", CASES)
def test_mu_is_top_eigenvalue_of_jacobian(predictions, model, beta):
    op, theta, _, rep = predictions[model, beta]
    eig = np.linalg.eigvals(jacobian(theta, rep.g1p, rep.g2p))
    assert rep.mu_gamma == pytest.approx(np.abs(eig).max(), rel=1e-12)
    assert (rep.g1p, rep.g2p) == g_primes(op)


def test_mu_vanishes_with_coupling():
    assert mu_at_beta("iid", 0.5, 2.0, 1.0, 1e-6) < 1e-5
    assert mu_at_beta("column_orthogonal", 0.5, 2.0, 1.0, 1e-6) < 1e-5


def test_mu_domain():
    with pytest.raises(DomainError):
        mu_gamma(ThetaCoefficients(0.1, 0.2, -0.2, 0.1), 1.0, 1.0)


@given(mu=st.floats(0, 3))
def test_stable_iff_below_one(mu):
    rep = ConvergenceReport(mu, 0.5, 0.5)
    assert rep.stable == (mu < 1)
    assert rep.near_critical == (abs(mu - 1) < 0.05)


@pytest.mark.parametrize("model", ["iid", "column_orthogonal"])
def test_mu_increasing_on_grid(model):
    betas = np.linspace(0.5, 35.0 if model == "column_orthogonal" else 9.0, 20)
    mus = [mu_at_beta(model, 0.5, 2.0, 1.0, b) for b in betas]
    assert np.all(np.diff(mus) > 0)


def test_column_orthogonal_near_threshold():
    assert mu_at_beta("column_orthogonal", 0.5, 2.0, 1.0, 29.4) == pytest.approx(1.0, abs=0.02)


@pytest.mark.parametrize("model", ["iid", "column_orthogonal"])
def test_bisection_root(model):
    hi = 40.0 if model == "column_orthogonal" else 12.0
    b = instability_bisection(model, 0.5, 2.0, 1.0, 1.0, hi, tol=1e-8)
    assert mu_at_beta(model, 0.5, 2.0, 1.0, b) == pytest.approx(1.0, abs=1e-8)


def test_bisection_bracket_error():
    with pytest.raises(UsageError, match="bracket"):
        instability_bisection("iid", 0.5, 2.0, 1.0, 1.0, 2.0)


@pytest.mark.parametrize("model,beta", CASES)
def test_stable_dynamics_implies_at_bounds(predictions, model, beta):
    op, _, _, rep = predictions[model, beta]
    gf, _ = solved(model, beta)
    st_ = stability_report(op, gf)
    assert rep.stable and st_.at_stable


# -- output ------------------------------------------------------------------

def test_covariance_csv(predictions, tmp_path):
    op, _, cov, _ = predictions["iid", 2.0]
    small = covariance_recursion(theta_analytic(op, solved("iid", 2.0)[0]), op, 4)
    path = small.to_csv(tmp_path / "cov.csv", {"model": "iid"})
    lines = path.read_text().splitlines()
    assert lines[:2] == ["# model=iid", "t,s,C1,C2"]
    assert len(lines) == 2 + 16
    t, s, c1, c2 = lines[3].split(",")
    assert (t, s) == ("1", "2") and float(c1) == small.C1[0, 1] and float(c2) == small.C2[0, 1]


def test_report_json(predictions, tmp_path):
    _, _, _, rep = predictions["iid", 2.0]
    path = rep.to_json(tmp_path / "rep.json", {"model": "iid"})
    data = json.loads(path.read_text())
    assert data["model"] == "iid" and data["stable"] is True
    assert data["mu_gamma"] == rep.mu_gamma
    assert len(data["predicted_delta1"]) == 200
