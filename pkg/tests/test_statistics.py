import math

import numpy as np
import pytest

from xyfluct.gradient import GradientConfig, eta_array
from xyfluct.lattice import build_rect_domain
from xyfluct.oracle import edge_covariance, height_covariance, pairing_variance
from xyfluct.potentials import cosine, quadratic, truncated
from xyfluct.rng import CounterRNG
from xyfluct.sampler import Model, sample_ensemble
from xyfluct.statistics import (InsufficientSamplesError, NonConvexError, SupportWarning,
                                block_groups, brascamp_lieb_check, bump, contour_probability,
                                contour_rate_fit, continuum_energy, default_test_function,
                                dirichlet_energy, discrete_energy, empirical_char_fn,
                                fluctuation_functional, fluctuation_values,
                                gaussian_limit_report, jackknife, pairing_weights, poly_bump,
                                sine_mode)

UNIT = ((0.0, 0.0), (1.0, 1.0))


def lookup(dom, values):
    """A test function given by its values at lattice points."""
    table = {tuple(c): v for c, v in values.items()}
    return lambda pos: np.array([table.get(tuple(np.rint(p / dom.eps).astype(int)), 0.0)
                                 for p in np.asarray(pos)])


def test_hand_evaluated_pairing(grid3):
    v = grid3.vertex_index
    phi = lookup(grid3, {(0, 1): 1.0, (2, 1): 1.0})
    eta = np.zeros(grid3.n_edges)
    centre, right, left = v((1, 1)), v((2, 1)), v((0, 1))
    for e, (t, h) in enumerate(zip(grid3.tail, grid3.head)):
        if (t, h) == (centre, right):
            eta[e] = 1.0
        if (t, h) == (left, centre):
            eta[e] = -1.0  # outward from the centre
    g = GradientConfig(eta, grid3, "gradient")
    with pytest.warns(SupportWarning):
        assert fluctuation_functional(g, phi, 1.0) == pytest.approx(2.0)


def test_zero_field_and_linearity():
    dom = build_rect_domain(2, 1 / 8, *UNIT)
    a, b = bump(*UNIT), sine_mode(*UNIT, k=(2, 1))
    g0 = GradientConfig(np.zeros(dom.n_edges), dom, "gradient")
    assert fluctuation_functional(g0, a, 3.0) == 0.0
    eta = CounterRNG(1).normal(5 * dom.n_edges).reshape(5, -1)
    both = lambda x: a(x) + b(x)
    lhs = eta @ pairing_weights(dom, both, 2.0)
    rhs = fluctuation_values(eta, dom, a, 2.0) + fluctuation_values(eta, dom, b, 2.0)
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12)
    assert np.allclose(fluctuation_values(3 * eta, dom, a, 2.0),
                       3 * fluctuation_values(eta, dom, a, 2.0))


def test_sine_energy():
    phi = sine_mode(*UNIT)
    assert continuum_energy(phi) == pytest.approx(math.pi ** 2 / 2, rel=1e-6)
    assert dirichlet_energy(phi) == continuum_energy(phi)
    fine = build_rect_domain(2, 1 / 64, *UNIT)
    ratio = discrete_energy(phi, fine) / (math.pi ** 2 / 2)
    assert abs(ratio - 1) < 0.005
    assert 0.99 <= ratio <= 1.01


def test_discrete_energy_converges():
    phi = bump(*UNIT)
    q = continuum_energy(phi)
    errs = [abs(discrete_energy(phi, build_rect_domain(2, e, *UNIT)) / q - 1)
            for e in (1 / 16, 1 / 32, 1 / 64)]
    assert errs[0] > errs[1] > errs[2]


def test_zero_function_energy():
    dom = build_rect_domain(2, 1 / 8, *UNIT)
    zero = lambda x: np.zeros(np.shape(x)[:-1])
    assert discrete_energy(zero, dom) == 0.0


def test_test_function_validation():
    with pytest.raises(ValueError):
        bump((0, 0), (1, 0))
    with pytest.raises(ValueError):
        default_test_function("wave", build_rect_domain(2, 0.5, *UNIT))
    p = poly_bump(*UNIT, power=2)
    assert p(np.array([0.5, 0.5])) == 1.0
    assert p(np.array([0.1, 0.5])) == 0.0


def test_gradient_matches_finite_differences():
    for phi in (bump(*UNIT), sine_mode(*UNIT, k=(1, 2)), poly_bump(*UNIT)):
        x = np.array([0.41, 0.57])
        h = 1e-6
        for a in range(2):
            dx = np.zeros(2)
            dx[a] = h
            fd = (phi(x + dx) - phi(x - dx)) / (2 * h)
            assert phi.grad(x)[a] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_char_fn_trivial_cases():
    v = CounterRNG(2).normal(500)
    cf = empirical_char_fn(v, [0.0, 0.5, 1.0])
    assert (cf.re[0], cf.im[0], cf.se_re[0], cf.se_im[0]) == (1.0, 0.0, 0.0, 0.0)
    c = np.full(200, 0.7)
    cf = empirical_char_fn(c, [0.3, 1.0, 2.0])
    assert np.allclose(cf.re, np.cos(np.array([0.3, 1.0, 2.0]) * 0.7), rtol=0, atol=1e-14)
    sym = empirical_char_fn(v, [-0.7, 0.7])
    assert sym.re[0] == sym.re[1] and sym.im[0] == -sym.im[1]
    with pytest.raises(InsufficientSamplesError):
        empirical_char_fn(v[:50], [1.0])


def test_synthetic_gaussian_control():
    q = 2.5
    v = CounterRNG(3).normal(20_000) * math.sqrt(q)
    rep = gaussian_limit_report(v, q)
    cf = rep.charfn
    assert np.all(np.abs(cf.re - cf.ref) <= 3 * np.maximum(cf.se_re, 1e-12))
    assert rep.passed
    assert abs(rep.var_ratio - 1) <= 3 * rep.var_ratio_se
    with pytest.raises(InsufficientSamplesError):
        gaussian_limit_report(v[:999], q)


def test_out_of_hypothesis_is_report_only():
    v = CounterRNG(4).normal(2000) * 5
    rep = gaussian_limit_report(v, 1.0, in_hypothesis=False)
    assert rep.passed is None and rep.to_json()["table"]
    assert gaussian_limit_report(v, 1.0).passed is False


def test_jackknife_mean_matches_classical():
    x = CounterRNG(5).normal(4000)
    est, se = jackknife(x, np.arange(4000), lambda m: m[0])
    assert est == pytest.approx(x.mean())
    assert se == pytest.approx(x.std(ddof=1) / math.sqrt(4000), rel=1e-9)
    assert list(block_groups(2, 4, 2)) == [0, 0, 1, 1, 2, 2, 3, 3]


def _eigen_green(n):
    """Dirichlet Green function on the (n-2)^2 interior by sine-mode expansion."""
    M = n - 1
    idx = np.arange(1, M)
    S = math.sqrt(2 / M) * np.sin(np.pi * np.outer(idx, idx) / M)
    lam1 = 2 - 2 * np.cos(np.pi * idx / M)
    G = np.zeros(((M - 1) ** 2,) * 2)
    for a, la in enumerate(lam1):
        for b, lb in enumerate(lam1):
            u = np.kron(S[a], S[b])
            G += np.outer(u, u) / (la + lb)
    return G


def test_oracle_dual_route():
    n = 7
    dom = build_rect_domain(2, 1.0, (0, 0), (n - 1, n - 1))
    inner = dom.coords[dom.interior_indices]
    order = np.lexsort((inner[:, 1], inner[:, 0]))
    C = height_covariance(dom, 2.0)[np.ix_(order, order)]
    assert np.allclose(C, _eigen_green(n) / 2.0, atol=1e-12)


def test_gaussian_pairing_variance_is_discrete_energy():
    dom = build_rect_domain(2, 1 / 8, *UNIT)
    for phi in (bump(*UNIT), sine_mode(*UNIT)):
        v = pairing_variance(dom, pairing_weights(dom, phi, 3.0)) / 3.0
        assert v == pytest.approx(discrete_energy(phi, dom), rel=1e-10)


def test_quadratic_pipeline_calibrated():
    dom = build_rect_domain(2, 1 / 8, *UNIT)
    phi = sine_mode(*UNIT)
    ens = sample_ensemble(dom, Model("grad", 1.0, quadratic()), 4, 500, 1500, 2, 6)
    vals = fluctuation_values(eta_array(ens.theta, dom, False), dom, phi, 1.0).ravel()
    groups = block_groups(4, 1500)
    rep = gaussian_limit_report(vals, discrete_energy(phi, dom), groups=groups)
    assert rep.passed
    assert abs(rep.var_ratio - 1) <= 3 * rep.var_ratio_se
    assert abs(rep.mean) <= 3 * rep.mean_se


def test_convex_contour_bound():
    dom = build_rect_domain(2, 1 / 4, *UNIT)
    pot = truncated(math.pi / 3)
    ens = sample_ensemble(dom, Model("grad", 20.0, pot), 4, 300, 500, 2, 7)
    eta = eta_array(ens.theta, dom, False).reshape(-1, dom.n_edges)
    e = dom.directed_edge(dom.vertex_index((1, 2)), dom.vertex_index((2, 2)))
    a = math.pi / 3 * (1 - 1e-12)
    est = contour_probability(eta, dom, [e], a, 20.0, pot, groups=block_groups(4, 500))
    assert est.bound == pytest.approx(0.2945, abs=1e-4)
    assert est.within_bound
    assert est.ci[0] <= est.p <= est.ci[1]
    small = contour_probability(eta, dom, [e], 1e-9, 20.0, pot)
    assert small.p == 1.0 and small.bound >= 1.0


def test_contour_preconditions(grid5):
    e = grid5.directed_edge(0, 1)
    rev = grid5.directed_edge(1, 0)
    eta = np.zeros((10, grid5.n_edges))
    with pytest.raises(ValueError):
        contour_probability(eta, grid5, [e, rev], 0.3, 10.0)
    with pytest.raises(ValueError):
        contour_probability(eta, grid5, [e], 4.0, 10.0)
    with pytest.raises(ValueError):
        contour_probability(eta, grid5, [e], 0.3, 10.0, truncated(1.2))
    with pytest.raises(ValueError):
        contour_probability(eta, grid5, [e], 0.5, 10.0, truncated(0.4))
    with pytest.raises(ValueError):
        contour_probability(eta, grid5, [e], 0.3, 10.0, quadratic())


def test_separated_edges_join_below_product():
    dom = build_rect_domain(2, 1 / 8, *UNIT)
    ens = sample_ensemble(dom, Model("xy", 2.0), 4, 200, 2000, 2, 8)
    eta = eta_array(ens.theta, dom, True).reshape(-1, dom.n_edges)
    g = block_groups(4, 2000)
    e1 = dom.directed_edge(dom.vertex_index((2, 2)), dom.vertex_index((3, 2)))
    e2 = dom.directed_edge(dom.vertex_index((5, 6)), dom.vertex_index((6, 6)))
    a = 0.8
    hit1, hit2 = np.abs(eta[:, dom.split_directed([e1])[0][0]]) > a, \
        np.abs(eta[:, dom.split_directed([e2])[0][0]]) > a
    both = contour_probability(eta, dom, [e1, e2], a, 2.0, groups=g)
    prod, se = jackknife(np.column_stack([hit1, hit2, hit1 & hit2]), g,
                         lambda m: m[2] - m[0] * m[1])
    assert both.p == pytest.approx(np.mean(hit1 & hit2))
    assert prod <= 3 * se


def test_rate_fit_recovers_slope():
    pts = [(b, a, 0.7 * math.exp(-b * a * a / 9), 0.01 * math.exp(-b * a * a / 9))
           for b in (10, 20, 40) for a in (0.3, 0.5)]
    fit = contour_rate_fit(pts + [(40, 0.8, 0.0, 0.0)])
    assert fit.slope == pytest.approx(-1 / 9, rel=1e-9)
    assert fit.dropped == [(40, 0.8)] and fit.used == 6
    with pytest.raises(InsufficientSamplesError):
        contour_rate_fit(pts[:2])


def test_brascamp_lieb_bounds(grid5):
    diag = np.diag(edge_covariance(grid5, 1.0))
    assert diag.max() < 1.0
    pot = truncated(math.pi / 3)
    ens = sample_ensemble(grid5, Model("grad", 10.0, pot), 4, 300, 500, 2, 9)
    eta = eta_array(ens.theta, grid5, False).reshape(-1, grid5.n_edges)
    rep = brascamp_lieb_check(eta, grid5, pot, 10.0, ts=(0.0, 0.5, 1.0),
                              groups=block_groups(4, 500))
    assert rep.var_bound == pytest.approx(2.0)
    assert rep.mgf[0.0][0] == 1.0 and rep.mgf[0.0][2] == 1.0
    assert rep.passed
    with pytest.raises(NonConvexError):
        brascamp_lieb_check(eta, grid5, cosine(), 10.0)


def test_fluctuation_mean_zero_xy():
    dom = build_rect_domain(2, 1 / 8, *UNIT)
    ens = sample_ensemble(dom, Model("xy", 15.0), 4, 200, 1000, 2, 10)
    vals = fluctuation_values(eta_array(ens.theta, dom, True), dom, bump(*UNIT), 15.0).ravel()
    m, se = jackknife(vals, block_groups(4, 1000), lambda x: x[0])
    assert abs(m) <= 3 * se
