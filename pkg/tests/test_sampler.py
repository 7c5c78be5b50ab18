import math

import numpy as np
import pytest
from scipy import stats

from xyfluct.gradient import eta_array
from xyfluct.lattice import build_rect_domain
from xyfluct.oracle import height_covariance
from xyfluct.potentials import anharmonic, quadratic, truncated
from xyfluct.rng import CounterRNG
from xyfluct.sampler import (Model, ModelMismatchError, energy, heatbath_sweep_xy,
                             langevin_sweep, local_delta_energy, metropolis_acceptance,
                             metropolis_sweep, new_state, reflection_sweep, sample_ensemble)
from xyfluct.statistics import block_groups, jackknife
from xyfluct.vonmises import sample_vonmises, wrap_angle

QUAD = Model("grad", 1.0, quadratic())


def centre_draws(dom, model, n, seed=0, thin=1):
    ens = sample_ensemble(dom, model, 4, 200, n // 4, thin, seed)
    c = dom.interior_indices[0]
    return ens.theta[:, :, c].ravel(), block_groups(4, n // 4)


def test_tiny_width_keeps_configuration(grid5):
    st = new_state(grid5, Model("grad", 1.0, truncated()), 1)
    st.config.theta[grid5.interior_indices] = CounterRNG(2).normal(9)
    before = st.config.theta.copy()
    metropolis_sweep(st, width=1e-12)
    assert st.acceptance("metropolis") == 1.0
    assert np.allclose(st.config.theta, before, atol=1e-11)


def test_single_vertex_gaussian_marginal(grid3):
    x, g = centre_draws(grid3, QUAD, 100_000)
    var, se = jackknife(np.column_stack([x, x * x]), g, lambda m: m[1] - m[0] ** 2)
    assert abs(var - 0.25) <= 3 * se


def test_infinite_temperature_is_uniform(grid3):
    x, _ = centre_draws(grid3, Model("xy", 0.0), 20_000)
    assert stats.kstest(x, stats.uniform(-math.pi, 2 * math.pi).cdf).pvalue > 0.01


def test_heatbath_conditional_is_von_mises(grid3):
    st = new_state(grid3, Model("xy", 10.0), 3)
    c = grid3.interior_indices[0]
    x = np.empty(100_000)
    for i in range(x.size):
        heatbath_sweep_xy(st)
        x[i] = st.config.theta[c]
    z = np.exp(1j * x)
    mean_angle = np.angle(z.mean())
    assert abs(mean_angle) <= 3 * np.std(np.sin(x)) / math.sqrt(x.size) / abs(z.mean())
    kappa, _, _ = stats.vonmises.fit(x, floc=0, fscale=1)
    assert kappa == pytest.approx(40.0, rel=0.05)


def test_field_only_site_is_von_mises(grid3):
    x, _ = centre_draws(grid3, Model("xyfield", 0.0, h=2.0), 20_000)
    assert stats.kstest(x, stats.vonmises(2.0).cdf).pvalue > 0.01


def test_von_mises_sampler_direct():
    for kappa in (0.0, 0.5, 4.0, 200.0):
        x = sample_vonmises(0.3, kappa, 20_000, CounterRNG(9))
        assert x.min() >= -math.pi and x.max() < math.pi
        # scipy's vonmises is not wrapped, so compare the centred angles
        centred = np.array([wrap_angle(v - 0.3) for v in x])
        dist = stats.uniform(-math.pi, 2 * math.pi) if kappa == 0 else stats.vonmises(kappa)
        assert stats.kstest(centred, dist.cdf).pvalue > 0.01


def test_wrap_angle():
    assert wrap_angle(math.pi) == -math.pi
    assert wrap_angle(-math.pi) == -math.pi
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


def test_langevin_matches_euler_maruyama_variance(grid3):
    # For the 1-site OU process dθ = -4θ dt + sqrt(2) dB the EM chain has the exact
    # stationary variance 1 / (4 (1 - 2 dt)); the bias against 1/4 scales like dt.
    c = grid3.interior_indices[0]
    biases = {}
    for dt, n in ((1e-2, 200_000), (1e-3, 400_000)):
        st = new_state(grid3, QUAD, 4)
        for _ in range(int(2 / dt)):
            langevin_sweep(st, dt)
        x = np.empty(n)
        for i in range(n):
            langevin_sweep(st, dt)
            x[i] = st.config.theta[c]
        em = 1 / (4 * (1 - 2 * dt))
        var, se = jackknife(np.column_stack([x, x * x]), block_groups(1, n, 40),
                            lambda m: m[1] - m[0] ** 2)
        assert abs(var - em) <= 3 * se
        biases[dt] = em - 0.25
    assert biases[1e-2] / biases[1e-3] == pytest.approx(10, rel=0.02)


def test_langevin_fixed_point_and_drift(grid3):
    st = new_state(grid3, QUAD, 0)
    c = grid3.interior_indices[0]
    code, param, scale, beta, _, _ = st.model.kernel_args()
    # noise-free Euler step: with θ ≡ 0 the force vanishes
    from xyfluct.sampler import _langevin
    th = np.zeros(9)
    k = np.uint64(0)
    _langevin(th, grid3.interior_indices, grid3.nbr, code, param, scale, beta, 0.0, k, k, 0)
    assert not th.any()
    th[c] = 1.0
    _langevin(th, grid3.interior_indices, grid3.nbr, code, param, scale, beta, 0.0, k, k, 0)
    assert th[c] == 1.0  # dt = 0
    st.config.theta[c] = 1.0
    st0 = st.config.theta[c]
    langevin_sweep(st, 1e-8)
    assert abs(st.config.theta[c]) < st0 + 1e-3  # drift pulls towards 0 (noise ~1e-4)
    with pytest.raises(ModelMismatchError):
        langevin_sweep(new_state(grid3, Model("xy", 1.0), 0), 0.01)


def test_detailed_balance_at_acceptance_level(grid5):
    rng = CounterRNG(11)
    for model in (Model("grad", 2.0, truncated()), Model("xy", 1.5), Model("xyfield", 1.0, h=0.7),
                  Model("grad", 0.5, anharmonic(0.2))):
        st = new_state(grid5, model, 0)
        inner = grid5.interior_indices
        st.config.theta[inner] = np.mod(rng.normal(inner.size) * 2 + math.pi, 2 * math.pi) - math.pi
        s = st.config
        for x in inner:
            new = float(wrap_angle(s.theta[x] + rng.normal(1)[0]))
            s2 = type(s)(s.theta.copy(), s.domain, s.model)
            s2.theta[x] = new
            dh = energy(s2, model) - energy(s, model)
            assert local_delta_energy(s, model, x, new) == pytest.approx(dh, abs=1e-9 * max(1, abs(dh)))
            ratio = metropolis_acceptance(s, model, x, new) / metropolis_acceptance(s2, model, x, s.theta[x])
            assert ratio == pytest.approx(math.exp(-dh), rel=1e-9)


def test_energy_decomposition_along_update_path(grid5):
    model = Model("grad", 3.0, truncated())
    st = new_state(grid5, model, 2)
    rng = CounterRNG(4)
    h0 = energy(st.config, model)
    total = 0.0
    for x in rng.integers(grid5.n_vertices, 200):
        if grid5.boundary[x]:
            continue
        new = float(st.config.theta[x] + rng.normal(1)[0])
        total += local_delta_energy(st.config, model, x, new)
        st.config.theta[x] = new
    assert energy(st.config, model) - h0 == pytest.approx(total, rel=1e-9)


def test_gaussian_covariance_oracle(grid5):
    ens = sample_ensemble(grid5, QUAD, 4, 300, 10_000, 2, 5)
    inner = grid5.interior_indices
    th = ens.theta[:, :, inner].reshape(-1, inner.size)
    groups = block_groups(4, 10_000)
    iu = np.triu_indices(inner.size)
    prods = (th[:, :, None] * th[:, None, :])[:, iu[0], iu[1]]
    k = inner.size
    est, se = jackknife(np.hstack([th, prods]), groups,
                        lambda m: m[k:] - m[:k][iu[0]] * m[:k][iu[1]])
    z = np.abs(est - height_covariance(grid5, 1.0)[iu]) / se
    # 45 entries; a family-wise 3-sigma level corresponds to |z| < 4.01
    assert z.max() < 4.01


def test_streams_boundary_and_replay(grid5):
    model = Model("grad", 1.0, truncated())
    ens = sample_ensemble(grid5, model, 4, 50, 20, 1, 8)
    for a in range(4):
        for b in range(a + 1, 4):
            assert not np.array_equal(ens.theta[a], ens.theta[b])
    assert not ens.theta[:, :, grid5.boundary].any()
    again = sample_ensemble(grid5, model, 4, 50, 20, 1, 8)
    assert np.array_equal(ens.theta, again.theta)
    assert 0.3 < ens.acceptance["metropolis"] < 0.7


def test_xy_angles_stay_wrapped(grid5):
    ens = sample_ensemble(grid5, Model("xy", 0.3), 2, 20, 50, 1, 1)
    assert ens.theta.min() >= -math.pi and ens.theta.max() < math.pi


def test_very_cold_xy_has_small_increments():
    dom = build_rect_domain(2, 1.0, (0, 0), (6, 6))
    ens = sample_ensemble(dom, Model("xy", 1e6), 2, 50, 100, 1, 3)
    eta = eta_array(ens.theta.reshape(-1, dom.n_vertices), dom, True)
    assert np.abs(eta).max() < 0.05


def test_heatbath_and_metropolis_agree_in_law():
    dom = build_rect_domain(2, 1.0, (0, 0), (4, 4))
    model = Model("xy", 1.0)
    obs = {}
    for kind, sweep in (("hb", heatbath_sweep_xy), ("mh", metropolis_sweep)):
        vals = []
        for chain in range(4):
            st = new_state(dom, model, 21, stream=chain)
            if kind == "mh":
                st.width = 2.0
            for i in range(6000):
                sweep(st)
                reflection_sweep(st)
                if i >= 1000 and i % 10 == 0:
                    eta = eta_array(st.config.theta, dom, True)
                    vals.append(np.cos(eta).sum())
        obs[kind] = np.array(vals)
    assert stats.ks_2samp(obs["hb"], obs["mh"]).pvalue > 0.01
