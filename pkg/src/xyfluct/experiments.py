"""End-to-end verification runs.

Each function runs one seeded experiment and returns a JSON-ready dict with
a boolean ``passed`` and the numbers behind it.  Nothing here reads the
clock, so identical arguments give identical dicts.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from . import hswalk
from .gradient import couple_xy_gradient, eta_array, vortex_counts
from .lattice import build_rect_domain
from .oracle import edge_covariance, height_covariance, pairing_variance
from .potentials import BetaSchedule, Potential, anharmonic, beta_at, default_schedule, quadratic, truncated
from .sampler import Model, chain_diagnostics, iter_blocks, pilot_burnin
from .statistics import (active_edges, block_groups, brascamp_lieb_check, contour_rate_fit,
                         continuum_energy, default_test_function, discrete_energy,
                         edge_gradient, gaussian_limit_report, jackknife, mean_edge_exceedance,
                         pairing_weights, two_sample_ks)

UNIT_BOX = ([0.0, 0.0], [1.0, 1.0])
THREE_SIGMA_TWO_SIDED = 2 * stats.norm.sf(3.0)


def grid(n: int, d: int = 2):
    """The unit box with ``n`` vertices per side."""
    return build_rect_domain(d, 1.0 / (n - 1), [0.0] * d, [1.0] * d)


def model_for(name: str, beta: float, delta: float = math.pi / 4, lam: float = 0.1) -> Model:
    if name == "xy":
        return Model("xy", beta)
    pot = {"truncated": lambda: truncated(delta), "anharmonic": lambda: anharmonic(lam),
           "quadratic": quadratic}[name]()
    return Model("grad", beta, pot)


def sample_statistics(dom, model: Model, n_samples: int, seed: int, fns: dict,
                      n_chains: int = 4, thin: int = 2, n_reflect: int = 1,
                      burnin: int | None = None, blocks_per_chain: int = 10) -> dict:
    """Stream samples and reduce each θ block with ``fns[name](theta) -> (k, ...)``.

    Returns the stacked per-sample reductions, jackknife groups and chain
    diagnostics, without ever holding all configurations in memory.
    """
    per_chain = -(-n_samples // n_chains)
    if burnin is None:
        burnin = max(500, pilot_burnin(dom, model, seed, n_reflect, pilot_sweeps=1000))
    out = {k: [] for k in fns}
    obs = np.empty((n_chains, per_chain))
    filled = np.zeros(n_chains, dtype=int)
    acc = {}
    for c, st, theta, ob in iter_blocks(dom, model, n_chains, burnin, per_chain, thin, seed,
                                        n_reflect):
        for k, f in fns.items():
            out[k].append(f(theta))
        obs[c, filled[c]:filled[c] + len(ob)] = ob
        filled[c] += len(ob)
        if filled[c] == per_chain:
            acc = {k: st.acceptance(k) for k in st.proposed}
    tau, rhat = chain_diagnostics(obs, thin)
    return {"values": {k: np.concatenate(v) for k, v in out.items()},
            "groups": block_groups(n_chains, per_chain, blocks_per_chain),
            "tau_int": tau, "rhat": rhat, "burnin": int(burnin), "acceptance": acc,
            "n": n_chains * per_chain}


def _eta_fn(dom, wrapped):
    return lambda th: eta_array(th, dom, wrapped)


def _r(x, nd=6):
    """Round for reports so printed tables stay readable (full data stays in arrays)."""
    return None if x is None else float(round(float(x), nd))


# ---------------------------------------------------------------------------
# 1. Gaussian oracle calibration


def _sidak_z(n_tests: int, alpha: float = THREE_SIGMA_TWO_SIDED) -> float:
    """Two-sided z threshold giving family-wise level ``alpha`` over ``n_tests``."""
    per = -math.expm1(math.log1p(-alpha) / n_tests)
    return float(stats.norm.isf(per / 2))


def gaussian_oracle(seed: int = 1, sizes=(5, 8), n_samples: int = 40_000,
                    beta: float = 1.0) -> dict:
    """Quadratic model against the dense solve: height covariance and pairings."""
    out = {"sizes": {}, "passed": True}
    for n in sizes:
        dom = grid(n)
        inner = dom.interior_indices
        model = Model("grad", beta, quadratic())
        phis = {k: default_test_function(k, dom) for k in ("bump", "sine")}
        fns = {"theta": lambda th: th[:, inner]}
        for k, phi in phis.items():
            w = pairing_weights(dom, phi, beta)
            fns[k] = lambda th, w=w: eta_array(th, dom, False) @ w
        res = sample_statistics(dom, model, n_samples, seed + n, fns)
        th, groups = res["values"]["theta"], res["groups"]
        k = th.shape[1]
        iu = np.triu_indices(k)
        prods = (th[:, :, None] * th[:, None, :])[:, iu[0], iu[1]]

        def cov_fn(m, k=k, iu=iu):
            mu = m[:k]
            return m[k:] - mu[iu[0]] * mu[iu[1]]

        est, se = jackknife(np.hstack([th, prods]), groups, cov_fn)
        exact = height_covariance(dom, beta)[iu]
        z = np.abs(est - exact) / se
        z_star = _sidak_z(len(exact))
        cov_ok = bool(np.max(z) <= z_star)
        entry = {"entries": len(exact), "max_abs_z": _r(np.max(z), 4),
                 "n_beyond_3se": int(np.sum(z > 3)), "familywise_z": _r(z_star, 4),
                 "covariance_ok": cov_ok, "n": res["n"], "tau_int": _r(res["tau_int"], 4),
                 "rhat": _r(res["rhat"], 5), "pairings": {}}
        ok = cov_ok
        for name, phi in phis.items():
            v = res["values"][name]
            var, var_se = jackknife(np.column_stack([v, v * v]), groups,
                                    lambda m: m[1] - m[0] ** 2)
            orc = pairing_variance(dom, pairing_weights(dom, phi, beta)) / beta
            q = discrete_energy(phi, dom)
            rep = gaussian_limit_report(v, q, groups=groups)
            p_ok = bool(abs(var - orc) <= 3 * var_se) and bool(rep.passed)
            ok = ok and p_ok
            entry["pairings"][name] = {"var": _r(var), "var_se": _r(var_se), "oracle": _r(orc),
                                       "q_discrete": _r(q), "charfn_pass": rep.passed,
                                       "passed": p_ok}
        entry["passed"] = ok
        out["sizes"][str(n)] = entry
        out["passed"] = out["passed"] and ok
    return out


# ---------------------------------------------------------------------------
# 2, 3. white-noise limit


def white_noise(model_name: str, seed: int = 2, eps_list=(1 / 8, 1 / 16, 1 / 32),
                n_samples=(20_000, 30_000, 60_000), schedule: BetaSchedule | None = None,
                ratio_window=(0.95, 1.05), phis=("bump", "sine")) -> dict:
    """Characteristic function of ⟨η̃, φ⟩ against exp(-t²Q_ε/2) along a schedule."""
    schedule = schedule or default_schedule(2)
    rows, ok = [], True
    for i, (eps, n) in enumerate(zip(eps_list, n_samples)):
        dom = build_rect_domain(2, eps, *UNIT_BOX)
        beta, margin = beta_at(schedule, eps, 2)
        model = model_for(model_name, beta)
        fns = {}
        for k in phis:
            phi = default_test_function(k, dom)
            fns[k] = lambda th, w=pairing_weights(dom, phi, beta): \
                eta_array(th, dom, model.wrapped) @ w
        res = sample_statistics(dom, model, n, seed * 100 + i, fns)
        for k in phis:
            phi = default_test_function(k, dom)
            q = discrete_energy(phi, dom)
            rep = gaussian_limit_report(res["values"][k], q, groups=res["groups"],
                                        q_continuum=continuum_energy(phi))
            last = i == len(eps_list) - 1
            ratio_ok = (ratio_window[0] <= rep.var_ratio <= ratio_window[1]) if last else None
            row_ok = bool(rep.passed) and ratio_ok is not False
            ok = ok and row_ok
            rows.append({"eps": eps, "beta": _r(beta), "margin": _r(margin), "phi": k,
                         "n": rep.charfn.n, "q_discrete": _r(q),
                         "q_continuum": _r(rep.charfn.q_continuum),
                         "max_excess": _r(rep.max_excess), "charfn_pass": rep.passed,
                         "var_ratio": _r(rep.var_ratio), "var_ratio_se": _r(rep.var_ratio_se),
                         "ratio_checked": ratio_ok, "mean": _r(rep.mean),
                         "mean_se": _r(rep.mean_se), "skewness": _r(rep.skewness),
                         "excess_kurtosis": _r(rep.excess_kurtosis),
                         "tau_int": _r(res["tau_int"], 4), "rhat": _r(res["rhat"], 5),
                         "table": [[_r(x) for x in r] for r in rep.charfn.rows()],
                         "passed": row_ok})
    return {"model": model_name, "schedule": schedule.to_config(), "rows": rows, "passed": ok}


# ---------------------------------------------------------------------------
# 4. vortex suppression


def vortex_suppression(seed: int = 4, n: int = 16, betas=(1.0, 2.0, 5.0, 10.0, 20.0),
                       n_samples: int = 20_000, threshold: float = 1e-2) -> dict:
    dom = grid(n)
    rows = []
    for i, beta in enumerate(betas):
        res = sample_statistics(dom, Model("xy", beta), n_samples, seed * 100 + i,
                                {"k": lambda th: vortex_counts(eta_array(th, dom, True), dom)})
        counts = res["values"]["k"]
        p, se = jackknife((counts > 0).astype(float), res["groups"], lambda m: m[0])
        rows.append({"beta": beta, "p_vortex": _r(p), "se": _r(se),
                     "mean_charged": _r(counts.mean()), "n": res["n"]})
    mono = all(b["p_vortex"] <= a["p_vortex"] + 2 * math.hypot(a["se"], b["se"])
               for a, b in zip(rows, rows[1:]))
    small = rows[-1]["p_vortex"] < threshold
    return {"rows": rows, "monotone": mono, "final_below": small,
            "passed": bool(mono and small)}


# ---------------------------------------------------------------------------
# 5. contour estimates


def contour_rates(seed: int = 5, n: int = 16, betas=(10.0, 20.0, 40.0), a_vals=(0.3, 0.5, 0.8),
                  n_samples: int = 20_000, delta: float = math.pi / 3) -> dict:
    """Exceedance rates for XY (slope only) and the truncated model (explicit bound)."""
    dom = grid(n)
    edges = active_edges(dom)
    xy_points, convex_rows, ok_convex = [], [], True
    for i, beta in enumerate(betas):
        xy = sample_statistics(dom, Model("xy", beta), n_samples, seed * 100 + i,
                               {"eta": _eta_fn(dom, True)})
        cv = sample_statistics(dom, Model("grad", beta, truncated(delta)), n_samples,
                               seed * 100 + 50 + i, {"eta": _eta_fn(dom, False)})
        for a in a_vals:
            p, se, count = mean_edge_exceedance(xy["values"]["eta"][:, edges], np.arange(len(edges)),
                                                a, xy["groups"])
            xy_points.append((beta, a, p, se, count))
            hits = np.abs(cv["values"]["eta"][:, edges]) > a
            pe, pse = jackknife(hits.astype(float), cv["groups"], lambda m: m)
            bound = math.exp(1 - beta * a * a / math.pi ** 2)
            worst = int(np.argmax(pe - 2 * pse))
            row_ok = bool(np.all(pe <= bound + 2 * pse))
            ok_convex = ok_convex and row_ok
            convex_rows.append({"beta": beta, "a": a, "bound": _r(bound),
                                "max_p": _r(pe.max()), "p_at_worst": _r(pe[worst]),
                                "se_at_worst": _r(pse[worst]), "passed": row_ok})
    fit = contour_rate_fit([(b, a, p, se) for b, a, p, se, _ in xy_points])
    target = -1.0 / math.pi ** 2
    slope_ok = fit.slope + 2 * fit.slope_se <= target
    return {"xy_points": [{"beta": b, "a": a, "p": _r(p, 9), "se": _r(se, 9), "count": c}
                          for b, a, p, se, c in xy_points],
            "fit": {k: (_r(v, 6) if isinstance(v, float) else v) for k, v in fit.to_json().items()},
            "slope_target": _r(target), "slope_ok": bool(slope_ok),
            "convex": convex_rows, "convex_ok": ok_convex, "delta": _r(delta),
            "passed": bool(slope_ok and ok_convex)}


# ---------------------------------------------------------------------------
# 6. coupling


def coupling_fidelity(seed: int = 6, eps: float = 1 / 16, delta: float = math.pi / 4,
                      n_draws: int = 4000, n_direct: int = 8000) -> dict:
    dom = build_rect_domain(2, eps, *UNIT_BOX)
    beta, _ = beta_at(default_schedule(2), eps, 2)
    pot = truncated(delta)
    run = couple_xy_gradient(dom, pot, beta, seed, n_draws=n_draws)
    centre = dom.vertex_index([(s - 1) // 2 for s in dom.shape])
    e = int(dom.nbr_edge[centre, 0])
    exact = all(np.array_equal(p.eta_xy.eta, p.eta_delta.eta) for p in run.pairs
                if p.bad_edges.size == 0)
    c_xy = np.array([p.eta_xy.eta[e] for p in run.pairs])
    c_dl = np.array([p.eta_delta.eta[e] for p in run.pairs])
    d_xy = sample_statistics(dom, Model("xy", beta), n_direct, seed + 1000,
                             {"e": lambda th: eta_array(th, dom, True)[:, e]})["values"]["e"]
    d_dl = sample_statistics(dom, Model("grad", beta, pot), n_direct, seed + 2000,
                             {"e": lambda th: eta_array(th, dom, False)[:, e]})["values"]["e"]
    p_xy, p_dl = two_sample_ks(c_xy, d_xy), two_sample_ks(c_dl, d_dl)
    agree = run.agreement
    ok = agree >= 0.99 and p_xy > 0.01 and p_dl > 0.01 and exact
    return {"eps": eps, "beta": _r(beta), "delta": _r(delta), "draws": n_draws,
            "agreement": _r(agree), "bad_draws": int(sum(p.bad_edges.size > 0 for p in run.pairs)),
            "c_hat": _r(run.c_hat), "c_prime_hat": _r(run.c_prime_hat), "q_hat": _r(run.q_hat),
            "edge": e, "ks_p_xy": _r(p_xy), "ks_p_delta": _r(p_dl), "exact_on_good": exact,
            "passed": bool(ok)}


# ---------------------------------------------------------------------------
# 7. invariance principle


def invariance_principle(seed: int = 7, eps_list=(1 / 4, 1 / 8), t_grid=(0.25, 0.5, 1.0),
                         beta: float = 40.0, dt: float = 0.01, quad_envs: int = 48,
                         quad_walkers: int = 100, envs: int = 12, walkers: int = 1600,
                         tolerance: float = 0.05) -> dict:
    """Walk variance per coordinate against 2t; verdicts use the final time."""
    out, ok = {}, True
    for name, pot, b, ne, nw in (("quadratic", quadratic(), 1.0, quad_envs, quad_walkers),
                                 ("truncated", truncated(), beta, envs, walkers)):
        samples = [hswalk.diffusive_samples(pot, b, eps, t_grid, ne, nw, dt,
                                            seed * 1000 + 100 * i + (0 if name == "quadratic" else 50))
                   for i, eps in enumerate(eps_list)]
        rep = hswalk.diffusive_scaling_check(samples)
        checks = []
        for r in rep.rows:
            if r.t != t_grid[-1]:
                continue
            if name == "quadratic":
                var_ok = bool(np.all(np.abs(r.var_ratio - 1) <= 3 * r.var_ratio_se))
            else:
                var_ok = bool(np.all(np.abs(r.var_ratio - 1) <= tolerance))
            cross_ok = abs(r.cross_cov) <= 3 * r.cross_cov_se
            checks.append(var_ok and cross_ok and bool(r.gaussian))
        part_ok = all(checks)
        ok = ok and part_ok
        out[name] = {"beta": b, "rows": rep.to_json()["rows"],
                     "discarded": {str(s.eps): s.discarded for s in samples},
                     "mean_rate": {str(s.eps): _r(s.mean_rate) for s in samples},
                     "acceptance": {str(s.eps): _r(s.acceptance) for s in samples},
                     "box": {str(s.eps): s.box for s in samples}, "passed": part_ok}
    out["passed"] = ok
    return _round_tree(out)


def _round_tree(x):
    """Plain-Python copy of a result tree with floats rounded for stable output."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return _r(x)
    if isinstance(x, tuple):
        return [_round_tree(v) for v in x]
    if isinstance(x, np.ndarray):
        return _round_tree(x.tolist())
    if isinstance(x, dict):
        return {k: _round_tree(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_round_tree(v) for v in x]
    return x


# ---------------------------------------------------------------------------
# 8. Brascamp-Lieb


def brascamp_lieb(seed: int = 8, n: int = 16, deltas=(math.pi / 4, math.pi / 3),
                  betas=(10.0, 40.0), n_samples: int = 20_000) -> dict:
    dom = grid(n)
    rows, ok = [], True
    for i, delta in enumerate(deltas):
        for j, beta in enumerate(betas):
            pot = truncated(delta)
            res = sample_statistics(dom, Model("grad", beta, pot), n_samples,
                                    seed * 100 + 10 * i + j, {"eta": _eta_fn(dom, False)})
            rep = brascamp_lieb_check(res["values"]["eta"], dom, pot, beta,
                                      groups=res["groups"])
            ok = ok and rep.passed
            js = rep.to_json()
            rows.append({"delta": _r(delta), "beta": beta, **_round_tree(js)})
    return {"rows": rows, "passed": bool(ok)}


# ---------------------------------------------------------------------------
# 9. covariance representation


def covariance_representation(seed: int = 9, n_direct: int = 100_000, n_env: int = 40,
                              walkers: int = 500, horizon: float = 10.0) -> dict:
    dom = grid(5)
    C = edge_covariance(dom, 1.0)
    mid = dom.vertex_index([2, 2])
    b = int(dom.nbr_edge[mid, 0])
    far = int(dom.nbr_edge[dom.vertex_index([1, 1]), 2])
    res = sample_statistics(dom, Model("grad", 1.0, quadratic()), n_direct, seed,
                            {"eta": _eta_fn(dom, False)})
    cases = {"same_edge": ({b: 1.0}, {b: 1.0}), "constant": ({}, {b: 1.0}),
             "separated": ({b: 1.0}, {far: 1.0})}
    out, ok = {}, True
    for i, (name, (F, G)) in enumerate(cases.items()):
        fv = np.zeros(dom.n_edges)
        gv = np.zeros(dom.n_edges)
        for k, c in F.items():
            fv[k] = c
        for k, c in G.items():
            gv[k] = c
        orc = float(fv @ C @ gv)
        rep = hswalk.covariance_representation_check(
            dom, F, G, quadratic(), 1.0, res["values"]["eta"], res["groups"], n_env=n_env,
            walkers=walkers, horizon=horizon, seed=seed * 10 + i, oracle=orc)
        case_ok = rep.agree and bool(rep.oracle_ok())
        ok = ok and case_ok
        out[name] = {**_round_tree(rep.to_json()), "passed": case_ok}
    out["passed"] = ok
    return out


EXPERIMENTS = {
    "gaussian_oracle": gaussian_oracle,
    "white_noise": white_noise,
    "vortex_suppression": vortex_suppression,
    "contour_rates": contour_rates,
    "coupling_fidelity": coupling_fidelity,
    "invariance_principle": invariance_principle,
    "brascamp_lieb": brascamp_lieb,
    "covariance_representation": covariance_representation,
}


def run(name: str, **kwargs) -> dict:
    """Run one named experiment and return its result as plain JSON types."""
    try:
        fn = EXPERIMENTS[name]
    except KeyError:
        raise ValueError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}") from None
    return _round_tree(fn(**kwargs))
