"""Random walk with jump rates V''(η_t) in a Langevin-evolving gradient field.

The environment lives in rescaled variables: θ̃ follows

    dθ̃(x) = -Σ_{y~x} Ṽ'(θ̃(x) - θ̃(y)) dt + √2 dB_x

with Ṽ(x) = β V(x/√β), integrated by Euler-Maruyama.  A walker at x jumps
to each neighbour y at rate Ṽ''(θ̃(y) - θ̃(x)), simulated by thinning a
Poisson stream of rate 2dΛ.  Candidate events falling inside an environment
step see the environment as it was at the start of that step.

Environments are either a periodic box (for the invariance principle) or a
LatticeDomain with pinned boundary (for the covariance representation, where
walkers are killed on hitting the boundary).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from numba import njit, prange

from .lattice import LatticeDomain
from .potentials import Potential, rescaled_potential, vfun
from .rng import normal_pair, stream_key, uniform_pair
from .sampler import tau_int
from .statistics import InsufficientSamplesError, gaussian_limit_report, jackknife

# The system TBB is too old for numba; prefer OpenMP and skip the warning.
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

MIN_TRAJECTORIES = 500
BURNIN_FACTOR = 20.0


class InstabilityError(RuntimeError):
    """The Euler-Maruyama environment exceeded its blow-up guard."""


class ThinningError(RuntimeError):
    """A realised jump rate exceeded the thinning cap."""


class TruncationWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# environment


@dataclass
class EnvironmentProcess:
    theta: np.ndarray  # rescaled heights θ̃
    nbr: np.ndarray  # (n, 2d), -1 where absent
    pinned: np.ndarray  # bool (n,)
    d: int
    potential: Potential  # the rescaled Ṽ
    beta: float
    dt: float
    key: tuple
    seed: int = 0
    stream: int = 0
    step: int = 0
    time: float = 0.0
    blowup: float = 50.0
    frozen: bool = False
    shape: tuple = ()
    burnin_time: float = 0.0

    @property
    def n_sites(self) -> int:
        return self.theta.size

    def eta(self) -> np.ndarray:
        """η̃ along +e_a at every site, shape (n, d); zero where the edge is absent."""
        out = np.zeros((self.n_sites, self.d))
        for a in range(self.d):
            y = self.nbr[:, 2 * a]
            ok = y >= 0
            out[ok, a] = self.theta[y[ok]] - self.theta[ok]
        return out

    def rates(self) -> np.ndarray:
        """Jump rates Ṽ''(η̃) along +e_a, shape (n, d)."""
        code, param, scale = self.potential.kernel_args
        e = self.eta()
        return np.vectorize(lambda x: vfun(code, param, scale, x)[2])(e)

    @property
    def c_plus(self) -> float:
        return self.potential.c_plus


def _torus_nbr(L: int, d: int) -> np.ndarray:
    idx = np.arange(L ** d).reshape((L,) * d)
    nbr = np.empty((L ** d, 2 * d), dtype=np.int64)
    for a in range(d):
        nbr[:, 2 * a] = np.roll(idx, -1, axis=a).ravel()
        nbr[:, 2 * a + 1] = np.roll(idx, 1, axis=a).ravel()
    return nbr


def _check_family(potential: Potential) -> None:
    if potential.c_plus is None or not math.isfinite(potential.c_plus):
        raise ValueError(f"{potential.family} potential has unbounded V''; the walk "
                         "needs a finite thinning cap")


def _new_env(theta, nbr, pinned, d, potential, beta, dt, seed, stream, blowup, shape):
    _check_family(potential)
    pot = rescaled_potential(potential, beta)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt > 0.01 / pot.c_plus + 1e-15:
        raise ValueError(f"dt={dt} exceeds the stability limit 0.01/c+ = {0.01 / pot.c_plus}")
    return EnvironmentProcess(theta, nbr, pinned, d, pot, float(beta), float(dt),
                              stream_key(seed, stream, ":env"), int(seed), int(stream),
                              blowup=blowup, shape=shape)


def torus_environment(L: int, d: int, potential: Potential, beta: float, dt: float,
                      seed: int, stream: int = 0, burnin_time: float | None = None,
                      blowup: float = 50.0) -> EnvironmentProcess:
    """Periodic box of side ``L``, started flat and equilibrated."""
    n = L ** d
    env = _new_env(np.zeros(n), _torus_nbr(L, d), np.zeros(n, dtype=bool), d, potential,
                   beta, dt, seed, stream, blowup, (L,) * d)
    equilibrate(env, burnin_time)
    return env


def frozen_environment(theta, L: int, d: int, potential: Potential, beta: float,
                       dt: float = 0.01, seed: int = 0, stream: int = 0) -> EnvironmentProcess:
    """Periodic box holding the rescaled heights ``theta`` fixed for all time.

    The walk then sees the static conductances Ṽ''(η̃); ``dt`` is only the
    step on which walkers are advanced.
    """
    theta = np.array(theta, dtype=float).reshape(-1)
    if theta.size != L ** d:
        raise ValueError(f"theta has {theta.size} entries, expected {L ** d}")
    env = _new_env(theta, _torus_nbr(L, d), np.zeros(L ** d, dtype=bool), d, potential, beta,
                   dt, seed, stream, math.inf, (L,) * d)
    env.frozen = True
    return env


def domain_environment(dom: LatticeDomain, potential: Potential, beta: float, dt: float,
                       seed: int, stream: int = 0, burnin_time: float | None = None,
                       blowup: float = 50.0) -> EnvironmentProcess:
    """Environment on a lattice domain with θ̃ pinned to 0 on the boundary."""
    env = _new_env(np.zeros(dom.n_vertices), dom.nbr, dom.boundary.copy(), dom.d, potential,
                   beta, dt, seed, stream, blowup, ())
    equilibrate(env, burnin_time)
    return env


@njit(cache=True, parallel=True)
def _em_step(theta, new, nbr, pinned, code, param, scale, dt, k0, k1, step):
    # Ṽ' once per edge (site x, direction +e_a), then gathered per site
    n, d = theta.size, nbr.shape[1] // 2
    dv = np.zeros((n, d))
    for x in prange(n):
        for a in range(d):
            y = nbr[x, 2 * a]
            if y >= 0:
                dv[x, a] = vfun(code, param, scale, theta[x] - theta[y])[1]
    sq = math.sqrt(2.0 * dt)
    for x in prange(n):
        if pinned[x]:
            new[x] = theta[x]
            continue
        f = 0.0
        for a in range(d):
            f += dv[x, a]
            y = nbr[x, 2 * a + 1]
            if y >= 0:
                f -= dv[y, a]
        g, _ = normal_pair(k0, k1, step, x, 0)
        new[x] = theta[x] - dt * f + sq * g


@njit(cache=True)
def _max_abs_eta(theta, nbr):
    m = 0.0
    for x in range(theta.size):
        for s in range(0, nbr.shape[1], 2):
            y = nbr[x, s]
            if y >= 0:
                m = max(m, abs(theta[y] - theta[x]))
    return m


@njit(cache=True)
def _mean_rate(theta, nbr, code, param, scale):
    tot = 0.0
    cnt = 0
    for x in range(theta.size):
        for s in range(0, nbr.shape[1], 2):
            y = nbr[x, s]
            if y >= 0:
                tot += vfun(code, param, scale, theta[y] - theta[x])[2]
                cnt += 1
    return tot / max(cnt, 1)


@njit(cache=True)
def _em_run(theta, buf, nbr, pinned, code, param, scale, dt, k0, k1, step0, n_steps, blowup):
    """``n_steps`` Euler-Maruyama steps; returns (state in buf?, steps done)."""
    cur, nxt = theta, buf
    swapped = False
    for i in range(n_steps):
        _em_step(cur, nxt, nbr, pinned, code, param, scale, dt, k0, k1, step0 + i)
        cur, nxt = nxt, cur
        swapped = not swapped
        if ((i + 1) % 100 == 0 or i == n_steps - 1) and _max_abs_eta(cur, nbr) > blowup:
            return swapped, i + 1
    return swapped, n_steps


def _advance(env: EnvironmentProcess, n_steps: int) -> None:
    if n_steps <= 0:
        return
    code, param, scale = env.potential.kernel_args
    buf = np.empty_like(env.theta)
    swapped, done = _em_run(env.theta, buf, env.nbr, env.pinned, code, param, scale, env.dt,
                            env.key[0], env.key[1], env.step, int(n_steps), env.blowup)
    if swapped:
        env.theta[:] = buf
    env.step += done
    env.time += done * env.dt
    if done < n_steps or _max_abs_eta(env.theta, env.nbr) > env.blowup:
        raise InstabilityError(f"|η̃| exceeded {env.blowup} at t={env.time}")


def evolve_environment(env: EnvironmentProcess, horizon: float) -> EnvironmentProcess:
    """Advance the environment by ``round(horizon / dt)`` Euler-Maruyama steps."""
    if env.frozen:
        env.time += horizon
        return env
    _advance(env, int(round(horizon / env.dt)))
    return env


def equilibrate(env: EnvironmentProcess, burnin_time: float | None = None,
                pilot_time: float = 20.0, sample_every: float = 0.1) -> float:
    """Burn in; by default for 20 τ_int of the mean jump rate from a pilot run."""
    if burnin_time is None:
        code, param, scale = env.potential.kernel_args
        k = max(1, int(round(sample_every / env.dt)))
        obs = []
        for _ in range(int(round(pilot_time / sample_every))):
            _advance(env, k)
            obs.append(_mean_rate(env.theta, env.nbr, code, param, scale))
        obs = np.asarray(obs)
        tau = tau_int(obs[len(obs) // 2:]) if np.ptp(obs) > 0 else 0.5
        burnin_time = max(pilot_time, BURNIN_FACTOR * tau * sample_every)
        _advance(env, int(round((burnin_time - pilot_time) / env.dt)))
    else:
        _advance(env, int(round(burnin_time / env.dt)))
    env.burnin_time = float(burnin_time)
    return env.burnin_time


# ---------------------------------------------------------------------------
# walks


_INIT_SLOT = 0x7FFFFFFF  # counter slot reserved for each walker's first waiting time


@njit(cache=True)
def _walk(theta, buf, nbr, pinned, code, param, scale, evolve, ek0, ek1, blowup,
          lam, dt, n_steps, step0, t0, wk0, wk1,
          site, disp, alive, next_t, last_t, g, integral, rate_acc, max_disp,
          cap, ev_t, ev_site, ev_rate, ev_n, stats):
    """Advance walkers and environment together through ``n_steps`` steps.

    Within a step the walkers see the environment at the start of the step;
    the environment then takes one Euler-Maruyama step into ``buf`` and the
    two arrays are swapped.  Returns True if the final state sits in ``buf``.
    stats = [candidates, accepted, cap violations, log overflow, blow-up].
    """
    W = site.size
    two_d = nbr.shape[1]
    total = two_d * lam
    cur, nxt = theta, buf
    swapped = False
    for s in range(n_steps):
        step = step0 + s
        t_end = t0 + (s + 1) * dt
        for w in range(W):
            if not alive[w]:
                continue
            k = 0
            while next_t[w] < t_end:
                u1, u2 = uniform_pair(wk0, wk1, step, w, 2 * k)
                u3, _ = uniform_pair(wk0, wk1, step, w, 2 * k + 1)
                k += 1
                stats[0] += 1
                slot = min(int(u1 * two_d), two_d - 1)
                x = site[w]
                y = nbr[x, slot]
                tc = next_t[w]
                next_t[w] = tc - math.log1p(-u3) / total
                if y < 0:
                    continue
                r = vfun(code, param, scale, cur[y] - cur[x])[2]
                if r > lam * (1.0 + 1e-12):
                    stats[2] += 1
                    return swapped
                if u2 * lam >= r:
                    continue
                stats[1] += 1
                integral[w] += g[x] * (tc - last_t[w])
                last_t[w] = tc
                site[w] = y
                a = slot // 2
                disp[w, a] += 1 if slot % 2 == 0 else -1
                if abs(disp[w, a]) > max_disp[w]:
                    max_disp[w] = abs(disp[w, a])
                if cap > 0:
                    if ev_n[w] < cap:
                        ev_t[w, ev_n[w]] = tc
                        ev_site[w, ev_n[w]] = y
                        ev_rate[w, ev_n[w]] = r
                        ev_n[w] += 1
                    else:
                        stats[3] += 1
                if pinned[y]:
                    alive[w] = False
                    break
            if alive[w]:
                x = site[w]
                y = nbr[x, 0]
                if y >= 0:
                    rate_acc[w] += vfun(code, param, scale, cur[y] - cur[x])[2] * dt
        if evolve:
            _em_step(cur, nxt, nbr, pinned, code, param, scale, dt, ek0, ek1, step)
            cur, nxt = nxt, cur
            swapped = not swapped
            if (s + 1) % 100 == 0 and _max_abs_eta(cur, nbr) > blowup:
                stats[4] += 1
                return swapped
    return swapped


@dataclass
class WalkTrajectory:
    start: int
    times: np.ndarray  # jump times, measured from the walk's start
    sites: np.ndarray  # site after each jump
    rates: np.ndarray  # realised rate of each accepted jump
    killed: bool

    def __post_init__(self):
        if self.times.size and np.any(np.diff(self.times) < 0):
            raise AssertionError("jump times must increase")


@dataclass
class WalkBatch:
    """Co-simulated walkers in one environment."""

    start: np.ndarray
    obs_times: np.ndarray
    positions: np.ndarray  # (n_obs, W, d) displacement from start
    g_at_obs: np.ndarray  # (n_obs, W) g(X_t), zero once killed
    integral: np.ndarray  # ∫ g(X_s) ds over [0, horizon]
    mean_rate: np.ndarray  # time average of the rate on the +e_1 edge at X_t
    max_disp: np.ndarray
    alive: np.ndarray
    candidates: int
    accepted: int
    trajectories: list = field(default_factory=list)

    @property
    def acceptance(self) -> float:
        return self.accepted / self.candidates if self.candidates else float("nan")


def simulate_walk(env: EnvironmentProcess, start, horizon: float, lam: float | None = None,
                  obs_times=None, g: np.ndarray | None = None, record_events: bool = False,
                  walk_stream: int = 0) -> WalkBatch:
    """Run walkers from ``start`` (a site or array of sites) for ``horizon``.

    The environment is advanced alongside (unless frozen) and is left at the
    final time.  ``lam`` defaults to c₊ of the environment's potential.
    ``g`` is a site function whose time integral along each walk is returned.
    """
    lam = env.c_plus if lam is None else float(lam)
    if lam < env.c_plus - 1e-12:
        raise ValueError(f"thinning cap {lam} is below sup V'' = {env.c_plus}")
    start = np.atleast_1d(np.asarray(start, dtype=np.int64))
    W, d = start.size, env.d
    n_steps = int(round(horizon / env.dt))
    obs_times = np.asarray([horizon] if obs_times is None else obs_times, dtype=float)
    obs_steps = np.rint(obs_times / env.dt).astype(np.int64)
    if np.any(obs_steps < 1) or np.any(np.diff(obs_steps) <= 0) or obs_steps[-1] > n_steps:
        raise ValueError("observation times must be increasing and within (0, horizon]")
    g = np.zeros(env.n_sites) if g is None else np.asarray(g, dtype=float)
    wk0, wk1 = stream_key(env.seed, env.stream, f":walk{walk_stream}:{env.step}")
    code, param, scale = env.potential.kernel_args

    site = start.copy()
    disp = np.zeros((W, d), dtype=np.int64)
    alive = ~env.pinned[site]
    t0 = env.time
    last_t = np.full(W, t0)
    next_t = np.empty(W)
    for w in range(W):
        u, _ = uniform_pair(wk0, wk1, 0, w, _INIT_SLOT)
        next_t[w] = t0 - math.log1p(-u) / (2 * d * lam)
    integral, rate_acc = np.zeros(W), np.zeros(W)
    max_disp = np.zeros(W, dtype=np.int64)
    n_ev = 2 * d * lam * horizon
    cap = int(n_ev + 10 * math.sqrt(n_ev) + 50) if record_events else 0
    ev_t = np.zeros((W, cap))
    ev_site = np.zeros((W, cap), dtype=np.int64)
    ev_rate = np.zeros((W, cap))
    ev_n = np.zeros(W, dtype=np.int64)
    stats = np.zeros(5, dtype=np.int64)
    pos = np.zeros((len(obs_steps), W, d), dtype=np.int64)
    gobs = np.zeros((len(obs_steps), W))
    buf = np.empty_like(env.theta)

    done = 0
    for j, target in enumerate(obs_steps):
        k = int(target - done)
        swapped = _walk(env.theta, buf, env.nbr, env.pinned, code, param, scale,
                        not env.frozen, env.key[0], env.key[1], env.blowup, lam, env.dt, k,
                        env.step, env.time, wk0, wk1, site, disp, alive, next_t, last_t, g,
                        integral, rate_acc, max_disp, cap, ev_t, ev_site, ev_rate, ev_n, stats)
        if swapped:
            env.theta[:] = buf
        if stats[2]:
            raise ThinningError("realised jump rate exceeded the thinning cap")
        if stats[4]:
            raise InstabilityError(f"|η̃| exceeded {env.blowup} near t={env.time + k * env.dt}")
        env.step += k
        env.time += k * env.dt
        done = int(target)
        pos[j] = disp
        gobs[j] = np.where(alive, g[site], 0.0)
    t_end = env.time
    integral += np.where(alive, g[site] * (t_end - last_t), 0.0)
    if stats[3]:
        warnings.warn("event log capacity exceeded; trajectories truncated")
    trajs = []
    if record_events:
        for w in range(W):
            k = ev_n[w]
            trajs.append(WalkTrajectory(int(start[w]), ev_t[w, :k] - t0, ev_site[w, :k].copy(),
                                        ev_rate[w, :k].copy(), not alive[w]))
    return WalkBatch(start, obs_times, pos, gobs, integral, rate_acc / (t_end - t0), max_disp,
                     alive, int(stats[0]), int(stats[1]), trajs)


# ---------------------------------------------------------------------------
# invariance principle


@dataclass
class ScaleSample:
    """Rescaled walk positions ε X(t/ε²) at one scale, grouped by environment."""

    eps: float
    t_grid: np.ndarray
    positions: np.ndarray  # (n_env, W, n_t, d)
    discarded: int
    acceptance: float
    mean_rate: float  # time-averaged rate seen by the walkers
    box: int
    beta: float
    family: str

    @property
    def n_trajectories(self) -> int:
        return self.positions.shape[0] * self.positions.shape[1]


def box_side(horizon: float, d: int, factor: float = 8.0) -> int:
    """Smallest even side with at least ``factor`` diffusive ranges √(2d·horizon)."""
    L = int(math.ceil(factor * math.sqrt(2 * d * horizon)))
    return L + (L % 2)


def diffusive_samples(potential: Potential, beta: float, eps: float, t_grid, n_env: int,
                      walkers_per_env: int, dt: float, seed: int, d: int = 2,
                      box_factor: float = 8.0, burnin_time: float | None = None) -> ScaleSample:
    """Walk ``walkers_per_env`` walkers in each of ``n_env`` independent environments.

    Walkers start on a coarse grid of sites.  A walker whose displacement
    ever exceeds 40% of the box side (within 10% of the edge of a box centred
    on its start) is discarded and counted.  For the quadratic potential the
    rates are identically 1, so the environment is frozen.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    horizon = float(t_grid[-1]) / eps ** 2
    L = box_side(horizon, d, box_factor)
    pos, cands, accs, rates = [], 0, 0, []
    discarded = 0
    constant = potential.family == "quadratic"
    for e in range(n_env):
        if constant:
            env = frozen_environment(np.zeros(L ** d), L, d, potential, beta, dt, seed, e)
        else:
            env = torus_environment(L, d, potential, beta, dt, seed, stream=e,
                                    burnin_time=burnin_time)
        rng_sites = np.linspace(0, L ** d, walkers_per_env, endpoint=False).astype(np.int64)
        b = simulate_walk(env, rng_sites, horizon, obs_times=t_grid / eps ** 2)
        bad = b.max_disp > 0.4 * L
        discarded += int(bad.sum())
        p = eps * np.transpose(b.positions, (1, 0, 2)).astype(float)  # (W, n_t, d)
        p[bad] = np.nan
        pos.append(p)
        cands += b.candidates
        accs += b.accepted
        rates.append(b.mean_rate)
    return ScaleSample(float(eps), t_grid, np.stack(pos), discarded,
                       accs / cands if cands else float("nan"),
                       float(np.mean(np.concatenate(rates))), L, float(beta), potential.family)


@dataclass
class ScalingRow:
    eps: float
    t: float
    var_ratio: np.ndarray  # per coordinate, Var(εX_a)/(2t)
    var_ratio_se: np.ndarray
    cross_cov: float  # Cov(εX_1, εX_2)/(2t)
    cross_cov_se: float
    mean: np.ndarray
    mean_se: np.ndarray
    gaussian: bool | None
    n: int

    def to_json(self) -> dict:
        return {"eps": self.eps, "t": self.t, "var_ratio": self.var_ratio.tolist(),
                "var_ratio_se": self.var_ratio_se.tolist(), "cross_cov": self.cross_cov,
                "cross_cov_se": self.cross_cov_se, "mean": self.mean.tolist(),
                "mean_se": self.mean_se.tolist(), "gaussian": self.gaussian, "n": self.n}


@dataclass
class ScalingReport:
    rows: list
    discarded: dict
    mean_rates: dict

    def worst_deviation(self) -> float:
        """max over rows and coordinates of |Var/(2t) - 1|."""
        return max(float(np.max(np.abs(r.var_ratio - 1))) for r in self.rows)

    def to_json(self) -> dict:
        return {"rows": [r.to_json() for r in self.rows],
                "discarded": {str(k): v for k, v in self.discarded.items()},
                "mean_rates": {str(k): v for k, v in self.mean_rates.items()}}


def diffusive_scaling_check(samples, min_trajectories: int = MIN_TRAJECTORIES) -> ScalingReport:
    """Per scale and time: Var(εX_a)/(2t), cross covariance, mean, Gaussianity.

    Standard errors treat each environment as one cluster.  The Gaussianity
    check compares the characteristic function of εX_1(t) with that of a
    centred normal of the same empirical variance.
    """
    rows, discarded, rates = [], {}, {}
    for smp in samples:
        if smp.n_trajectories - smp.discarded < min_trajectories:
            raise InsufficientSamplesError(
                f"scale {smp.eps}: {smp.n_trajectories - smp.discarded} usable trajectories, "
                f"need {min_trajectories}")
        discarded[smp.eps] = smp.discarded
        rates[smp.eps] = smp.mean_rate
        n_env, W = smp.positions.shape[:2]
        for j, t in enumerate(smp.t_grid):
            x = smp.positions[:, :, j, :].reshape(n_env * W, -1)
            groups = np.repeat(np.arange(n_env), W)
            keep = ~np.isnan(x[:, 0])
            x, groups = x[keep], groups[keep]
            d = x.shape[1]
            cols = np.column_stack([x, x ** 2, x[:, 0] * x[:, 1]])

            def fn(m, d=d):
                mu = m[:d]
                var = m[d:2 * d] - mu ** 2
                cov = m[2 * d] - mu[0] * mu[1]
                return np.concatenate([mu, var / (2 * t), [cov / (2 * t)]])

            est, se = jackknife(cols, groups, fn)
            gauss = None
            if x.shape[0] >= 1000:
                v = x[:, 0]
                gauss = gaussian_limit_report(v, float(np.var(v)), groups=groups).passed
            rows.append(ScalingRow(smp.eps, float(t), est[d:2 * d], se[d:2 * d],
                                   float(est[-1]), float(se[-1]), est[:d], se[:d], gauss,
                                   int(x.shape[0])))
    return ScalingReport(rows, discarded, rates)


# ---------------------------------------------------------------------------
# covariance representation


def _site_derivative(dom: LatticeDomain, coeffs: dict) -> np.ndarray:
    """∂F/∂θ̃(z) for F = Σ_b c_b η̃(b), zero on pinned vertices."""
    out = np.zeros(dom.n_vertices)
    for b, c in (coeffs or {}).items():
        out[dom.head[b]] += c
        out[dom.tail[b]] -= c
    out[dom.boundary] = 0.0
    return out


@dataclass
class CovRepReport:
    direct: float
    direct_se: float
    walk: float
    walk_se: float
    oracle: float | None
    tail_integrand: float
    survival: float
    horizon: float

    @property
    def combined_se(self) -> float:
        return math.hypot(self.direct_se, self.walk_se)

    @property
    def agree(self) -> bool:
        return abs(self.direct - self.walk) <= 3 * self.combined_se

    def oracle_ok(self) -> bool | None:
        if self.oracle is None:
            return None
        tol = 3 * self.combined_se + 1e-12
        return abs(self.direct - self.oracle) <= tol and abs(self.walk - self.oracle) <= tol

    def to_json(self) -> dict:
        return {"direct": self.direct, "direct_se": self.direct_se, "walk": self.walk,
                "walk_se": self.walk_se, "oracle": self.oracle, "agree": self.agree,
                "oracle_ok": self.oracle_ok(), "tail_integrand": self.tail_integrand,
                "survival_at_horizon": self.survival, "horizon": self.horizon}


def covariance_representation_check(dom: LatticeDomain, F: dict, G: dict, potential: Potential,
                                    beta: float, direct_eta: np.ndarray, direct_groups,
                                    n_env: int = 40, walkers: int = 500, horizon: float = 10.0,
                                    dt: float = 0.01, seed: int = 0, spacing: float = 5.0,
                                    oracle: float | None = None) -> CovRepReport:
    """Cov(F, G) two ways for linear F, G of η̃ on a small pinned box.

    ``F`` and ``G`` map canonical edge ids to coefficients.  The direct side
    is the sample covariance of ``direct_eta`` (unscaled η, one row per
    sample).  The walk side is Σ_z ∂F(z) E_z ∫_0^T ∂G(X_t) dt with walks killed
    at the boundary, averaged over environments drawn ``spacing`` apart along
    one equilibrated Langevin run.
    """
    if len(dom.interior_indices) > 9:
        raise ValueError("covariance representation check is meant for at most 3x3 interior")
    dF = _site_derivative(dom, F)
    dG = _site_derivative(dom, G)
    et = math.sqrt(beta) * np.asarray(direct_eta, dtype=float)
    fvals = et @ _edge_vector(dom, F)
    gvals = et @ _edge_vector(dom, G)
    cov, cov_se = jackknife(np.column_stack([fvals, gvals, fvals * gvals]), direct_groups,
                            lambda m: m[2] - m[0] * m[1])
    support = np.flatnonzero(dF)
    if support.size == 0:
        return CovRepReport(float(cov), float(cov_se), 0.0, 0.0, oracle, 0.0, 0.0, horizon)
    env = domain_environment(dom, potential, beta, dt, seed)
    per_env, tail, surv = [], [], []
    for e in range(n_env):
        starts = np.repeat(support, walkers)
        b = simulate_walk(env, starts, horizon, g=dG, walk_stream=e)
        w = np.repeat(dF[support], walkers)
        per_env.append(np.sum(w * b.integral) / walkers)
        tail.append(np.sum(w * b.g_at_obs[-1]) / walkers)
        surv.append(float(np.mean(b.alive)))
        evolve_environment(env, spacing)
    per_env = np.asarray(per_env)
    walk = float(per_env.mean())
    walk_se = float(per_env.std(ddof=1) / math.sqrt(n_env))
    tail_v = float(np.mean(tail))
    if abs(tail_v) > 0.1 * abs(walk) and walk != 0:
        warnings.warn(f"integrand at T={horizon} is {tail_v:.3g}, more than 10% of the "
                      f"accumulated integral {walk:.3g}; increase the horizon",
                      TruncationWarning)
    return CovRepReport(float(cov), float(cov_se), walk, walk_se, oracle, tail_v,
                        float(np.mean(surv)), float(horizon))


def _edge_vector(dom: LatticeDomain, coeffs: dict) -> np.ndarray:
    v = np.zeros(dom.n_edges)
    for b, c in (coeffs or {}).items():
        v[b] += c
    return v
