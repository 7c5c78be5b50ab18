"""Finite-volume Gibbs samplers with zero (pinned) boundary values.

Three measures are supported on a :class:`~xyfluct.lattice.LatticeDomain`:

* ``xy``       exp(beta Σ_b cos η(b)) on wrapped angles
* ``xyfield``  the same with an extra ``h Σ_x cos θ(x)``
* ``grad``     exp(-beta Σ_b V(η(b))) on real heights, any potential family

Each undirected bond enters the Hamiltonian once.  Updates are sequential
over interior vertices in index order; every random number is addressed by
``(chain key, sweep counter, vertex, slot)``, so trajectories replay exactly.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .lattice import LatticeDomain
from .potentials import COSINE, QUADRATIC, TRUNCATED, Potential, cosine, vfun
from .rng import normal_pair, stream_key, uniform_pair
from .vonmises import vonmises_draw, wrap_angle

log = logging.getLogger(__name__)

MODELS = ("xy", "xyfield", "grad")
# Sub-steps per recorded sweep share one sweep id; the counter is sweep * _SUB + sub.
_SUB = 16


class ModelMismatchError(ValueError):
    pass


class DiagnosticsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Model:
    kind: str
    beta: float
    potential: Potential = field(default_factory=cosine)
    h: float = 0.0

    def __post_init__(self):
        if self.kind not in MODELS:
            raise ModelMismatchError(f"unknown model {self.kind!r}")
        if self.kind in ("xy", "xyfield") and self.potential.family != "cosine":
            raise ModelMismatchError("XY-type models use the cosine potential")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.kind != "xyfield" and self.h != 0.0:
            raise ModelMismatchError("external field only applies to the xyfield model")

    @property
    def wrapped(self) -> bool:
        return self.kind in ("xy", "xyfield")

    def kernel_args(self):
        code, param, scale = self.potential.kernel_args
        return code, param, scale, float(self.beta), float(self.h), self.wrapped


@dataclass
class SpinConfig:
    theta: np.ndarray
    domain: LatticeDomain
    model: str

    def __post_init__(self):
        if self.model not in MODELS:
            raise ModelMismatchError(f"unknown model {self.model!r}")

    @property
    def wrapped(self) -> bool:
        return self.model in ("xy", "xyfield")

    def check(self) -> None:
        if np.any(self.theta[self.domain.boundary] != 0.0):
            raise AssertionError("boundary vertices must be pinned at 0")
        if self.wrapped and (np.any(self.theta < -math.pi) or np.any(self.theta >= math.pi)):
            raise AssertionError("XY angles must lie in [-pi, pi)")


@dataclass
class SamplerState:
    config: SpinConfig
    model: Model
    seed: int
    stream: int = 0
    sweep: int = 0
    width: float = 1.0
    proposed: dict = field(default_factory=dict)
    accepted: dict = field(default_factory=dict)

    @property
    def key(self):
        return stream_key(self.seed, self.stream)

    def acceptance(self, kind: str) -> float:
        p = self.proposed.get(kind, 0)
        return self.accepted.get(kind, 0) / p if p else float("nan")

    def _count(self, kind: str, proposed: int, accepted: int) -> None:
        self.proposed[kind] = self.proposed.get(kind, 0) + int(proposed)
        self.accepted[kind] = self.accepted.get(kind, 0) + int(accepted)


def new_state(dom: LatticeDomain, model: Model, seed: int, stream: int = 0,
              theta: np.ndarray | None = None, width: float | None = None) -> SamplerState:
    """Sampler state started from ``theta`` (default: the flat field θ ≡ 0)."""
    th = np.zeros(dom.n_vertices) if theta is None else np.array(theta, dtype=float)
    th[dom.boundary] = 0.0
    if width is None:
        width = default_width(model, dom.d)
    return SamplerState(SpinConfig(th, dom, model.kind), model, int(seed), int(stream),
                        width=float(width))


def default_width(model: Model, d: int) -> float:
    """Proposal half-width about twice the local conditional standard deviation."""
    if model.beta <= 0:
        return math.pi
    return min(math.pi, 2.0 / math.sqrt(2 * d * model.beta))


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True, inline="always")
def _bond_delta(code, param, scale, a, b):
    """V(b) - V(a) without cancellation for small arguments."""
    if code == QUADRATIC:
        return 0.5 * (b - a) * (b + a)
    if code == COSINE or (code == TRUNCATED and abs(a) <= param and abs(b) <= param):
        if scale == 1.0:
            return 2.0 * math.sin(0.5 * (a + b)) * math.sin(0.5 * (b - a))
    return vfun(code, param, scale, b)[0] - vfun(code, param, scale, a)[0]


@njit(cache=True)
def _local_delta(theta, nbr, x, new, code, param, scale, beta, h, wrapped):
    """H(θ with θ(x) = new) - H(θ)."""
    old = theta[x]
    dh = 0.0
    for s in range(nbr.shape[1]):
        y = nbr[x, s]
        if y < 0:
            continue
        a = old - theta[y]
        b = new - theta[y]
        if wrapped:
            a = wrap_angle(a)
            b = wrap_angle(b)
        dh += _bond_delta(code, param, scale, a, b)
    dh *= beta
    if h != 0.0:
        dh += 2.0 * h * math.sin(0.5 * (new + old)) * math.sin(0.5 * (new - old))
    return dh


@njit(cache=True)
def _metropolis(theta, order, nbr, code, param, scale, beta, h, wrapped, width,
                k0, k1, counter):
    acc = 0
    for x in order:
        u, v = uniform_pair(k0, k1, counter, x, 0)
        new = theta[x] + width * (2.0 * u - 1.0)
        if wrapped:
            new = wrap_angle(new)
        dh = _local_delta(theta, nbr, x, new, code, param, scale, beta, h, wrapped)
        if dh <= 0.0 or v < math.exp(-dh):
            theta[x] = new
            acc += 1
    return acc


@njit(cache=True)
def _local_field(theta, nbr, x, beta, h):
    sx = h
    sy = 0.0
    for s in range(nbr.shape[1]):
        y = nbr[x, s]
        if y >= 0:
            sx += beta * math.cos(theta[y])
            sy += beta * math.sin(theta[y])
    return sx, sy


@njit(cache=True)
def _heatbath_xy(theta, order, nbr, beta, h, k0, k1, counter):
    for x in order:
        sx, sy = _local_field(theta, nbr, x, beta, h)
        kappa = math.hypot(sx, sy)
        mu = math.atan2(sy, sx) if kappa > 0.0 else 0.0
        theta[x] = vonmises_draw(mu, kappa, k0, k1, counter, x)


@njit(cache=True)
def _reflect_xy(theta, order, nbr, beta, h):
    for x in order:
        sx, sy = _local_field(theta, nbr, x, beta, h)
        if sx == 0.0 and sy == 0.0:
            continue
        mu = math.atan2(sy, sx)
        theta[x] = wrap_angle(2.0 * mu - theta[x])


@njit(cache=True)
def _reflect_grad(theta, order, nbr, code, param, scale, beta, k0, k1, counter):
    """Reflection of θ(x) through its neighbour mean, Metropolis-corrected.

    The map is an involution with unit Jacobian, so accepting with
    min(1, exp(-ΔH)) keeps the target invariant.  It is exact (ΔH = 0) for the
    quadratic potential.
    """
    acc = 0
    for x in order:
        m = 0.0
        k = 0
        for s in range(nbr.shape[1]):
            y = nbr[x, s]
            if y >= 0:
                m += theta[y]
                k += 1
        new = 2.0 * m / k - theta[x]
        dh = _local_delta(theta, nbr, x, new, code, param, scale, beta, 0.0, False)
        if dh <= 0.0:
            theta[x] = new
            acc += 1
        else:
            u, _ = uniform_pair(k0, k1, counter, x, 0)
            if u < math.exp(-dh):
                theta[x] = new
                acc += 1
    return acc


@njit(cache=True)
def _langevin(theta, interior, nbr, code, param, scale, beta, dt, k0, k1, counter):
    n_in = interior.size
    force = np.empty(n_in)
    for i in range(n_in):
        x = interior[i]
        f = 0.0
        for s in range(nbr.shape[1]):
            y = nbr[x, s]
            if y >= 0:
                f += vfun(code, param, scale, theta[x] - theta[y])[1]
        force[i] = f
    sq = math.sqrt(2.0 * dt)
    for i in range(n_in):
        x = interior[i]
        g, _ = normal_pair(k0, k1, counter, x, 0)
        theta[x] = theta[x] - beta * dt * force[i] + sq * g


@njit(cache=True)
def _energy(theta, tail, head, code, param, scale, beta, h, wrapped):
    e = 0.0
    for b in range(tail.size):
        eta = theta[head[b]] - theta[tail[b]]
        if wrapped:
            eta = wrap_angle(eta)
        e += vfun(code, param, scale, eta)[0]
    e *= beta
    if h != 0.0:
        for x in range(theta.size):
            e -= h * math.cos(theta[x])
    return e


@njit(cache=True)
def _sum_cos_eta(theta, tail, head):
    s = 0.0
    for b in range(tail.size):
        s += math.cos(theta[head[b]] - theta[tail[b]])
    return s


@njit(cache=True)
def _run_chain(theta, order, nbr, tail, head, code, param, scale, beta, h, wrapped,
               width, n_reflect, k0, k1, sweep0, n_sweeps, thin, out, obs):
    """Run ``n_sweeps`` composite sweeps, recording every ``thin``-th one.

    A composite sweep is one local update sweep (heat bath for XY, Metropolis
    otherwise) followed by ``n_reflect`` reflection sweeps.
    """
    acc_m = 0
    acc_r = 0
    rec = 0
    for t in range(n_sweeps):
        base = (sweep0 + t) * _SUB
        if wrapped:
            _heatbath_xy(theta, order, nbr, beta, h, k0, k1, base)
            for r in range(n_reflect):
                _reflect_xy(theta, order, nbr, beta, h)
        else:
            acc_m += _metropolis(theta, order, nbr, code, param, scale, beta, h, wrapped,
                                 width, k0, k1, base)
            for r in range(n_reflect):
                acc_r += _reflect_grad(theta, order, nbr, code, param, scale, beta,
                                       k0, k1, base + 1 + r)
        if thin > 0 and (t + 1) % thin == 0 and rec < out.shape[0]:
            out[rec, :] = theta
            obs[rec] = _sum_cos_eta(theta, tail, head)
            rec += 1
    return acc_m, acc_r


# ---------------------------------------------------------------------------
# single-sweep operations


def _order(dom: LatticeDomain) -> np.ndarray:
    return dom.interior_indices.astype(np.int64)


def metropolis_sweep(st: SamplerState, width: float | None = None) -> SamplerState:
    """One Metropolis proposal per interior vertex, in index order."""
    w = st.width if width is None else float(width)
    if w <= 0:
        raise ValueError("proposal width must be positive")
    code, param, scale, beta, h, wrapped = st.model.kernel_args()
    k0, k1 = st.key
    order = _order(st.config.domain)
    acc = _metropolis(st.config.theta, order, st.config.domain.nbr, code, param, scale,
                      beta, h, wrapped, w, k0, k1, st.sweep * _SUB)
    st._count("metropolis", len(order), acc)
    st.sweep += 1
    return st


def heatbath_sweep_xy(st: SamplerState) -> SamplerState:
    """Resample each interior angle from its exact von Mises conditional."""
    if not st.model.wrapped:
        raise ModelMismatchError("heat bath sweeps are only defined for XY-type models")
    k0, k1 = st.key
    order = _order(st.config.domain)
    _heatbath_xy(st.config.theta, order, st.config.domain.nbr, float(st.model.beta),
                 float(st.model.h), k0, k1, st.sweep * _SUB)
    st._count("heatbath", len(order), len(order))
    st.sweep += 1
    return st


def reflection_sweep(st: SamplerState) -> SamplerState:
    """Over-relaxation sweep (exact reflection for XY, Metropolis-corrected otherwise)."""
    order = _order(st.config.domain)
    code, param, scale, beta, h, wrapped = st.model.kernel_args()
    if wrapped:
        _reflect_xy(st.config.theta, order, st.config.domain.nbr, beta, h)
        acc = len(order)
    else:
        k0, k1 = st.key
        acc = _reflect_grad(st.config.theta, order, st.config.domain.nbr, code, param,
                            scale, beta, k0, k1, st.sweep * _SUB + 1)
    st._count("reflection", len(order), acc)
    st.sweep += 1
    return st


def langevin_sweep(st: SamplerState, dt: float) -> SamplerState:
    """One Euler-Maruyama step of dθ = -β ∂H/∂θ dt + sqrt(2) dB on interior vertices.

    The discretisation has O(dt) bias in the stationary law.
    """
    if st.model.wrapped:
        raise ModelMismatchError("Langevin updates need unwrapped heights (gradient models)")
    if dt <= 0:
        raise ValueError("dt must be positive")
    code, param, scale, beta, _, _ = st.model.kernel_args()
    k0, k1 = st.key
    _langevin(st.config.theta, _order(st.config.domain), st.config.domain.nbr, code, param,
              scale, beta, float(dt), k0, k1, st.sweep * _SUB)
    st.sweep += 1
    return st


def energy(cfg: SpinConfig, model: Model) -> float:
    """Global Hamiltonian (beta included) of a configuration."""
    code, param, scale, beta, h, wrapped = model.kernel_args()
    dom = cfg.domain
    return float(_energy(cfg.theta, dom.tail, dom.head, code, param, scale, beta, h, wrapped))


def local_delta_energy(cfg: SpinConfig, model: Model, x: int, new: float) -> float:
    """H after setting θ(x) = new, minus H before."""
    code, param, scale, beta, h, wrapped = model.kernel_args()
    return float(_local_delta(cfg.theta, cfg.domain.nbr, int(x), float(new), code, param,
                              scale, beta, h, wrapped))


def metropolis_acceptance(cfg: SpinConfig, model: Model, x: int, new: float) -> float:
    """Acceptance probability of the move θ(x) -> new."""
    return min(1.0, math.exp(-local_delta_energy(cfg, model, x, new)))


# ---------------------------------------------------------------------------
# autocorrelation diagnostics


def autocorr(x: np.ndarray) -> np.ndarray:
    """Normalised autocorrelation function via FFT."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 2:
        return np.ones(1)
    x = x - x.mean()
    f = np.fft.rfft(x, n=2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    if acf[0] <= 0:
        return np.ones(1)
    return acf / acf[0]


def tau_int(x: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time with the Madras-Sokal window M >= c tau(M)."""
    rho = autocorr(x)
    tau = 0.5
    for m in range(1, len(rho)):
        tau = 0.5 + float(np.sum(rho[1:m + 1]))
        if m >= c * tau:
            break
    return max(tau, 0.5)


def interchain_ratio(obs: np.ndarray) -> float:
    """Potential scale reduction (R-hat) of a (chains, samples) array."""
    obs = np.asarray(obs, dtype=float)
    k, n = obs.shape
    if k < 2 or n < 2:
        return float("nan")
    w = obs.var(axis=1, ddof=1).mean()
    b = n * obs.mean(axis=1).var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else float("inf")
    var_plus = (n - 1) / n * w + b / n
    return float(math.sqrt(var_plus / w))


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class Ensemble:
    """Recorded samples of independent chains plus diagnostics and provenance."""

    domain: LatticeDomain
    model: Model
    theta: np.ndarray  # (chains, samples, n_vertices)
    sweeps: np.ndarray  # sweep index of each recorded sample
    observable: np.ndarray  # Σ_b cos η(b), (chains, samples)
    seed: int
    streams: list
    tau_int: float
    rhat: float
    acceptance: dict
    widths: list

    @property
    def n_chains(self) -> int:
        return self.theta.shape[0]

    @property
    def n_samples(self) -> int:
        return self.theta.shape[1]

    def configs(self) -> list[SpinConfig]:
        return [SpinConfig(self.theta[c, s].copy(), self.domain, self.model.kind)
                for c in range(self.n_chains) for s in range(self.n_samples)]

    def provenance(self) -> list[tuple[int, int, int]]:
        return [(self.seed, self.streams[c], int(self.sweeps[s]))
                for c in range(self.n_chains) for s in range(self.n_samples)]


def _tune_width(st: SamplerState, sweeps: int, n_reflect: int, target: float = 0.5) -> None:
    """Adapt the Metropolis width towards ``target`` acceptance (burn-in only)."""
    chunk = 20
    done = 0
    while done < sweeps:
        k = min(chunk, sweeps - done)
        acc = _run_block(st, k, n_reflect)
        rate = acc / (k * len(_order(st.config.domain)))
        st.width *= math.exp(rate - target)
        st.width = min(st.width, 2 * math.pi if st.model.wrapped else 1e6)
        done += k


def _run_block(st: SamplerState, n_sweeps: int, n_reflect: int, thin: int = 0,
               n_record: int = 0):
    dom = st.config.domain
    code, param, scale, beta, h, wrapped = st.model.kernel_args()
    k0, k1 = st.key
    out = np.empty((n_record, dom.n_vertices))
    obs = np.empty(n_record)
    acc_m, acc_r = _run_chain(st.config.theta, _order(dom), dom.nbr, dom.tail, dom.head,
                              code, param, scale, beta, h, wrapped, float(st.width),
                              int(n_reflect), k0, k1, st.sweep, int(n_sweeps), int(thin),
                              out, obs)
    n_in = len(_order(dom))
    if wrapped:
        st._count("heatbath", n_sweeps * n_in, n_sweeps * n_in)
    else:
        st._count("metropolis", n_sweeps * n_in, acc_m)
        st._count("reflection", n_sweeps * n_reflect * n_in, acc_r)
    st.sweep += n_sweeps
    if n_record:
        return out, obs
    return acc_m


def pilot_burnin(dom: LatticeDomain, model: Model, seed: int, n_reflect: int = 1,
                 pilot_sweeps: int = 2000, factor: float = 20.0) -> int:
    """Burn-in length as ``factor`` times τ_int of Σ cos η from a pilot chain."""
    st = new_state(dom, model, seed, stream=10_000)
    if not model.wrapped:
        _tune_width(st, min(500, pilot_sweeps), n_reflect)
    _, obs = _run_block(st, pilot_sweeps, n_reflect, thin=1, n_record=pilot_sweeps)
    return max(1, int(math.ceil(factor * tau_int(obs[pilot_sweeps // 2:]))))


def _prepare_chain(dom: LatticeDomain, model: Model, seed: int, stream: int,
                   burnin_sweeps: int, n_reflect: int, tune: bool) -> SamplerState:
    st = new_state(dom, model, seed, stream=stream)
    if tune and not model.wrapped:
        _tune_width(st, burnin_sweeps, n_reflect)
    else:
        _run_block(st, burnin_sweeps, n_reflect)
    st.proposed.clear()
    st.accepted.clear()
    return st


def iter_blocks(dom: LatticeDomain, model: Model, n_chains: int, burnin_sweeps: int,
                n_samples: int, thin: int, seed: int, n_reflect: int = 1, tune: bool = True,
                block: int = 1000):
    """Stream ``(chain, state, theta, obs)`` blocks of at most ``block`` samples.

    Chains run one after another, so memory stays bounded by one block.
    ``state`` is the live sampler state (its ``sweep`` is the index of the
    last recorded sweep).
    """
    if n_chains < 1 or burnin_sweeps < 1 or thin < 1 or n_samples < 1:
        raise ValueError("need n_chains, burnin, thin, n_samples >= 1")
    if len(dom.interior_indices) == 0:
        raise ValueError("domain has no interior vertex to sample")
    for c in range(n_chains):
        st = _prepare_chain(dom, model, seed, c, burnin_sweeps, n_reflect, tune)
        left = n_samples
        while left:
            k = min(block, left)
            theta, obs = _run_block(st, k * thin, n_reflect, thin=thin, n_record=k)
            left -= k
            yield c, st, theta, obs


def chain_diagnostics(obs: np.ndarray, thin: int) -> tuple[float, float]:
    """(τ_int in sweeps, R-hat) of the recorded observable, warning if R-hat > 1.1."""
    taus = [tau_int(o) for o in obs] if obs.shape[1] > 10 else [float("nan")]
    rhat = interchain_ratio(obs)
    if obs.shape[0] > 1 and rhat > 1.1:
        warnings.warn(f"inter-chain variance ratio {rhat:.3f} exceeds 1.1", DiagnosticsWarning)
    taus = np.asarray(taus)
    tau = float(taus[~np.isnan(taus)].mean()) * thin if (~np.isnan(taus)).any() else float("nan")
    return tau, rhat


def sample_ensemble(dom: LatticeDomain, model: Model, n_chains: int, burnin_sweeps: int,
                    n_samples: int, thin: int, seed: int, n_reflect: int = 1,
                    tune: bool = True) -> Ensemble:
    """Independent chains from θ ≡ 0, one counter stream per chain.

    The Metropolis width is adapted during burn-in only and then frozen.
    """
    thetas = np.empty((n_chains, n_samples, dom.n_vertices))
    obs = np.empty((n_chains, n_samples))
    acc: dict = {}
    widths = []
    for c, st, th, ob in iter_blocks(dom, model, n_chains, burnin_sweeps, n_samples, thin,
                                     seed, n_reflect, tune, block=n_samples):
        thetas[c], obs[c] = th, ob
        for k in st.proposed:
            pa = acc.setdefault(k, [0, 0])
            pa[0] += st.proposed[k]
            pa[1] += st.accepted[k]
        widths.append(st.width)
    tau, rhat = chain_diagnostics(obs, thin)
    sweeps = burnin_sweeps + thin * (np.arange(n_samples) + 1)
    return Ensemble(domain=dom, model=model, theta=thetas, sweeps=sweeps, observable=obs,
                    seed=int(seed), streams=list(range(n_chains)), tau_int=tau, rhat=rhat,
                    acceptance={k: (a / p if p else float("nan")) for k, (p, a) in acc.items()},
                    widths=widths)


def with_model(st: SamplerState, **changes) -> SamplerState:
    st.model = replace(st.model, **changes)
    return st
