"""Estimators for the rescaled fluctuation field and the bounds it must obey.

Standard errors come from a delete-one-group jackknife.  Groups are
contiguous blocks of one chain, so within-chain autocorrelation is
respected without splitting the few chains any single run has.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .lattice import LatticeDomain
from .potentials import Potential

TEST_FUNCTIONS = ("bump", "sine", "polybump")
MIN_REPORT_SAMPLES = 1000
MIN_CHARFN_SAMPLES = 100
DEFAULT_T_FACTORS = (0.25, 0.5, 1.0, 1.5, 2.0)


class SupportWarning(UserWarning):
    """The test function does not vanish on the pinned boundary."""


class InsufficientSamplesError(ValueError):
    pass


class NonConvexError(ValueError):
    pass


# ---------------------------------------------------------------------------
# test functions


def _bump1(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


def _bump1_prime(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ui ** 2)) * (-2.0 * ui / (1.0 - ui ** 2) ** 2)
    return out


@dataclass(frozen=True)
class TestFunction:
    """A separable φ(x) = Π_α f_α(x_α) on a reference box.

    ``bump`` is exp(-1/(1-u²)) per coordinate, supported on the middle half of
    the box; ``polybump`` is (1-u²)^power on the same support; ``sine`` is
    Π sin(k_α π (x_α - lo_α)/L_α), vanishing on the faces of the box.
    """

    __test__ = False  # not a pytest class

    kind: str
    lo: tuple
    hi: tuple
    k: tuple = ()
    power: int = 3

    def __post_init__(self):
        if self.kind not in TEST_FUNCTIONS:
            raise ValueError(f"unknown test function {self.kind!r}")
        if len(self.lo) != len(self.hi) or any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ValueError("test function box needs lo < hi in every coordinate")
        if self.kind == "sine" and len(self.k) != len(self.lo):
            raise ValueError("sine mode needs one wave number per coordinate")

    @property
    def d(self) -> int:
        return len(self.lo)

    def _u(self, x, a):
        c = 0.5 * (self.lo[a] + self.hi[a])
        w = 0.25 * (self.hi[a] - self.lo[a])
        return (x - c) / w, 1.0 / w

    def factor(self, x, a: int):
        """(f_α(x), f_α'(x)) for coordinate ``a``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "sine":
            L = self.hi[a] - self.lo[a]
            w = self.k[a] * math.pi / L
            z = w * (x - self.lo[a])
            return np.sin(z), w * np.cos(z)
        u, du = self._u(x, a)
        if self.kind == "bump":
            return _bump1(u), _bump1_prime(u) * du
        inside = np.abs(u) < 1
        base = np.where(inside, 1.0 - u ** 2, 0.0)
        f = base ** self.power
        fp = np.where(inside, -2.0 * self.power * u * base ** (self.power - 1) * du, 0.0)
        return f, fp

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1])
        for a in range(self.d):
            out = out * self.factor(x[..., a], a)[0]
        return out

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        fs = [self.factor(x[..., a], a) for a in range(self.d)]
        g = np.empty(x.shape)
        for a in range(self.d):
            term = fs[a][1]
            for b in range(self.d):
                if b != a:
                    term = term * fs[b][0]
            g[..., a] = term
        return g

    def to_config(self) -> dict:
        out = {"kind": self.kind, "lo": list(self.lo), "hi": list(self.hi)}
        if self.kind == "sine":
            out["k"] = list(self.k)
        if self.kind == "polybump":
            out["power"] = self.power
        return out


def bump(lo, hi) -> TestFunction:
    return TestFunction("bump", tuple(map(float, lo)), tuple(map(float, hi)))


def sine_mode(lo, hi, k=None) -> TestFunction:
    k = tuple(int(v) for v in (k if k is not None else [1] * len(lo)))
    return TestFunction("sine", tuple(map(float, lo)), tuple(map(float, hi)), k=k)


def poly_bump(lo, hi, power: int = 3) -> TestFunction:
    return TestFunction("polybump", tuple(map(float, lo)), tuple(map(float, hi)), power=int(power))


def default_test_function(kind: str, dom: LatticeDomain, **kw) -> TestFunction:
    """A default test function on the domain's bounding box."""
    if kind not in TEST_FUNCTIONS:
        raise ValueError(f"unknown test function {kind!r}; choose from {TEST_FUNCTIONS}")
    lo, hi = dom.box_lo, dom.box_hi
    return {"bump": bump, "sine": sine_mode, "polybump": poly_bump}[kind](lo, hi, **kw)


# ---------------------------------------------------------------------------
# energies and the fluctuation functional


def edge_gradient(dom: LatticeDomain, phi: TestFunction) -> np.ndarray:
    """∇φ(b) = φ(head) - φ(tail) on canonical edges, from exact point values."""
    vals = phi(dom.positions)
    return vals[dom.head] - vals[dom.tail]


def discrete_energy(phi: TestFunction, dom: LatticeDomain) -> float:
    """ε^{d-2} Σ_b (∇φ(b))² over canonical edges."""
    g = edge_gradient(dom, phi)
    return float(dom.eps ** (dom.d - 2) * np.dot(g, g))


def continuum_energy(phi: TestFunction) -> float:
    """∫ |∇φ|² by one-dimensional adaptive quadrature of the separable factors."""
    if phi.kind == "sine":
        limits = [(phi.lo[a], phi.hi[a]) for a in range(phi.d)]
    else:
        limits = [(0.5 * (phi.lo[a] + phi.hi[a]) - 0.25 * (phi.hi[a] - phi.lo[a]),
                   0.5 * (phi.lo[a] + phi.hi[a]) + 0.25 * (phi.hi[a] - phi.lo[a]))
                  for a in range(phi.d)]
    opts = dict(epsabs=0.0, epsrel=1e-11, limit=200)
    f2, fp2 = [], []
    for a, (lo, hi) in enumerate(limits):
        f2.append(integrate.quad(lambda x: float(phi.factor(x, a)[0]) ** 2, lo, hi, **opts)[0])
        fp2.append(integrate.quad(lambda x: float(phi.factor(x, a)[1]) ** 2, lo, hi, **opts)[0])
    total = 0.0
    for a in range(phi.d):
        total += fp2[a] * math.prod(f2[b] for b in range(phi.d) if b != a)
    return total


def dirichlet_energy(phi: TestFunction, dom: LatticeDomain | None = None) -> float:
    """Discrete energy on ``dom``, or the continuum integral when ``dom`` is None."""
    return continuum_energy(phi) if dom is None else discrete_energy(phi, dom)


def check_support(dom: LatticeDomain, phi: TestFunction) -> bool:
    """Warn (and return False) if φ is nonzero on a pinned boundary vertex."""
    vals = phi(dom.positions)
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    if np.max(np.abs(vals[dom.boundary]), initial=0.0) > 1e-12 * scale:
        warnings.warn("test function does not vanish on the boundary; pinning "
                      "contaminates the pairing", SupportWarning, stacklevel=2)
        return False
    return True


def pairing_weights(dom: LatticeDomain, phi: TestFunction, beta: float) -> np.ndarray:
    """w with ⟨η̃, φ⟩ = w · η for η on canonical edges."""
    return dom.eps ** (dom.d / 2 - 1) * math.sqrt(beta) * edge_gradient(dom, phi)


def fluctuation_functional(g, phi: TestFunction, beta: float) -> float:
    """ε^{d/2-1} Σ_b ∇φ(b) √β η(b) for one gradient configuration."""
    check_support(g.domain, phi)
    return float(pairing_weights(g.domain, phi, beta) @ g.eta)


def fluctuation_values(eta: np.ndarray, dom: LatticeDomain, phi: TestFunction,
                       beta: float) -> np.ndarray:
    """The functional for a stack ``(..., m)`` of η configurations."""
    check_support(dom, phi)
    return eta @ pairing_weights(dom, phi, beta)


# ---------------------------------------------------------------------------
# jackknife


def block_groups(n_chains: int, n_samples: int, blocks_per_chain: int = 10) -> np.ndarray:
    """Group labels for chain-major samples: contiguous blocks within each chain."""
    b = max(1, min(blocks_per_chain, n_samples))
    within = (np.arange(n_samples) * b) // n_samples
    return (np.arange(n_chains)[:, None] * b + within[None, :]).ravel()


def jackknife(columns: np.ndarray, groups: np.ndarray | None, fn):
    """Delete-one-group jackknife of ``fn(means of columns)``.

    ``columns`` is (N, k) per-sample quantities; ``fn`` maps the (k,) vector of
    column means to a scalar or array.  Returns (estimate, standard error).
    """
    X = np.asarray(columns, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    N = X.shape[0]
    if groups is None:
        groups = block_groups(1, N, 20)
    labels, inv = np.unique(groups, return_inverse=True)
    G = len(labels)
    full = np.asarray(fn(X.mean(axis=0)))
    if G < 2:
        return full, np.full(full.shape, np.nan)
    sums = np.zeros((G, X.shape[1]))
    np.add.at(sums, inv, X)
    counts = np.bincount(inv, minlength=G).astype(float)
    total = sums.sum(axis=0)
    loo = np.array([np.asarray(fn((total - sums[g]) / (N - counts[g]))) for g in range(G)])
    dev = loo - loo.mean(axis=0)
    se = np.sqrt((G - 1) / G * np.sum(dev ** 2, axis=0))
    return full, se


# ---------------------------------------------------------------------------
# characteristic function and the Gaussian-limit verdict


@dataclass
class CharFnEstimate:
    t: np.ndarray
    re: np.ndarray
    im: np.ndarray
    se_re: np.ndarray
    se_im: np.ndarray
    n: int
    q: float | None = None
    q_source: str = "discrete"
    q_continuum: float | None = None

    @property
    def ref(self) -> np.ndarray | None:
        return None if self.q is None else np.exp(-0.5 * self.t ** 2 * self.q)

    def rows(self) -> list[tuple]:
        ref = self.ref if self.q is not None else np.full(len(self.t), np.nan)
        return [(float(t), float(r), float(i), float(sr), float(si), float(f))
                for t, r, i, sr, si, f in zip(self.t, self.re, self.im, self.se_re,
                                               self.se_im, ref)]


def default_t_grid(q: float) -> np.ndarray:
    return np.array(DEFAULT_T_FACTORS) / math.sqrt(q)


def empirical_char_fn(samples, t_grid, groups=None, q: float | None = None,
                      q_continuum: float | None = None) -> CharFnEstimate:
    v = np.asarray(samples, dtype=float).ravel()
    if v.size < MIN_CHARFN_SAMPLES:
        raise InsufficientSamplesError(f"need at least {MIN_CHARFN_SAMPLES} samples, got {v.size}")
    t = np.asarray(t_grid, dtype=float)
    tv = np.outer(v, t)
    cols = np.hstack([np.cos(tv), np.sin(tv)])
    est, se = jackknife(cols, groups, lambda m: m)
    k = len(t)
    re, im, se_re, se_im = est[:k], est[k:], se[:k], se[k:]
    zero = t == 0
    re[zero], im[zero], se_re[zero], se_im[zero] = 1.0, 0.0, 0.0, 0.0
    return CharFnEstimate(t, re, im, se_re, se_im, int(v.size), q, "discrete", q_continuum)


def _moments(m):
    # m = (E v, E v², E v³, E v⁴)
    mu = m[0]
    var = m[1] - mu ** 2
    c3 = m[2] - 3 * mu * m[1] + 2 * mu ** 3
    c4 = m[3] - 4 * mu * m[2] + 6 * mu ** 2 * m[1] - 3 * mu ** 4
    return np.array([mu, var, c3 / var ** 1.5, c4 / var ** 2 - 3.0])


@dataclass
class GaussianReport:
    passed: bool | None
    in_hypothesis: bool
    charfn: CharFnEstimate
    max_excess: float  # max over t of |re - ref| - max(3 SE, floor)
    var_ratio: float
    var_ratio_se: float
    mean: float
    mean_se: float
    skewness: float
    excess_kurtosis: float
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "passed": self.passed, "in_hypothesis": self.in_hypothesis,
            "n": self.charfn.n, "q": self.charfn.q, "q_continuum": self.charfn.q_continuum,
            "var_ratio": self.var_ratio, "var_ratio_se": self.var_ratio_se,
            "mean": self.mean, "mean_se": self.mean_se, "skewness": self.skewness,
            "excess_kurtosis": self.excess_kurtosis, "max_excess": self.max_excess,
            "table": [dict(zip(("t", "re", "im", "se_re", "se_im", "ref"), r))
                      for r in self.charfn.rows()],
            **self.extra,
        }


def gaussian_limit_report(samples, q: float, t_grid=None, groups=None,
                          in_hypothesis: bool = True, q_continuum: float | None = None,
                          floor: float = 0.01) -> GaussianReport:
    """Compare the empirical characteristic function with exp(-t²q/2).

    Passes iff every grid point satisfies |Re - ref| <= max(3 SE, floor).
    Outside the limit's hypotheses the tables are produced but ``passed``
    is None.
    """
    v = np.asarray(samples, dtype=float).ravel()
    if v.size < MIN_REPORT_SAMPLES:
        raise InsufficientSamplesError(
            f"Gaussian-limit report needs at least {MIN_REPORT_SAMPLES} samples, got {v.size}")
    t = default_t_grid(q) if t_grid is None else np.asarray(t_grid, dtype=float)
    cf = empirical_char_fn(v, t, groups, q, q_continuum)
    excess = np.abs(cf.re - cf.ref) - np.maximum(3 * cf.se_re, floor)
    scale = max(float(np.std(v)), 1e-300)
    w = v / scale
    mom, mom_se = jackknife(np.column_stack([w, w ** 2, w ** 3, w ** 4]), groups, _moments)
    passed = bool(np.all(excess <= 0)) if in_hypothesis else None
    return GaussianReport(passed, in_hypothesis, cf, float(np.max(excess)),
                          float(mom[1] * scale ** 2 / q), float(mom_se[1] * scale ** 2 / q),
                          float(mom[0] * scale), float(mom_se[0] * scale),
                          float(mom[2]), float(mom[3]))


# ---------------------------------------------------------------------------
# contour estimates


@dataclass
class ContourEstimate:
    p: float
    se: float
    ci: tuple
    count: int
    n: int
    size: int  # |C|
    a: float
    beta: float
    bound: float | None  # exp(1 - βa²/π²)^{|C|} for convex runs, else None
    rate: float  # exp(-βa²/π²)^{|C|}, the XY bound without its constant

    @property
    def within_bound(self) -> bool | None:
        return None if self.bound is None else self.p <= self.bound + 2 * self.se

    def to_json(self) -> dict:
        return {"p": self.p, "se": self.se, "ci": list(self.ci), "count": self.count,
                "n": self.n, "edges": self.size, "a": self.a, "beta": self.beta,
                "bound": self.bound, "rate": self.rate, "within_bound": self.within_bound}


def _check_contour(dom: LatticeDomain, edges, a: float, potential: Potential | None):
    ids = np.asarray(edges, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("empty edge set")
    can, _ = dom.split_directed(ids)
    if len(np.unique(can)) != len(can):
        raise ValueError("edge set contains an edge twice or together with its reverse")
    if potential is None or potential.family == "cosine":
        if not 0 < a <= math.pi:
            raise ValueError("XY contour estimate needs a in (0, π]")
    else:
        if potential.family != "truncated":
            raise ValueError("convex contour estimate is stated for the truncated potential")
        if not potential.delta <= math.pi / 3 + 1e-15:
            raise ValueError("convex contour estimate needs δ <= π/3")
        if not 0 < a < potential.delta:
            raise ValueError("convex contour estimate needs 0 < a < δ")
    return can


def contour_probability(eta: np.ndarray, dom: LatticeDomain, edges, a: float, beta: float,
                        potential: Potential | None = None, groups=None) -> ContourEstimate:
    """P(|η(b)| > a for every b in the edge set), with Wilson interval.

    ``eta`` is a (N, m) stack of unscaled increments sampled at inverse
    temperature ``beta``.  ``potential`` None or cosine means the XY case.
    """
    can = _check_contour(dom, edges, a, potential)
    hit = np.all(np.abs(eta[:, can]) > a, axis=1)
    n, k = hit.size, int(hit.sum())
    p, se = jackknife(hit.astype(float), groups, lambda m: m[0])
    ci = stats.binomtest(k, n).proportion_ci(method="wilson")
    r = math.exp(-beta * a * a / math.pi ** 2) ** len(can)
    convex = potential is not None and potential.family != "cosine"
    bound = math.exp(1 - beta * a * a / math.pi ** 2) ** len(can) if convex else None
    return ContourEstimate(float(p), float(se), (float(ci.low), float(ci.high)), k, n,
                           len(can), float(a), float(beta), bound, r)


def mean_edge_exceedance(eta: np.ndarray, edges, a: float, groups=None) -> tuple[float, float, int]:
    """Edge-averaged single-edge exceedance probability, its SE and the raw count."""
    hits = np.abs(eta[:, np.asarray(edges)]) > a
    per_sample = hits.mean(axis=1)
    p, se = jackknife(per_sample, groups, lambda m: m[0])
    return float(p), float(se), int(hits.sum())


def active_edges(dom: LatticeDomain) -> np.ndarray:
    """Canonical edges with at least one unpinned endpoint."""
    return np.flatnonzero(~(dom.boundary[dom.tail] & dom.boundary[dom.head]))


@dataclass
class RateFit:
    slope: float
    slope_se: float
    intercept: float
    c_fit: float  # smallest c with p <= c exp(-βa²/π²) at every used point
    used: int
    dropped: list  # (beta, a) points with zero counts

    def to_json(self) -> dict:
        return {"slope": self.slope, "slope_se": self.slope_se, "intercept": self.intercept,
                "c_fit": self.c_fit, "used": self.used,
                "dropped": [list(x) for x in self.dropped]}


def contour_rate_fit(points) -> RateFit:
    """Weighted least squares of log p against βa².

    ``points`` holds (beta, a, p, se) tuples.  Points with p = 0 carry no
    information on the log scale and are dropped (and reported).
    """
    used, dropped = [], []
    for beta, a, p, se in points:
        if p > 0 and se > 0:
            used.append((beta * a * a, math.log(p), se / p, p, beta, a))
        else:
            dropped.append((beta, a))
    if len(used) < 3:
        raise InsufficientSamplesError(f"need at least three nonzero points, got {len(used)}")
    x = np.array([u[0] for u in used])
    y = np.array([u[1] for u in used])
    s = np.array([u[2] for u in used])
    coef, cov = np.polyfit(x, y, 1, w=1.0 / s, cov="unscaled")
    c_fit = max(u[3] * math.exp(u[0] / math.pi ** 2) for u in used)
    return RateFit(float(coef[0]), float(math.sqrt(cov[0, 0])), float(coef[1]), c_fit,
                   len(used), dropped)


# ---------------------------------------------------------------------------
# Brascamp-Lieb


@dataclass
class BrascampLiebReport:
    c_minus: float
    var: np.ndarray  # per canonical edge, rescaled units
    var_se: np.ndarray
    var_bound: float
    mgf: dict  # t -> (estimate, se, bound)
    passed: bool

    def to_json(self) -> dict:
        return {"normalization": "rescaled η̃ = √β η; bound 1/inf Ṽ''",
                "c_minus": self.c_minus, "var_bound": self.var_bound,
                "max_var": float(np.max(self.var)),
                "max_excess": float(np.max(self.var - 3 * self.var_se - self.var_bound)),
                "mgf": {str(t): list(v) for t, v in self.mgf.items()}, "passed": self.passed}


def brascamp_lieb_check(eta: np.ndarray, dom: LatticeDomain, potential: Potential, beta: float,
                        phi: TestFunction | None = None, ts=(0.5, 1.0),
                        groups=None) -> BrascampLiebReport:
    """Variance and exponential-moment domination by the Gaussian with curvature c₋.

    Works in rescaled units, where inf Ṽ'' equals inf V''.  The MGF is taken
    for φ normalised to unit discrete energy so the estimator stays tame.
    """
    if not potential.convex:
        raise NonConvexError("Brascamp-Lieb needs a strictly convex potential")
    cm = potential.c_minus
    et = math.sqrt(beta) * np.asarray(eta, dtype=float)
    _, var_se = jackknife(np.hstack([et, et ** 2]), groups,
                          lambda m: m[et.shape[1]:] - m[:et.shape[1]] ** 2)
    var = et.var(axis=0)
    ok = bool(np.all(var <= 1.0 / cm + 3 * var_se))
    phi = phi or default_test_function("bump", dom)
    w = edge_gradient(dom, phi)
    w = w / math.sqrt(float(np.dot(w, w)))
    x = et @ w
    mgf = {}
    for t in ts:
        est, se = jackknife(np.exp(t * x), groups, lambda m: m[0])
        bound = math.exp(0.5 * t * t / cm)
        mgf[float(t)] = (float(est), float(se), bound)
        ok = ok and est <= bound + 3 * se
    return BrascampLiebReport(cm, var, var_se, 1.0 / cm, mgf, ok)


def two_sample_ks(x, y) -> float:
    return float(stats.ks_2samp(np.ravel(x), np.ravel(y)).pvalue)
