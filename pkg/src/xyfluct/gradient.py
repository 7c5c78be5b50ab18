"""Increment fields, vortices, height reconstruction and the XY/convex coupling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeDomain, LoopError
from .potentials import Potential
from .rng import CounterRNG
from .sampler import Model, SpinConfig, _run_block, _tune_width, new_state

SOURCES = ("xy", "gradient", "coupled")
RESIDUAL_TOL = 1e-6
TWO_PI = 2.0 * math.pi


class VortexError(ValueError):
    """Plaquette sums that are not multiples of 2π, or a vortex blocks an operation."""


class CouplingBudgetError(RuntimeError):
    pass


@dataclass
class GradientConfig:
    eta: np.ndarray  # (m,) value on each canonical edge
    domain: LatticeDomain
    source: str

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")

    def directed(self, ids) -> np.ndarray:
        """η on directed edges, using η(j, i) = -η(i, j)."""
        can, sgn = self.domain.split_directed(ids)
        return sgn * self.eta[can]


@dataclass
class VortexCensus:
    charges: np.ndarray  # (P,) integer k_P
    residual: np.ndarray  # (P,) |sum - 2π k_P|

    @property
    def n_plus(self) -> int:
        return int(np.sum(self.charges > 0))

    @property
    def n_minus(self) -> int:
        return int(np.sum(self.charges < 0))

    @property
    def charged(self) -> list[int]:
        return [int(p) for p in np.flatnonzero(self.charges)]

    @property
    def vortex_free(self) -> bool:
        return not np.any(self.charges)

    def to_json(self) -> dict:
        return {"n_plus": self.n_plus, "n_minus": self.n_minus,
                "charged_plaquettes": self.charged}


def wrapped_increment(raw):
    """Three-case map of θ(j) - θ(i) ∈ (-2π, 2π) onto [-π, π)."""
    raw = np.asarray(raw, dtype=float)
    return np.where(raw < -math.pi, raw + TWO_PI, np.where(raw >= math.pi, raw - TWO_PI, raw))


def eta_array(theta: np.ndarray, dom: LatticeDomain, wrapped: bool) -> np.ndarray:
    """η on canonical edges for one θ vector or a stack ``(..., n)`` of them."""
    raw = theta[..., dom.head] - theta[..., dom.tail]
    return wrapped_increment(raw) if wrapped else raw


def eta_from_theta(cfg: SpinConfig) -> GradientConfig:
    return GradientConfig(eta_array(cfg.theta, cfg.domain, cfg.wrapped), cfg.domain,
                          "xy" if cfg.wrapped else "gradient")


def plaquette_sums(eta: np.ndarray, dom: LatticeDomain) -> np.ndarray:
    """Oriented plaquette sums for η of shape ``(..., m)``; result ``(..., P)``."""
    can, sgn = dom.split_directed(dom.plaq_edges)
    return np.einsum("...pk,pk->...p", eta[..., can], sgn)


def vortex_census(g: GradientConfig, tol: float = RESIDUAL_TOL) -> VortexCensus:
    s = plaquette_sums(g.eta, g.domain)
    k = np.rint(s / TWO_PI).astype(np.int64)
    res = np.abs(s - TWO_PI * k)
    if np.any(res > tol):
        bad = int(np.argmax(res))
        raise VortexError(f"plaquette {bad} sum {s[bad]:.6g} is not a multiple of 2π "
                          f"(residual {res[bad]:.2e}); η is not derived from any θ")
    return VortexCensus(k, res)


def vortex_counts(eta: np.ndarray, dom: LatticeDomain) -> np.ndarray:
    """Number of charged plaquettes for each configuration in a stack."""
    k = np.rint(plaquette_sums(eta, dom) / TWO_PI)
    return np.count_nonzero(k, axis=-1)


def winding_sum(g: GradientConfig, loop) -> float:
    """Sum of η along a closed sequence of directed edges."""
    ids = np.asarray(loop, dtype=np.int64)
    if ids.size == 0:
        raise LoopError("empty loop")
    dirs = g.domain.directed_edges()[ids]
    if np.any(dirs[:-1, 1] != dirs[1:, 0]) or dirs[-1, 1] != dirs[0, 0]:
        raise LoopError("edge sequence is not a closed loop")
    return float(np.sum(g.directed(ids)))


def _step_edge(dom: LatticeDomain, x: int, axis: int, sign: int) -> tuple[int, int]:
    s = 2 * axis + (0 if sign > 0 else 1)
    y = int(dom.nbr[x, s])
    if y < 0:
        return -1, -1
    e = int(dom.nbr_edge[x, s])
    return y, (e if dom.nbr_sign[x, s] > 0 else e + dom.n_edges)


def _path_sum(g: GradientConfig, start: int, moves) -> tuple[int, float]:
    """Follow unit moves ``(axis, sign)`` from ``start``; (-1, nan) if it leaves D."""
    x, total = start, 0.0
    for axis, sign in moves:
        y, e = _step_edge(g.domain, x, axis, sign)
        if y < 0:
            return -1, float("nan")
        total += float(g.directed([e])[0])
        x = y
    return x, total


def _staircase(dom: LatticeDomain, a: int, b: int) -> list[tuple[int, int]]:
    diff = dom.coords[b] - dom.coords[a]
    moves = []
    for axis, dv in enumerate(diff):
        moves += [(axis, 1 if dv > 0 else -1)] * abs(int(dv))
    return moves


def _tree_potential(g: GradientConfig, anchor: int) -> np.ndarray:
    """Path sums along a breadth-first spanning tree (fallback for odd shapes)."""
    dom = g.domain
    phi = np.full(dom.n_vertices, np.nan)
    phi[anchor] = 0.0
    queue = [anchor]
    while queue:
        nxt = []
        for x in queue:
            for s in range(2 * dom.d):
                y = int(dom.nbr[x, s])
                if y >= 0 and np.isnan(phi[y]):
                    e = int(dom.nbr_edge[x, s])
                    phi[y] = phi[x] + dom.nbr_sign[x, s] * g.eta[e]
                    nxt.append(y)
        queue = nxt
    return phi


def reconstruct_phi(g: GradientConfig, anchor: int = 0, theta: np.ndarray | None = None,
                    n_checks: int = 100, seed: int = 0, tol: float = 1e-8) -> np.ndarray:
    """Height function Φ with Φ(anchor) = 0 and ∇Φ = η.

    Φ(x) is the η-sum along the staircase path that moves first along axis 1,
    then axis 2, and so on.  ``n_checks`` randomly reordered staircases are
    compared against it; ``theta`` (wrapped angles) is checked modulo 2π.
    """
    census = vortex_census(g)
    if not census.vortex_free:
        raise VortexError(f"cannot reconstruct heights: census {census.to_json()}")
    dom = g.domain
    tree = _tree_potential(g, anchor)
    phi = np.empty(dom.n_vertices)
    for x in range(dom.n_vertices):
        end, val = _path_sum(g, anchor, _staircase(dom, anchor, x))
        phi[x] = val if end == x else tree[x]
    if np.any(np.isnan(phi)):
        raise VortexError("domain is disconnected from the anchor")

    rng = CounterRNG(seed, stream=0)
    for t in rng.integers(dom.n_vertices, n_checks):
        moves = _staircase(dom, anchor, int(t))
        if not moves:
            continue
        order = np.argsort(rng.uniform(len(moves)))
        end, val = _path_sum(g, anchor, [moves[i] for i in order])
        if end == int(t) and abs(val - phi[t]) > tol:
            raise VortexError(f"path dependence at vertex {int(t)}: {val} vs {phi[t]}")
    if theta is not None:
        r = np.asarray(theta) - theta[anchor] - phi
        if np.any(np.abs(r - TWO_PI * np.round(r / TWO_PI)) > tol):
            raise VortexError("reconstructed heights disagree with θ modulo 2π")
    return phi


# ---------------------------------------------------------------------------
# coupling


@dataclass
class CoupledPair:
    eta_xy: GradientConfig
    eta_delta: GradientConfig
    agreed: bool
    bad_edges: np.ndarray

    def __post_init__(self):
        if self.agreed and not np.array_equal(self.eta_xy.eta, self.eta_delta.eta):
            raise AssertionError("agreed pair must have identical fields")


@dataclass
class CouplingRun:
    pairs: list
    c_hat: float  # XY probability of no bad edge
    c_prime_hat: float  # convex-model probability of no bad edge
    q_hat: float  # acceptance of good configurations into the λ component
    q_se: float
    rejections: int
    delta: float
    beta: float
    stats: dict = field(default_factory=dict)

    @property
    def agreement(self) -> float:
        return float(np.mean([p.agreed for p in self.pairs]))


class _Chain:
    """A thinned stream of η samples from one sampler state."""

    def __init__(self, dom, model, seed, stream, burnin, thin, n_reflect):
        self.st = new_state(dom, model, seed, stream)
        self.thin = thin
        self.n_reflect = n_reflect
        if model.wrapped:
            _run_block(self.st, burnin, n_reflect)
        else:
            _tune_width(self.st, burnin, n_reflect)

    def draw(self) -> np.ndarray:
        out, _ = _run_block(self.st, self.thin, self.n_reflect, thin=self.thin, n_record=1)
        return eta_array(out[0], self.st.config.domain, self.st.model.wrapped)


def couple_xy_gradient(dom: LatticeDomain, potential: Potential, beta: float, seed: int,
                       n_draws: int = 1, burnin: int = 200, thin: int = 2, n_reflect: int = 1,
                       n_pilot: int = 200, budget: int = 10_000) -> CouplingRun:
    """Joint draws of (η_XY, η_δ) whose marginals are the XY and truncated-convex laws.

    η_δ = η_XY whenever no edge has |η_XY| > δ.  Otherwise η_δ is a draw from
    the residual component λ = [(c'-c) ρ + (1-c') ν'] / (1-c), realised by
    pulling convex-model samples Y and accepting bad ones always and good ones
    with probability (c'-c)/c'.  c and c' are estimated from pilot draws.
    """
    if potential.family != "truncated":
        raise ValueError("coupling needs the truncated-convex potential")
    delta = float(potential.delta)
    xy = _Chain(dom, Model("xy", beta), seed, 0, burnin, thin, n_reflect)
    conv = _Chain(dom, Model("grad", beta, potential), seed, 1, burnin, thin, n_reflect)
    rng = CounterRNG(seed, stream=2)

    pilot_xy = np.array([np.all(np.abs(xy.draw()) <= delta) for _ in range(n_pilot)])
    pilot_cv = np.array([np.all(np.abs(conv.draw()) <= delta) for _ in range(n_pilot)])
    c_hat, cp_hat = pilot_xy.mean(), pilot_cv.mean()
    q_hat = 0.0 if cp_hat == 0 else min(1.0, max(0.0, (cp_hat - c_hat) / cp_hat))
    se_c = math.sqrt(max(c_hat * (1 - c_hat), 1e-300) / n_pilot)
    se_cp = math.sqrt(max(cp_hat * (1 - cp_hat), 1e-300) / n_pilot)
    q_se = math.hypot(se_c, se_cp) / max(cp_hat, 1e-12)

    pairs, rejections = [], 0
    for _ in range(n_draws):
        eta = xy.draw()
        bad = np.flatnonzero(np.abs(eta) > delta)
        g_xy = GradientConfig(eta, dom, "xy")
        if bad.size == 0:
            if not vortex_census(g_xy).vortex_free:
                raise AssertionError("no bad edge but a vortex was found")
            pairs.append(CoupledPair(g_xy, GradientConfig(eta.copy(), dom, "coupled"), True, bad))
            continue
        for attempt in range(budget):
            y = conv.draw()
            if np.any(np.abs(y) > delta) or rng.uniform(1)[0] < q_hat:
                break
            rejections += 1
        else:
            raise CouplingBudgetError(
                f"no draw from the residual component after {budget} attempts; "
                "bad edges are not rare at these parameters (raise beta)")
        pairs.append(CoupledPair(g_xy, GradientConfig(y, dom, "coupled"), False, bad))
    return CouplingRun(pairs, float(c_hat), float(cp_hat), q_hat, q_se, rejections, delta,
                       float(beta))
