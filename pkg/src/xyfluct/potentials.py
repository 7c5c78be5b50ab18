"""Pair potentials and inverse-temperature schedules.

All families are symmetric with ``V''(0) = 1``:

* ``cosine``             V(x) = -cos x
* ``truncated``          -cos x on |x| <= delta, quadratic continuation outside
* ``quadratic``          V(x) = x^2 / 2
* ``anharmonic``         V(x) = x^2 / 2 + lam x^4

Kernels receive a potential as the plain triple ``(code, param, scale)`` and
evaluate it with :func:`vfun`; ``scale`` implements the rescaling
``V_s(x) = s V(x / sqrt(s))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from numba import njit

COSINE, TRUNCATED, QUADRATIC, ANHARMONIC = 0, 1, 2, 3
FAMILIES = {"cosine": COSINE, "truncated": TRUNCATED, "quadratic": QUADRATIC,
            "anharmonic": ANHARMONIC}
DEFAULT_DELTA = math.pi / 4


class PotentialError(ValueError):
    pass


@njit(cache=True, inline="always")
def _base(code, param, x):
    if code == QUADRATIC:
        return 0.5 * x * x, x, 1.0
    if code == COSINE:
        return -math.cos(x), math.sin(x), math.cos(x)
    if code == TRUNCATED:
        ax = abs(x)
        if ax <= param:
            return -math.cos(x), math.sin(x), math.cos(x)
        u = ax - param
        cd = math.cos(param)
        sd = math.sin(param)
        v = -cd + sd * u + 0.5 * cd * u * u
        dv = sd + cd * u
        return v, (dv if x > 0 else -dv), cd
    # anharmonic
    x2 = x * x
    return 0.5 * x2 + param * x2 * x2, x + 4.0 * param * x2 * x, 1.0 + 12.0 * param * x2


@njit(cache=True, inline="always")
def vfun(code, param, scale, x):
    """(V, V', V'') of ``scale * V(x / sqrt(scale))``."""
    if scale == 1.0:
        return _base(code, param, x)
    r = math.sqrt(scale)
    v, dv, ddv = _base(code, param, x / r)
    return scale * v, r * dv, ddv


@njit(cache=True, inline="always")
def vvalue(code, param, scale, x):
    return vfun(code, param, scale, x)[0]


@dataclass(frozen=True)
class Potential:
    family: str
    delta: float | None = None
    lam: float | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise PotentialError(f"unknown potential family {self.family!r}")
        if self.family == "truncated":
            if self.delta is None or not 0.0 < self.delta < math.pi / 2:
                raise PotentialError(f"truncated potential needs delta in (0, pi/2), got {self.delta}")
        if self.family == "anharmonic" and (self.lam is None or self.lam < 0):
            raise PotentialError(f"anharmonic potential needs lambda >= 0, got {self.lam}")
        if self.scale <= 0:
            raise PotentialError("scale must be positive")

    @property
    def code(self) -> int:
        return FAMILIES[self.family]

    @property
    def param(self) -> float:
        if self.family == "truncated":
            return float(self.delta)
        if self.family == "anharmonic":
            return float(self.lam)
        return 0.0

    @property
    def kernel_args(self) -> tuple[int, float, float]:
        return self.code, self.param, float(self.scale)

    @property
    def convex(self) -> bool:
        return self.family != "cosine"

    @property
    def c_minus(self) -> float | None:
        """inf V''; None for the non-convex cosine."""
        return {"cosine": None, "truncated": math.cos(self.delta or 0.0),
                "quadratic": 1.0, "anharmonic": 1.0}[self.family]

    @property
    def c_plus(self) -> float | None:
        return {"cosine": None, "truncated": 1.0, "quadratic": 1.0,
                "anharmonic": 1.0 if self.lam == 0 else math.inf}[self.family]

    def __call__(self, x: float) -> tuple[float, float, float]:
        return vfun(self.code, self.param, float(self.scale), float(x))

    def to_config(self) -> dict:
        out = {"family": self.family}
        if self.delta is not None:
            out["delta"] = self.delta
        if self.lam is not None:
            out["lambda"] = self.lam
        return out


def cosine() -> Potential:
    return Potential("cosine")


def truncated(delta: float = DEFAULT_DELTA) -> Potential:
    return Potential("truncated", delta=float(delta))


def quadratic() -> Potential:
    return Potential("quadratic")


def anharmonic(lam: float) -> Potential:
    return Potential("anharmonic", lam=float(lam))


def eval_potential(p: Potential, x: float) -> tuple[float, float, float]:
    return p(x)


def rescaled_potential(p: Potential, beta: float) -> Potential:
    """The potential ``beta * V(x / sqrt(beta))`` of the rescaled field."""
    if beta <= 0:
        raise PotentialError("beta must be positive")
    return replace(p, scale=p.scale * float(beta))


def contour_range_ok(p: Potential) -> bool:
    """Whether ``delta <= pi/3``, the range where the convex contour bound applies."""
    return p.family == "truncated" and p.delta <= math.pi / 3 + 1e-15


@dataclass(frozen=True)
class BetaSchedule:
    """``beta(eps) = beta0`` (constant) or ``A + C |log eps|`` (log)."""

    form: str = "log"
    beta0: float | None = None
    A: float | None = None
    C: float | None = None

    def __post_init__(self):
        if self.form == "constant":
            if self.beta0 is None or self.beta0 <= 0:
                raise PotentialError("constant schedule needs beta0 > 0")
        elif self.form == "log":
            if self.A is None or self.C is None:
                raise PotentialError("log schedule needs A and C")
        else:
            raise PotentialError(f"unknown schedule form {self.form!r}")

    def log_margin_diverges(self, d: int) -> bool:
        """``beta(eps) - 9 d |log eps|`` diverges iff the log slope exceeds 9d."""
        return self.form == "log" and self.C > 9 * d

    def to_config(self) -> dict:
        if self.form == "constant":
            return {"form": "constant", "beta0": self.beta0}
        return {"form": "log", "A": self.A, "C": self.C}


def default_schedule(d: int) -> BetaSchedule:
    return BetaSchedule("log", A=10.0, C=9.0 * d + 1.0)


def beta_at(s: BetaSchedule, eps: float, d: int) -> tuple[float, float]:
    """Return ``(beta(eps), beta(eps) - 9 d |log eps|)``."""
    if eps <= 0:
        raise PotentialError("eps must be positive")
    if s.form == "constant":
        beta = float(s.beta0)
    else:
        if not 0 < eps < 1:
            raise PotentialError("log schedule needs eps in (0, 1)")
        beta = s.A + s.C * abs(math.log(eps))
    if beta <= 0:
        raise PotentialError(f"schedule gives non-positive beta={beta}")
    return beta, beta - 9 * d * abs(math.log(eps))
