"""Irregular payoff library, Young-function toolkit, and rate predictions.

Indicator payoffs use open sets (boundary excluded); boundary points carry
probability zero under the absolutely continuous laws simulated here, so the
convention only pins down determinism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import (
    InvalidArgumentError,
    NumericFailureError,
    UnsupportedOperationError,
)

SPACES = ("lipschitz", "bv", "sobolev", "orlicz", "variable", "fractional")


# ---------------------------------------------------------------------------
# Young functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class YoungFunction:
    """Convex Phi with Phi(0)=0; built-ins are the power and power-log families."""

    name: str
    phi: Callable
    p: float
    alpha: float = 0.0
    is_N_function: bool = True
    delta2_phi: bool = True
    delta2_psi: bool = True


def young_power(p: float) -> YoungFunction:
    """Phi(x) = x^p / p; the Orlicz space is classical L^p."""
    if p <= 1:
        raise InvalidArgumentError("power family needs p > 1")

    def phi(x):
        return np.power(x, p) / p

    return YoungFunction(name=f"power(p={p:g})", phi=phi, p=p)


def young_plog(p: float, alpha: float = 1.0) -> YoungFunction:
    """Phi(x) = x^p (log(e + x))^alpha; Delta_2 holds for Phi and its conjugate."""
    if not (p > 1 and alpha > 0) and not (-1 <= alpha < 0 and p > 1 - alpha):
        raise InvalidArgumentError("need p > 1, alpha > 0 (or p > 1-alpha, -1 <= alpha < 0)")

    def phi(x):
        x = np.asarray(x, dtype=float)
        return np.power(x, p) * np.power(np.log(np.e + x), alpha)

    return YoungFunction(name=f"plog(p={p:g},alpha={alpha:g})", phi=phi, p=p, alpha=alpha)


YOUNG_REGISTRY = {"power": young_power, "plog": young_plog}


def young_complement(young: YoungFunction, x: float) -> float:
    """Conjugate Psi(x) = sup_{y >= 0} (x*y - Phi(y)).

    Closed form for the power family; otherwise a bounded concave maximization
    with the search interval grown until the maximizer is interior.
    """
    if x < 0:
        raise InvalidArgumentError("conjugate argument must be nonnegative")
    if x == 0.0:
        return 0.0
    if young.name.startswith("power"):
        p = young.p
        p_star = p / (p - 1.0)
        return x**p_star / p_star

    def neg_obj(y):
        return -(x * y - float(young.phi(y)))

    y_max = 1.0
    for _ in range(200):
        res = minimize_scalar(neg_obj, bounds=(0.0, y_max), method="bounded",
                              options={"xatol": 1e-13 * max(1.0, y_max)})
        if res.x < 0.9 * y_max:
            return max(0.0, -float(res.fun))
        y_max *= 2.0
    raise NumericFailureError("conjugate maximizer escaped the search interval")


def young_inverse(young: YoungFunction, x: float) -> float:
    """Generalized inverse inf{y >= 0 : Phi(y) > x} via bisection (rel tol 1e-10)."""
    if x < 0:
        raise InvalidArgumentError("inverse argument must be nonnegative")
    if x == 0.0:
        return 0.0
    hi = 1.0
    for _ in range(400):
        if float(young.phi(hi)) > x:
            break
        hi *= 2.0
    else:
        raise NumericFailureError("Phi never exceeded target; not superlinear?")
    lo = 0.0
    while hi - lo > 1e-10 * hi:
        mid = 0.5 * (lo + hi)
        if float(young.phi(mid)) > x:
            hi = mid
        else:
            lo = mid
    return hi


def orlicz_bound_minimize(
    q: float, r: float, E: float, young: YoungFunction
) -> tuple[float, float]:
    """Minimize lam^{-(1 - q/r)} + Phi^{-1}(lam)^q * E over lam > 0.

    r = inf supported (use math.inf); returns (bound, minimizer).
    """
    if E <= 0:
        raise InvalidArgumentError("moment value E must be positive")
    if q <= 0:
        raise InvalidArgumentError("q must be positive")
    expo = 1.0 if math.isinf(r) else 1.0 - q / r
    if expo <= 0:
        raise InvalidArgumentError("need q < r")

    def objective(lam):
        return lam ** (-expo) + young_inverse(young, lam) ** q * E

    # log-grid scan, then golden-section refinement between the bracketing nodes
    grid = np.logspace(-12, 12, 241)
    vals = [objective(l) for l in grid]
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(
        lambda u: objective(math.exp(u)),
        bounds=(math.log(lo), math.log(hi)),
        method="bounded",
        options={"xatol": 1e-12},
    )
    lam_star = math.exp(res.x)
    return float(objective(lam_star)), lam_star


# ---------------------------------------------------------------------------
# Payoffs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Payoff:
    """Evaluatable functional with function-space classification and metadata.

    ``fn`` maps arrays of shape (..., d) to shape (...). ``structure`` is a
    tuple describing the shape the closed-form total variation is computed
    from; None when no closed form exists.
    """

    name: str
    fn: Callable
    space: str
    sup_norm: float
    structure: tuple | None = None
    lip: float | None = None
    p: float | None = None
    s: float | None = None
    young: YoungFunction | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.fn(np.asarray(x, dtype=float))


def _x1(x: np.ndarray) -> np.ndarray:
    return x[..., 0]


def make_interval_indicator(a: float = 0.0, b: float = 1.0) -> Payoff:
    if not a < b:
        raise InvalidArgumentError("need a < b")

    def fn(x):
        x1 = _x1(x)
        return ((x1 > a) & (x1 < b)).astype(float)

    return Payoff(
        name=f"interval_indicator({a:g},{b:g})", fn=fn, space="bv",
        sup_norm=1.0, structure=("interval", a, b),
    )


def make_ball_indicator(d: int = 2, radius: float = 1.0, center: float = 0.0) -> Payoff:
    if radius <= 0:
        raise InvalidArgumentError("radius must be positive")
    c = np.broadcast_to(np.asarray(center, dtype=float), (d,)).copy()

    def fn(x):
        return (np.linalg.norm(x - c, axis=-1) < radius).astype(float)

    return Payoff(
        name=f"ball_indicator(d={d},R={radius:g})", fn=fn, space="bv",
        sup_norm=1.0, structure=("ball", d, radius),
    )


def make_clamp_ramp(lo: float = 0.0, hi: float = 1.0) -> Payoff:
    if not lo < hi:
        raise InvalidArgumentError("need lo < hi")

    def fn(x):
        return np.clip(_x1(x), lo, hi)

    return Payoff(
        name=f"clamp_ramp({lo:g},{hi:g})" if (lo, hi) != (0.0, 1.0) else "clamp_ramp",
        fn=fn, space="lipschitz", sup_norm=float(max(abs(lo), abs(hi))), lip=1.0,
    )


def make_tent(s: float = 0.5, p: float = 2.0) -> Payoff:
    """Piecewise-linear tent max(0, 1-|x1|); fractional-class testbed."""

    def fn(x):
        return np.maximum(0.0, 1.0 - np.abs(_x1(x)))

    return Payoff(
        name="tent", fn=fn, space="fractional", sup_norm=1.0,
        structure=("pl1d", (-1.0, 0.0, 1.0), (0.0, 1.0, 0.0)), p=p, s=s,
    )


def make_tent_power(s: float = 0.5, p: float = 2.0) -> Payoff:
    """Cusped bump max(0, 1-|x1|)^s; Hoelder-s, fractional-class representative."""
    if not 0 < s <= 1:
        raise InvalidArgumentError("exponent s must be in (0, 1]")

    def fn(x):
        return np.maximum(0.0, 1.0 - np.abs(_x1(x))) ** s

    return Payoff(
        name=f"tent_power(s={s:g})", fn=fn, space="fractional", sup_norm=1.0,
        structure=("bump1d", 1.0), p=p, s=s,
    )


def make_capped_hat(p: float = 2.0) -> Payoff:
    """min(1, max(0, 1-|x1|) * (2+x1)): capped product of the tent with a ramp."""

    def fn(x):
        x1 = _x1(x)
        return np.minimum(1.0, np.maximum(0.0, 1.0 - np.abs(x1)) * (2.0 + x1))

    return Payoff(
        name="capped_hat", fn=fn, space="sobolev", sup_norm=1.0,
        structure=("bump1d", 1.0), p=p,
    )


def make_inverse_quarter(cap: float = 10.0) -> Payoff:
    """min(|x1|^{-1/4}, cap): unbounded-family representative for r < inf checks."""

    def fn(x):
        x1 = np.abs(_x1(x))
        with np.errstate(divide="ignore"):
            v = np.where(x1 > 0, x1 ** (-0.25), np.inf)
        return np.minimum(v, cap)

    return Payoff(
        name=f"inverse_quarter(cap={cap:g})", fn=fn, space="bv",
        sup_norm=float(cap), structure=("bump1d", float(cap)),
    )


PAYOFF_REGISTRY = {
    "interval_indicator": make_interval_indicator,
    "ball_indicator": make_ball_indicator,
    "clamp_ramp": make_clamp_ramp,
    "tent": make_tent,
    "tent_power": make_tent_power,
    "capped_hat": make_capped_hat,
    "inverse_quarter": make_inverse_quarter,
}


def make_payoff(name: str, **params) -> Payoff:
    if name not in PAYOFF_REGISTRY:
        raise InvalidArgumentError(
            f"unknown payoff {name!r}; registry has {sorted(PAYOFF_REGISTRY)}"
        )
    return PAYOFF_REGISTRY[name](**params)


def total_variation(payoff: Payoff) -> float:
    """Closed-form total variation |Df|(R^d) for structured built-ins.

    Interval indicator: 2. Ball indicator: surface area
    2 pi^{d/2} R^{d-1} / Gamma(d/2). 1D piecewise-linear / unimodal bump:
    sum of monotone rises and falls.
    """
    if payoff.structure is None:
        raise UnsupportedOperationError(
            f"payoff {payoff.name!r} has no closed-form total variation"
        )
    kind = payoff.structure[0]
    if kind == "interval":
        return 2.0
    if kind == "ball":
        _, d, radius = payoff.structure
        return 2.0 * math.pi ** (d / 2.0) * radius ** (d - 1) / math.gamma(d / 2.0)
    if kind == "pl1d":
        _, _, ys = payoff.structure
        return float(np.sum(np.abs(np.diff(np.array([0.0, *ys, 0.0])))))
    if kind == "bump1d":
        _, peak = payoff.structure
        return 2.0 * float(peak)
    raise UnsupportedOperationError(f"unknown payoff structure {kind!r}")


# ---------------------------------------------------------------------------
# Predicted exponents
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RatePrediction:
    strong_exponent: float
    mlmc_cost_exponent_weak1: float
    mlmc_cost_exponent_weakdelta: float
    q: float
    delta: float
    p: float | None = None
    s: float | None = None


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise InvalidArgumentError(f"delta must lie in (0,1), got {delta}")


def predicted_strong_exponent(
    space: str, q: float, delta: float = 0.9,
    p: float | None = None, s: float | None = None,
) -> float:
    """Exponent e in the n^{-e} bound on E|f(X(T)) - f(X^(n)(T))|^q.

    bv: delta/2. sobolev/orlicz/variable: q/(2(q+1)).
    fractional: p*q*s/(2(q+p)). lipschitz: q/2 (classical baseline).
    """
    if q < 1:
        raise InvalidArgumentError("q must be >= 1")
    if space == "bv":
        _check_delta(delta)
        return delta / 2.0
    if space in ("sobolev", "orlicz", "variable"):
        return q / (2.0 * (q + 1.0))
    if space == "fractional":
        if p is None or s is None:
            raise InvalidArgumentError("fractional class needs p and s")
        if not 0 < s < 1:
            raise InvalidArgumentError("s must lie in (0,1)")
        return p * q * s / (2.0 * (q + p))
    if space == "lipschitz":
        return q / 2.0
    raise InvalidArgumentError(f"unknown function-space class {space!r}")


def predicted_mlmc_exponent(
    space: str, regime: str, delta: float = 0.9,
    p: float | None = None, s: float | None = None,
) -> float:
    """Cost exponent c in the MLMC complexity bound eps^{-c}.

    regime "weak1" (weak rate 1): bv (6-delta)/2, sobolev/orlicz/variable 8/3,
    fractional 3 - p*s/(p+2), lipschitz 2 (the eps^-2 log^2 eps case, log
    factor unmodeled). regime "weakdelta" (weak rate delta/2): bv 1 + 2/delta,
    sobolev/orlicz/variable 2 + 4/(3 delta),
    fractional 2 + (p(1-s)+2)/(delta (p+2)).
    """
    if regime not in ("weak1", "weakdelta"):
        raise InvalidArgumentError("regime must be 'weak1' or 'weakdelta'")
    if space == "fractional":
        if p is None or s is None:
            raise InvalidArgumentError("fractional class needs p and s")
        if not 0 < s < 1:
            raise InvalidArgumentError("s must lie in (0,1)")
    if regime == "weak1":
        if space == "bv":
            _check_delta(delta)
            return (6.0 - delta) / 2.0
        if space in ("sobolev", "orlicz", "variable"):
            return 8.0 / 3.0
        if space == "fractional":
            return 3.0 - p * s / (p + 2.0)
        if space == "lipschitz":
            return 2.0
        raise InvalidArgumentError(f"unknown function-space class {space!r}")
    _check_delta(delta)
    if space == "bv":
        return 1.0 + 2.0 / delta
    if space in ("sobolev", "orlicz", "variable"):
        return 2.0 + 4.0 / (3.0 * delta)
    if space == "fractional":
        return 2.0 + (p * (1.0 - s) + 2.0) / (delta * (p + 2.0))
    raise InvalidArgumentError(
        f"class {space!r} has no weak-rate-delta/2 table entry"
    )


def rate_prediction(payoff: Payoff, q: float, delta: float = 0.9) -> RatePrediction:
    space = payoff.space
    kw = dict(p=payoff.p, s=payoff.s)
    strong = predicted_strong_exponent(space, q, delta, **kw)
    weak1 = predicted_mlmc_exponent(space, "weak1", delta, **kw)
    if space == "lipschitz":
        weakdelta = float("nan")
    else:
        weakdelta = predicted_mlmc_exponent(space, "weakdelta", delta, **kw)
    return RatePrediction(
        strong_exponent=strong,
        mlmc_cost_exponent_weak1=weak1,
        mlmc_cost_exponent_weakdelta=weakdelta,
        q=q, delta=delta, p=payoff.p, s=payoff.s,
    )
