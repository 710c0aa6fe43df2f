"""Flat minorant delta0 of a modulus delta, and the time reparametrization
t(xi) = 1/delta0(xi) + exp(1/xi), both evaluated through logarithms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

LEVELS = 60
CHECK_POINTS = 10_000
LOG_MAX = math.log(np.finfo(float).max)


class FlatteningError(ValueError):
    pass


DeltaLike = Callable[[np.ndarray], np.ndarray] | tuple[Sequence[float], Sequence[float]]


def _as_callable(delta: DeltaLike) -> tuple[Callable[[np.ndarray], np.ndarray], float]:
    """Vectorized delta and the smallest xi where it is known (0 = everywhere)."""
    if callable(delta):
        return (lambda x: np.asarray(delta(np.asarray(x, float)), float) * np.ones_like(x, dtype=float)), 0.0
    xs, vs = (np.asarray(a, float) for a in delta)
    order = np.argsort(xs)
    xs, vs = xs[order], vs[order]
    if xs.size < 2 or np.any(xs <= 0):
        raise FlatteningError("delta samples need at least two points with xi > 0")
    if np.any(vs <= 0):
        i = int(np.flatnonzero(vs <= 0)[0])
        raise FlatteningError(f"delta vanishes at xi = {xs[i]:.6g} > 0")
    if np.any(np.diff(vs) < 0):
        i = int(np.flatnonzero(np.diff(vs) < 0)[0])
        raise FlatteningError(f"delta samples are not monotone: delta({xs[i + 1]:.6g}) < delta({xs[i]:.6g})")
    itp = PchipInterpolator(np.log(xs), np.log(vs), extrapolate=False)

    def f(x):
        return np.exp(itp(np.log(np.asarray(x, float))))

    return f, float(xs[0])


@dataclass(frozen=True)
class FlatteningFunction:
    """delta0(xi) = M(xi) exp(-1/xi) with M a monotone interpolant (PCHIP in
    log-log coordinates) through the node values M(xi_j) = delta(xi_{j+1})
    on xi_j = rho 2^-j."""

    rho: float
    nodes: np.ndarray  # xi_j, decreasing
    node_values: np.ndarray  # M(xi_j)
    delta: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    _itp: PchipInterpolator = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        x = np.log(self.nodes[::-1])
        y = np.log(self.node_values[::-1])
        object.__setattr__(self, "_itp", PchipInterpolator(x, y, extrapolate=True))

    @property
    def xi_floor(self) -> float:
        return float(self.nodes[-1])

    def log_M(self, xi) -> np.ndarray:
        xi = np.asarray(xi, float)
        lx = np.log(xi)
        lo = math.log(self.xi_floor)
        out = self._itp(np.clip(lx, lo, math.log(self.rho)))
        # below the last node keep the last segment's log-log slope (>= 0)
        slope = float(self._itp.derivative()(lo))
        return np.where(lx < lo, out + slope * (lx - lo), out)

    def dlog_M(self, xi) -> np.ndarray:
        """M'(xi) / M(xi)."""
        xi = np.asarray(xi, float)
        lx = np.clip(np.log(xi), math.log(self.xi_floor), math.log(self.rho))
        return self._itp.derivative()(lx) / xi

    def M(self, xi) -> np.ndarray:
        return np.exp(self.log_M(xi))

    def log_delta0(self, xi) -> np.ndarray:
        xi = np.asarray(xi, float)
        with np.errstate(divide="ignore"):
            return np.where(xi > 0, self.log_M(np.where(xi > 0, xi, 1.0)) - 1.0 / np.where(xi > 0, xi, 1.0), -np.inf)

    def __call__(self, xi) -> np.ndarray:
        return np.exp(self.log_delta0(xi))

    def check(self, points: int = CHECK_POINTS) -> dict:
        """Minorant, monotonicity and flatness on a geometric check grid."""
        xs = np.geomspace(self.xi_floor, self.rho, points)
        ld0 = self.log_delta0(xs)
        with np.errstate(divide="ignore"):
            ld = np.log(self.delta(xs))
        minorant = bool(np.all(ld0 <= ld))
        monotone = bool(np.all(np.diff(ld0) >= 0))
        positive = bool(np.all(np.isfinite(ld0)))
        decades = np.array([1e-1, 1e-2, 1e-3, 1e-4])
        decades = decades[decades < self.rho]
        flat = {}
        for k in range(1, 7):
            seq = self.log_delta0(decades) - k * np.log(decades)
            flat[k] = bool(np.all(np.diff(seq) < 0))
        drop6 = float((self.log_delta0(1e-2) - 6 * math.log(1e-2)) - (self.log_delta0(1e-3) - 6 * math.log(1e-3)))
        return {
            "points": int(points),
            "minorant": minorant,
            "monotone": monotone,
            "positive": positive,
            "min_log_gap": float(np.min(ld - ld0)),
            "flat_orders": flat,
            "flat_drop6_log": drop6,
            "flat": all(flat.values()) and drop6 > math.log(1e3),
            "pass": minorant and monotone and positive and all(flat.values()) and drop6 > math.log(1e3),
        }


def build_delta0(delta: DeltaLike, rho: float = 1.0, levels: int = LEVELS) -> FlatteningFunction:
    if not rho > 0:
        raise FlatteningError("rho must be positive")
    fn, known_from = _as_callable(delta)
    if known_from > 0:
        levels = min(levels, int(math.floor(math.log2(rho / known_from))) - 1)
        if levels < 2:
            raise FlatteningError("delta samples do not reach far enough below rho")
    xi = rho * 2.0 ** -np.arange(levels + 2)
    with np.errstate(invalid="ignore"):
        d = fn(xi)
    if not np.all(np.isfinite(d)):
        i = int(np.flatnonzero(~np.isfinite(d))[0])
        raise FlatteningError(f"delta is not finite at xi = {xi[i]:.6g}")
    if np.any(d <= 0):
        i = int(np.flatnonzero(d <= 0)[0])
        raise FlatteningError(f"delta vanishes at xi = {xi[i]:.6g} > 0")
    if np.any(np.diff(d) > 0):
        i = int(np.flatnonzero(np.diff(d) > 0)[0])
        raise FlatteningError(f"delta is not monotone: delta({xi[i + 1]:.6g}) > delta({xi[i]:.6g})")
    # safety scaling min(delta(xi_j), delta(xi_{j-1})) shifted by one node so
    # that M stays below delta between nodes
    safe = np.minimum(d, np.concatenate([[d[0]], d[:-1]]))
    return FlatteningFunction(float(rho), xi[: levels + 1], safe[1:], fn)


@dataclass(frozen=True)
class TimeReparam:
    """t(xi) = 1/delta0(xi) + exp(1/xi) = exp(1/xi) (1 + 1/M(xi))."""

    flat: FlatteningFunction

    @property
    def rho(self) -> float:
        return self.flat.rho

    def _domain(self, xi) -> np.ndarray:
        xi = np.asarray(xi, float)
        if np.any(xi <= 0) or np.any(xi >= self.rho):
            raise ValueError(f"t is defined for 0 < xi < rho = {self.rho:g}")
        return xi

    def log_t(self, xi) -> np.ndarray:
        xi = self._domain(xi)
        return 1.0 / xi + np.logaddexp(0.0, -self.flat.log_M(xi))

    def __call__(self, xi) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_t(xi))

    def dlog_t(self, xi) -> np.ndarray:
        """t'(xi) / t(xi)."""
        xi = self._domain(xi)
        M = self.flat.M(xi)
        return -1.0 / xi**2 - self.flat.dlog_M(xi) / (1.0 + M)

    def derivative(self, xi) -> np.ndarray:
        return self(xi) * self.dlog_t(xi)

    def log_xi2_t(self, xi) -> np.ndarray:
        return 2.0 * np.log(self._domain(xi)) + self.log_t(xi)

    @property
    def xi_min(self) -> float:
        """Below this xi, t exceeds the double range and is handled in logs."""
        return float(brentq(lambda x: float(self.log_t(x)) - LOG_MAX, 1e-6, min(0.5, 0.999 * self.rho)))

    def check(self, xs: Sequence[float] = (1e-1, 1e-2, 1e-3)) -> dict:
        grid = np.geomspace(self.flat.xi_floor * 4, self.rho * 0.999, 2000)
        lt = self.log_t(grid)
        dec = bool(np.all(np.diff(lt) < 0))
        x2t = self.log_xi2_t(np.asarray(xs, float))
        growing = bool(np.all(np.diff(x2t) > 0))
        return {"decreasing": dec, "xi2_t_log": x2t.tolist(), "xi2_t_growing": growing, "xi_min": self.xi_min,
                "pass": dec and growing}


def build_time_reparam(f: FlatteningFunction) -> TimeReparam:
    return TimeReparam(f)
