"""Inclination of tangent vectors along orbits on the local stable slice, and
C^1 coverage of a central disk by forward images of an admissible disk."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from ..maps import MapSystem, eval_forward, eval_jacobian
from .disks import AdmissibleDisk
from .system import ChartedSystem

LAMBDA_BOUND = 1.0  # Lambda: admissible disks have max|D eta| <= 1
REL_SLACK = 1e-12


class InclinationError(ArithmeticError):
    pass


@dataclass
class InclinationState:
    lam: float
    a: float
    b: float
    kappa: float
    Lambda: float = LAMBDA_BOUND
    m: int = 0

    @property
    def sigma(self) -> float:
        return 0.5 * (self.a + self.b)

    @property
    def a4_holds(self) -> bool:
        """kappa < (b - a)^2 / 8 and a < b."""
        return self.a < self.b and self.kappa < (self.b - self.a) ** 2 / 8


@dataclass
class InclinationTrace:
    lambdas: np.ndarray
    bounds: np.ndarray
    a0: float
    b0: float
    kappa: float
    orbit: np.ndarray
    constants_measured: bool
    meta: dict = field(default_factory=dict)

    @property
    def a(self) -> float:
        return self.a0 + self.kappa

    @property
    def b(self) -> float:
        return self.b0 - self.kappa

    @property
    def passed(self) -> bool:
        return bool(np.all(self.lambdas <= self.bounds * (1 + REL_SLACK) + 1e-300))

    @property
    def worst_margin(self) -> float:
        return float(np.min(self.bounds - self.lambdas))

    @property
    def state(self) -> InclinationState:
        return InclinationState(float(self.lambdas[-1]), self.a, self.b, self.kappa, m=len(self.lambdas) - 1)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lambdas.tolist(),
            "bound": self.bounds.tolist(),
            "a0": self.a0,
            "b0": self.b0,
            "kappa": self.kappa,
            "a": self.a,
            "b": self.b,
            "Lambda": LAMBDA_BOUND,
            "a4_holds": self.state.a4_holds,
            "constants_measured": self.constants_measured,
            "pass": self.passed,
        }


def _dynamics(sys: ChartedSystem | MapSystem):
    """(step, jacobian, s) for either kind of system; s = stable dimension."""
    if isinstance(sys, ChartedSystem):
        def step(x):
            y, z = sys.step(x[0], x[1])
            return np.array([float(y), float(z)])

        return step, lambda x: np.asarray(sys.jacobian(x[0], x[1]), float), 1
    return (lambda x: eval_forward(sys, x), lambda x: eval_jacobian(sys, x), sys.s)


def _blocks(J: np.ndarray, s: int) -> tuple[float, float, float]:
    """(|F_yy|, 1/|F_zz^-1|, max(|F_yz|, |F_zy|)) in operator norms."""
    Jyy, Jyz, Jzy, Jzz = J[:s, :s], J[:s, s:], J[s:, :s], J[s:, s:]
    a = float(np.linalg.norm(Jyy, 2)) if s else 0.0
    b = float(np.linalg.svd(Jzz, compute_uv=False).min())
    off = max(float(np.linalg.norm(Jyz, 2)) if Jyz.size else 0.0, float(np.linalg.norm(Jzy, 2)) if Jzy.size else 0.0)
    return a, b, off


def track_inclination(
    sys: ChartedSystem | MapSystem,
    r,
    v,
    steps: int,
    a0: float | None = None,
    b0: float | None = None,
    kappa: float | None = None,
) -> InclinationTrace:
    """lambda_j = |v_j^y| / |v_j^z| for v_j = DF^j(r) v, j = 0..steps, and the
    bound (a/b)^j lambda_0 + kappa/(b - a) with a = a0 + kappa, b = b0 - kappa.

    Constants not supplied are measured from DF along the orbit: a0 the
    largest |F_yy|, b0 the smallest conorm of F_zz, kappa the largest
    off-diagonal block.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    step, jac, s = _dynamics(sys)
    x = np.asarray(r, float).copy()
    w = np.asarray(v, float).copy()
    if x.shape != w.shape:
        raise ValueError("base point and tangent vector differ in dimension")
    lam = np.empty(steps + 1)
    orbit = [x.copy()]
    consts = []

    def ratio(w, j):
        nz = float(np.linalg.norm(w[s:]))
        if nz == 0.0:
            raise InclinationError(f"v^z vanishes at step {j}: inclination is infinite")
        return float(np.linalg.norm(w[:s])) / nz

    lam[0] = ratio(w, 0)
    for j in range(1, steps + 1):
        J = jac(x)
        consts.append(_blocks(J, s))
        w = J @ w
        x = step(x)
        orbit.append(x.copy())
        lam[j] = ratio(w, j)
    measured = a0 is None or b0 is None or kappa is None
    if consts:
        c = np.array(consts)
        ma, mb, mk = float(c[:, 0].max()), float(c[:, 1].min()), float(c[:, 2].max())
    else:
        ma, mb, mk = _blocks(jac(x), s)
    a0 = ma if a0 is None else float(a0)
    b0 = mb if b0 is None else float(b0)
    kappa = mk if kappa is None else float(kappa)
    a, b = a0 + kappa, b0 - kappa
    if not b > a:
        raise InclinationError(f"no gap: a = {a:.6g} >= b = {b:.6g}")
    js = np.arange(steps + 1)
    bounds = (a / b) ** js * lam[0] + kappa / (b - a)
    return InclinationTrace(lam, bounds, a0, b0, kappa, np.array(orbit), measured)


# --------------------------------------------------------------------------
# coverage of the central disk


@dataclass
class CoverReport:
    m: int
    covered: tuple[float, float]
    target: tuple[float, float]
    beta_max: float
    dbeta_max: float
    epsilon: float
    reason: str = ""

    @property
    def covers(self) -> bool:
        return self.covered[0] <= self.target[0] and self.covered[1] >= self.target[1]

    @property
    def c1_gap(self) -> float:
        return max(self.beta_max, self.dbeta_max)

    @property
    def passed(self) -> bool:
        return self.covers and self.c1_gap < self.epsilon

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "covered": list(self.covered),
            "target": list(self.target),
            "beta_max": self.beta_max,
            "dbeta_max": self.dbeta_max,
            "epsilon": self.epsilon,
            "covers": self.covers,
            "pass": self.passed,
            "reason": self.reason,
        }


def cover_check(
    sys: ChartedSystem,
    disk: AdmissibleDisk,
    m: int,
    half_width: float = 0.1,
    epsilon: float = 1e-3,
    n: int = 256,
) -> CoverReport:
    """Push ``disk`` m times through the chart's self-branch, keeping the
    points whose orbit stays in the branch window, and compare the part over
    N = [-half_width, half_width] with the slice {y = y_c} (beta = eta_m - y_c).
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    ci = disk.chart
    chart = sys.charts[ci]
    br = sys.branch(ci, ci)
    zs = np.linspace(disk.z[0], disk.z[-1], 16 * (len(disk.z) - 1) + 1)
    ys = disk.spline(zs)
    keep = np.ones_like(zs, bool)
    for _ in range(m):
        keep &= chart.contains(ys, zs) & (zs >= br.window[0]) & (zs <= br.window[1])
        ys, zs = br.fn(np.where(keep, ys, chart.y_center), np.where(keep, zs, 0.0))
    keep &= chart.contains(ys, zs)
    target = (-half_width, half_width)
    idx = np.flatnonzero(keep)
    if idx.size < 4:
        return CoverReport(m, (np.nan, np.nan), target, np.inf, np.inf, epsilon, "fewer than 4 image points stay in the chart")
    # the longest contiguous surviving run is the connected image piece
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    run = max(runs, key=len)
    zi, yi = zs[run], ys[run]
    if not np.all(np.diff(zi) > 0):
        order = np.argsort(zi)
        zi, yi = zi[order], yi[order]
        if np.any(np.diff(zi) <= 0):
            return CoverReport(m, (float(zi[0]), float(zi[-1])), target, np.inf, np.inf, epsilon, "image is not a graph over z")
    covered = (float(zi[0]), float(zi[-1]))
    rep = CoverReport(m, covered, target, np.inf, np.inf, epsilon)
    if not rep.covers:
        rep.reason = f"z-image [{covered[0]:.6g}, {covered[1]:.6g}] does not cover N"
        return rep
    grid = np.linspace(*target, n + 1)
    beta = CubicSpline(zi, yi)(grid) - chart.y_center
    rep.beta_max = float(np.max(np.abs(beta)))
    rep.dbeta_max = float(np.max(np.abs(np.gradient(beta, grid, edge_order=1))))
    if not rep.passed:
        rep.reason = f"C1 gap {rep.c1_gap:.3e} is not below {epsilon:.1e}"
    return rep


def cover_until(sys: ChartedSystem, disk: AdmissibleDisk, epsilon: float = 1e-3,
                half_width: float = 0.1, m_max: int = 200) -> CoverReport:
    """Smallest m whose cover_check passes; the last failing report otherwise."""
    rep = None
    for m in range(0, m_max + 1):
        rep = cover_check(sys, disk, m, half_width, epsilon)
        if rep.passed:
            return rep
    return rep
