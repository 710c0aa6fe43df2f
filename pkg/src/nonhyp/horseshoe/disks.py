"""Admissible disks (graphs y = eta(z) over a chart's z-interval) and the
graph transforms S_j between charts."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from ..parallel import pmap
from ..seeding import stream
from .system import Chart, ChartedSystem

N_DEFAULT = 256  # intervals; the grid holds N + 1 = 257 samples
ADMISSIBLE_TOL = 1e-12
BISECT_ITERS = 60


class BranchError(ValueError):
    pass


class BranchTooThinError(BranchError):
    pass


class NotAGraphError(BranchError):
    pass


class AdmissibilityError(BranchError):
    pass


@dataclass(frozen=True)
class AdmissibleDisk:
    chart: int
    z: np.ndarray
    eta: np.ndarray
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    @cached_property
    def deta(self) -> np.ndarray:
        # centered differences inside, one-sided at the ends
        return np.gradient(self.eta, self.z, edge_order=1)

    @cached_property
    def spline(self) -> CubicSpline:
        return CubicSpline(self.z, self.eta)

    def __call__(self, z):
        return self.spline(z)

    def check(self, chart: Chart) -> None:
        dev = float(np.max(np.abs(self.eta - chart.y_center)))
        if dev > chart.eps_y + ADMISSIBLE_TOL:
            raise AdmissibilityError(f"max|eta - y_c| = {dev:.6g} exceeds eps_y = {chart.eps_y:.6g}")
        slope = float(np.max(np.abs(self.deta)))
        if slope > 1.0 + ADMISSIBLE_TOL:
            raise AdmissibilityError(f"max|D eta| = {slope:.6g} exceeds 1")

    def point(self, z: float) -> np.ndarray:
        return np.array([float(self.spline(z)), float(z)])

    def to_dict(self) -> dict:
        return {"chart": self.chart, "z": self.z.tolist(), "eta": self.eta.tolist()}


def chart_grid(chart: Chart, n: int = N_DEFAULT) -> np.ndarray:
    return np.linspace(-chart.eps_z, chart.eps_z, n + 1)


def flat_disk(sys: ChartedSystem, chart: int, value: float | None = None, n: int = N_DEFAULT) -> AdmissibleDisk:
    c = sys.charts[chart]
    z = chart_grid(c, n)
    v = c.y_center if value is None else value
    d = AdmissibleDisk(chart, z, np.full_like(z, v))
    d.check(c)
    return d


def disk_from_function(sys: ChartedSystem, chart: int, fn, n: int = N_DEFAULT, check: bool = True) -> AdmissibleDisk:
    c = sys.charts[chart]
    z = chart_grid(c, n)
    d = AdmissibleDisk(chart, z, np.asarray(fn(z), float) * np.ones_like(z))
    if check:
        d.check(c)
    return d


def random_admissible_disk(sys: ChartedSystem, chart: int, rng: np.random.Generator, n: int = N_DEFAULT) -> AdmissibleDisk:
    """c + A sin(w z + phi) + B z / eps_z, scaled into the admissible set
    with a 10% safety factor."""
    ch = sys.charts[chart]
    ez, ey = ch.eps_z, ch.eps_y
    c = ch.y_center + rng.uniform(-0.4, 0.4) * ey
    A = rng.uniform(0.0, 0.3) * ey
    B = rng.uniform(-0.2, 0.2) * ey
    w = rng.uniform(0.0, 12.0) / ez
    phi = rng.uniform(0.0, 2 * np.pi)
    slope = A * w + abs(B) / ez
    if slope > 0.9:
        A, B = A * 0.9 / slope, B * 0.9 / slope
    return disk_from_function(sys, chart, lambda z: c + A * np.sin(w * z + phi) + B * z / ez, n)


def dist1(d1: AdmissibleDisk, d2: AdmissibleDisk) -> float:
    """max|eta1 - eta2| + max|D eta1 - D eta2| on the shared grid."""
    if d1.chart != d2.chart:
        raise ValueError(f"disks live in different charts ({d1.chart} vs {d2.chart})")
    if d1.z.shape != d2.z.shape or not np.array_equal(d1.z, d2.z):
        raise ValueError("disks are sampled on different grids")
    return float(np.max(np.abs(d1.eta - d2.eta)) + np.max(np.abs(d1.deta - d2.deta)))


def _longest_run(mask: np.ndarray) -> tuple[int, int]:
    """[start, stop) of the longest run of True values."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    if edges.size == 0:
        return 0, 0
    starts, stops = edges[::2], edges[1::2]
    i = int(np.argmax(stops - starts))
    return int(starts[i]), int(stops[i])


def graph_transform(sys: ChartedSystem, disk: AdmissibleDisk, target_chart: int, n: int | None = None) -> AdmissibleDisk:
    """S_j(D): the part of the branch image of D landing in chart j, as a
    graph over chart j's uniform z-grid."""
    br = sys.branch(disk.chart, target_chart)
    src = sys.charts[disk.chart]
    tgt = sys.charts[target_chart]
    n = len(disk.z) - 1 if n is None else n
    lo = max(br.window[0], -src.eps_z)
    hi = min(br.window[1], src.eps_z)
    if not hi > lo:
        raise BranchTooThinError(f"branch U_{disk.chart}{target_chart} window misses the disk")
    zs = np.linspace(lo, hi, 4 * n + 1)
    ys = disk.spline(zs)
    yi, zi = br.fn(ys, zs)
    land = tgt.contains(yi, zi)
    a, b = _longest_run(land)
    if b - a < 4:
        raise BranchTooThinError(
            f"only {b - a} sample points of the disk land in U_{disk.chart}{target_chart}")
    dz = np.diff(zi[a:b])
    if not (np.all(dz > 0) or np.all(dz < 0)):
        raise NotAGraphError(f"z-image of the disk folds on branch U_{disk.chart}{target_chart}")
    inc = dz[0] > 0
    # bracket: extend the run by one sample on each side where available
    a0, b0 = max(a - 1, 0), min(b, len(zs) - 1)
    za, zb = zs[a0], zs[b0]
    target = chart_grid(tgt, n)

    def zmap(z):
        return br.fn(disk.spline(z), z)[1]

    fa, fb = zmap(np.array(za)), zmap(np.array(zb))
    lo_img, hi_img = (fa, fb) if inc else (fb, fa)
    if target[0] < lo_img - 1e-12 or target[-1] > hi_img + 1e-12:
        raise BranchTooThinError(
            f"branch U_{disk.chart}{target_chart} image covers z in [{float(lo_img):.6g}, {float(hi_img):.6g}], "
            f"not the whole target chart")
    left = np.full_like(target, za)
    right = np.full_like(target, zb)
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (left + right)
        below = (zmap(mid) < target) if inc else (zmap(mid) > target)
        left = np.where(below, mid, left)
        right = np.where(below, right, mid)
    zsrc = 0.5 * (left + right)
    ynew, _ = br.fn(disk.spline(zsrc), zsrc)
    out = AdmissibleDisk(target_chart, target, np.asarray(ynew, float))
    out.check(tgt)
    return out


# --------------------------------------------------------------------------
# contraction


@dataclass
class ContractionReport:
    ratios: dict[tuple[int, int], float]
    pairs: dict[tuple[int, int], int]
    skipped: int
    k: int

    @property
    def max_ratio(self) -> float:
        return max(self.ratios.values()) if self.ratios else 0.0

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 0.5

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "max_ratio": self.max_ratio,
            "pass": self.passed,
            "branches": {f"{i}{j}": {"max_ratio": r, "pairs": self.pairs[(i, j)]} for (i, j), r in self.ratios.items()},
            "skipped_identical_pairs": self.skipped,
        }


def verify_contraction(
    sys: ChartedSystem,
    chart_pairs: Sequence[tuple[int, int]] | None = None,
    trials: int = 100,
    seed: int = 0,
    workers: int | None = None,
    pairs: Sequence[tuple[AdmissibleDisk, AdmissibleDisk]] | None = None,
) -> ContractionReport:
    """max dist1(S_j D, S_j D') / dist1(D, D') over random admissible pairs."""
    if trials < 1 and pairs is None:
        raise ValueError("trials must be >= 1")
    branches = list(chart_pairs) if chart_pairs is not None else sys.realizable
    ratios, counts = {}, {}
    skipped = 0
    for (i, j) in branches:
        if pairs is not None:
            todo = list(pairs)
        else:
            def make(t, i=i, j=j):
                rng = stream(seed, f"contraction.{i}{j}", t)
                return random_admissible_disk(sys, i, rng), random_admissible_disk(sys, i, rng)

            todo = [make(t) for t in range(trials)]

        def one(pair, j=j):
            d, e = pair
            den = dist1(d, e)
            if den == 0:
                return None
            return dist1(graph_transform(sys, d, j), graph_transform(sys, e, j)) / den

        res = pmap(one, todo, workers)
        vals = [r for r in res if r is not None]
        skipped += len(res) - len(vals)
        ratios[(i, j)] = max(vals) if vals else 0.0
        counts[(i, j)] = len(vals)
    return ContractionReport(ratios, counts, skipped, sys.k)


def auto_tune_k(sys: ChartedSystem, probe_trials: int = 20, seed: int = 0, k_max: int = 64) -> tuple[ChartedSystem, ContractionReport]:
    """Smallest k in 1, 2, 4, ... whose transforms contract by 1/2 on a probe set."""
    k = 1
    while True:
        cand = sys.with_k(k)
        rep = verify_contraction(cand, trials=probe_trials, seed=seed)
        if rep.passed:
            return cand, rep
        if k >= k_max:
            raise BranchError(f"no k <= {k_max} makes the graph transforms contract by 1/2 (ratio {rep.max_ratio:.4g})")
        k *= 2
