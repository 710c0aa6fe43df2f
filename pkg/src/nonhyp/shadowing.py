"""Pseudotrajectories and their shadowing orbits.

The shadow search solves for a whole exact orbit x_0..x_m at once. The
unknowns are pinned by m*n orbit equations x_{k+1} = F(x_k) plus n
boundary equations: the stable block of x_0 equals that of p_0 and the
unstable block of x_m equals that of p_m. The system is square, Newton
converges quadratically, and for hyperbolic linear maps its solution is
exactly the geometric-series shadow.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lyapunov import ConditionReport, LyapunovPair, RegionSpec, condition_suite
from .maps import Box, DomainError, MapSystem, eval_forward, eval_jacobian
from .parallel import pmap
from .seeding import stream

NOISE_MODELS = ("uniform-box", "gaussian-clipped", "adversarial-face")
RESIDUAL_TOL = 1e-10
REG_DAMPING = 1e-8


class EscapeError(DomainError):
    def __init__(self, index: int, point):
        super().__init__(f"pseudotrajectory leaves the domain box at index {index}")
        self.index = index
        self.point = np.asarray(point, float)


@dataclass(frozen=True)
class PseudoTrajectory:
    points: np.ndarray
    declared_d: float
    noise_model: str = "uniform-box"
    seed: int = 0
    measured_gap: float = 0.0

    @property
    def m(self) -> int:
        return len(self.points) - 1

    @classmethod
    def from_points(cls, sys: MapSystem, points, declared_d: float, noise_model: str = "uniform-box", seed: int = 0):
        pts = np.array(points, dtype=float)
        gap = measure_pseudotrajectory(sys, pts)
        if gap > declared_d:
            raise ValueError(f"measured gap {gap:.3e} exceeds declared d = {declared_d:.3e}")
        pts.setflags(write=False)
        return cls(pts, float(declared_d), noise_model, seed, gap)


@dataclass
class ShadowResult:
    shadow_point: np.ndarray
    deviation: float
    iterations: int
    converged: bool
    residual_history: list[float] = field(default_factory=list)
    residual: float = float("inf")
    orbit: np.ndarray | None = None


def _noise(rng: np.random.Generator, model: str, d: float, n: int, s: int) -> np.ndarray:
    if d == 0:
        return np.zeros(n)
    if model == "uniform-box":
        # box of half-width d/sqrt(n) sits inside the open d-ball
        return rng.uniform(-1.0, 1.0, n) * (0.999999 * d / np.sqrt(n))
    if model == "gaussian-clipped":
        eta = rng.normal(0.0, d / 3.0, n)
        norm = np.linalg.norm(eta)
        return eta * (0.999 * d / norm) if norm >= d else eta
    if model == "adversarial-face":
        eta = np.zeros(n)
        j = s + int(rng.integers(0, max(n - s, 1))) if n > s else 0
        eta[j] = 0.999 * d * rng.choice([-1.0, 1.0])
        return eta
    raise ValueError(f"unknown noise model {model!r}; expected one of {NOISE_MODELS}")


def generate_pseudotrajectory(
    sys: MapSystem,
    p0,
    m: int,
    d: float,
    noise_model: str = "uniform-box",
    seed: int = 0,
    domain: Box | None = None,
) -> PseudoTrajectory:
    """p_{k+1} = F(p_k) + eta_k with |eta_k| < d, staying in ``domain``."""
    if d < 0:
        raise ValueError("d must be >= 0")
    if m < 1:
        raise ValueError("m must be >= 1")
    if noise_model not in NOISE_MODELS:
        raise ValueError(f"unknown noise model {noise_model!r}; expected one of {NOISE_MODELS}")
    box = domain if domain is not None else sys.domain
    rng = stream(seed, "pseudotrajectory")
    pts = np.empty((m + 1, sys.dimension))
    pts[0] = np.asarray(p0, float)
    if box is not None and not box.contains(pts[0]):
        raise EscapeError(0, pts[0])
    for k in range(m):
        pts[k + 1] = eval_forward(sys, pts[k]) + _noise(rng, noise_model, d, sys.dimension, sys.stable_split)
        if box is not None and not box.contains(pts[k + 1]):
            raise EscapeError(k + 1, pts[k + 1])
    return PseudoTrajectory.from_points(sys, pts, d, noise_model, seed)


def measure_pseudotrajectory(sys: MapSystem, traj) -> float:
    pts = traj.points if isinstance(traj, PseudoTrajectory) else np.asarray(traj, float)
    if len(pts) < 2:
        return 0.0
    return float(np.max(np.linalg.norm(pts[1:] - eval_forward(sys, pts[:-1]), axis=-1)))


def orbit_deviation(sys: MapSystem, r, points) -> float:
    """max_k |F^k(r) - p_k| by plain forward iteration."""
    x = np.asarray(r, float)
    dev = 0.0
    for p in np.asarray(points, float):
        dev = max(dev, float(np.linalg.norm(x - p)))
        x = eval_forward(sys, x)
    return dev


def _residual(sys: MapSystem, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    s = sys.stable_split
    orbit = (x[1:] - eval_forward(sys, x[:-1])).ravel()
    return np.concatenate([orbit, x[0, :s] - p[0, :s], x[-1, s:] - p[-1, s:]])


def _jacobian(sys: MapSystem, x: np.ndarray) -> sp.csr_matrix:
    m1, n = x.shape
    m = m1 - 1
    s = sys.stable_split
    J = eval_jacobian(sys, x[:-1])
    rows, cols, vals = [], [], []
    base_r = np.arange(n)
    for k in range(m):
        r = k * n + base_r
        # d/dx_{k+1}: identity, d/dx_k: -DF(x_k)
        rows.append(r)
        cols.append((k + 1) * n + base_r)
        vals.append(np.ones(n))
        rr, cc = np.meshgrid(r, k * n + base_r, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(-J[k].ravel())
    rows.append(m * n + np.arange(s))
    cols.append(np.arange(s))
    vals.append(np.ones(s))
    rows.append(m * n + s + np.arange(n - s))
    cols.append(m * n + np.arange(s, n))
    vals.append(np.ones(n - s))
    N = m1 * n
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))


def _solve(J: sp.csr_matrix, g: np.ndarray) -> np.ndarray:
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            step = spla.spsolve(J.tocsc(), g)
            if np.all(np.isfinite(step)):
                return step
        except (spla.MatrixRankWarning, RuntimeError):
            pass
    # regularized normal equations
    JT = J.T.tocsr()
    A = (JT @ J + REG_DAMPING * sp.identity(J.shape[1])).tocsc()
    step = spla.spsolve(A, JT @ g)
    if not np.all(np.isfinite(step)):
        raise np.linalg.LinAlgError("orbit system singular even after regularization")
    return step


def find_shadow_point(
    sys: MapSystem,
    traj: PseudoTrajectory | np.ndarray,
    epsilon: float,
    max_newton: int = 50,
) -> ShadowResult:
    """Newton on the pinned orbit system, initialized at the pseudotrajectory."""
    p = traj.points if isinstance(traj, PseudoTrajectory) else np.asarray(traj, float)
    if len(p) < 2:
        raise ValueError("trajectory needs at least two points")
    x = p.copy()
    hist: list[float] = []
    it = 0
    try:
        g = _residual(sys, x, p)
        gn = float(np.max(np.abs(g)))
        hist.append(gn)
        while it < max_newton and gn > 0:
            step = _solve(_jacobian(sys, x), g).reshape(x.shape)
            t = 1.0
            for _ in range(30):
                trial = x - t * step
                try:
                    g_t = _residual(sys, trial, p)
                    gn_t = float(np.max(np.abs(g_t)))
                except DomainError:
                    gn_t = np.inf
                if gn_t < gn:
                    break
                t *= 0.5
            it += 1
            if not gn_t < gn:
                break  # round-off floor reached
            x, g, gn = trial, g_t, gn_t
            hist.append(gn)
            if gn <= 1e-15 * max(1.0, float(np.max(np.abs(x)))):
                break
        orbit_res = float(np.max(np.linalg.norm(x[1:] - eval_forward(sys, x[:-1]), axis=-1)))
        r = x[0].copy()
        dev = orbit_deviation(sys, r, p)
    except (DomainError, np.linalg.LinAlgError):
        return ShadowResult(x[0].copy(), float("inf"), it, False, hist, float("inf"), x)
    ok = bool(dev < epsilon and orbit_res < RESIDUAL_TOL)
    return ShadowResult(r, dev, it, ok, hist, orbit_res, x)


# --------------------------------------------------------------------------
# experiments


@dataclass
class ShadowRow:
    epsilon: float
    d: float
    trials: int
    success_rate: float
    max_deviation: float
    mean_iterations: float
    rejected_starts: int = 0

    def as_list(self) -> list:
        return [self.epsilon, self.d, self.trials, self.success_rate, self.max_deviation, self.mean_iterations,
                self.rejected_starts]


SHADOW_HEADER = ["epsilon", "d", "trials", "success_rate", "max_deviation", "mean_iterations", "rejected_starts"]


@dataclass
class ShadowExperiment:
    rows: list[ShadowRow]
    conditions: ConditionReport | None
    largest_d: dict[float, float | None]

    def to_dict(self) -> dict:
        return {
            "header": SHADOW_HEADER,
            "rows": [r.as_list() for r in self.rows],
            "largest_d_full_success": {repr(k): v for k, v in self.largest_d.items()},
            "conditions": None if self.conditions is None else self.conditions.to_dict(),
        }


def sample_trajectory_in(sys: MapSystem, box: Box, m: int, d: float, noise_model: str, seed: int, trial: int,
                         label: str = "shadow.start", max_attempts: int = 200) -> tuple[PseudoTrajectory, int]:
    """Draw p0 uniformly in ``box`` until the whole pseudotrajectory stays in
    ``box``; returns the trajectory and the number of rejected starts."""
    rng = stream(seed, label, trial)
    for attempt in range(max_attempts):
        p0 = box.sample(rng, 1)[0]
        try:
            sub = int(rng.integers(0, 2**31 - 1))
            return generate_pseudotrajectory(sys, p0, m, d, noise_model, sub, domain=box), attempt
        except EscapeError:
            continue
    raise DomainError(f"no pseudotrajectory of length {m} stayed in the box after {max_attempts} starts")


def run_trials(sys, box, m, d, epsilon, trials, seed, noise_model="uniform-box", workers=None, max_newton=50,
               label: str = "shadow.start"):
    """Independent trials; trial i always uses the stream (seed, label, i)."""

    def one(i: int):
        traj, rej = sample_trajectory_in(sys, box, m, d, noise_model, seed, i, label)
        return find_shadow_point(sys, traj, epsilon, max_newton), rej, traj

    return pmap(one, range(trials), workers)


def shadowing_experiment(
    sys: MapSystem,
    pair: LyapunovPair | None,
    region: RegionSpec,
    d_grid: Sequence[float],
    epsilon_grid: Sequence[float],
    trials: int,
    seed: int = 0,
    m: int = 50,
    noise_model: str = "uniform-box",
    workers: int | None = None,
    condition_samples: int = 2000,
) -> ShadowExperiment:
    """Success statistics over the (epsilon, d) grid.

    Trajectories for a given d are shared across all epsilons (the solver
    does not depend on epsilon), so success is monotone in epsilon by
    construction. ``largest_d`` is the largest grid d with 100% success:
    an empirical stand-in for the existential d(epsilon).
    """
    if not d_grid or not epsilon_grid:
        raise ValueError("d_grid and epsilon_grid must be nonempty")
    rows: list[ShadowRow] = []
    largest: dict[float, float | None] = {float(e): None for e in epsilon_grid}
    for j, d in enumerate(sorted(float(v) for v in d_grid)):
        results = run_trials(sys, region.calN, m, d, np.inf, trials, seed, noise_model, workers, label=f"shadow.d{d!r}")
        devs = np.array([r.deviation for r, _, _ in results])
        res_ok = np.array([r.residual < RESIDUAL_TOL for r, _, _ in results], bool)
        iters = np.array([r.iterations for r, _, _ in results], float)
        rejected = int(sum(rej for _, rej, _ in results))
        for eps in sorted(float(e) for e in epsilon_grid):
            if trials == 0:
                continue
            succ = float(np.mean(res_ok & (devs < eps)))
            rows.append(ShadowRow(eps, d, trials, succ, float(devs.max()), float(iters.mean()), rejected))
            if succ == 1.0:
                cur = largest[eps]
                largest[eps] = d if cur is None else max(cur, d)
    rows.sort(key=lambda r: (r.epsilon, r.d))
    cond = None
    if pair is not None:
        cond = condition_suite(sys, pair, [region], samples_per_set=condition_samples, seed=seed)
    return ShadowExperiment(rows, cond, largest)
