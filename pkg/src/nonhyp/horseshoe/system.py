"""Charted systems: two chart boxes around the fixed point and the homoclinic
point, plus smooth branch maps between them."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import yaml

from ..maps import Box, MapSystem, eval_forward, eval_jacobian, parse_map

BranchFn = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
JacFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Chart:
    """Box {|y - y_c| <= eps_y, |z| <= eps_z} in the (y, z) plane."""

    y_center: float
    eps_y: float
    eps_z: float

    def contains(self, y, z, tol: float = 1e-12):
        return (np.abs(np.asarray(y) - self.y_center) <= self.eps_y + tol) & (np.abs(z) <= self.eps_z + tol)

    def box(self) -> Box:
        return Box((self.y_center - self.eps_y, -self.eps_z), (self.y_center + self.eps_y, self.eps_z))


@dataclass(frozen=True)
class Branch:
    """Smooth map used on the part of chart ``source`` whose z lies in
    ``window``; its image meets chart ``target``."""

    source: int
    target: int
    fn: BranchFn
    jac: JacFn
    window: tuple[float, float]


@dataclass(frozen=True)
class ChartedSystem:
    charts: tuple[Chart, ...]
    branches: Mapping[tuple[int, int], Branch]
    step_fn: BranchFn
    step_jac: JacFn
    a0: float
    b0: float
    y_p: float
    k: int = 1
    params: Mapping[str, float] = field(default_factory=dict)
    name: str = "builtin"

    def branch(self, i: int, j: int) -> Branch:
        try:
            return self.branches[(i, j)]
        except KeyError:
            raise KeyError(f"branch U_{i}{j} is empty for this system") from None

    @property
    def realizable(self) -> list[tuple[int, int]]:
        return sorted(self.branches)

    def step(self, y, z):
        return self.step_fn(np.asarray(y, float), np.asarray(z, float))

    def jacobian(self, y, z) -> np.ndarray:
        return self.step_jac(np.asarray(y, float), np.asarray(z, float))

    def iterate(self, x, times: int) -> np.ndarray:
        y, z = np.asarray(x, float)[..., 0], np.asarray(x, float)[..., 1]
        for _ in range(times):
            y, z = self.step(y, z)
        return np.stack([y, z], axis=-1)

    def chart_of(self, x) -> int:
        """Index of the chart containing ``x`` or -1."""
        for i, c in enumerate(self.charts):
            if c.contains(x[0], x[1]):
                return i
        return -1

    def with_k(self, k: int) -> "ChartedSystem":
        """Branches of the k-th iterate along i -> j -> j -> ... -> j."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if k == self.k:
            return self
        base = {key: b for key, b in self.branches.items()}
        new = {}
        for (i, j), b in base.items():
            if (j, j) not in base and k > 1:
                continue
            new[(i, j)] = _compose_branch(b, base.get((j, j)), k)
        return replace(self, branches=new, k=k)


def _compose_branch(first: Branch, loop: Branch | None, k: int) -> Branch:
    if k == 1:
        return first

    def fn(y, z):
        y, z = first.fn(y, z)
        for _ in range(k - 1):
            y, z = loop.fn(y, z)
        return y, z

    def jac(y, z):
        J = first.jac(y, z)
        y, z = first.fn(y, z)
        for _ in range(k - 1):
            J = loop.jac(y, z) @ J
            y, z = loop.fn(y, z)
        return J

    return Branch(first.source, first.target, fn, jac, first.window)


def _diag_jac(dy, dz):
    def jac(y, z):
        y = np.asarray(y, float)
        shape = np.broadcast(y, z).shape
        J = np.zeros(shape + (2, 2))
        J[..., 0, 0] = dy(y, z) if callable(dy) else dy
        J[..., 1, 1] = dz(y, z) if callable(dz) else dz
        return J

    return jac


BUILTIN_DEFAULTS = {
    "lam": 0.5,  # stable contraction of the local model
    "mu": 0.48,  # stable contraction along the transition
    "alpha": 60.0,  # z-stretch of the transition
    "y_p": 0.3,  # homoclinic point (y_p, 0)
    "z_star": 0.2,  # transition anchor (0, z_star) on the center-unstable axis
    "band": 0.0035,  # half-width of the exit window around z_star
    "eps_y0": 0.2,
    "eps_z0": 0.2035,
    "eps_y1": 0.098,
    "eps_z1": 0.2035,
}


def _validate(p: Mapping[str, float]) -> None:
    def need(cond: bool, msg: str) -> None:
        if not cond:
            raise ValueError(f"invalid homoclinic system parameters: {msg}")

    need(0 < p["lam"] < 1 and 0 < p["mu"] < 1, "contractions must lie in (0, 1)")
    need(p["y_p"] - p["eps_y1"] > p["eps_y0"], "charts U0 and U1 must be disjoint")
    need(p["z_star"] + p["band"] <= min(p["eps_z0"], p["eps_z1"]) + 1e-15, "exit window must lie in both charts")
    need(p["alpha"] * p["band"] >= max(p["eps_z0"], p["eps_z1"]), "transition image must cross the target chart")
    zfix = p["z_star"] * p["alpha"] / (p["alpha"] - 1)
    need(zfix <= p["z_star"] + p["band"], f"word '1' needs alpha >= {p['z_star'] / p['band'] + 1:.4g}")
    need(p["mu"] * p["eps_y0"] <= p["eps_y1"] + 1e-15, "transition from U0 must land inside U1")
    need(p["lam"] * (p["y_p"] + p["eps_y1"]) <= p["eps_y0"], "local model must carry U1 into U0")
    zlo = p["z_star"] - p["band"]
    need(zlo + zlo**3 >= p["eps_z0"], "local model image must cross U0 outside the exit window")


def builtin_homoclinic_system(params: Mapping[str, float] | None = None,
                              perturbation: MapSystem | None = None) -> ChartedSystem:
    """Synthetic system with a nonhyperbolic fixed point and a transverse
    homoclinic point.

    Local model L(y, z) = (lam*y, z + z^3) everywhere except the exit window
    |z - z_star| <= band, where the columns over U0 and U1 are carried by
    the affine transitions
        T0(y, z) = (y_p + mu*y,           alpha*(z - z_star))
        T1(y, z) = (y_p + mu*(y - y_p),   alpha*(z - z_star)).
    W^s_loc = {z = 0} and W^cu_loc = {y = 0}; T0 sends (0, z_star) on the
    center-unstable axis to the homoclinic point (y_p, 0) on the stable axis.
    ``perturbation`` (a planar MapSystem in x1 = y, x2 = z) is added to
    every branch.
    """
    p = {**BUILTIN_DEFAULTS, **(params or {})}
    unknown = set(p) - set(BUILTIN_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown homoclinic system parameter(s): {', '.join(sorted(unknown))}")
    p = {k: float(v) for k, v in p.items()}
    _validate(p)
    lam, mu, alpha, y_p, zs, bw = p["lam"], p["mu"], p["alpha"], p["y_p"], p["z_star"], p["band"]
    c0 = Chart(0.0, p["eps_y0"], p["eps_z0"])
    c1 = Chart(y_p, p["eps_y1"], p["eps_z1"])
    zlo, zhi = zs - bw, zs + bw

    def L(y, z):
        return lam * y, z + z**3

    def T0(y, z):
        return y_p + mu * y, alpha * (z - zs)

    def T1(y, z):
        return y_p + mu * (y - y_p), alpha * (z - zs)

    jL = _diag_jac(lam, lambda y, z: 1.0 + 3.0 * np.asarray(z) ** 2)
    jT = _diag_jac(mu, alpha)

    if perturbation is not None:
        L, jL = _perturb(L, jL, perturbation)
        T0, jT0 = _perturb(T0, jT, perturbation)
        T1, jT1 = _perturb(T1, jT, perturbation)
    else:
        jT0 = jT1 = jT

    def step(y, z):
        y = np.asarray(y, float)
        z = np.asarray(z, float)
        in_band = (z >= zlo) & (z <= zhi)
        m0 = in_band & (np.abs(y) <= c0.eps_y)
        m1 = in_band & (np.abs(y - y_p) <= c1.eps_y)
        ly, lz = L(y, z)
        ay, az = T0(y, z)
        by, bz = T1(y, z)
        return np.where(m0, ay, np.where(m1, by, ly)), np.where(m0, az, np.where(m1, bz, lz))

    def step_jac(y, z):
        y = np.asarray(y, float)
        z = np.asarray(z, float)
        in_band = (z >= zlo) & (z <= zhi)
        m0 = (in_band & (np.abs(y) <= c0.eps_y))[..., None, None]
        m1 = (in_band & (np.abs(y - y_p) <= c1.eps_y))[..., None, None]
        return np.where(m0, jT0(y, z), np.where(m1, jT1(y, z), jL(y, z)))

    below = (-max(c0.eps_z, c1.eps_z), zlo)
    band = (zlo, zhi)
    branches = {
        (0, 0): Branch(0, 0, L, jL, below),
        (0, 1): Branch(0, 1, T0, jT0, band),
        (1, 0): Branch(1, 0, L, jL, below),
        (1, 1): Branch(1, 1, T1, jT1, band),
    }
    name = "builtin" if perturbation is None else "builtin+perturbation"
    return ChartedSystem((c0, c1), branches, step, step_jac, a0=lam, b0=1.0, y_p=y_p, k=1, params=p, name=name)


def _perturb(fn: BranchFn, jac: JacFn, bump: MapSystem):
    def f(y, z):
        y, z = np.broadcast_arrays(np.asarray(y, float), np.asarray(z, float))
        a, b = fn(y, z)
        d = eval_forward(bump, np.stack([y, z], axis=-1))
        return a + d[..., 0], b + d[..., 1]

    def j(y, z):
        y, z = np.broadcast_arrays(np.asarray(y, float), np.asarray(z, float))
        return jac(y, z) + eval_jacobian(bump, np.stack([y, z], axis=-1))

    return f, j


def perturbation_size(sys: ChartedSystem, bump: MapSystem, grid_per_axis: int = 41) -> float:
    """Grid C^1 size of the bump over both charts (its distance to zero)."""
    zero = parse_map("0*x1, 0*x2")
    from ..maps import c1_distance

    return max(c1_distance(bump, zero, c.box(), grid_per_axis) for c in sys.charts)


def linear_toy_system(ky: float = 0.25, kz: float = 2.0, eps_y: float = 1.0, eps_z: float = 1.0) -> ChartedSystem:
    """One chart, one branch (y, z) -> (ky*y, kz*z)."""
    c = Chart(0.0, eps_y, eps_z)

    def f(y, z):
        return ky * np.asarray(y, float), kz * np.asarray(z, float)

    jac = _diag_jac(ky, kz)
    b = Branch(0, 0, f, jac, (-eps_z, eps_z))
    return ChartedSystem((c,), {(0, 0): b}, f, jac, a0=abs(ky), b0=abs(kz), y_p=0.0, name="linear-toy",
                         params={"ky": ky, "kz": kz})


def load_system(spec: str | Path | None) -> ChartedSystem:
    """``builtin`` or a YAML file with optional keys ``params`` (overrides of
    the built-in family) and ``perturbation`` (two expressions in x1, x2)."""
    if spec is None or str(spec) == "builtin":
        return builtin_homoclinic_system()
    with open(spec, encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh) or {}
    unknown = set(cfg) - {"params", "perturbation", "perturbation_params"}
    if unknown:
        raise ValueError(f"unknown system file key(s): {', '.join(sorted(unknown))}")
    bump = None
    if cfg.get("perturbation"):
        src = cfg["perturbation"]
        bump = parse_map(src if isinstance(src, str) else ", ".join(src), cfg.get("perturbation_params") or {})
        if bump.dimension != 2:
            raise ValueError("perturbation must have two components")
    return builtin_homoclinic_system(cfg.get("params"), bump)
