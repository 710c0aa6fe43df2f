"""Flatness diagnostics and the quasitransverse pipeline that turns a
tangency into a transverse crossing in the (y, zhat) coordinates."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..expr import compile_node, parse_expression
from ..seeding import stream
from .center import (WORK_RADIUS, CenterGenerator, apply_h, composed_center_map, invert_h, real_matrix_log, tau)
from .flatten import FlatteningFunction, TimeReparam, build_delta0, build_time_reparam

DEFAULT_RADII = (0.3, 0.2, 0.1)
TAU_RADII = (0.5, 0.3, 0.1)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def compile_scalar(expr: str | Callable | None) -> Callable[[np.ndarray], np.ndarray] | None:
    """An expression in x1 (or a callable) as a vectorized scalar function."""
    if expr is None or callable(expr):
        return expr
    node = parse_expression(expr, dimension=1)
    f = compile_node(node, ["x1"], {})
    return lambda x: np.asarray(f([np.asarray(x, float)]), float) * np.ones_like(np.asarray(x, float))


def delta_from_g(g: Callable, zeta_max: float = 1.0, samples: int = 20_000) -> Callable[[np.ndarray], np.ndarray]:
    """delta(eps) = largest sampled radius r with max_{|zeta| <= r} |g| <= eps."""
    r = np.geomspace(1e-300, zeta_max, samples)
    with np.errstate(all="ignore"):
        vals = np.maximum(np.abs(g(r)), np.abs(g(-r)))
    if not np.all(np.isfinite(vals)):
        bad = r[~np.isfinite(vals)][0]
        raise ValueError(f"g is not finite near zeta = +-{bad:.3e}")
    running = np.maximum.accumulate(vals)

    def delta(eps):
        eps = np.asarray(eps, float)
        k = np.searchsorted(running, eps, side="right")
        return np.where(k > 0, r[np.maximum(k - 1, 0)], 0.0)

    return delta


# --------------------------------------------------------------------------
# flatness


def _directions(dim: int, count: int, seed: int = 0) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        a = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    v = stream(seed, "flatness.directions").normal(size=(count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def displacement_jacobian(gen: CenterGenerator, t: TimeReparam, z: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of F2 - id, i.e. DF2 - I.

    Differencing the displacement tau P phi1(tau P) z instead of F2 itself
    keeps the result accurate when DF2 - I is far below machine epsilon.
    """
    n = len(z)
    h = rel_step * float(np.linalg.norm(z))
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (tau(gen, t, z + e).displacement - tau(gen, t, z - e).displacement) / (2 * h)
    return J


GHAT_RADII = tuple(float(r) for r in np.round(np.geomspace(0.05, 0.9, 18), 6))
TINY = float(np.finfo(float).tiny)


def _envelope(g: Callable, rho: float) -> float:
    """Sampled max of |g| over 0 < |zeta| <= rho."""
    r = np.geomspace(1e-300, rho, 400)
    with np.errstate(all="ignore"):
        return float(np.max(np.maximum(np.abs(g(r)), np.abs(g(-r)))))


def ghat_profile(gen: CenterGenerator, t: TimeReparam, g: Callable, radii: Sequence[float] = GHAT_RADII) -> dict:
    """max |g(h(z))| / |z|^2 per radius (scalar center direction).

    Where h(z) underflows, |g(h(z))| is bounded by the envelope of |g| on
    |zeta| <= smallest normal double; such points are counted as
    ``enveloped``.
    """
    g = compile_scalar(g)
    env = _envelope(g, TINY)
    radii = sorted(float(r) for r in radii)
    rows = []
    for r in radii:
        vals, enveloped = [], 0
        for sgn in (1.0, -1.0):
            h = apply_h(gen, t, [sgn * r])
            if h.clamped:
                enveloped += 1
                vals.append(env)
            else:
                vals.append(float(abs(g(h.value)[0])))
        rows.append({"radius": r, "ratio": max(vals) / r**2, "enveloped": enveloped})
    r0 = None
    for row in rows:
        if row["ratio"] > 1.0:
            break
        r0 = row["radius"]
    rmin = radii[0]
    gp = float(g(apply_h(gen, t, [rmin]).value)[0])
    gm = float(g(apply_h(gen, t, [-rmin]).value)[0])
    return {"rows": rows, "r0": r0, "bounded": r0 is not None, "envelope_at_tiny": env,
            "dghat_at_0": (gp - gm) / (2 * rmin)}


def flatness_report(gen: CenterGenerator, t: TimeReparam, g: Callable | str | None = None,
                    radii: Sequence[float] = DEFAULT_RADII, directions: int = 8,
                    ghat_radii: Sequence[float] = GHAT_RADII) -> dict:
    radii = sorted((float(r) for r in radii), reverse=True)
    dirs = _directions(gen.dim, directions)
    rows = []
    for r in radii:
        gaps, taus = [], []
        for d in dirs:
            z = r * d
            gaps.append(float(np.linalg.norm(displacement_jacobian(gen, t, z), 2)))
            taus.append(tau(gen, t, z).tau)
        rows.append({"radius": r, "jac_gap": max(gaps), "tau_max": max(taus), "tau_min": min(taus)})
    gaps = [row["jac_gap"] for row in rows]
    out = {"radii": radii, "rows": rows, "jac_gap_decreasing": bool(all(a > b for a, b in zip(gaps, gaps[1:])))}
    if g is not None:
        if gen.dim != 1:
            raise ValueError("the tangency function g is supported for a scalar center direction only")
        out["ghat"] = ghat_profile(gen, t, g, sorted(set(ghat_radii) | set(radii)))
    return out


# --------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class TransformedSystem:
    """(y, zhat) -> (B y, F2(zhat)) near the fixed point."""

    B: np.ndarray
    gen: CenterGenerator
    t: TimeReparam

    def step(self, y, zhat):
        return self.B @ np.atleast_1d(np.asarray(y, float)), tau(self.gen, self.t, zhat).value

    def to_dict(self) -> dict:
        return {"B": self.B.tolist(), "power": self.gen.power, "P": self.gen.P.tolist(), "rho": self.t.rho,
                "work_radius": WORK_RADIUS}


def transversality_angle(gen: CenterGenerator, t: TimeReparam, g: Callable,
                         radii: Sequence[float] = GHAT_RADII) -> dict:
    """Angle between w^s = {zhat = 0} and the transformed w^u = {eta = ghat(zhat)}
    at sampled points, theta = atan(1 / |ghat'|). Points where h underflows
    carry no slope information and are only counted."""
    thetas, skipped = [], 0
    for r in radii:
        for sgn in (1.0, -1.0):
            hstep = 1e-6 * r
            z = sgn * (r - hstep)  # keep both stencil points inside the working ball
            lo, hi = apply_h(gen, t, [z - hstep]), apply_h(gen, t, [z + hstep])
            if lo.clamped or hi.clamped:
                skipped += 1
                continue
            slope = abs(float(g(hi.value)[0]) - float(g(lo.value)[0])) / (2 * hstep)
            thetas.append(math.atan2(1.0, slope))
    theta_min = min(thetas) if thetas else None
    return {"theta_min": theta_min, "theta": thetas, "skipped_underflow": skipped,
            "transverse": theta_min is not None and theta_min > 0}


def round_trip(gen: CenterGenerator, t: TimeReparam, count: int = 100, lo: float = 0.3, hi: float = 0.9,
               seed: int = 0) -> dict:
    rng = stream(seed, "tangency.roundtrip")
    worst, worst_s = 0.0, 0.0
    for _ in range(count):
        d = rng.normal(size=gen.dim)
        z = rng.uniform(lo, hi) * d / np.linalg.norm(d)
        inv = invert_h(gen, t, apply_h(gen, t, z).scaled)
        worst = max(worst, float(np.max(np.abs(inv.zhat - z))))
        worst_s = max(worst_s, inv.s_residual)
    return {"count": count, "annulus": [lo, hi], "max_error": worst, "max_s_residual": worst_s, "pass": worst <= 1e-9}


def quasitransverse_pipeline(
    B,
    C,
    g: str | Callable = "cbrt(x1)",
    delta: str | Callable | None = None,
    radii: Sequence[float] = DEFAULT_RADII,
    rho: float = 1.0,
    zeta_max: float = 1.0,
    roundtrip_count: int = 100,
    seed: int = 0,
) -> tuple[TransformedSystem, dict]:
    """Assemble delta0, t, P and h for the local normal form diag(B, C) and
    the tangency w^u = {eta = g(zeta)}; verify the transformed crossing.

    ``delta`` defaults to the modulus read off g; pass an expression in x1
    to override it.
    """
    stage = "normal-form"
    try:
        B = np.atleast_2d(np.asarray(B, float))
        C = np.atleast_2d(np.asarray(C, float))
        if np.linalg.norm(B, 2) >= 1:
            raise ValueError(f"|B| = {np.linalg.norm(B, 2):.6g} must be < 1")
        stage = "modulus"
        gf = compile_scalar(g)
        df = compile_scalar(delta) if delta is not None else delta_from_g(gf, zeta_max)
        stage = "flattening"
        flat: FlatteningFunction = build_delta0(df, rho)
        tr = build_time_reparam(flat)
        stage = "matrix-log"
        gen = real_matrix_log(C)
        stage = "conjugacy"
        taus = [tau(gen, tr, _radial(gen.dim, r)).tau for r in TAU_RADII]
        z6 = _radial(gen.dim, 0.6)
        two_path = float(np.max(np.abs(tau(gen, tr, z6).value - composed_center_map(gen, tr, z6))))
        stage = "flatness"
        flatness = flatness_report(gen, tr, gf if gen.dim == 1 else None, radii)
        ghat = flatness.get("ghat")
        stage = "round-trip"
        rt = round_trip(gen, tr, roundtrip_count, seed=seed)
        stage = "transversality"
        trans = transversality_angle(gen, tr, gf) if gen.dim == 1 else None
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage label
        raise PipelineError(stage, exc) from exc

    xs = np.geomspace(1e-3, 0.5, 12)
    checks = {
        "a_delta0": flat.check(),
        "t": tr.check(),
        "b_tau": {"radii": list(TAU_RADII), "tau": taus,
                  "pass": all(0 < x < 1 for x in taus) and all(a > b for a, b in zip(taus, taus[1:]))},
        "c_flatness": {"jac_gap": [r["jac_gap"] for r in flatness["rows"]], "pass": flatness["jac_gap_decreasing"]},
        "d_ghat": {"r0": ghat["r0"] if ghat else None, "pass": bool(ghat and ghat["bounded"])},
        "e_roundtrip": rt,
        "two_path_gap": two_path,
    }
    checks["pass"] = all(checks[k]["pass"] for k in ("a_delta0", "b_tau", "c_flatness", "d_ghat", "e_roundtrip"))
    report = {
        "generator": gen.to_dict(),
        "tables": {
            "xi": xs.tolist(),
            "delta": flat.delta(xs).tolist(),
            "log_delta0": flat.log_delta0(xs).tolist(),
            "log_t": tr.log_t(xs).tolist(),
        },
        "xi_min": tr.xi_min,
        "flatness": flatness,
        "transversality": trans,
        "checks": checks,
        "handle": None,
    }
    system = TransformedSystem(B, gen, tr)
    report["handle"] = system.to_dict()
    report["pass"] = checks["pass"] and (trans is None or trans["transverse"])
    return system, report


def _radial(dim: int, r: float) -> np.ndarray:
    z = np.zeros(dim)
    z[0] = r
    return z
