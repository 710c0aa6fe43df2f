"""Lyapunov pairs (W, V), the sets P/Q/T/R they define, and sampled
verification of the crossing conditions C1-C9, condition G and the
smallness inequalities for remainders of the polynomial model map."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .expr import compile_node, parse_expression
from .io import write_csv, write_json
from .maps import Box, MapSystem, eval_forward, eval_inverse
from .seeding import stream

__all__ = [
    "LyapunovPair",
    "RegionSpec",
    "ConditionResult",
    "ConditionReport",
    "NotCertifiableError",
    "in_P",
    "in_Q",
    "in_T",
    "in_R",
    "check_C1",
    "certify_C3_C4_C9",
    "check_C5_C6_C7_C8",
    "check_condition_G",
    "z_form",
    "check_smallness",
    "condition_suite",
]

EQ_RTOL = 1e-12


class NotCertifiableError(ValueError):
    pass


@dataclass(frozen=True)
class LyapunovPair:
    """W measures the stable displacement, V the center-unstable one.

    ``kind="coordinate"``: W = max_{i in S} |q_i - p_i|, V = max_{i in U} |q_i - p_i|.
    ``kind="user"``: W and V are expressions in q1..qn, p1..pn.
    """

    dimension: int
    kind: str = "coordinate"
    stable: tuple[int, ...] = ()
    unstable: tuple[int, ...] = ()
    w_source: str | None = None
    v_source: str | None = None
    _fns: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def coordinate(cls, dimension: int, stable_split: int) -> "LyapunovPair":
        if not 0 < stable_split < dimension:
            raise ValueError("coordinate pair needs 0 < stable_split < dimension")
        return cls(dimension, "coordinate", tuple(range(stable_split)), tuple(range(stable_split, dimension)))

    @classmethod
    def for_map(cls, sys: MapSystem) -> "LyapunovPair":
        return cls.coordinate(sys.dimension, sys.stable_split)

    @classmethod
    def user(cls, dimension: int, w: str, v: str) -> "LyapunovPair":
        names = [f"q{i + 1}" for i in range(dimension)] + [f"p{i + 1}" for i in range(dimension)]
        dummy = dict.fromkeys(names, 0.0)
        pair = cls(dimension, "user", w_source=w, v_source=v)
        for key, src in (("W", w), ("V", v)):
            node = parse_expression(src, 0, dummy)
            pair._fns[key] = compile_node(node, names, {})
        return pair

    def _eval(self, key: str, q, p) -> np.ndarray:
        q = np.asarray(q, float)
        p = np.asarray(p, float)
        if self.kind == "coordinate":
            idx = self.stable if key == "W" else self.unstable
            return np.max(np.abs(q[..., idx] - p[..., idx]), axis=-1)
        q, p = np.broadcast_arrays(q, p)
        cols = [q[..., i] for i in range(self.dimension)] + [p[..., i] for i in range(self.dimension)]
        return np.broadcast_to(np.asarray(self._fns[key](cols), float), q.shape[:-1])

    def W(self, q, p) -> np.ndarray:
        return self._eval("W", q, p)

    def V(self, q, p) -> np.ndarray:
        return self._eval("V", q, p)

    @property
    def structural(self) -> bool:
        return self.kind == "coordinate" and len(self.unstable) == 1


@dataclass(frozen=True)
class RegionSpec:
    delta: float
    K: float = 2.0
    calN: Box = field(default_factory=lambda: Box.cube(0.2, 2))
    alpha: float = 1.0
    delta1: float | None = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        if not self.K > 1:
            raise ValueError("K must be > 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.delta1 is None:
            object.__setattr__(self, "delta1", 0.05 * self.calN.diameter)

    @property
    def Delta(self) -> float:
        return self.K * self.delta


@dataclass
class ConditionResult:
    name: str
    passed: bool
    margin: float
    witness: dict[str, list[float]]
    samples: int
    seed: int | None = None
    delta: float | None = None
    kind: str = "sampled"
    note: str = ""
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pass": bool(self.passed),
            "margin": float(self.margin),
            "witness": self.witness,
            "samples": int(self.samples),
            "seed": self.seed,
            "delta": self.delta,
            "kind": self.kind,
            "note": self.note,
            "extra": self.extra,
        }


@dataclass
class ConditionReport:
    records: list[ConditionResult] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def get(self, name: str, delta: float | None = None) -> ConditionResult:
        for r in self.records:
            if r.name == name and (delta is None or r.delta == delta):
                return r
        raise KeyError(name)

    def extend(self, other: "ConditionReport") -> "ConditionReport":
        self.records.extend(other.records)
        return self

    def to_dict(self) -> dict:
        return {"meta": self.meta, "pass": self.passed, "conditions": [r.to_dict() for r in self.records]}

    def write_json(self, path: str | Path) -> Path:
        return write_json(path, self.to_dict())

    def csv_rows(self) -> list[list]:
        return [[r.name, r.delta, r.passed, r.margin, r.samples, r.seed, r.kind] for r in self.records]

    def write_csv(self, path: str | Path) -> Path:
        return write_csv(path, ["name", "delta", "pass", "margin", "samples", "seed", "kind"], self.csv_rows())


def _result(name, margins, ps, qs, seed, delta, **kw) -> ConditionResult:
    margins = np.asarray(margins, float)
    i = int(np.argmin(margins))
    ps = np.asarray(ps, float)
    witness = {"p": (ps if ps.ndim == 1 else ps[i]).tolist(), "q": np.asarray(qs)[i].tolist()}
    m = float(margins[i])
    return ConditionResult(name, m > 0, m, witness, int(margins.size), seed, delta, **kw)


# --------------------------------------------------------------------------
# set predicates


def _tol(a: float) -> float:
    return EQ_RTOL * a


def in_P(pair: LyapunovPair, a: float, p, q) -> np.ndarray | bool:
    w, v = pair.W(q, p), pair.V(q, p)
    return _bool((w <= a) & (v <= a))


def in_Q(pair: LyapunovPair, a: float, p, q) -> np.ndarray | bool:
    v = pair.V(q, p)
    return _bool((pair.W(q, p) <= a) & (np.abs(v - a) <= _tol(a)))


def in_T(pair: LyapunovPair, a: float, p, q) -> np.ndarray | bool:
    v = pair.V(q, p)
    return _bool((pair.W(q, p) <= a) & (v <= _tol(a)))


def in_R(pair: LyapunovPair, b: float, a: float, p, q) -> np.ndarray | bool:
    w, v = pair.W(q, p), pair.V(q, p)
    return _bool((w >= a) & (w <= b) & (v <= a))


def _bool(x):
    x = np.asarray(x)
    return bool(x) if x.ndim == 0 else x


# --------------------------------------------------------------------------
# face-parametrized samplers for coordinate pairs (offsets q - p)


def _require_coordinate(pair: LyapunovPair, what: str) -> None:
    if pair.kind != "coordinate":
        raise ValueError(f"{what} samples sets by face parametrization and needs a coordinate-split pair")


def _box_offsets(rng, pair: LyapunovPair, count: int, ws: float, vs: float, *, faces: bool = True) -> np.ndarray:
    """Offsets in {|v_S| <= ws, |v_U| <= vs}: a third interior, the rest on
    faces, plus all corners."""
    n = pair.dimension
    half = np.zeros(n)
    half[list(pair.stable)] = ws
    half[list(pair.unstable)] = vs
    off = rng.uniform(-1.0, 1.0, (count, n)) * half
    if faces and count:
        k = count // 3
        j = rng.integers(0, n, count - k)
        sign = rng.choice([-1.0, 1.0], count - k)
        rows = np.arange(k, count)
        off[rows, j] = sign * half[j]
        corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * n, indexing="ij")).reshape(n, -1).T * half
        off = np.vstack([off, corners])
    return off


def _slab_offsets(rng, idx_fixed: Sequence[int], idx_free: Sequence[int], n: int, count: int, lo: float, hi: float, free_half: float):
    """Offsets with max_{idx_fixed}|v_i| in [lo, hi] and |v_free| <= free_half,
    with a quarter pinned at |v| = lo and a quarter at the free faces."""
    off = np.zeros((count, n))
    free = list(idx_free)
    fixed = list(idx_fixed)
    off[:, free] = rng.uniform(-free_half, free_half, (count, len(free)))
    mag = rng.uniform(lo, hi, count)
    mag[: count // 4] = lo
    lead = rng.choice(fixed, count)
    if len(fixed) > 1:
        off[:, fixed] = rng.uniform(-1, 1, (count, len(fixed))) * mag[:, None]
    off[np.arange(count), lead] = rng.choice([-1.0, 1.0], count) * mag
    q = count // 4
    if free and q:
        j = rng.choice(free, q)
        off[np.arange(count - q, count), j] = rng.choice([-1.0, 1.0], q) * free_half
    return off


def _sample_base_points(rng, pair: LyapunovPair, calN: Box, count: int) -> np.ndarray:
    """Uniform in calN plus strata with the stable block or the unstable
    block pinned to zero (the degenerate branches of the model analysis)."""
    pts = calN.sample(rng, count)
    m = max(count // 10, 1)
    s_idx, u_idx = list(pair.stable), list(pair.unstable)
    zero = np.zeros(calN.dimension)
    if calN.contains(zero):
        pts[:m][:, s_idx] = 0.0
        pts[m : 2 * m][:, u_idx] = 0.0
        pts[2 * m] = 0.0
    return pts


# --------------------------------------------------------------------------
# C1


@dataclass
class C1Result:
    delta0: float
    epsilon: float
    record: ConditionResult


def check_C1(
    pair: LyapunovPair,
    region: RegionSpec | Box,
    epsilon: float,
    samples: int = 2000,
    seed: int = 0,
    delta: float | None = None,
) -> C1Result:
    """Largest sampled delta0 with P(delta, p) inside the open epsilon-ball
    for every sampled p in calN and every delta < delta0."""
    calN = region.calN if isinstance(region, RegionSpec) else region
    if delta is None and isinstance(region, RegionSpec):
        delta = region.delta
    rng = stream(seed, "C1")
    ps = _sample_base_points(rng, pair, calN, max(samples // 50, 4))
    if pair.kind == "coordinate":
        shape = _box_offsets(rng, pair, samples, 1.0, 1.0)
        probe = None
    else:
        shape = None
        probe = rng.uniform(-1.0, 1.0, (samples, pair.dimension))

    def worst(d: float) -> tuple[float, np.ndarray, np.ndarray]:
        if shape is not None:
            dist = np.linalg.norm(shape * d, axis=-1)
            j = int(np.argmax(dist))
            return float(dist[j]), ps[0], ps[0] + shape[j] * d
        # user pair: rejection sample q in a cube of half-width 4*max(d, eps)
        r = 4.0 * max(d, epsilon)
        best, bp, bq = 0.0, ps[0], ps[0]
        for p in ps:
            q = p + probe * r
            inside = in_P(pair, d, p, q)
            if np.any(inside):
                dist = np.linalg.norm(q[inside] - p, axis=-1)
                j = int(np.argmax(dist))
                if dist[j] > best:
                    best, bp, bq = float(dist[j]), p, q[inside][j]
        return best, bp, bq

    if epsilon <= 0:
        rec = ConditionResult("C1", False, 0.0, {"p": ps[0].tolist(), "q": ps[0].tolist()}, samples, seed, delta,
                              note="epsilon <= 0: empty ball", extra={"epsilon": epsilon, "delta0": 0.0})
        return C1Result(0.0, float(epsilon), rec)
    lo, hi = 0.0, float(epsilon)
    while worst(hi)[0] < epsilon and hi < 1e6:
        lo, hi = hi, 2.0 * hi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if worst(mid)[0] < epsilon:
            lo = mid
        else:
            hi = mid
    delta0 = lo
    ref = delta if delta is not None else delta0
    w, wp, wq = worst(ref)
    margin = delta0 - delta if delta is not None else delta0
    rec = ConditionResult(
        "C1", margin > 0, float(margin), {"p": np.asarray(wp).tolist(), "q": np.asarray(wq).tolist()},
        samples * len(ps), seed, delta, note="margin = delta0(epsilon) - delta",
        extra={"epsilon": float(epsilon), "delta0": float(delta0), "max_distance": w},
    )
    return C1Result(float(delta0), float(epsilon), rec)


# --------------------------------------------------------------------------
# C3, C4, C9


def certify_C3_C4_C9(pair: LyapunovPair, region: RegionSpec) -> ConditionReport:
    """Structural certificate for coordinate pairs with one unstable index.

    P is a product box, Q its two V = delta faces, T the V = 0 slice.
    C3: a box is connected and Q is not, so no retraction exists.
    C4: scaling the unstable offset out to |v_u| = delta retracts P minus T onto Q.
    C9: clamping the stable offsets to delta leaves V unchanged, so alpha = 1.
    """
    if not pair.structural:
        raise NotCertifiableError("not certifiable structurally; supply sampled retraction evidence")
    d = region.delta
    w = {"p": [], "q": []}
    notes = {
        "C3": "Q(delta,p) = two disjoint faces; P(delta,p) connected",
        "C4": "radial retraction in the unstable coordinate of P minus T onto Q",
        "C9": "retraction clamping stable offsets to delta; V preserved so alpha = 1",
    }
    recs = [
        ConditionResult(name, True, 1.0, w, 0, None, d, kind="structural", note=note,
                        extra={"alpha": 1.0} if name == "C9" else {})
        for name, note in notes.items()
    ]
    return ConditionReport(recs, {"alpha": 1.0})


# --------------------------------------------------------------------------
# C5 - C8


def check_C5_C6_C7_C8(
    sys: MapSystem,
    pair: LyapunovPair,
    region: RegionSpec,
    samples_per_set: int = 10_000,
    rng_seed: int = 0,
) -> ConditionReport:
    """Sampled margins; a condition passes iff its minimum margin is > 0.

    C5   delta - max(W, V)(F q, F p),           q in T(delta, p)
    C6   Delta - max(W, V) of both images,      q in P(delta, p) and P(delta, F p)
    C7   delta - V(F q, F p),                   q in T(Delta, p)
    C8.1 V(F q, F p) - V(q, p),                 q in P(Delta, p), V >= delta
    C8.2 W(F^-1 q, p) - W(q, F p),              q in P(Delta, F p), W >= delta
    """
    if samples_per_set < 100:
        raise ValueError("samples_per_set must be >= 100")
    _require_coordinate(pair, "check_C5_C6_C7_C8")
    n = pair.dimension
    d, D = region.delta, region.Delta
    S, U = pair.stable, pair.unstable
    W, V = pair.W, pair.V
    N = samples_per_set
    recs: list[ConditionResult] = []

    def base(label):
        rng = stream(rng_seed, label)
        p = _sample_base_points(rng, pair, region.calN, N)
        return rng, p

    # C5: T(delta, p)
    rng, p = base("C5")
    off = _box_offsets(rng, pair, N, d, 0.0)[:N]
    q = p + off
    Fq, Fp = eval_forward(sys, q), eval_forward(sys, p)
    recs.append(_result("C5", d - np.maximum(W(Fq, Fp), V(Fq, Fp)), p, q, rng_seed, d))

    # C6 forward and inverse
    rng, p = base("C6")
    off = _box_offsets(rng, pair, N, d, d)[:N]
    q = p + off
    Fq, Fp = eval_forward(sys, q), eval_forward(sys, p)
    m_fwd = D - np.maximum(W(Fq, Fp), V(Fq, Fp))
    q2 = Fp + off
    Fi = eval_inverse(sys, q2, guess=p + off)
    m_inv = D - np.maximum(W(Fi, p), V(Fi, p))
    both = np.minimum(m_fwd, m_inv)
    r = _result("C6", both, p, np.where((m_fwd <= m_inv)[:, None], q, q2), rng_seed, d)
    r.extra = {"forward_margin": float(m_fwd.min()), "inverse_margin": float(m_inv.min()), "Delta": D}
    recs.append(r)

    # C7 on T(Delta, p); equivalent to F^-1(Q(delta, F p)) missing T(Delta, p)
    rng, p = base("C7")
    off = _box_offsets(rng, pair, N, D, 0.0)[:N]
    q = p + off
    Fq, Fp = eval_forward(sys, q), eval_forward(sys, p)
    vv = V(Fq, Fp)
    r = _result("C7", d - vv, p, q, rng_seed, d)
    r.extra = {"max_V": float(vv.max()), "half_delta": 0.5 * d}
    r.note = "q in T(Delta,p) with V(Fq,Fp) < delta cannot lie in F^-1(Q(delta,Fp))"
    recs.append(r)

    # C8.1 on the slab {q in P(Delta, p): V >= delta}
    rng, p = base("C8.1")
    off = _slab_offsets(rng, U, S, n, N, d, D, D)
    q = p + off
    Fq, Fp = eval_forward(sys, q), eval_forward(sys, p)
    recs.append(_result("C8.1", V(Fq, Fp) - V(q, p), p, q, rng_seed, d))

    # C8.2 on {q in P(Delta, F p): W >= delta}
    rng, p = base("C8.2")
    off = _slab_offsets(rng, S, U, n, N, d, D, D)
    Fp = eval_forward(sys, p)
    q = Fp + off
    Fi = eval_inverse(sys, q, guess=p + off)
    recs.append(_result("C8.2", W(Fi, p) - W(q, Fp), p, q, rng_seed, d))

    return ConditionReport(recs, {"delta": d, "Delta": D, "K": region.K, "samples_per_set": N, "seed": rng_seed})


# --------------------------------------------------------------------------
# condition G


def check_condition_G(
    sys: MapSystem,
    pair: LyapunovPair,
    delta: float,
    p,
    p_prime,
    samples: int = 10_000,
    delta1: float | None = None,
    seed: int = 0,
) -> ConditionReport:
    """Sampled check of F(P) meeting the boundary of P' only in Q' (4.2) and
    F(Q) missing P' (4.3), with P = P(delta, p), P' = P(delta, p').

    (4.2) uses the sufficient margin min(delta - W(Fq, p')) over sampled
    q in P with V(Fq, p') < delta: such image points stay off the W-faces.
    (4.3) margin is min over q in Q of max(W, V)(Fq, p') - delta.
    """
    if not delta > 0:
        raise ValueError("condition G needs delta > 0")
    if delta1 is not None and not delta < delta1:
        raise ValueError(f"condition G needs delta < delta1 = {delta1}")
    _require_coordinate(pair, "check_condition_G")
    p = np.asarray(p, float)
    pp = np.asarray(p_prime, float)
    n = pair.dimension
    W, V = pair.W, pair.V
    recs = []

    rng = stream(seed, "G.4.2")
    q = p + _box_offsets(rng, pair, samples, delta, delta)
    Fq = eval_forward(sys, q)
    v = V(Fq, pp)
    inside = v < delta * (1 - EQ_RTOL)
    if inside.any():
        r = _result("G.4.2", delta - W(Fq[inside], pp), p, q[inside], seed, delta)
    else:
        r = ConditionResult("G.4.2", True, float(delta), {"p": p.tolist(), "q": q[0].tolist()}, len(q), seed, delta,
                            note="no image point with V < delta")
    r.samples = len(q)
    recs.append(r)

    rng = stream(seed, "G.4.3")
    q = p + _slab_offsets(rng, pair.unstable, pair.stable, n, samples, delta, delta, delta)
    Fq = eval_forward(sys, q)
    recs.append(_result("G.4.3", np.maximum(W(Fq, pp), V(Fq, pp)) - delta, p, q, seed, delta))

    status = "certified" if pair.structural else "unverified"
    recs.append(ConditionResult("G.retraction", pair.structural, 1.0 if pair.structural else 0.0,
                                {"p": p.tolist(), "q": []}, 0, seed, delta, kind="structural",
                                note=f"retraction clause {status}"))
    return ConditionReport(recs, {"delta": delta, "p": p.tolist(), "p_prime": pp.tolist(), "retraction": status})


# --------------------------------------------------------------------------
# Z forms and smallness


def z_form(k: int, z, v):
    """Z_{2k}(z, v) with v * Z_{2k} = (z + v)^{2k+1} - z^{2k+1}."""
    if k < 0:
        raise ValueError("k must be >= 0")
    z = np.asarray(z, float)
    v = np.asarray(v, float)
    out = np.zeros(np.broadcast(z, v).shape)
    # Horner in v: sum_j binom(2k+1, j+1) z^(2k-j) v^j
    for j in range(2 * k, -1, -1):
        out = out * v + comb(2 * k + 1, j + 1) * z ** (2 * k - j)
    return out if out.ndim else float(out)


def _component(sys: MapSystem, pts: np.ndarray, i: int) -> np.ndarray:
    return eval_forward(sys, pts)[..., i]


def check_smallness(
    remainder: MapSystem,
    region: RegionSpec,
    epsilon: float,
    m: int = 3,
    n: int = 3,
    inverse_remainder: MapSystem | None = None,
    samples: int = 10_000,
    seed: int = 0,
) -> ConditionReport:
    """Worst margins (rhs - lhs) of the smallness inequalities for the
    remainder (X, Y) of F(x, y) = (x - x^m + X, y + y^n + Y), over sampled
    p in calN and offsets with 0 < |v_s|, |v_u| <= K delta1.

    Records: "5.1" and "5.2" (Lipschitz bounds), "5.3a" (p_s != 0),
    "5.3b" (p_s = 0), "5.4" (p_u != 0), "5.5" (p_u = 0), "order"
    (vanishing order at 0), and "inv-5.1"/"inv-5.2" for (Xi, H).
    """
    if remainder.dimension != 2:
        raise ValueError("smallness conditions are stated for planar remainders")
    K = region.K
    r = K * region.delta1
    calN = region.calN
    recs = []
    rng = stream(seed, "smallness")
    p = calN.sample(rng, samples)
    vs = rng.uniform(-r, r, samples)
    vu = rng.uniform(-r, r, samples)
    vs[vs == 0] = r
    vu[vu == 0] = r
    v = np.stack([vs, vu], axis=-1)
    q = p + v
    lip = epsilon * (np.abs(vs) + np.abs(vu))

    def rec(name, margins, pts, qs, note=""):
        res = _result(name, margins, pts, qs, seed, region.delta)
        res.note = note
        recs.append(res)

    dX = np.abs(_component(remainder, q, 0) - _component(remainder, p, 0))
    dY = np.abs(_component(remainder, q, 1) - _component(remainder, p, 1))
    rec("5.1", lip - dX, p, q, "|X(p+v)-X(p)| <= eps(|v_s|+|v_u|)")
    rec("5.2", lip - dY, p, q, "|Y(p+v)-Y(p)| <= eps(|v_s|+|v_u|)")

    nz = p[:, 0] != 0
    q_s = np.stack([p[:, 0] + vs, p[:, 1]], axis=-1)
    lhs = np.abs(_component(remainder, q_s, 0) - _component(remainder, p, 0))
    rhs = (m - 1) * p[:, 0] ** (m - 1) * np.abs(vs)
    rec("5.3a", (rhs - lhs)[nz], p[nz], q_s[nz], "|X(p_s+v_s,p_u)-X(p)| <= (m-1) p_s^(m-1) |v_s|, p_s != 0")

    p0 = np.stack([np.zeros(samples), p[:, 1]], axis=-1)
    q0 = np.stack([vs, p[:, 1]], axis=-1)
    lhs = np.abs(_component(remainder, q0, 0) - _component(remainder, p0, 0))
    rec("5.3b", 0.5 * np.abs(vs) ** m - lhs, p0, q0, "|X(v_s,p_u)-X(0,p_u)| <= |v_s|^m / 2")

    nz = p[:, 1] != 0
    rhs = (n - 1) / (K + 1) * p[:, 1] ** (n - 1) * (np.abs(vu) + np.abs(vs))
    rec("5.4", (rhs - dY)[nz], p[nz], q[nz], "(n-1)/(K+1) p_u^(n-1) weighted bound, p_u != 0")

    p0 = np.stack([p[:, 0], np.zeros(samples)], axis=-1)
    q0 = np.stack([p[:, 0] + vs, vu], axis=-1)
    lhs = np.abs(_component(remainder, q0, 1) - _component(remainder, p0, 1))
    rec("5.5", 0.5 * np.abs(vu) ** n - lhs, p0, q0, "|Y(p_s+v_s,v_u)-Y(p_s,0)| <= |v_u|^n / 2")

    # vanishing order: |X(r u)| / r^m and |Y(r u)| / r^n shrink as r -> 0
    ang = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    ratios = []
    for rr in (1e-2, 1e-3):
        vals = np.abs(eval_forward(remainder, rr * dirs))
        ratios.append(max(vals[:, 0].max() / rr**m, vals[:, 1].max() / rr**n))
    ok = bool(ratios[1] <= 0.5 * ratios[0] or ratios[1] <= 1e-9)
    recs.append(ConditionResult("order", ok, float(ratios[0] - ratios[1]) if ratios[0] > 1e-9 else 1.0,
                                {"p": [0.0, 0.0], "q": []}, 128, seed, region.delta,
                                note="remainder / r^order decreases as r -> 0",
                                extra={"ratio_1e-2": ratios[0], "ratio_1e-3": ratios[1]}))

    if inverse_remainder is not None:
        dXi = np.abs(_component(inverse_remainder, q, 0) - _component(inverse_remainder, p, 0))
        dH = np.abs(_component(inverse_remainder, q, 1) - _component(inverse_remainder, p, 1))
        rec("inv-5.1", lip - dXi, p, q, "Lipschitz bound for Xi")
        rec("inv-5.2", lip - dH, p, q, "Lipschitz bound for H")
    return ConditionReport(recs, {"epsilon": epsilon, "m": m, "n": n, "K": K, "delta1": region.delta1})


# --------------------------------------------------------------------------


def condition_suite(
    sys: MapSystem,
    pair: LyapunovPair,
    regions: Sequence[RegionSpec],
    epsilon: float = 0.1,
    samples_per_set: int = 10_000,
    seed: int = 0,
) -> ConditionReport:
    """C1, structural C3/C4/C9 and sampled C5-C8 for every region."""
    report = ConditionReport(meta={"map": sys.name, "seed": seed, "epsilon": epsilon})
    for reg in regions:
        report.records.append(check_C1(pair, reg, epsilon, samples=max(samples_per_set // 5, 100), seed=seed).record)
        try:
            report.extend(certify_C3_C4_C9(pair, reg))
        except NotCertifiableError as exc:
            for name in ("C3", "C4", "C9"):
                report.records.append(ConditionResult(name, False, 0.0, {"p": [], "q": []}, 0, None, reg.delta,
                                                      kind="structural", note=str(exc)))
        report.extend(check_C5_C6_C7_C8(sys, pair, reg, samples_per_set, seed))
    return report
