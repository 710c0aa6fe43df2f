"""Maps of R^n defined by expression lists: evaluation, Jacobians, inversion,
and the sampled C^1 distance between two maps on a box."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from .expr import ExpressionError, Node, compile_node, derivative, parse_expression_list, to_source

__all__ = [
    "DomainError",
    "InversionError",
    "Box",
    "MapSystem",
    "parse_map",
    "builtin_map",
    "load_map_file",
    "map_from_config",
    "eval_forward",
    "eval_jacobian",
    "eval_inverse",
    "c1_distance",
    "operator_norm",
    "MAX_DIMENSION",
]

MAX_DIMENSION = 4
FD_STEP = np.cbrt(np.finfo(float).eps)


class DomainError(ArithmeticError):
    """A public operation produced a non-finite value or left its domain."""


class InversionError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box ``prod [lower_i, upper_i]``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise ValueError("box bounds must be nonempty and of equal length")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"box has lower > upper: {lo} {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_intervals(cls, intervals: Sequence[Sequence[float]]) -> "Box":
        return cls(tuple(i[0] for i in intervals), tuple(i[1] for i in intervals))

    @classmethod
    def cube(cls, half_width: float, dimension: int, center: Sequence[float] | None = None) -> "Box":
        c = np.zeros(dimension) if center is None else np.asarray(center, float)
        return cls(tuple(c - half_width), tuple(c + half_width))

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.upper)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def contains(self, points, tol: float = 0.0) -> np.ndarray | bool:
        p = np.asarray(points, float)
        inside = np.all((p >= self.lo - tol) & (p <= self.hi + tol), axis=-1)
        return bool(inside) if inside.ndim == 0 else inside

    def inflate(self, margin: float) -> "Box":
        return Box(tuple(self.lo - margin), tuple(self.hi + margin))

    def grid(self, per_axis: int) -> np.ndarray:
        axes = [np.linspace(a, b, per_axis) for a, b in zip(self.lower, self.upper)]
        return np.array(list(itertools.product(*axes)))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(count, self.dimension))

    def to_list(self) -> list[list[float]]:
        return [[a, b] for a, b in zip(self.lower, self.upper)]


@dataclass(frozen=True)
class MapSystem:
    """A map F: R^n -> R^n given by one expression per coordinate.

    ``stable_split`` is the number ``s`` of leading coordinates forming the
    stable block; the remaining ``u = n - s`` are center-unstable.
    """

    dimension: int
    forward: tuple[str, ...]
    inverse: tuple[str, ...] | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    stable_split: int = 1
    domain: Box | None = None
    name: str = "user"
    _fwd_nodes: tuple[Node, ...] = field(default=(), repr=False, compare=False)
    _inv_nodes: tuple[Node, ...] | None = field(default=None, repr=False, compare=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(f"x{i + 1}" for i in range(self.dimension))

    @property
    def s(self) -> int:
        return self.stable_split

    @property
    def u(self) -> int:
        return self.dimension - self.stable_split

    @property
    def has_inverse(self) -> bool:
        return self.inverse is not None

    def _compiled(self, key: str, nodes: Sequence[Node]):
        if key not in self._cache:
            self._cache[key] = [compile_node(n, self.variables, self.params) for n in nodes]
        return self._cache[key]

    def _jac_nodes(self) -> list[list[Node]]:
        if "jac_nodes" not in self._cache:
            self._cache["jac_nodes"] = [[derivative(f, v) for v in self.variables] for f in self._fwd_nodes]
        return self._cache["jac_nodes"]

    def forward_source(self) -> str:
        return ", ".join(to_source(n) for n in self._fwd_nodes)

    def with_params(self, **params: float) -> "MapSystem":
        merged = {**self.params, **params}
        return parse_map(
            ", ".join(self.forward),
            merged,
            inverse=None if self.inverse is None else ", ".join(self.inverse),
            stable_split=self.stable_split,
            domain=self.domain,
            name=self.name,
        )

    def to_config(self) -> dict:
        return {
            "dimension": self.dimension,
            "forward": list(self.forward),
            "inverse": None if self.inverse is None else list(self.inverse),
            "params": dict(self.params),
            "stable_split": self.stable_split,
            "domain": None if self.domain is None else self.domain.to_list(),
        }


def parse_map(
    source: str,
    params: Mapping[str, float] | None = None,
    *,
    inverse: str | None = None,
    stable_split: int | None = None,
    domain: Box | Sequence[Sequence[float]] | None = None,
    name: str = "user",
) -> MapSystem:
    """Parse ``"expr1, expr2, ..."`` into a :class:`MapSystem` of dimension
    equal to the number of expressions."""
    params = {k: float(v) for k, v in (params or {}).items()}
    probe = parse_expression_list(source, None, params)
    n = len(probe)
    if not 1 <= n <= MAX_DIMENSION:
        raise ExpressionError(f"dimension must be between 1 and {MAX_DIMENSION}, got {n}")
    fwd = parse_expression_list(source, n, params)
    inv_nodes = None
    if inverse is not None:
        inv_nodes = parse_expression_list(inverse, n, params)
        if len(inv_nodes) != n:
            raise ExpressionError(f"inverse has {len(inv_nodes)} components, expected {n}")
    if stable_split is None:
        stable_split = max(n - 1, 0) if n > 1 else 0
    if not 0 <= stable_split <= n:
        raise ValueError(f"stable_split must lie in [0, {n}]")
    if domain is not None and not isinstance(domain, Box):
        domain = Box.from_intervals(domain)
    if domain is not None and domain.dimension != n:
        raise ValueError("domain box dimension does not match the map")
    return MapSystem(
        dimension=n,
        forward=tuple(to_source(f) for f in fwd),
        inverse=None if inv_nodes is None else tuple(to_source(f) for f in inv_nodes),
        params=params,
        stable_split=stable_split,
        domain=domain,
        name=name,
        _fwd_nodes=tuple(fwd),
        _inv_nodes=None if inv_nodes is None else tuple(inv_nodes),
    )


def builtin_map(name: str, **params: float) -> MapSystem:
    """Built-in maps.

    ``model``     (x1 - x1^m, x2 + x2^n), m = n = 3 by default, on [-0.2, 0.2]^2
    ``linear``    diag(a, b), a = 0.5, b = 2 by default
    ``identity``  the identity of R^dim (dim = 2 by default)
    """
    if name == "model":
        p = {"m": 3.0, "n": 3.0, **params}
        for k in ("m", "n"):
            if p[k] != int(p[k]) or int(p[k]) % 2 == 0 or p[k] < 3:
                raise ValueError(f"model exponent {k} must be an odd integer > 1")
        return parse_map("x1 - x1^m, x2 + x2^n", p, stable_split=1, domain=Box.cube(0.2, 2), name="model")
    if name == "linear":
        p = {"a": 0.5, "b": 2.0, **params}
        return parse_map(
            "a*x1, b*x2", p, inverse="x1/a, x2/b", stable_split=1, domain=Box.cube(1.0, 2), name="linear"
        )
    if name == "identity":
        dim = int(params.pop("dim", 2))
        src = ", ".join(f"x{i + 1}" for i in range(dim))
        return parse_map(src, params, inverse=src, stable_split=max(dim - 1, 0), domain=Box.cube(1.0, dim), name="identity")
    raise ValueError(f"unknown builtin map {name!r}")


def map_from_config(cfg: Mapping) -> MapSystem:
    """Build a map from the keys of a map definition file."""
    known = {"dimension", "forward", "inverse", "params", "stable_split", "domain", "builtin", "name"}
    unknown = set(cfg) - known
    if unknown:
        raise ValueError(f"unknown map file key(s): {', '.join(sorted(unknown))}")
    params = dict(cfg.get("params") or {})
    if "builtin" in cfg:
        sys = builtin_map(cfg["builtin"], **params)
        if cfg.get("domain") is not None:
            sys = parse_map(", ".join(sys.forward), sys.params, inverse=None if sys.inverse is None else ", ".join(sys.inverse),
                            stable_split=sys.stable_split, domain=cfg["domain"], name=sys.name)
        return sys
    fwd = cfg["forward"]
    inv = cfg.get("inverse")
    if not isinstance(fwd, str):
        fwd = ", ".join(fwd)
    if inv is not None and not isinstance(inv, str):
        inv = ", ".join(inv)
    sys = parse_map(fwd, params, inverse=inv, stable_split=cfg.get("stable_split"), domain=cfg.get("domain"),
                    name=cfg.get("name", "user"))
    if "dimension" in cfg and int(cfg["dimension"]) != sys.dimension:
        raise ValueError(f"declared dimension {cfg['dimension']} but forward has {sys.dimension} components")
    return sys


def load_map_file(path: str | Path) -> MapSystem:
    """Load a UTF-8 YAML (or JSON) map definition file."""
    with open(path, encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: map file must be a mapping")
    return map_from_config(cfg)


# --------------------------------------------------------------------------
# evaluation


def _columns(p: np.ndarray) -> list[np.ndarray]:
    return [p[..., i] for i in range(p.shape[-1])]


def _as_points(sys: MapSystem, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != sys.dimension:
        raise ValueError(f"point has dimension {p.shape[-1]}, map has {sys.dimension}")
    if not np.all(np.isfinite(p)):
        raise DomainError("non-finite input point")
    return p


def _stack(values, shape) -> np.ndarray:
    return np.stack([np.broadcast_to(np.asarray(v, float), shape) for v in values], axis=-1)


def eval_forward(sys: MapSystem, p) -> np.ndarray:
    """F(p); ``p`` may be a single point or an array of points (..., n)."""
    p = _as_points(sys, p)
    cols = _columns(p)
    with np.errstate(all="ignore"):
        out = _stack([f(cols) for f in sys._compiled("fwd", sys._fwd_nodes)], p.shape[:-1])
    if not np.all(np.isfinite(out)):
        raise DomainError("forward map produced a non-finite value")
    return out


def eval_jacobian(sys: MapSystem, p, method: str = "symbolic") -> np.ndarray:
    """DF(p) with shape (..., n, n); symbolic or central finite differences."""
    p = _as_points(sys, p)
    if method == "symbolic":
        cols = _columns(p)
        flat = sys._compiled("jac", [d for row in sys._jac_nodes() for d in row])
        with np.errstate(all="ignore"):
            vals = _stack([f(cols) for f in flat], p.shape[:-1])
        out = vals.reshape(p.shape[:-1] + (sys.dimension, sys.dimension))
    elif method == "fd":
        n = sys.dimension
        scale = np.maximum(1.0, np.linalg.norm(p, axis=-1))[..., None]
        h = FD_STEP * scale
        cols = []
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            step = h * e
            cols.append((eval_forward(sys, p + step) - eval_forward(sys, p - step)) / (2.0 * h))
        out = np.stack(cols, axis=-1)
    else:
        raise ValueError(f"unknown jacobian method {method!r}")
    if not np.all(np.isfinite(out)):
        raise DomainError("jacobian has non-finite entries")
    return out


def eval_inverse(
    sys: MapSystem,
    p,
    guess=None,
    max_iter: int = 100,
    rtol: float = 1e-12,
) -> np.ndarray:
    """F^{-1}(p): closed form when the map carries inverse expressions,
    otherwise damped Newton from ``guess`` (default ``p``).

    Newton runs until the residual stops improving, so the returned
    points are accurate to round-off; the contract is
    ``|F(q) - p| <= rtol * max(1, |p|)``.
    """
    p = _as_points(sys, p)
    if sys._inv_nodes is not None:
        cols = _columns(p)
        with np.errstate(all="ignore"):
            out = _stack([f(cols) for f in sys._compiled("inv", sys._inv_nodes)], p.shape[:-1])
        if not np.all(np.isfinite(out)):
            raise DomainError("inverse map produced a non-finite value")
        return out
    single = p.ndim == 1
    target = np.atleast_2d(p)
    q = np.array(target if guess is None else np.broadcast_to(np.asarray(guess, float), target.shape), dtype=float)
    scale = np.maximum(1.0, np.linalg.norm(target, axis=-1))
    res = eval_forward(sys, q) - target
    rnorm = np.linalg.norm(res, axis=-1)
    active = np.ones(len(q), bool)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        J = eval_jacobian(sys, q[idx])
        try:
            step = np.linalg.solve(J, res[idx][..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise InversionError("singular Jacobian during Newton inversion") from exc
        t = np.ones(len(idx))
        improved = np.zeros(len(idx), bool)
        for _ in range(30):
            trial = q[idx] - t[:, None] * step
            with np.errstate(all="ignore"):
                r_trial = _forward_unchecked(sys, trial) - target[idx]
            n_trial = np.linalg.norm(r_trial, axis=-1)
            ok = np.isfinite(n_trial) & (n_trial < rnorm[idx])
            newly = ok & ~improved
            if newly.any():
                sel = idx[newly]
                q[sel] = trial[newly]
                res[sel] = r_trial[newly]
                rnorm[sel] = n_trial[newly]
                improved |= newly
            if improved.all():
                break
            t = np.where(improved, t, 0.5 * t)
        # stop points whose residual no longer decreases (round-off floor)
        active[idx[~improved]] = False
        active &= rnorm > 0.0
    bad = rnorm > rtol * scale
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise InversionError(f"Newton inversion did not converge in {max_iter} iterations (residual {rnorm[i]:.3e})")
    return q[0] if single else q.reshape(p.shape)


def _forward_unchecked(sys: MapSystem, p: np.ndarray) -> np.ndarray:
    cols = _columns(p)
    return _stack([f(cols) for f in sys._compiled("fwd", sys._fwd_nodes)], p.shape[:-1])


def operator_norm(m: np.ndarray) -> np.ndarray:
    """Spectral norm (largest singular value) over the trailing two axes."""
    return np.linalg.svd(np.asarray(m, float), compute_uv=False)[..., 0]


def c1_distance(f: MapSystem, g: MapSystem, region: Box, grid_per_axis: int) -> float:
    """Grid estimate of max|F - G| + max|DF - DG| on ``region``.

    A lower bound on the true C^1 distance; exact when both maxima are
    attained at grid points.
    """
    if f.dimension != g.dimension or region.dimension != f.dimension:
        raise ValueError("dimension mismatch between maps and region")
    if grid_per_axis < 2:
        raise ValueError("grid_per_axis must be >= 2")
    pts = region.grid(grid_per_axis)
    c0 = np.max(np.linalg.norm(eval_forward(f, pts) - eval_forward(g, pts), axis=-1))
    c1 = np.max(operator_norm(eval_jacobian(f, pts) - eval_jacobian(g, pts)))
    return float(c0 + c1)
