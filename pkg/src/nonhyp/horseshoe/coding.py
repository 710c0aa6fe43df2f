"""Symbolic coding of admissible disks and periodic points.

A sequence a is read backwards in time: D_a lies in chart a_0 and is the
image S_{a_1 -> a_0}(D_{sigma a}), so its points came from chart a_1. The
forward itinerary of the periodic point of a word w is therefore w read
in reverse (cyclically).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .disks import AdmissibleDisk, BranchError, dist1, flat_disk, graph_transform
from .symbols import SymbolWord
from .system import ChartedSystem

STEP_TOL = 1e-10


class ContractionFailure(BranchError):
    pass


@dataclass
class PeriodicDisk:
    word: SymbolWord
    disk: AdmissibleDisk
    history: list[float] = field(default_factory=list)
    iterations: int = 0


def composite_transform(sys: ChartedSystem, word: SymbolWord, disk: AdmissibleDisk) -> AdmissibleDisk:
    """S_{w1->w0} o ... o S_{w0->w_{L-1}} applied to a disk in chart w0."""
    w = word.letters
    L = len(w)
    d = disk
    for j in range(L - 1, -1, -1):
        # move from chart w_{j+1 mod L} into chart w_j
        d = graph_transform(sys, d, w[j])
    return d


def periodic_disk(sys: ChartedSystem, word: SymbolWord | str, max_iter: int = 200) -> PeriodicDisk:
    """Fixed disk of the composite transform, iterated from the flat disk."""
    word = SymbolWord.parse(word) if isinstance(word, str) else word
    if word.prefix:
        raise ValueError("periodic_disk needs a purely periodic word")
    for a, b in zip(word.letters, word.letters[1:] + word.letters[:1]):
        sys.branch(b, a)  # raises for unrealizable words
    d = flat_disk(sys, word.letters[0])
    hist: list[float] = []
    for it in range(1, max_iter + 1):
        nxt = composite_transform(sys, word, d)
        step = dist1(nxt, d)
        hist.append(step)
        d = nxt
        if step < STEP_TOL:
            return PeriodicDisk(word, d, hist, it)
        if len(hist) >= 4 and hist[-1] > hist[-2] > hist[-3] and hist[-1] > 1e-8:
            raise ContractionFailure(f"composite transform for word {word} is not contracting: steps {hist[-3:]}")
    raise ContractionFailure(f"word {word}: no convergence after {max_iter} iterations (last step {hist[-1]:.3e})")


def disk_for_sequence(sys: ChartedSystem, word: SymbolWord, depth: int) -> AdmissibleDisk:
    """D_a approximated by pulling the flat disk in chart a_depth back
    through S_{a_depth -> a_{depth-1}}, ..., S_{a_1 -> a_0}."""
    d = flat_disk(sys, word[depth])
    for j in range(depth - 1, -1, -1):
        d = graph_transform(sys, d, word[j])
    return d


def word_disk(sys: ChartedSystem, word: SymbolWord | str) -> AdmissibleDisk:
    """D_a for an eventually periodic word: the fixed disk of the cycle,
    pulled back through the prefix letters."""
    word = SymbolWord.parse(word) if isinstance(word, str) else word
    d = periodic_disk(sys, SymbolWord(word.letters)).disk
    for a in reversed(word.prefix):
        d = graph_transform(sys, d, a)
    return d


def verify_conjugacy(sys: ChartedSystem, word: SymbolWord | str, letter: int, depth: int = 60, tol: float = 1e-8) -> dict:
    """Compare D_{ia} computed directly with S_i(D_a)."""
    word = SymbolWord.parse(word) if isinstance(word, str) else word
    rhs = graph_transform(sys, word_disk(sys, word), letter)
    lhs = disk_for_sequence(sys, word.prepend(letter), depth)
    gap = dist1(lhs, rhs)
    return {"word": str(word), "letter": int(letter), "dist1": gap, "pass": bool(gap <= tol)}


# --------------------------------------------------------------------------
# periodic points


@dataclass
class PeriodicPoint:
    word: SymbolWord
    point: np.ndarray
    residual: float
    itinerary: list[int]
    orbit: np.ndarray
    minimal_period: int

    def to_dict(self) -> dict:
        return {
            "word": str(self.word),
            "point": self.point.tolist(),
            "residual": self.residual,
            "itinerary": self.itinerary,
            "minimal_period": self.minimal_period,
        }


def _forward_charts(word: SymbolWord) -> list[int]:
    w = word.letters
    L = len(w)
    return [w[(-t) % L] for t in range(L + 1)]


def _compose(sys: ChartedSystem, charts: list[int], y, z, with_jac: bool = False):
    J = None
    ok = np.ones(np.shape(z), bool)
    for t in range(len(charts) - 1):
        br = sys.branch(charts[t], charts[t + 1])
        ok &= sys.charts[charts[t]].contains(y, z) & (z >= br.window[0]) & (z <= br.window[1])
        if with_jac:
            Jt = br.jac(y, z)
            J = Jt if J is None else Jt @ J
        y, z = br.fn(y, z)
    ok &= sys.charts[charts[-1]].contains(y, z)
    return y, z, ok, J


def find_periodic_point(sys: ChartedSystem, word: SymbolWord | str, disk: AdmissibleDisk | None = None,
                        tol: float = 1e-8, max_newton: int = 50) -> PeriodicPoint:
    """Solve x = G^{k L}(x) on the word's fixed disk.

    A root of z -> pi_z Phi(eta(z), z) - z on the disk seeds a 2D Newton
    solve of Phi(x) = x, where Phi composes the branches of the word's
    itinerary. The residual is then measured with the global map.
    """
    word = SymbolWord.parse(word) if isinstance(word, str) else word
    if disk is None:
        disk = periodic_disk(sys, word).disk
    charts = _forward_charts(word)
    zg = np.linspace(disk.z[0], disk.z[-1], 8 * (len(disk.z) - 1) + 1)
    yg = disk.spline(zg)
    with np.errstate(over="ignore", invalid="ignore"):
        _, zi, ok, _ = _compose(sys, charts, yg, zg)
    # the branches are smooth past their windows, so bracket on the raw
    # composition and let the itinerary check reject spurious roots
    f = zi - zg
    roots = list(zg[np.flatnonzero(ok & (f == 0))])
    sgn = np.sign(f)
    with np.errstate(invalid="ignore"):
        cross = np.flatnonzero(sgn[:-1] * sgn[1:] < 0)
    for i in cross:
        lo, hi = zg[i], zg[i + 1]
        flo = f[i]
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            _, zm, _, _ = _compose(sys, charts, disk.spline(mid), mid)
            fm = zm - mid
            if fm == 0:
                lo = hi = mid
                break
            if np.sign(fm) == np.sign(flo):
                lo, flo = mid, fm
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    if not roots:
        raise BranchError(f"word {word}: no periodic point found on its fixed disk")
    L = len(word.letters)
    best = None
    for z0 in roots:
        x = np.array([float(disk.spline(z0)), float(z0)])
        x = _newton(sys, charts, x, max_newton)
        orbit = _orbit(sys, x, L)
        itinerary = [sys.chart_of(p) for p in orbit[:-1]]
        res = float(np.linalg.norm(orbit[-1] - x))
        if itinerary == charts[:-1] and (best is None or res < best[1]):
            best = (x, res, orbit, itinerary)
    if best is None:
        raise BranchError(f"word {word}: no candidate orbit follows the itinerary {charts[:-1]}")
    x, res, orbit, itinerary = best
    if res > tol:
        raise BranchError(f"word {word}: Newton residual {res:.3e} exceeds {tol:.1e}")
    minimal = next(j for j in range(1, L + 1) if np.linalg.norm(orbit[j] - x) <= tol)
    return PeriodicPoint(word, x, res, itinerary, orbit, minimal)


def _orbit(sys: ChartedSystem, x: np.ndarray, L: int) -> np.ndarray:
    pts = [x]
    for _ in range(L):
        pts.append(sys.iterate(pts[-1], sys.k))
    return np.array(pts)


def _newton(sys, charts, x, max_newton):
    best = x.copy()
    prev = np.inf
    for _ in range(max_newton):
        y, z, _, J = _compose(sys, charts, x[0], x[1], with_jac=True)
        g = np.array([y - x[0], z - x[1]], float)
        gn = float(np.linalg.norm(g))
        if gn >= prev:
            break
        prev, best = gn, x.copy()
        if gn == 0:
            break
        try:
            step = np.linalg.solve(np.asarray(J, float) - np.eye(2), -g)
        except np.linalg.LinAlgError:
            break
        x = x + step
    return best


# --------------------------------------------------------------------------
# coding distance families


def coding_family(sys: ChartedSystem, lead: int = 0, k_max: int = 8) -> dict:
    """dist1(D_a, D_b) for a = lead^k other, b = lead^(k+1) other, k = 1..k_max.

    The two words agree in exactly their first k letters. Returns the
    distances, the least-squares slope of log2(dist) against k, and the
    constant C fitted at k = 1 for the bound dist <= C 2^-k.
    """
    other = 1 - lead
    ks = np.arange(1, k_max + 1)
    dists = []
    for k in ks:
        a = SymbolWord((lead,) * k + (other,))
        b = SymbolWord((lead,) * (k + 1) + (other,))
        dists.append(dist1(periodic_disk(sys, a).disk, periodic_disk(sys, b).disk))
    dists = np.array(dists)
    slope, icpt = np.polyfit(ks, np.log2(dists), 1)
    C = float(dists[0] * 2.0)
    return {
        "lead": lead,
        "k": ks.tolist(),
        "dist1": dists.tolist(),
        "slope": float(slope),
        "C": C,
        "bound_holds": [bool(d <= C * 2.0 ** (-k) * (1 + 1e-9)) for k, d in zip(ks, dists)],
    }
