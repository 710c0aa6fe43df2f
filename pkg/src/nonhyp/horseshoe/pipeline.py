"""End-to-end horseshoe run: contraction, fixed disks, periodic points,
coding distances, conjugacy, inclination traces and central-disk coverage."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..parallel import pmap
from ..seeding import stream
from .coding import coding_family, find_periodic_point, periodic_disk, verify_conjugacy
from .disks import BranchError, auto_tune_k, flat_disk, verify_contraction
from .inclination import cover_until, track_inclination
from .symbols import SymbolWord, primitive_words
from .system import ChartedSystem

DEFAULT_WORDS = tuple(str(w) for w in primitive_words(5))
CONJUGACY_PAIRS = (("0", 0), ("0", 1), ("1", 0), ("1", 1), ("01", 0), ("01", 1),
                   ("001", 1), ("011", 0), ("0011", 1), ("00111", 0))


def inclination_orbits(sys: ChartedSystem, count: int = 100, steps: int = 30, seed: int = 0) -> list[dict]:
    """Tracked orbits from random base points on the stable slice z = 0 of
    U0 and random tangent vectors with |v^y| <= |v^z|."""
    c0 = sys.charts[0]
    out = []
    for i in range(count):
        rng = stream(seed, "inclination", i)
        r = (rng.uniform(-1.0, 1.0) * c0.eps_y, 0.0)
        vz = rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 1.0)
        v = (rng.uniform(-1.0, 1.0) * abs(vz), vz)
        tr = track_inclination(sys, r, v, steps)
        out.append({"r": list(r), "v": list(v), **tr.to_dict()})
    return out


def run_horseshoe(
    sys: ChartedSystem,
    words: Sequence[str] | None = None,
    auto_k: bool = False,
    trials: int = 100,
    seed: int = 0,
    workers: int | None = None,
    inclination_count: int = 100,
    inclination_steps: int = 30,
    k_max: int = 8,
) -> dict:
    words = list(words) if words else list(DEFAULT_WORDS)
    stages: dict[str, str] = {}
    if auto_k:
        sys, _ = auto_tune_k(sys, seed=seed)
    contraction = verify_contraction(sys, trials=trials, seed=seed, workers=workers)
    stages["contraction"] = "pass" if contraction.passed else "fail"

    def per_word(w: str) -> dict:
        word = SymbolWord.parse(w)
        rec: dict = {"word": str(word)}
        try:
            pd = periodic_disk(sys, word)
            rec["disk"] = pd.disk.to_dict()
            rec["iterations"] = pd.iterations
            rec["history"] = pd.history
            pp = find_periodic_point(sys, word, pd.disk)
            rec["periodic_point"] = pp.to_dict()
            rec["status"] = "pass"
        except (BranchError, KeyError) as exc:
            rec["status"] = "fail"
            rec["error"] = str(exc)
        return rec

    disks = pmap(per_word, words, workers)
    stages["periodic"] = "pass" if all(d["status"] == "pass" for d in disks) else "fail"
    pts = [np.asarray(d["periodic_point"]["point"]) for d in disks if "periodic_point" in d]
    min_sep = float("inf")
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            min_sep = min(min_sep, float(np.linalg.norm(pts[i] - pts[j])))

    families = [coding_family(sys, lead, k_max) for lead in (0, 1)]
    slope_ok = all(-1.2 <= f["slope"] <= -0.8 and all(f["bound_holds"]) for f in families)
    stages["coding"] = "pass" if slope_ok else "fail"

    conj = pmap(lambda wl: verify_conjugacy(sys, wl[0], wl[1]), CONJUGACY_PAIRS, workers)
    stages["conjugacy"] = "pass" if all(c["pass"] for c in conj) else "fail"

    incl = inclination_orbits(sys, inclination_count, inclination_steps, seed)
    stages["inclination"] = "pass" if all(t["pass"] for t in incl) else "fail"

    cover = cover_until(sys, flat_disk(sys, 0, 0.5 * sys.charts[0].eps_y))
    stages["cover"] = "pass" if cover.passed else "fail"

    return {
        "system": {"name": sys.name, "k": sys.k, "params": dict(sys.params), "a0": sys.a0, "b0": sys.b0},
        "contraction": contraction.to_dict(),
        "words": disks,
        "min_point_separation": min_sep,
        "coding": families,
        "conjugacy": conj,
        "inclination": incl,
        "cover": cover.to_dict(),
        "stages": stages,
        "pass": all(v == "pass" for v in stages.values()),
    }
