"""Center generator P = log C, the homeomorphism h(z) = exp(-t(|z|^2) P) z,
its inverse, and the conjugated center map F2(z) = exp(tau(z) P) z.

Magnitudes of h(z) leave the double range quickly (t(|z|^2) grows like
exp(1/|z|^2)), so vectors are carried as ``ScaledVector``: a log-norm and a
unit mantissa.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, logm
from scipy.optimize import brentq

from .flatten import TimeReparam

LOG_TINY = math.log(np.finfo(float).tiny)
WORK_RADIUS = 0.9
EXP_CHECK_TOL = 1e-10
MAX_SQUARINGS = 3


class MatrixLogError(ValueError):
    pass


class BracketError(ArithmeticError):
    def __init__(self, message: str, s_max: float):
        super().__init__(f"{message} (s_max = {s_max:.6g})")
        self.s_max = s_max


@dataclass(frozen=True)
class CenterGenerator:
    C: np.ndarray
    power: int  # P generates C**power
    P: np.ndarray
    K: float
    chi: float
    chi_sharp: float
    transversality: float  # min over unit z of z.Pz

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    @property
    def C_power(self) -> np.ndarray:
        return np.linalg.matrix_power(self.C, self.power)

    @property
    def re_spectrum(self) -> tuple[float, float]:
        re = np.linalg.eigvals(self.P).real
        return float(re.min()), float(re.max())

    def to_dict(self) -> dict:
        return {"C": self.C.tolist(), "power": self.power, "P": self.P.tolist(), "K": self.K, "chi": self.chi,
                "chi_sharp": self.chi_sharp, "transversality": self.transversality}


def real_matrix_log(C, t_max: float = 50.0, t_steps: int = 5000) -> CenterGenerator:
    """Real P with exp(P) = C**power, power in {1, 2, 4, 8}.

    C is squared while some eigenvalue has nonpositive real part. K and chi
    come from sampling |exp(-P t)| on [0, t_max] with chi = 0.9 min Re spec P;
    ``chi_sharp`` is min Re spec P itself.
    """
    C = np.atleast_2d(np.asarray(C, float))
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise MatrixLogError("C must be a square matrix")
    ev = np.linalg.eigvals(C)
    if np.min(np.abs(ev)) <= 1.0 + 1e-12:
        raise MatrixLogError(
            f"spectrum of C must lie outside the closed unit disk; it touches the unit circle or enters it "
            f"(min |eigenvalue| = {np.min(np.abs(ev)):.6g})")
    power, Cp = 1, C.copy()
    for _ in range(MAX_SQUARINGS):
        if np.all(np.linalg.eigvals(Cp).real > 0):
            break
        Cp, power = Cp @ Cp, power * 2
    if not np.all(np.linalg.eigvals(Cp).real > 0):
        raise MatrixLogError(f"C**{power} still has eigenvalues with nonpositive real part")
    P = logm(Cp)
    if np.iscomplexobj(P):
        if np.max(np.abs(P.imag)) > 1e-12 * max(1.0, np.max(np.abs(P.real))):
            raise MatrixLogError("no real logarithm found")
        P = P.real
    P = np.asarray(P, float)
    err = float(np.max(np.abs(expm(P) - Cp)) / max(1.0, np.max(np.abs(Cp))))
    if err > EXP_CHECK_TOL:
        raise MatrixLogError(f"exp(P) reproduces C**{power} only to {err:.3e}")
    re = np.linalg.eigvals(P).real
    if np.any(re <= 0):
        raise MatrixLogError("P has eigenvalues with nonpositive real part")
    chi_sharp = float(re.min())
    chi = 0.9 * chi_sharp
    dt = t_max / t_steps
    step = expm(-P * dt)
    E = np.eye(len(P))
    K = 1.0
    for i in range(1, t_steps + 1):
        E = E @ step
        K = max(K, float(np.linalg.norm(E, 2)) * math.exp(chi * i * dt))
    sym = 0.5 * (P + P.T)
    trans = float(np.linalg.eigvalsh(sym).min())
    if trans <= 0:
        raise MatrixLogError(
            f"unit sphere is not transverse to z' = Pz (min z.Pz = {trans:.3e}); "
            f"apply a normalizing linear change to C first")
    return CenterGenerator(C, power, P, K, chi, chi_sharp, trans)


# --------------------------------------------------------------------------
# scaled vectors and the flow exp(sP)


@dataclass(frozen=True)
class ScaledVector:
    """exp(log_norm) * unit; log_norm = -inf encodes the zero vector."""

    log_norm: float
    unit: np.ndarray

    @classmethod
    def of(cls, v) -> "ScaledVector":
        v = np.atleast_1d(np.asarray(v, float))
        n = float(np.linalg.norm(v))
        if n == 0.0:
            return cls(-math.inf, np.zeros_like(v))
        return cls(math.log(n), v / n)

    @property
    def is_zero(self) -> bool:
        return self.log_norm == -math.inf

    @property
    def underflows(self) -> bool:
        return not self.is_zero and self.log_norm < LOG_TINY

    def value(self) -> np.ndarray:
        if self.is_zero or self.underflows:
            return np.zeros_like(self.unit)
        return math.exp(self.log_norm) * self.unit

    def times(self, A: np.ndarray) -> "ScaledVector":
        w = ScaledVector.of(np.asarray(A, float) @ self.unit)
        return ScaledVector(self.log_norm + w.log_norm, w.unit)


def flow(gen: CenterGenerator, s: float, v: ScaledVector) -> ScaledVector:
    """exp(sP) v, splitting off the dominant scalar rate so that the matrix
    exponential stays bounded for large |s|."""
    if v.is_zero:
        return v
    if not math.isfinite(s):
        return ScaledVector(-math.inf if s < 0 else math.inf, v.unit)
    lo, hi = gen.re_spectrum
    c = lo if s < 0 else hi
    A = s * (gen.P - c * np.eye(gen.dim))
    w = ScaledVector.of(expm(A) @ v.unit)
    return ScaledVector(v.log_norm + s * c + w.log_norm, w.unit)


def _phi1_apply(A: np.ndarray, v: np.ndarray) -> np.ndarray:
    """(exp(A) - I) v without cancellation: A phi1(A) v."""
    n = len(A)
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = A
    M[:n, n:] = np.eye(n)
    phi1 = expm(M)[:n, n:]
    return A @ (phi1 @ v)


# --------------------------------------------------------------------------
# h and its inverse


@dataclass(frozen=True)
class HResult:
    value: np.ndarray
    scaled: ScaledVector
    clamped: bool
    t: float


def _check_radius(zhat: np.ndarray, rho_work: float) -> float:
    n = float(np.linalg.norm(zhat))
    if n > rho_work * (1 + 1e-15):
        raise ValueError(f"|z| = {n:.6g} exceeds the working radius {rho_work:g}")
    return n


def apply_h(gen: CenterGenerator, t: TimeReparam, zhat, rho_work: float = WORK_RADIUS) -> HResult:
    z = np.atleast_1d(np.asarray(zhat, float))
    n = _check_radius(z, rho_work)
    if n == 0.0:
        return HResult(np.zeros_like(z), ScaledVector.of(z), False, math.inf)
    lt = float(t.log_t(n * n))
    tt = math.exp(lt) if lt < 709.0 else math.inf
    sc = flow(gen, -tt, ScaledVector.of(z))
    return HResult(sc.value(), sc, sc.underflows or sc.is_zero, tt)


@dataclass(frozen=True)
class InverseResult:
    zhat: np.ndarray
    s: float
    residual: float  # |h(zhat) - z| / |z|
    s_max: float
    s_residual: float = 0.0  # |log s - log t(|zhat|^2)| at the root


def _log_t_of_log_norm(t: TimeReparam, log_norm: float) -> float:
    lxi = 2.0 * log_norm
    if lxi < -700:
        return math.inf
    return float(t.log_t(math.exp(lxi)))


def invert_h(gen: CenterGenerator, t: TimeReparam, z, rho_work: float = WORK_RADIUS) -> InverseResult:
    """Solve s = t(|exp(sP) z|^2); then zhat = exp(sP) z."""
    zs = z if isinstance(z, ScaledVector) else ScaledVector.of(z)
    if zs.is_zero:
        return InverseResult(np.zeros_like(zs.unit), 0.0, 0.0, 0.0, 0.0)
    lr = math.log(rho_work)
    if zs.log_norm >= lr:
        raise BracketError("z lies outside the image of the working ball", 0.0)
    sigma = gen.transversality
    s_hi = 1.01 * (lr - zs.log_norm) / sigma + 1.0
    # |exp(sP) z| grows strictly (transversality), so s_max is a simple root
    # pad the target so a preimage exactly on the working sphere stays bracketed
    s_max = brentq(lambda s: flow(gen, s, zs).log_norm - (lr + 1e-12), 0.0, s_hi, xtol=1e-14, rtol=1e-15, maxiter=500)

    def phi(s):
        return math.log(s) - min(_log_t_of_log_norm(t, flow(gen, s, zs).log_norm), 1e300)

    s_lo = min(1.0, 0.5 * s_max)
    if phi(s_max) < 0:
        raise BracketError("no root of s = t(|exp(sP) z|^2) in [0, s_max]: z is too large", s_max)
    if phi(s_lo) > 0:
        raise BracketError("root of s = t(|exp(sP) z|^2) lies below the bracket", s_max)
    s = brentq(phi, s_lo, s_max, xtol=1e-300, rtol=1e-15, maxiter=500)
    zh = flow(gen, s, zs)
    back = apply_h(gen, t, zh.value(), rho_work=max(rho_work, 1.0)).scaled
    res = float(np.linalg.norm(math.exp(back.log_norm - zs.log_norm) * back.unit - zs.unit))
    return InverseResult(zh.value(), float(s), res, float(s_max), abs(phi(s)))


# --------------------------------------------------------------------------
# tau and the conjugated center map


@dataclass(frozen=True)
class ConjugateResult:
    tau: float
    value: np.ndarray
    displacement: np.ndarray  # F2(zhat) - zhat
    clamped: bool


def _delta_log_t(t: TimeReparam, xi: float, dxi: float) -> float:
    """log t(xi + dxi) - log t(xi), accurate for tiny dxi."""
    term1 = -dxi / (xi * (xi + dxi))
    if abs(dxi) <= 1e-6 * xi:
        mid = xi + 0.5 * dxi
        M = float(t.flat.M(mid))
        term2 = -float(t.flat.dlog_M(mid)) / (1.0 + M) * dxi
    else:
        term2 = float(np.logaddexp(0.0, -t.flat.log_M(xi + dxi)) - np.logaddexp(0.0, -t.flat.log_M(xi)))
    return term1 + term2


def tau(gen: CenterGenerator, t: TimeReparam, zhat, rho_work: float = WORK_RADIUS) -> ConjugateResult:
    """Root in (0, 1) of 1 - tau = t(|z|^2) - t(|exp(tau P) z|^2)."""
    z = np.atleast_1d(np.asarray(zhat, float))
    n = _check_radius(z, rho_work)
    if n == 0.0:
        return ConjugateResult(0.0, z.copy(), np.zeros_like(z), False)
    xi = n * n
    lt0 = float(t.log_t(xi))

    def disp(tt):
        return _phi1_apply(tt * gen.P, z)

    def g(u):
        tt = math.exp(u)
        w = disp(tt)
        dxi = float(2.0 * z @ w + w @ w)
        if xi + dxi >= t.rho:
            return -1e300
        d = _delta_log_t(t, xi, dxi)
        with np.errstate(divide="ignore"):
            log_D = lt0 + math.log(-math.expm1(d)) if d < 0 else -math.inf
        val = math.log1p(-tt) - log_D
        return float(np.clip(val, -1e300, 1e300))

    u_lo, u_hi = -740.0, math.log1p(-1e-12)
    g_lo, g_hi = g(u_lo), g(u_hi)
    if g_hi > 0:
        raise ArithmeticError(f"tau not bracketed in (0, 1): residual at tau -> 1 is {g_hi:.3e}")
    if g_lo < 0:
        # the root lies below the smallest representable scale: F2 = id there
        return ConjugateResult(0.0, z.copy(), np.zeros_like(z), True)
    u = brentq(g, u_lo, u_hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    tt = math.exp(u)
    w = disp(tt)
    return ConjugateResult(tt, z + w, w, False)


def conjugated_center_map(gen: CenterGenerator, t: TimeReparam, zhat, rho_work: float = WORK_RADIUS) -> np.ndarray:
    return tau(gen, t, zhat, rho_work).value


def composed_center_map(gen: CenterGenerator, t: TimeReparam, zhat, rho_work: float = WORK_RADIUS) -> np.ndarray:
    """h^-1(C**power h(zhat)), the direct evaluation path."""
    hz = apply_h(gen, t, zhat, rho_work).scaled
    return invert_h(gen, t, hz.times(gen.C_power), rho_work).zhat
