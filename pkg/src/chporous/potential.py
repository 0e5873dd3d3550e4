"""Flory-Huggins logarithmic potential, its C^2 regularization and checks.

F(s) = theta0/2 (1 - s^2) + theta/2 ((1-s) ln((1-s)/2) + (1+s) ln((1+s)/2))

splits into the concave part F1 = theta0/2 (1 - s^2) and the convex
logarithmic part F2.  The regularized F_delta replaces F2 outside
[-(1-delta), 1-delta] by its second-order Taylor polynomial at the seam.
"""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import xlogy

from .errors import AssumptionViolated, DomainError, ParamError


@dataclass(frozen=True)
class PotentialParams:
    theta: float = 0.5
    theta0: float = 1.0
    lam: float = 1.0
    mu: float = 1.0
    delta: float = 0.01

    def __post_init__(self):
        if not (0.0 < self.theta < self.theta0):
            raise ParamError(f"need 0 < theta < theta0 for a double well, got "
                             f"theta={self.theta}, theta0={self.theta0}")
        # lam = 0 is admitted: it switches the capillary coupling off
        if not self.lam >= 0.0:
            raise ParamError(f"need lambda >= 0, got {self.lam}")
        if not self.mu > 0.0:
            raise ParamError(f"need mu > 0, got {self.mu}")
        if not (0.0 < self.delta < 1.0):
            raise ParamError(f"need 0 < delta < 1, got {self.delta}")


def _check(s, closed):
    s = np.asarray(s, dtype=float)
    bad = np.abs(s) > 1.0 if closed else np.abs(s) >= 1.0
    bad |= ~np.isfinite(s)
    if bad.any():
        raise DomainError(f"argument outside {'[-1, 1]' if closed else '(-1, 1)'}: "
                          f"{s[bad].ravel()[0]!r}")
    return s


def F1(s, params):
    s = np.asarray(s, dtype=float)
    return 0.5 * params.theta0 * (1.0 - s * s)


def F2(s, params):
    s = _check(s, closed=True)
    return 0.5 * params.theta * (xlogy(1.0 - s, 0.5 * (1.0 - s)) + xlogy(1.0 + s, 0.5 * (1.0 + s)))


def F(s, params):
    """Logarithmic potential on [-1, 1]; 0 ln 0 = 0 at the end points."""
    return F1(s, params) + F2(s, params)


def f(s, params):
    """F'(s) = -theta0 s + theta artanh(s) on (-1, 1)."""
    s = _check(s, closed=False)
    return -params.theta0 * s + params.theta * np.arctanh(s)


def f_prime(s, params):
    s = _check(s, closed=False)
    return -params.theta0 + params.theta / (1.0 - s * s)


def _seam(params, delta):
    return 1.0 - (params.delta if delta is None else delta)


def F2_delta(s, params, delta=None):
    s = np.asarray(s, dtype=float)
    s0 = _seam(params, delta)
    a = np.abs(s)
    inner = np.minimum(a, s0)
    val = F2(inner, params)
    d = a - inner
    g1 = params.theta * np.arctanh(s0)
    g2 = params.theta / (1.0 - s0 * s0)
    return val + g1 * d + 0.5 * g2 * d * d


def f2_delta(s, params, delta=None):
    s = np.asarray(s, dtype=float)
    s0 = _seam(params, delta)
    a = np.abs(s)
    inner = np.minimum(a, s0)
    g2 = params.theta / (1.0 - s0 * s0)
    return np.sign(s) * (params.theta * np.arctanh(inner) + g2 * (a - inner))


def f2_delta_prime(s, params, delta=None):
    s = np.asarray(s, dtype=float)
    s0 = _seam(params, delta)
    inner = np.minimum(np.abs(s), s0)
    return params.theta / (1.0 - inner * inner)


def F_delta(s, params, delta=None):
    """Regularized potential, C^2 on the real line."""
    return F1(s, params) + F2_delta(s, params, delta)


def f_delta(s, params, delta=None):
    return -params.theta0 * np.asarray(s, dtype=float) + f2_delta(s, params, delta)


def f_delta_prime(s, params, delta=None):
    return -params.theta0 + f2_delta_prime(s, params, delta)


class Potential:
    """Convex/concave split of the bulk energy used by the time steppers.

    ``mode`` is ``singular``, ``regularized``, ``linear`` (f replaced by its
    tangent at ``m0``) or ``quartic`` (F = (1 - s^2)^2 / 4, a test stub).
    The implicit part is ``convex(s)`` with derivative ``convex_prime``; the
    explicit part is ``concave(s)``.  Their sum is the force ``f``.
    """

    MODES = ("singular", "regularized", "linear", "quartic")

    def __init__(self, params, mode="singular", m0=0.0, clamp=1e-9):
        if mode not in self.MODES:
            raise ParamError(f"unknown potential mode {mode!r}; expected one of {self.MODES}")
        self.params = params
        self.mode = mode
        self.m0 = float(m0)
        self.clamp = clamp
        if mode == "linear":
            self._f0 = float(f(self.m0, params))
            self._k = float(f_prime(self.m0, params))
            self._F0 = float(F(self.m0, params))

    @property
    def singular(self):
        return self.mode == "singular"

    def energy(self, s):
        p = self.params
        if self.mode == "singular":
            return F(s, p)
        if self.mode == "regularized":
            return F_delta(s, p)
        if self.mode == "quartic":
            s = np.asarray(s, dtype=float)
            return 0.25 * (1.0 - s * s) ** 2
        d = np.asarray(s, dtype=float) - self.m0
        return self._F0 + self._f0 * d + 0.5 * self._k * d * d

    def force(self, s):
        return self.convex(s) + self.concave(s)

    def convex(self, s):
        p = self.params
        s = np.asarray(s, dtype=float)
        if self.mode == "singular":
            return p.theta * np.arctanh(_check(s, closed=False))
        if self.mode == "regularized":
            return f2_delta(s, p)
        if self.mode == "quartic":
            return s ** 3
        return self._f0 + max(self._k, 0.0) * (s - self.m0)

    def convex_prime(self, s):
        p = self.params
        s = np.asarray(s, dtype=float)
        if self.mode == "singular":
            return p.theta / (1.0 - _check(s, closed=False) ** 2)
        if self.mode == "regularized":
            return f2_delta_prime(s, p)
        if self.mode == "quartic":
            return 3.0 * s * s
        return np.full_like(s, max(self._k, 0.0))

    def concave(self, s):
        s = np.asarray(s, dtype=float)
        if self.mode in ("singular", "regularized"):
            return -self.params.theta0 * s
        if self.mode == "quartic":
            return -s
        return min(self._k, 0.0) * (s - self.m0)

    def clamp_window(self, s):
        """Clamp to [-1 + clamp, 1 - clamp] in singular mode; DomainError if |s| >= 1."""
        if not self.singular:
            return np.asarray(s, dtype=float)
        s = _check(s, closed=False)
        lim = 1.0 - self.clamp
        return np.clip(s, -lim, lim)


@dataclass
class AssumptionReport:
    shift: float
    min_F: float
    a1_pass: bool
    p: float
    K1: float
    K2: float
    a2_pass: bool
    gamma: float
    K3: float
    K4: float
    K4_delta: float
    a3_pass: bool
    inf_f_prime: float
    argmin_f_prime: float
    K5: float
    a4_strict: bool
    alpha: float
    L: float
    argmax_Fdd: float
    binodal: float

    def text(self):
        yes = {True: "pass", False: "FAIL"}
        lines = [
            f"lower bound       min F = {self.min_F:.6g}; additive shift = {self.shift:.6g}; "
            f"F + shift >= 0: {yes[self.a1_pass]}",
            f"growth            (regularized f, p = {self.p:g}) K1 = {self.K1:.6g}, K2 = {self.K2:.6g}: "
            f"{yes[self.a2_pass]}; singular f is unbounded at +-1 and is not covered",
            f"coercivity        gamma = {self.gamma:.6g}, K3 = {self.K3:g}, K4(f) = {self.K4:.6g}, "
            f"K4(f_delta) = {self.K4_delta:.6g}: {yes[self.a3_pass]}",
            f"concavity bound   inf f' = {self.inf_f_prime:.6g} at s = {self.argmin_f_prime:.3g}; "
            f"K5 = {self.K5:.6g}; K5 < 1/4: {'yes' if self.a4_strict else 'no (reported, not enforced)'}",
            f"F_delta''         alpha = {self.alpha:.6g}, L = {self.L:.6g} (attained at s = {self.argmax_Fdd:.6g})",
            f"binodal           f(s*) = 0 at s* = {self.binodal:.12g}",
        ]
        return "\n".join(lines)


def binodal_point(params):
    """Positive zero s* of f (the minimizers of F are +-s*)."""
    lo = np.sqrt(1.0 - params.theta / params.theta0)
    return float(brentq(lambda v: float(f(v, params)), lo, 1.0 - 1e-15, xtol=1e-15, rtol=1e-15))


def verify_assumptions(params, gamma=0.0, n=20001, K3=1.0, p=1.0, strict=False):
    """Sample the growth and convexity assumptions on F, f and F_delta.

    With ``strict`` the bound K5 < 1/4 is enforced as well; otherwise it is
    only reported.
    """
    s = np.linspace(-1.0 + 1e-4, 1.0 - 1e-4, n)
    x = np.linspace(-3.0, 3.0, 6 * (n // 2) + 1)
    Fs = F(s, params)
    i = int(np.argmin(Fs))
    min_F = float(Fs[i])
    shift = max(0.0, -min_F)
    a1 = bool(np.all(Fs + shift >= 0.0))
    if not a1:
        raise AssumptionViolated("lower bound", float(s[i]))

    fx = np.abs(f_delta(x, params))
    fpx = np.abs(f_delta_prime(x, params))
    near = np.abs(x) <= 1.0
    K2 = float(max(fx[near].max(), fpx.max()))
    far = ~near
    K1 = float(max((fx[far] / np.abs(x[far]) ** p).max(), (fpx[far] / np.abs(x[far]) ** (p - 1)).max()))
    bound = K1 * np.abs(x) ** p + K2
    a2 = bool(np.all(fx <= bound + 1e-12) and np.all(fpx <= K1 * np.abs(x) ** (p - 1) + K2 + 1e-12))
    if not a2:
        j = int(np.argmax(fx - bound))
        raise AssumptionViolated("growth", float(x[j]))

    gap = K3 * (Fs + shift) - (s - gamma) * f(s, params)
    K4 = max(0.0, float(gap.max()))
    gap_d = K3 * (F_delta(x, params) + shift) - (x - gamma) * f_delta(x, params)
    K4d = max(0.0, float(gap_d.max()))
    a3 = bool(np.isfinite(K4) and np.isfinite(K4d))
    if not a3:
        raise AssumptionViolated("coercivity", float(s[int(np.argmax(gap))]))

    fp = f_prime(s, params)
    k = int(np.argmin(fp))
    inf_fp = float(fp[k])
    K5 = max(0.0, -inf_fp)
    if strict and not K5 < 0.25:
        raise AssumptionViolated("concavity bound (K5 < 1/4)", float(s[k]), f"K5 = {K5:.6g}")

    Fdd = f_delta_prime(x, params)
    alpha = max(0.0, -float(Fdd.min()))
    # F_delta'' is even and nondecreasing in |s|, constant past the seam
    seam = 1.0 - params.delta
    L = max(float(Fdd.max()), float(f_delta_prime(seam, params)))
    return AssumptionReport(shift, min_F, a1, p, K1, K2, a2, float(gamma), K3, K4, K4d, a3,
                            inf_fp, float(s[k]), K5, K5 < 0.25, alpha, L, seam,
                            binodal_point(params))
