"""Bihari transform, its inverse, the stability modulus and the envelope solver.

``Theta(y) = int_{y*}^{y} dr / rho(r)`` turns the integral inequality
``u(s) <= a + int beta rho(u)`` into an additive shift, so the envelope is
``Theta^{-1}(Theta(a) + int beta)`` and the stability modulus is
``Psi(u) = Theta^{-1}(Theta(C1 u) + C0)``.

Two backends are available for ``Theta`` and its inverse: closed forms when
the kernel family has an elementary antiderivative of ``1/rho``, and
adaptive quadrature plus bracketing root-finding otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from .kernel import (
    CoefficientBounds,
    DomainError,
    KernelSum,
    Linear,
    LogLipschitz,
    OsgoodKernel,
    PiecewiseConstant,
    Power,
    WeightProfile,
    validate_osgood,
)

UNDERFLOW_FLOOR = 1e-300
_LOG_FLOOR = math.log(UNDERFLOW_FLOOR)
_LOG_CEIL = 709.0
EPS_SCHEDULE = (1e-4, 1e-6, 1e-8)


class EnvelopeMismatchError(RuntimeError):
    """Transform route and ODE route of the envelope disagree."""


class InversionInfo(NamedTuple):
    underflow: bool
    overflow: bool
    backend: str


@dataclass(frozen=True)
class BihariTransform:
    """``Theta`` anchored at ``y_star`` for a given kernel.

    ``backend`` is ``"auto"`` (closed form when available), ``"closed"`` or
    ``"numeric"``.
    """

    kernel: OsgoodKernel
    y_star: float = 1.0
    quad_tol: float = 1e-10
    inv_tol: float = 1e-10
    backend: str = "auto"

    def __post_init__(self):
        if not self.y_star > 0:
            raise DomainError(f"y_star must be positive, got {self.y_star}")
        if self.backend not in ("auto", "closed", "numeric"):
            raise DomainError(f"unknown backend {self.backend!r}")
        if self.backend == "closed" and not self.kernel.has_closed_form:
            raise DomainError(f"kernel {self.kernel.describe()} has no closed-form transform")

    def with_backend(self, backend: str) -> BihariTransform:
        return replace(self, backend=backend)

    @property
    def uses_closed_form(self) -> bool:
        return self.backend == "closed" or (self.backend == "auto" and self.kernel.has_closed_form)

    # -- Theta -------------------------------------------------------------

    def theta(self, y: float) -> float:
        y = float(y)
        if not y > 0:
            raise DomainError(f"Theta is defined for y > 0 only, got {y}")
        if y == self.y_star:
            return 0.0
        if math.isinf(y):
            raise DomainError("Theta is evaluated at finite y only")
        if self.uses_closed_form:
            k = self.kernel
            return k.antiderivative(y) - k.antiderivative(self.y_star)
        return self._theta_numeric(y)

    def _inv_ratio(self, v):
        # e^v / rho(e^v), the integrand after r = e^v
        r = math.exp(v)
        with np.errstate(over="ignore"):
            q = float(self.kernel._rho(np.asarray(r))) / r
        return 1.0 / q if q > 0 else math.inf

    def _direct_integrand(self, r):
        return 1.0 / float(self.kernel._rho(np.asarray(r)))

    def _points(self, lo, hi, log=False):
        pts = [b for b in self.kernel.breakpoints if lo < (math.log(b) if log else b) < hi]
        return [math.log(b) for b in pts] if log else pts

    def _log_segment(self, va: float, vb: float) -> float:
        if va == vb:
            return 0.0
        lo, hi = min(va, vb), max(va, vb)
        if hi - lo < 1e-6 and not self._points(lo, hi, log=True):
            # brentq probes near the root; Simpson is exact to O(h^5) there and quad only reports roundoff
            f = self._inv_ratio
            val = (hi - lo) / 6.0 * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi))
            return val if vb >= va else -val
        # split long stretches so each piece sees a bounded dynamic range of the integrand
        width = max(2.0, (hi - lo) / 100.0)
        pts = sorted(set(self._points(lo, hi, log=True)) | set(np.arange(lo + width, hi, width).tolist())) or None
        val, _ = quad(self._inv_ratio, lo, hi, points=pts, epsabs=0.0,
                      epsrel=min(self.quad_tol, 1e-10), limit=400)
        return val if vb >= va else -val

    def _theta_numeric(self, y: float) -> float:
        a, b = sorted((y, self.y_star))
        if b / a <= 10.0:
            pts = self._points(a, b) or None
            val, _ = quad(self._direct_integrand, a, b, points=pts, epsabs=0.0,
                          epsrel=min(self.quad_tol, 1e-10), limit=400)
            return val if y > self.y_star else -val
        return self._log_segment(math.log(self.y_star), math.log(y))

    # -- Theta^{-1} --------------------------------------------------------

    def theta_inverse(self, z: float, full_output: bool = False):
        """Solve ``Theta(y) = z``.

        Below the representable range the result is ``0.0`` with the
        underflow flag set; past a finite ``Theta(inf)`` (superlinear
        kernels) it is ``inf`` with the overflow flag set.
        """
        z = float(z)
        if math.isnan(z):
            raise DomainError("Theta^{-1} of NaN")
        backend = "closed" if self.uses_closed_form else "numeric"
        if z == 0.0:
            y = self.y_star
        elif z == -math.inf:
            y = 0.0
        elif z == math.inf:
            y = math.inf
        elif backend == "closed":
            y = self.kernel.antiderivative_inverse(z + self.kernel.antiderivative(self.y_star))
        else:
            y = self._inverse_numeric(z)
        under = y < UNDERFLOW_FLOOR
        if under:
            y = 0.0
        info = InversionInfo(underflow=under, overflow=math.isinf(y), backend=backend)
        return (y, info) if full_output else y

    def _inverse_numeric(self, z: float) -> float:
        sign = 1.0 if z > 0 else -1.0
        va, tha = math.log(self.y_star), 0.0
        step = sign
        while True:
            vb = va + step
            if vb < _LOG_FLOOR:
                return 0.0
            if vb > _LOG_CEIL:
                return math.inf
            thb = tha + self._log_segment(va, vb)
            if (thb - z) * sign >= 0.0:
                break
            va, tha = vb, thb
            step *= 2.0
        # anchor at the end nearer y*: |tha| <= |z|, so no cancellation against a huge |thb|
        lo, hi = (va, vb) if sign > 0 else (vb, va)
        v = brentq(lambda v: tha + self._log_segment(va, v) - z, lo, hi,
                   xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
        return math.exp(v)


# -- stability modulus -------------------------------------------------------


def _closed_psi(kernel: OsgoodKernel, C1: float, C0: float, u: float) -> float:
    x = C1 * u
    if isinstance(kernel, KernelSum):
        kernel = kernel._collapsed()
    if isinstance(kernel, Linear):
        e = kernel.L * C0
        return math.inf if e > 709 else math.exp(e) * x
    if isinstance(kernel, Power):
        a = kernel.alpha
        base = x ** (1.0 - a) - kernel.L * (a - 1.0) * C0
        return math.inf if base <= 0 else base ** (-1.0 / (a - 1.0))
    if isinstance(kernel, LogLipschitz) and x <= 1.0:
        shrink = math.exp(-kernel.L * C0)
        y = math.exp(1.0 - (1.0 - math.log(x)) * shrink)
        if y <= 1.0:
            return y
    return kernel.antiderivative_inverse(kernel.antiderivative(x) + C0)


def loglipschitz_psi(u: float, C1: float, C0: float, L: float = 1.0) -> float:
    """Closed form ``e (C1 u / e)**exp(-L C0)`` valid while ``C1 u`` and the result stay below 1."""
    return math.e * (C1 * u / math.e) ** math.exp(-L * C0)


def printed_loglipschitz_psi(u: float, C1: float, C0: float, L: float = 1.0) -> float:
    """The expression ``e exp(-(e / (C1 u))**exp(L C0))`` as it is commonly quoted.

    It does not reduce to ``C1 u`` at ``C0 = 0``; kept only so reports can
    show how far it is from the actual modulus.
    """
    with np.errstate(over="ignore"):
        return float(math.e * np.exp(-np.power(math.e / (C1 * u), math.exp(L * C0))))


@dataclass(frozen=True)
class StabilityModulus:
    """``Psi(u) = Theta^{-1}(Theta(C1 u) + C0)``."""

    transform: BihariTransform
    C1: float = 4.0
    C0: float = 0.0
    gamma: PiecewiseConstant | None = None

    def __post_init__(self):
        if not self.C1 > 0:
            raise DomainError(f"C1 must be positive, got {self.C1}")

    @classmethod
    def from_collection(cls, transform: BihariTransform, constants: ConstantCollection):
        return cls(transform, C1=constants.C1, C0=constants.C0, gamma=constants.gamma)

    def with_shift(self, C0: float) -> StabilityModulus:
        return replace(self, C0=float(C0))

    def window(self, tau: float, delta: float) -> StabilityModulus:
        """Modulus on ``[tau, tau + delta]``: ``C0 = C1 int_tau^{tau+delta} Gamma``."""
        if self.gamma is None:
            raise DomainError("modulus has no Gamma profile to restrict")
        return self.with_shift(self.C1 * self.gamma.integral(tau, tau + delta))

    def __call__(self, u):
        return psi(self, u)


def psi(modulus: StabilityModulus, u: float, backend: str | None = None) -> float:
    """Evaluate the modulus; ``backend`` overrides the transform's backend."""
    u = float(u)
    if not u >= 0:
        raise DomainError(f"Psi is defined for u >= 0, got {u}")
    if u == 0.0:
        return 0.0
    tr = modulus.transform if backend is None else modulus.transform.with_backend(backend)
    C1, C0 = modulus.C1, modulus.C0
    if tr.uses_closed_form:
        val = _closed_psi(tr.kernel, C1, C0, u)
    else:
        val = tr.theta_inverse(tr.theta(C1 * u) + C0)
    if C0 >= 0:
        # Theta^{-1} increasing and C0 >= 0 give Psi(u) >= C1 u; strip rounding below it.
        val = max(val, C1 * u)
    return val


def continuity_modulus(modulus: StabilityModulus, r: float) -> float:
    """``omega(r) = sqrt(Psi(r**2))``, the modulus of the data-to-solution map."""
    if not r >= 0:
        raise DomainError(f"continuity modulus needs r >= 0, got {r}")
    return math.sqrt(psi(modulus, r * r))


# -- envelope ----------------------------------------------------------------


def _as_profile(beta, t: float, s: float) -> PiecewiseConstant:
    if isinstance(beta, PiecewiseConstant):
        if beta.t > t + 1e-12 or beta.T < s - 1e-12:
            raise DomainError(f"beta profile on [{beta.t}, {beta.T}] does not cover [{t}, {s}]")
        return beta
    beta = float(beta)
    return PiecewiseConstant.constant(beta, t, s if s > t else t + 1.0)


def _pieces(profile: PiecewiseConstant, t: float, s: float):
    inner = profile.breaks[(profile.breaks > t) & (profile.breaks < s)]
    edges = np.concatenate([[t], inner, [s]])
    for a, b in zip(edges[:-1], edges[1:]):
        yield float(a), float(b), float(profile(0.5 * (a + b)))


class EnvelopeResult(NamedTuple):
    value: float
    transform_route: float
    ode_route: float
    regularized: tuple[tuple[float, float], ...]


def envelope_ode(a: float, beta, kernel: OsgoodKernel, t: float, s: float,
                 eps: float = 0.0, rtol: float = 1e-11) -> float:
    """Integrate ``U' = beta (rho(U) + eps)``, ``U(t) = a`` piece by piece.

    For ``eps = 0`` and ``a > 0`` the log-variable ``V = log U`` is integrated,
    which keeps the relative error uniform across scales.
    """
    prof = _as_profile(beta, t, s)
    if s == t:
        return float(a)
    if eps == 0.0:
        if a <= 0:
            return 0.0

        def rhs(_, v, b):
            x = math.exp(v[0])
            with np.errstate(over="ignore"):
                return [b * float(kernel._rho(np.asarray(x))) / x]

        blow = lambda _, v, b: v[0] - _LOG_CEIL  # noqa: E731
        blow.terminal = True
        v = math.log(a)
        for lo, hi, b in _pieces(prof, t, s):
            if b == 0:
                continue
            sol = solve_ivp(rhs, (lo, hi), [v], method="DOP853", rtol=rtol, atol=1e-13,
                            args=(b,), events=blow)
            if sol.status == 1:
                return math.inf
            if sol.status == -1:
                # step size collapsed; with a nondecreasing right-hand side that is a finite-time singularity
                return math.inf
            v = float(sol.y[0, -1])
        return math.exp(v)

    def rhs_eps(_, y, b):
        return [b * (float(kernel._rho(np.asarray(max(y[0], 0.0)))) + eps)]

    y = float(a)
    for lo, hi, b in _pieces(prof, t, s):
        if b == 0:
            continue
        sol = solve_ivp(rhs_eps, (lo, hi), [y], method="DOP853", rtol=rtol,
                        atol=1e-3 * eps, args=(b,))
        y = float(sol.y[0, -1])
    return y


def solve_envelope(a: float, beta, kernel: OsgoodKernel, t: float, s: float,
                   y_star: float = 1.0, rtol: float = 1e-6, full_output: bool = False):
    """Bihari envelope ``Theta^{-1}(Theta(a) + int_t^s beta)``, cross-checked by ODE.

    Parameters
    ----------
    a : float
        Initial level, ``a >= 0``.
    beta : float or PiecewiseConstant
        Nonnegative weight; a float means a constant weight on ``[t, s]``.
    kernel : OsgoodKernel
    t, s : float
        Interval endpoints, ``t <= s``.
    rtol : float
        Maximum relative disagreement tolerated between the two routes.

    Returns
    -------
    float, or EnvelopeResult when ``full_output`` is set.

    Raises
    ------
    EnvelopeMismatchError
        If the transform and ODE routes disagree beyond ``rtol``.
    """
    a = float(a)
    if not a >= 0:
        raise DomainError(f"envelope needs a >= 0, got {a}")
    if s < t:
        raise DomainError(f"envelope needs t <= s, got t={t}, s={s}")
    prof = _as_profile(beta, t, s)
    if np.any(prof.values < 0):
        raise DomainError("beta must be nonnegative")
    total = prof.integral(t, s) if s > t else 0.0

    if a == 0.0:
        reg = tuple((eps, envelope_ode(0.0, prof, kernel, t, s, eps=eps)) for eps in EPS_SCHEDULE)
        if validate_osgood(kernel).osgood_holds:
            value = 0.0
        else:
            (e1, u1), (e2, u2) = reg[-2], reg[-1]
            value = max(0.0, u2 - e2 * (u1 - u2) / (e1 - e2))
        res = EnvelopeResult(value, value, value, reg)
        return res if full_output else value

    tr = BihariTransform(kernel, y_star=y_star)
    via_transform = tr.theta_inverse(tr.theta(a) + total)
    via_ode = envelope_ode(a, prof, kernel, t, s)
    if not (math.isinf(via_transform) and math.isinf(via_ode)):
        scale = max(abs(via_transform), abs(via_ode))
        if not abs(via_transform - via_ode) <= rtol * scale:
            raise EnvelopeMismatchError(
                f"transform route {via_transform!r} vs ODE route {via_ode!r} "
                f"(a={a}, int beta={total}, kernel={kernel.describe()})"
            )
    res = EnvelopeResult(via_transform, via_transform, via_ode, ())
    return res if full_output else via_transform


# -- constants ---------------------------------------------------------------


@dataclass(frozen=True)
class ConstantCollection:
    """``Gamma(r) = factor * (kappa(r) + K(r))`` and ``C0 = C1 int_t^T Gamma``."""

    gamma: PiecewiseConstant
    C0: float
    C1: float
    factor: float


def constant_collection(bounds: CoefficientBounds, weights: WeightProfile, C_BDG: float,
                        C_QV: float, t: float, T: float, C1: float = 4.0,
                        absorb_horizon: bool = True) -> ConstantCollection:
    """Collect ``Gamma`` and ``C0`` from the coefficient and integral constants.

    ``factor = (T-t) c_b + C_QV c_h + C_BDG c_g``.  With
    ``absorb_horizon=False`` the quadratic-variation term is
    ``(T-t) C_QV c_h`` instead, for a ``C_QV`` that excludes the horizon.
    """
    if not t < T:
        raise DomainError(f"constant collection needs t < T, got t={t}, T={T}")
    if C_BDG < 0 or C_QV < 0:
        raise DomainError("integral constants must be nonnegative")
    horizon = T - t
    qv = C_QV if absorb_horizon else horizon * C_QV
    factor = horizon * bounds.c_b + qv * bounds.c_h + C_BDG * bounds.c_g
    total = weights.total()
    if total.t > t + 1e-12 or total.T < T - 1e-12:
        raise DomainError("weights must cover [t, T]")
    gamma = total * factor
    return ConstantCollection(gamma=gamma, C0=C1 * gamma.integral(t, T), C1=C1, factor=factor)
