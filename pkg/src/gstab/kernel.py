"""Osgood comparison kernels and piecewise-constant time weights.

A kernel is a continuous nondecreasing function ``rho: [0, inf) -> [0, inf)``
with ``rho(0) = 0``.  Kernels add (``rho1 + rho2``), evaluate vectorised on
numpy arrays, and expose an antiderivative of ``1 / rho`` when the family has
one in closed form.  The antiderivative is what the Bihari transform is built
from; families without one fall back to quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


def _as_float_array(r):
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError(f"kernel argument must be >= 0, got {r!r}")
    return arr


def _unwrap(arr):
    return float(arr) if arr.ndim == 0 else arr


class OsgoodKernel:
    """Base class.  Subclasses implement ``_rho`` on a nonnegative float array."""

    concave: bool = True
    name: str = "kernel"

    def __call__(self, r):
        return _unwrap(self._rho(_as_float_array(r)))

    def _rho(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __add__(self, other: OsgoodKernel) -> KernelSum:
        if not isinstance(other, OsgoodKernel):
            return NotImplemented
        return KernelSum((self, other))

    # Closed-form antiderivative F of 1/rho (F' = 1/rho), or None.
    def antiderivative(self, y: float) -> float | None:
        return None

    def antiderivative_inverse(self, w: float) -> float | None:
        return None

    @property
    def has_closed_form(self) -> bool:
        return self.antiderivative(1.0) is not None

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Points where rho is not smooth (quadrature hints)."""
        return ()

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Linear(OsgoodKernel):
    """``rho(r) = L r``."""

    L: float = 1.0
    name = "linear"
    concave = True

    def __post_init__(self):
        if not self.L > 0:
            raise DomainError(f"Linear kernel needs L > 0, got {self.L}")

    def _rho(self, r):
        return self.L * r

    def antiderivative(self, y):
        return math.log(y) / self.L

    def antiderivative_inverse(self, w):
        x = self.L * w
        if x > 709.0:
            return math.inf
        return math.exp(x)

    def describe(self):
        return {"family": "linear", "L": self.L}


@dataclass(frozen=True)
class LogLipschitz(OsgoodKernel):
    """``rho(r) = L r log(e / r)`` on ``(0, 1]``, continued as ``L r`` for ``r > 1``.

    The raw formula turns over at ``r = 1`` and vanishes at ``r = e``; the
    linear continuation keeps rho continuous and nondecreasing while leaving
    the small-``r`` behaviour untouched.  Concavity holds on ``(0, 1]`` only.
    """

    L: float = 1.0
    name = "loglipschitz"
    concave = True

    def __post_init__(self):
        if not self.L > 0:
            raise DomainError(f"LogLipschitz kernel needs L > 0, got {self.L}")

    def _rho(self, r):
        inner = r * (1.0 - np.log(np.where(r > 0, r, 1.0)))
        return self.L * np.where(r < 1, inner, r)

    # F(y) = -log(log(e/y)) / L on (0, 1], log(y) / L above; F(1) = 0 on both sides.
    def antiderivative(self, y):
        if y <= 1.0:
            return -math.log(1.0 - math.log(y)) / self.L
        return math.log(y) / self.L

    def antiderivative_inverse(self, w):
        x = self.L * w
        if x <= 0.0:
            return math.exp(1.0 - math.exp(-x))
        if x > 709.0:
            return math.inf
        return math.exp(x)

    @property
    def breakpoints(self):
        return (1.0,)

    def describe(self):
        return {"family": "loglipschitz", "L": self.L}


@dataclass(frozen=True)
class Power(OsgoodKernel):
    """``rho(r) = L r**alpha`` with ``alpha > 1`` (convex, so ``concave`` is False)."""

    L: float = 1.0
    alpha: float = 2.0
    name = "power"
    concave = False

    def __post_init__(self):
        if not self.L > 0:
            raise DomainError(f"Power kernel needs L > 0, got {self.L}")
        if not self.alpha > 1:
            raise DomainError(f"Power kernel needs alpha > 1, got {self.alpha}")

    def _rho(self, r):
        return self.L * r**self.alpha

    # F(y) = y**(1-alpha) / (L (1-alpha)) < 0, increasing to 0 as y -> inf.
    def antiderivative(self, y):
        return y ** (1.0 - self.alpha) / (self.L * (1.0 - self.alpha))

    def antiderivative_inverse(self, w):
        if w >= 0.0:
            return math.inf
        base = self.L * (1.0 - self.alpha) * w
        return base ** (1.0 / (1.0 - self.alpha))

    def describe(self):
        return {"family": "power", "L": self.L, "alpha": self.alpha}


@dataclass(frozen=True)
class Custom(OsgoodKernel):
    """Monotone piecewise-linear interpolation of ``(r, rho(r))`` samples.

    A ``(0, 0)`` anchor is prepended when missing.  Past the last sample the
    last segment's slope is continued.  Since the interpolant is linear at the
    origin with positive slope, ``1/rho`` always has a ``1/r`` singularity.
    """

    samples: tuple[tuple[float, float], ...] = ()
    name = "custom"
    _r: np.ndarray = field(init=False, repr=False, compare=False)
    _v: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.samples, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
            raise DomainError("custom kernel needs a non-empty list of (r, rho) pairs")
        r, v = pts[:, 0], pts[:, 1]
        if np.any(np.diff(r) <= 0):
            raise DomainError("custom kernel sample abscissae must be strictly increasing")
        if r[0] < 0:
            raise DomainError("custom kernel samples must have r >= 0")
        if r[0] > 0:
            r = np.concatenate([[0.0], r])
            v = np.concatenate([[0.0], v])
        if v[0] != 0:
            raise DomainError("custom kernel must satisfy rho(0) = 0")
        if np.any(np.diff(v) < 0):
            raise DomainError("custom kernel samples must be nondecreasing")
        if np.any(v[1:] <= 0):
            raise DomainError("custom kernel must be positive on (0, inf)")
        if len(r) < 2:
            raise DomainError("custom kernel needs at least one sample with r > 0")
        object.__setattr__(self, "_r", r)
        object.__setattr__(self, "_v", v)

    @property
    def concave(self):  # type: ignore[override]
        slopes = np.diff(self._v) / np.diff(self._r)
        return bool(np.all(np.diff(slopes) <= 1e-12 * np.max(slopes)))

    def _rho(self, r):
        out = np.interp(r, self._r, self._v)
        tail = r > self._r[-1]
        if np.any(tail):
            slope = (self._v[-1] - self._v[-2]) / (self._r[-1] - self._r[-2])
            out = np.where(tail, self._v[-1] + slope * (r - self._r[-1]), out)
        return out

    @property
    def breakpoints(self):
        return tuple(float(x) for x in self._r[1:])

    def describe(self):
        return {"family": "custom", "samples": [list(map(float, p)) for p in zip(self._r, self._v)]}


@dataclass(frozen=True)
class KernelSum(OsgoodKernel):
    """``rho = rho1 + rho2 + ...``; closed forms survive only for like families."""

    parts: tuple[OsgoodKernel, ...] = ()
    name = "sum"

    def __post_init__(self):
        flat: list[OsgoodKernel] = []
        for p in self.parts:
            flat.extend(p.parts if isinstance(p, KernelSum) else (p,))
        if not flat:
            raise DomainError("empty kernel sum")
        object.__setattr__(self, "parts", tuple(flat))

    @property
    def concave(self):  # type: ignore[override]
        return all(p.concave for p in self.parts)

    def _rho(self, r):
        total = np.zeros_like(r)
        for p in self.parts:
            total = total + p._rho(r)
        return total

    def _collapsed(self) -> OsgoodKernel | None:
        kinds = {type(p) for p in self.parts}
        if kinds == {Linear}:
            return Linear(sum(p.L for p in self.parts))
        if kinds == {LogLipschitz}:
            return LogLipschitz(sum(p.L for p in self.parts))
        if kinds == {Power} and len({p.alpha for p in self.parts}) == 1:
            return Power(sum(p.L for p in self.parts), self.parts[0].alpha)
        return None

    def antiderivative(self, y):
        k = self._collapsed()
        return None if k is None else k.antiderivative(y)

    def antiderivative_inverse(self, w):
        k = self._collapsed()
        return None if k is None else k.antiderivative_inverse(w)

    @property
    def breakpoints(self):
        return tuple(sorted({b for p in self.parts for b in p.breakpoints}))

    def describe(self):
        return {"family": "sum", "parts": [p.describe() for p in self.parts]}


def evaluate_rho(kernel: OsgoodKernel, r):
    """Evaluate ``kernel`` at ``r >= 0``; raises :class:`DomainError` for ``r < 0``."""
    return kernel(r)


def kernel_from_spec(spec: dict) -> OsgoodKernel:
    """Build a kernel from a ``{"family": ..., params}`` mapping (config format)."""
    if not isinstance(spec, dict) or "family" not in spec:
        raise DomainError("kernel spec needs a 'family' field")
    family = str(spec["family"]).lower().replace("_", "").replace("-", "")
    if family == "linear":
        return Linear(float(spec.get("L", 1.0)))
    if family == "loglipschitz":
        return LogLipschitz(float(spec.get("L", 1.0)))
    if family == "power":
        return Power(float(spec.get("L", 1.0)), float(spec.get("alpha", 2.0)))
    if family == "custom":
        return Custom(tuple(tuple(map(float, p)) for p in spec.get("samples", ())))
    if family == "sum":
        return KernelSum(tuple(kernel_from_spec(p) for p in spec.get("parts", ())))
    raise DomainError(f"kernel.family: unknown kernel family {spec['family']!r}")


@dataclass(frozen=True)
class OsgoodReport:
    osgood_holds: bool
    concave: bool
    evidence: list[tuple[float, float]]


def validate_osgood(kernel: OsgoodKernel, y_star: float = 1.0) -> OsgoodReport:
    """Probe ``Theta(10**-k)`` for ``k = 2..12`` and report divergence evidence.

    Built-in families are Osgood by construction.  For other kernels the
    probes must decrease strictly and the decrements must not decay
    geometrically; a convergent ``int_0 dr/rho`` shows up as decrements
    shrinking by a fixed ratio well below one.
    """
    from .bihari import BihariTransform

    transform = BihariTransform(kernel, y_star=y_star, backend="numeric")
    ys = [10.0**-k for k in range(2, 13)]
    evidence = [(y, transform.theta(y)) for y in ys]
    if isinstance(kernel, (Linear, LogLipschitz, Power)) or (
        isinstance(kernel, KernelSum)
        and all(isinstance(p, (Linear, LogLipschitz, Power)) for p in kernel.parts)
    ):
        holds = True
    else:
        vals = np.array([v for _, v in evidence])
        drops = -np.diff(vals)
        holds = bool(np.all(drops > 0) and drops[-1] / drops[-2] > 0.85)
    return OsgoodReport(osgood_holds=holds, concave=kernel.concave, evidence=evidence)


class PiecewiseConstant:
    """Right-continuous step function on ``[breaks[0], breaks[-1]]``.

    Integrals are exact; that is the point of this representation.
    """

    def __init__(self, breaks, values):
        breaks = np.asarray(breaks, dtype=float)
        values = np.asarray(values, dtype=float)
        if breaks.ndim != 1 or len(breaks) < 2:
            raise DomainError("piecewise-constant profile needs at least two breakpoints")
        if np.any(np.diff(breaks) <= 0):
            raise DomainError("breakpoints must be strictly increasing")
        if values.shape != (len(breaks) - 1,):
            raise DomainError("need exactly one value per interval")
        self.breaks = breaks
        self.values = values
        self._cum = np.concatenate([[0.0], np.cumsum(values * np.diff(breaks))])

    @classmethod
    def constant(cls, value: float, t: float, T: float) -> PiecewiseConstant:
        return cls([t, T], [value])

    @property
    def t(self) -> float:
        return float(self.breaks[0])

    @property
    def T(self) -> float:
        return float(self.breaks[-1])

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(self.breaks, s, side="right") - 1, 0, len(self.values) - 1)
        return _unwrap(self.values[idx])

    def primitive(self, s):
        """``int_{t}^{s}`` of the profile (clamped to the support)."""
        s = np.clip(np.asarray(s, dtype=float), self.breaks[0], self.breaks[-1])
        idx = np.clip(np.searchsorted(self.breaks, s, side="right") - 1, 0, len(self.values) - 1)
        return _unwrap(self._cum[idx] + self.values[idx] * (s - self.breaks[idx]))

    def integral(self, a: float, b: float) -> float:
        return float(self.primitive(b) - self.primitive(a))

    def merged(self, other: PiecewiseConstant, op) -> PiecewiseConstant:
        breaks = np.union1d(self.breaks, other.breaks)
        mids = 0.5 * (breaks[1:] + breaks[:-1])
        return PiecewiseConstant(breaks, op(self(mids), other(mids)))

    def __add__(self, other):
        if isinstance(other, PiecewiseConstant):
            return self.merged(other, np.add)
        return PiecewiseConstant(self.breaks, self.values + float(other))

    def __mul__(self, c: float):
        return PiecewiseConstant(self.breaks, self.values * float(c))

    __rmul__ = __mul__

    def __repr__(self):
        return f"PiecewiseConstant(breaks={self.breaks.tolist()}, values={self.values.tolist()})"


def profile_from_spec(spec, t: float, T: float) -> PiecewiseConstant:
    """A number gives a constant profile; ``{"breaks": [...], "values": [...]}`` a step profile."""
    if isinstance(spec, (int, float)):
        return PiecewiseConstant.constant(float(spec), t, T)
    if isinstance(spec, dict) and "values" in spec:
        values = [float(v) for v in spec["values"]]
        breaks = spec.get("breaks")
        if breaks is None:
            breaks = np.linspace(t, T, len(values) + 1)
        prof = PiecewiseConstant(breaks, values)
        if not (math.isclose(prof.t, t) and math.isclose(prof.T, T)):
            raise DomainError(f"weight profile must span [{t}, {T}]")
        return prof
    raise DomainError(f"cannot interpret weight spec {spec!r}")


@dataclass(frozen=True)
class WeightProfile:
    """The time weights ``kappa`` and ``K`` multiplying ``rho1`` and ``rho2``."""

    kappa: PiecewiseConstant
    K_weight: PiecewiseConstant

    def __post_init__(self):
        for name, prof in (("kappa", self.kappa), ("K", self.K_weight)):
            if np.any(prof.values < 0):
                raise DomainError(f"weight {name} must be nonnegative")

    @classmethod
    def constant(cls, kappa: float, K: float, t: float, T: float) -> WeightProfile:
        return cls(PiecewiseConstant.constant(kappa, t, T), PiecewiseConstant.constant(K, t, T))

    def total(self) -> PiecewiseConstant:
        return self.kappa + self.K_weight

    def integral(self, a: float, b: float) -> float:
        return self.kappa.integral(a, b) + self.K_weight.integral(a, b)


@dataclass(frozen=True)
class CoefficientBounds:
    """Squared-increment constants ``c_*`` and growth constants ``beta_*``."""

    c_b: float = 0.0
    c_h: float = 0.0
    c_g: float = 0.0
    beta_b: float = 0.0
    beta_h: float = 0.0
    beta_g: float = 0.0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not (v >= 0 and math.isfinite(v)):
                raise DomainError(f"bounds.{k} must be a finite nonnegative number, got {v}")
