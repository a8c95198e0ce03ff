"""Stability certificates, amplification factors and the saturating family."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.integrate import IntegrationWarning, quad, solve_ivp

from .bihari import BihariTransform, StabilityModulus, printed_loglipschitz_psi, psi
from .kernel import DomainError, KernelSum, Linear, LogLipschitz, OsgoodKernel, PiecewiseConstant, Power, WeightProfile
from .msde import CATALOG, CoefficientTriple, PairedRun
from .kernel import CoefficientBounds

DEFAULT_U_GRID = np.geomspace(1e-8, 1e4, 121)


class Verdict(str, enum.Enum):
    CERTIFIED = "Certified"
    VIOLATED = "ViolatedBeyondTolerance"
    INCONCLUSIVE = "Inconclusive"


# -- amplification ------------------------------------------------------------------


def _tau_candidates(gamma: PiecewiseConstant, delta: float, t: float, T: float, tau_grid=None):
    hi = T - delta
    if tau_grid is not None:
        taus = np.asarray(tau_grid, dtype=float)
        taus = taus[(taus >= t - 1e-12) & (taus <= hi + 1e-12)]
        if taus.size == 0:
            raise DomainError(f"no base time in the tau grid admits horizon {delta}")
        return np.clip(taus, t, hi)
    # int_tau^{tau+delta} Gamma is piecewise linear in tau with kinks where tau or
    # tau + delta meets a breakpoint, so its maximum sits on one of these.
    cand = np.concatenate([gamma.breaks, gamma.breaks - delta, [t, hi]])
    return np.unique(np.clip(cand[(cand >= t - 1e-12) & (cand <= hi + 1e-12)], t, hi))


class WorstWindow(NamedTuple):
    lam: float
    tau: float
    C0: float


def amplification_factor(modulus: StabilityModulus, delta: float, u_grid=None, tau_grid=None,
                         t: float | None = None, T: float | None = None) -> WorstWindow:
    """``Lambda(delta) = sup_tau sup_u Psi_{tau,delta}(u) / u`` on finite grids.

    ``Psi`` is nondecreasing in the shift ``C0``, so the sup over ``tau`` is
    taken where ``C0(tau, delta)`` is largest, then the sup over ``u``.
    """
    gamma = modulus.gamma
    if gamma is None:
        raise DomainError("amplification needs a modulus with a Gamma profile")
    t = gamma.t if t is None else t
    T = gamma.T if T is None else T
    if not 0 < delta <= T - t + 1e-12:
        raise DomainError(f"horizon {delta} outside (0, {T - t}]")
    u_grid = DEFAULT_U_GRID if u_grid is None else np.asarray(u_grid, dtype=float)
    if u_grid.size == 0 or np.any(u_grid <= 0):
        raise DomainError("u grid must be nonempty and positive")
    taus = _tau_candidates(gamma, delta, t, T, tau_grid)
    c0s = np.array([modulus.C1 * gamma.integral(tau, tau + delta) for tau in taus])
    i = int(np.argmax(c0s))
    win = modulus.with_shift(c0s[i])
    lam = max(psi(win, u) / u for u in u_grid)
    return WorstWindow(float(lam), float(taus[i]), float(c0s[i]))


@dataclass
class AmplificationProfile:
    deltas: np.ndarray
    lambdas: np.ndarray
    tau_star: np.ndarray
    C0_star: np.ndarray
    u_grid: np.ndarray
    tau_grid: np.ndarray | None
    C1: float
    contraction_horizon: float | None
    min_lambda: float

    def to_dict(self) -> dict:
        return {
            "C1": self.C1,
            "contraction_horizon": self.contraction_horizon,
            "min_lambda": self.min_lambda,
            "u_grid": {"min": float(self.u_grid[0]), "max": float(self.u_grid[-1]), "points": int(self.u_grid.size)},
            "tau_grid": "breakpoint candidates" if self.tau_grid is None else [float(v) for v in self.tau_grid],
            "deltas": [float(v) for v in self.deltas],
            "lambdas": [float(v) for v in self.lambdas],
        }


def amplification(modulus: StabilityModulus, deltas, u_grid=None, tau_grid=None) -> AmplificationProfile:
    """Tabulate ``Lambda`` over ``deltas``.

    ``contraction_horizon`` is the largest grid horizon with ``Lambda < 1``,
    or ``None`` when no grid horizon contracts.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.size == 0:
        raise DomainError("delta grid must be nonempty")
    u_grid = DEFAULT_U_GRID if u_grid is None else np.asarray(u_grid, dtype=float)
    rows = [amplification_factor(modulus, d, u_grid, tau_grid) for d in deltas]
    lams = np.array([r.lam for r in rows])
    contracting = deltas[lams < 1.0]
    return AmplificationProfile(
        deltas=deltas,
        lambdas=lams,
        tau_star=np.array([r.tau for r in rows]),
        C0_star=np.array([r.C0 for r in rows]),
        u_grid=u_grid,
        tau_grid=None if tau_grid is None else np.asarray(tau_grid, dtype=float),
        C1=modulus.C1,
        contraction_horizon=float(contracting.max()) if contracting.size else None,
        min_lambda=float(lams.min()),
    )


@dataclass
class PartitionBound:
    partition: np.ndarray
    factors: np.ndarray
    product_bound: float
    uniform_bound: float
    delta_max: float
    initial_gap: float

    @property
    def product_bound_sqrt(self) -> float:
        """``S*^2``-norm form: ``sqrt(prod Lambda) * ||xi - eta||``."""
        return math.sqrt(self.product_bound)

    @property
    def uniform_bound_sqrt(self) -> float:
        return math.sqrt(self.uniform_bound)

    def to_dict(self) -> dict:
        return {
            "partition": [float(v) for v in self.partition],
            "factors": [float(v) for v in self.factors],
            "product_bound": self.product_bound,
            "uniform_bound": self.uniform_bound,
            "product_bound_sqrt": self.product_bound_sqrt,
            "uniform_bound_sqrt": self.uniform_bound_sqrt,
            "delta_max": self.delta_max,
            "initial_gap": self.initial_gap,
        }


def propagate_partition(modulus: StabilityModulus, partition, initial_gap: float,
                        u_grid=None, tau_grid=None) -> PartitionBound:
    """``prod_k Lambda(t_{k+1} - t_k) * gap`` and ``Lambda(max step)**N * gap``."""
    part = np.asarray(partition, dtype=float)
    if part.ndim != 1 or part.size < 2 or np.any(np.diff(part) <= 0):
        raise DomainError("partition must be a strictly increasing sequence of at least two times")
    steps = np.diff(part)
    cache: dict[float, float] = {}

    def lam(d):
        key = round(float(d), 12)
        if key not in cache:
            cache[key] = amplification_factor(modulus, d, u_grid, tau_grid).lam
        return cache[key]

    factors = np.array([lam(d) for d in steps])
    dmax = float(steps.max())
    with np.errstate(over="ignore"):
        product = float(np.prod(factors)) * initial_gap
        uniform = float(lam(dmax) ** len(steps)) * initial_gap
    return PartitionBound(part, factors, product, uniform, dmax, float(initial_gap))


# -- certificate ---------------------------------------------------------------------


@dataclass
class StabilityCertificate:
    grid: np.ndarray
    u: np.ndarray
    bound: np.ndarray
    margin: np.ndarray
    stderr: np.ndarray
    tolerance: np.ndarray
    verdict: Verdict
    k: float
    initial_gap: float
    C1: float
    C0: float
    direct_bound: float
    partition: PartitionBound | None
    family_size: int
    paths_per_scenario: int
    sensitivity: np.ndarray
    notes: list[str] = field(default_factory=list)

    CSV_COLUMNS = ("s", "u", "bound", "margin", "stderr")

    def csv_rows(self):
        for row in zip(self.grid, self.u, self.bound, self.margin, self.stderr):
            yield tuple(float(v) for v in row)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "k": self.k,
            "initial_gap": self.initial_gap,
            "C1": self.C1,
            "C0": self.C0,
            "u_T": float(self.u[-1]),
            "bound_T": float(self.bound[-1]),
            "direct_bound": self.direct_bound,
            "partition": None if self.partition is None else self.partition.to_dict(),
            "min_margin": float(np.min(self.margin)),
            "margin_T": float(self.margin[-1]),
            "family_size": self.family_size,
            "paths_per_scenario": self.paths_per_scenario,
            "sensitivity_u_T": [float(v) for v in self.sensitivity],
            "notes": list(self.notes),
        }


def certify(run: PairedRun, modulus: StabilityModulus, k: float = 3.0,
            partition=None) -> StabilityCertificate:
    """Compare the empirical deviation curve with ``Psi_s(initial gap)`` at every grid time.

    The bound at ``s`` uses ``C0(s) = C1 int_t^s Gamma``.  A point passes when
    ``u(s) <= bound(s) + k * stderr(s)``.  With ``partition`` given, ``u(T)``
    must also sit below the smaller of the direct bound and the partition
    product bound (plus tolerance).
    """
    gamma = modulus.gamma
    if gamma is None:
        raise DomainError("certify needs a modulus built from a constant collection")
    grid = run.grid
    t = float(grid[0])
    if gamma.t > t + 1e-12 or gamma.T < grid[-1] - 1e-12:
        raise DomainError("modulus Gamma profile does not cover the run's grid")
    gap = run.initial_gap
    prim = gamma.primitive(grid) - gamma.primitive(t)
    bound = np.array([psi(modulus.with_shift(modulus.C1 * c), gap) for c in np.atleast_1d(prim)])
    se = run.u_stderr
    tol = k * se
    margin = bound - run.u
    notes: list[str] = []

    pb = None
    if partition is not None:
        pb = propagate_partition(modulus, partition, gap)

    over = run.u > bound
    finite_tol = np.isfinite(tol)
    beyond = over & finite_tol & (run.u > bound + np.where(finite_tol, tol, 0.0))
    undecided = over & ~finite_tol
    if pb is not None:
        cap = min(bound[-1], pb.product_bound)
        tol_T = tol[-1] if np.isfinite(tol[-1]) else 0.0
        if run.u[-1] > cap + tol_T:
            if np.isfinite(tol[-1]):
                beyond[-1] = True
                notes.append("u(T) exceeds the partition product bound")
            else:
                undecided[-1] = True
    if not np.all(np.isfinite(run.u)):
        verdict = Verdict.INCONCLUSIVE
        notes.append("non-finite deviation estimate")
    elif np.any(beyond):
        verdict = Verdict.VIOLATED
    elif np.any(undecided):
        verdict = Verdict.INCONCLUSIVE
        notes.append("bound exceeded where no standard error is available (single path per scenario)")
    else:
        verdict = Verdict.CERTIFIED
    if pb is not None and pb.product_bound > bound[-1]:
        notes.append("partition product bound is looser than the direct bound")

    return StabilityCertificate(
        grid=grid,
        u=run.u,
        bound=bound,
        margin=margin,
        stderr=se,
        tolerance=tol,
        verdict=verdict,
        k=k,
        initial_gap=gap,
        C1=modulus.C1,
        C0=modulus.C1 * gamma.integral(t, float(grid[-1])),
        direct_bound=float(bound[-1]),
        partition=pb,
        family_size=run.n_scenarios,
        paths_per_scenario=run.n_paths,
        sensitivity=run.sensitivity(-1),
        notes=notes,
    )


# -- saturating family ----------------------------------------------------------------


@dataclass(frozen=True)
class SaturatingFamily:
    """Drift whose squared deviation from the zero solution obeys ``u' = beta rho(u)``.

    ``beta = c_b (kappa + K) / (2 (T - t))`` and the total shift is
    ``c = int_t^T beta``.
    """

    kernel: OsgoodKernel
    c_b: float
    weights: WeightProfile
    t: float
    T: float

    def __post_init__(self):
        if not self.t < self.T:
            raise DomainError("saturating family needs t < T")
        if not self.c_b > 0:
            raise DomainError("saturating family needs c_b > 0")

    @property
    def beta(self) -> PiecewiseConstant:
        return self.weights.total() * (self.c_b / (2.0 * (self.T - self.t)))

    @property
    def shift(self) -> float:
        return self.beta.integral(self.t, self.T)

    def sigma(self, u: float) -> float:
        """``int_0^u sqrt(rho(z^2)) / z dz``."""
        if u == 0:
            return 0.0
        k = self.kernel
        if isinstance(k, Linear):
            return math.sqrt(k.L) * u
        with warnings.catch_warnings():
            warnings.simplefilter("error", IntegrationWarning)
            try:
                val, _ = quad(lambda z: math.sqrt(float(k._rho(np.asarray(z * z)))) / z, 0.0, abs(u),
                              epsabs=0.0, epsrel=1e-11, limit=400)
            except IntegrationWarning as exc:
                raise DomainError(f"sigma integrand not integrable near 0 for {k.describe()}: {exc}") from None
        if not math.isfinite(val):
            raise DomainError(f"sigma integrand not integrable near 0 for {k.describe()}")
        return math.copysign(val, u)

    def drift(self, r, x):
        """``beta(r) rho(x^2) / (2 x)``, odd in ``x`` and zero at the origin."""
        x = np.asarray(x, dtype=float)
        safe = np.where(x == 0, 1.0, x)
        out = self.beta(r) * self.kernel(x * x) / (2.0 * safe)
        return np.where(x == 0, 0.0, out)

    def printed_drift(self, r, x):
        """``sqrt(c_b / (4 (T-t))) sqrt(kappa + K) sigma(x)``, the drift in its commonly quoted form."""
        w = self.weights.total()(r)
        scale = math.sqrt(self.c_b / (4.0 * (self.T - self.t))) * np.sqrt(w)
        sig = np.vectorize(self.sigma)(np.asarray(x, dtype=float))
        return scale * sig


class SaturatingDrift(NamedTuple):
    coefficients: CoefficientTriple
    predict: Callable[[float], float]
    shift: float


def saturating_drift(family: SaturatingFamily, form: str = "exact", y_star: float = 1.0) -> SaturatingDrift:
    """Coefficient triple ``(b, 0, 0)`` and the predicted ``u(T) = Theta^{-1}(Theta(u0) + c)``.

    ``form="printed"`` swaps in :meth:`SaturatingFamily.printed_drift`; that
    drift saturates only up to a constant factor in the rate, and its
    endpoint is not the predicted one except in degenerate cases.
    """
    if form not in ("exact", "printed"):
        raise DomainError(f"form must be 'exact' or 'printed', got {form!r}")
    family.sigma(1.0)  # integrability check
    tr = BihariTransform(family.kernel, y_star=y_star)
    c = family.shift

    def predict(u0: float) -> float:
        if u0 < 0:
            raise DomainError("u0 must be nonnegative")
        if u0 == 0:
            return 0.0
        return tr.theta_inverse(tr.theta(u0) + c)

    f = family.drift if form == "exact" else family.printed_drift
    coeffs = CoefficientTriple(b=lambda s, x, y: f(s, x), bounds=CoefficientBounds(c_b=family.c_b),
                               name=f"saturating_{form}")
    return SaturatingDrift(coeffs, predict, c)


def saturation_endpoint(family: SaturatingFamily, u0: float, form: str = "exact",
                        rtol: float = 1e-12, dense: bool = False):
    """Integrate ``X' = b(s, X)`` from ``X_t = sqrt(u0)`` against ``Y = 0`` and return ``X_T^2``.

    With ``dense=True`` also returns a callable ``s -> X_s^2`` over ``[t, T]``.
    """
    if u0 < 0:
        raise DomainError("u0 must be nonnegative")
    drift = saturating_drift(family, form=form).coefficients.b
    beta = family.beta
    inner = beta.breaks[(beta.breaks > family.t) & (beta.breaks < family.T)]
    edges = np.concatenate([[family.t], inner, [family.T]])
    x = math.sqrt(u0)
    pieces = []
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        sol = solve_ivp(lambda s, v: [float(drift(mid, v[0], None))], (a, b), [x],
                        method="DOP853", rtol=rtol, atol=1e-14 * max(1.0, x), dense_output=dense)
        x = float(sol.y[0, -1])
        pieces.append((a, b, sol.sol))
    if not dense:
        return x * x

    def curve(s):
        for a, b, f in pieces:
            if a - 1e-15 <= s <= b + 1e-15:
                return float(f(s)[0]) ** 2
        raise DomainError(f"s={s} outside [{family.t}, {family.T}]")

    return x * x, curve


def saturation_residual(family: SaturatingFamily, u0: float, n: int = 200) -> float:
    """Max relative residual of ``u' - beta rho(u)`` along the numeric solution (central differences)."""
    _, curve = saturation_endpoint(family, u0, dense=True)
    beta = family.beta
    h = (family.T - family.t) * 1e-5
    worst = 0.0
    for s in np.linspace(family.t + 2 * h, family.T - 2 * h, n):
        if np.any(np.abs(beta.breaks - s) < 2 * h):
            continue
        du = (curve(s + h) - curve(s - h)) / (2 * h)
        rhs = float(beta(s)) * float(family.kernel(curve(s)))
        worst = max(worst, abs(du - rhs) / max(abs(rhs), 1e-300))
    return worst


# -- small-argument asymptotics ------------------------------------------------------------


@dataclass
class AsymptoticsTable:
    regime: str
    u: np.ndarray
    psi: np.ndarray
    reference: np.ndarray
    ratio: np.ndarray
    underflow: np.ndarray
    printed: np.ndarray | None
    liminf_proxy: float

    CSV_COLUMNS = ("u", "psi", "reference", "ratio", "underflow")

    def csv_rows(self):
        for row in zip(self.u, self.psi, self.reference, self.ratio, self.underflow):
            yield (float(row[0]), float(row[1]), float(row[2]), float(row[3]), int(row[4]))


def _leading(kernel: OsgoodKernel) -> OsgoodKernel:
    if isinstance(kernel, KernelSum):
        collapsed = kernel._collapsed()
        return collapsed if collapsed is not None else kernel
    return kernel


def asymptotics_probe(modulus: StabilityModulus, u_grid) -> AsymptoticsTable:
    """Ratios of ``Psi(u)`` to its small-``u`` reference scale.

    * power kernels: reference ``Theta^{-1}(Theta(C1 u)) = C1 u``;
    * linear kernels: reference ``exp(L C0) C1 u`` (ratio identically 1);
    * anything else: reference ``C1 u``, reported without a limit claim.
    """
    u = np.asarray(u_grid, dtype=float)
    if u.size == 0 or np.any(u <= 0) or np.any(np.diff(u) >= 0):
        raise DomainError("u grid must be positive and strictly decreasing")
    k = _leading(modulus.transform.kernel)
    C1, C0 = modulus.C1, modulus.C0
    if isinstance(k, Linear):
        regime = "lipschitz"
        ref = math.exp(k.L * C0) * C1 * u
    elif isinstance(k, Power):
        regime = "regularly-varying index > 1"
        ref = C1 * u
    else:
        regime = "slowly-varying factor (no fixed rescaling asserted)"
        ref = C1 * u
    vals = np.empty_like(u)
    under = np.zeros(u.size, dtype=bool)
    for i, x in enumerate(u):
        vals[i] = psi(modulus, x)
        under[i] = vals[i] == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(under, np.nan, vals / ref)
    printed = None
    if isinstance(k, LogLipschitz):
        printed = np.array([printed_loglipschitz_psi(x, C1, C0, k.L) for x in u])
    tail = ratio[len(ratio) // 2:]
    tail = tail[np.isfinite(tail)]
    return AsymptoticsTable(regime, u, vals, ref, ratio, under, printed,
                            float(tail.min()) if tail.size else math.nan)


def saturating_coefficients(kernel: OsgoodKernel, weights: WeightProfile, t: float, T: float,
                            c_b: float = 2.0, form: str = "exact") -> CoefficientTriple:
    """Catalog entry: the saturating drift built from the run's kernel, weights and horizon."""
    return saturating_drift(SaturatingFamily(kernel, c_b, weights, t, T), form=form).coefficients


CATALOG["saturating"] = saturating_coefficients
