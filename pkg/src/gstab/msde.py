"""Mean-field G-SDE coefficients, explicit Euler scheme, paired runs.

Both solutions of a pair are driven by the same ``dB`` and ``d<B>`` on every
path (common noise), so ``X - Y`` isolates sensitivity to the initial data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import ndtri

from .ambiguity import INITIAL_DATA_STREAM, GPathEnsemble, substream, sup_expectation_curve
from .kernel import CoefficientBounds, DomainError, OsgoodKernel, WeightProfile

BLOWUP_LEVEL = 1e12

Coefficient = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


class SimulationBlowUp(RuntimeError):
    pass


class CoefficientValidationError(ValueError):
    """A declared increment or growth bound fails at a sampled point."""


def _zero(s, x, y):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class CoefficientTriple:
    """``(b, h, g)`` evaluated as ``f(s, state, mean_slot)``.

    ``mean_slot`` is ``"pointwise"`` (the state itself goes into the third
    slot) or ``"ensemble"`` (the per-scenario cross-path mean does).
    """

    b: Coefficient = _zero
    h: Coefficient = _zero
    g: Coefficient = _zero
    bounds: CoefficientBounds = field(default_factory=CoefficientBounds)
    mean_slot: str = "pointwise"
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mean_slot not in ("pointwise", "ensemble"):
            raise DomainError(f"coefficients.mean_slot must be 'pointwise' or 'ensemble', got {self.mean_slot!r}")


# -- catalog ------------------------------------------------------------------


def _loglip_profile(x):
    # x sqrt(log(e / x^2)) on |x| <= 1, x beyond; |.|^2 = rho_loglip(x^2) exactly
    ax = np.abs(x)
    inner = np.sqrt(1.0 - np.log(np.where(ax > 0, np.minimum(ax, 1.0) ** 2, 1.0)))
    return np.where(ax < 1, x * inner, x)


def linear_drift(theta: float = 1.0, **kw) -> CoefficientTriple:
    return CoefficientTriple(b=lambda s, x, y: -theta * x, name="linear_drift",
                             params={"theta": theta}, **kw)


def loglip_drift(lam: float = 1.0, **kw) -> CoefficientTriple:
    """``b = -lam x sqrt(log(e / x^2))`` on ``|x| < 1``, ``-lam x`` beyond.

    Against the log-Lipschitz kernel the squared-increment constant is not
    ``lam^2``: pairs straddling the origin push the ratio to about
    ``2.39 lam^2``, so declare ``c_b >= 2.4 lam^2``.
    """
    return CoefficientTriple(b=lambda s, x, y: -lam * _loglip_profile(x), name="loglip_drift",
                             params={"lam": lam}, **kw)


def power_drift(lam: float = 1.0, alpha: float = 2.0, **kw) -> CoefficientTriple:
    return CoefficientTriple(b=lambda s, x, y: -lam * np.sign(x) * np.abs(x) ** alpha,
                             name="power_drift", params={"lam": lam, "alpha": alpha}, **kw)


def pure_diffusion(gamma: float = 0.3, **kw) -> CoefficientTriple:
    return CoefficientTriple(g=lambda s, x, y: gamma * x, name="pure_diffusion",
                             params={"gamma": gamma}, **kw)


def h_only(lam: float = 1.0, **kw) -> CoefficientTriple:
    return CoefficientTriple(h=lambda s, x, y: -lam * x, name="h_only", params={"lam": lam}, **kw)


def mean_reverting(theta: float = 1.0, coupling: float = 0.5, gamma: float = 0.0, **kw) -> CoefficientTriple:
    """``b = -theta x + coupling (y - x)``, ``g = gamma x``; exercises the mean slot."""
    return CoefficientTriple(
        b=lambda s, x, y: -theta * x + coupling * (y - x),
        g=lambda s, x, y: gamma * x,
        name="mean_reverting",
        params={"theta": theta, "coupling": coupling, "gamma": gamma},
        **kw,
    )


def zero_coefficients(**kw) -> CoefficientTriple:
    return CoefficientTriple(name="zero", **kw)


CATALOG: dict[str, Callable[..., CoefficientTriple]] = {
    "zero": zero_coefficients,
    "linear_drift": linear_drift,
    "loglip_drift": loglip_drift,
    "power_drift": power_drift,
    "pure_diffusion": pure_diffusion,
    "h_only": h_only,
    "mean_reverting": mean_reverting,
}


# -- validation -----------------------------------------------------------------


def validate_coefficients(coeffs: CoefficientTriple, rho1: OsgoodKernel, rho2: OsgoodKernel | None,
                          weights: WeightProfile, t: float, T: float, n_samples: int = 512,
                          seed: int = 0, rtol: float = 1e-9) -> None:
    """Spot-check the declared squared-increment and growth bounds.

    Sample points mix wide draws with near-coincident pairs so that both the
    large- and small-increment regimes of the kernels are exercised.

    Raises
    ------
    CoefficientValidationError
        Naming the coefficient and the violating sample point.
    """
    g = substream(seed, 0, 0)
    n = n_samples
    s = t + (T - t) * g.random(n)
    x = g.normal(0.0, 2.0, n)
    y = g.normal(0.0, 2.0, n)
    near = 10.0 ** g.uniform(-6, 0, n)
    x2 = np.where(np.arange(n) % 2 == 0, x + near * g.standard_normal(n), g.normal(0.0, 2.0, n))
    y2 = np.where(np.arange(n) % 2 == 0, y + near * g.standard_normal(n), g.normal(0.0, 2.0, n))
    dx2, dy2 = (x - x2) ** 2, (y - y2) ** 2
    rhs = weights.kappa(s) * rho1(dx2)
    if rho2 is not None:
        rhs = rhs + weights.K_weight(s) * rho2(dy2)
    cb = coeffs.bounds
    eps = np.finfo(float).eps
    for label, f, c in (("b", coeffs.b, cb.c_b), ("h", coeffs.h, cb.c_h), ("g", coeffs.g, cb.c_g)):
        f1 = np.asarray(f(s, x, y), dtype=float)
        f2 = np.asarray(f(s, x2, y2), dtype=float)
        # compare |delta f| against sqrt(c rhs), allowing rounding in the subtraction
        lhs = np.abs(f1 - f2)
        cap = np.sqrt(c * rhs) * (1 + rtol) + 8 * eps * (np.abs(f1) + np.abs(f2)) + 1e-300
        bad = lhs > cap
        if np.any(bad):
            i = int(np.argmax(bad))
            raise CoefficientValidationError(
                f"increment bound for {label} violated at s={float(s[i])!r}, x={float(x[i])!r}, x'={float(x2[i])!r}, "
                f"y={float(y[i])!r}, y'={float(y2[i])!r}: |delta {label}|^2={float(lhs[i]) ** 2!r} "
                f"> c_{label}*rhs={float(c * rhs[i])!r}"
            )
    # growth on large arguments
    X = g.normal(0.0, 1e3, n)
    Yv = X if coeffs.mean_slot == "pointwise" else g.normal(0.0, 1e3, n)
    growth = sum(np.asarray(f(s, X, Yv), dtype=float) ** 2 for f in (coeffs.b, coeffs.h, coeffs.g))
    cap = cb.beta_b + cb.beta_h * X**2 + cb.beta_g * (1 + Yv**2)
    bad = growth > cap * (1 + rtol) + 1e-300
    if np.any(bad):
        i = int(np.argmax(bad))
        raise CoefficientValidationError(
            f"growth bound violated at s={float(s[i])!r}, x={float(X[i])!r}, y={float(Yv[i])!r}: "
            f"|b|^2+|h|^2+|g|^2={float(growth[i])!r} > {float(cap[i])!r}"
        )


# -- initial data ------------------------------------------------------------------


@dataclass(frozen=True)
class InitialData:
    """Initial value: ``constant``, ``uniform(low, high)`` or ``normal(mean, std)``, plus ``shift``.

    Random specs share one uniform per path (seeded from a dedicated stream),
    so two specs of the same kind are comonotone: ``uniform + 0.1`` minus
    ``uniform`` is exactly ``0.1`` on every path.
    """

    kind: str = "constant"
    value: float = 0.0
    low: float = 0.0
    high: float = 1.0
    mean: float = 0.0
    std: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "uniform", "normal"):
            raise DomainError(f"initial data kind must be constant/uniform/normal, got {self.kind!r}")

    @property
    def deterministic(self) -> bool:
        return self.kind == "constant"

    def sample(self, n_paths: int, seed: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(n_paths, self.value + self.shift)
        u = substream(seed, INITIAL_DATA_STREAM, 0).random(n_paths)
        if self.kind == "uniform":
            return self.low + (self.high - self.low) * u + self.shift
        return self.mean + self.std * ndtri(u) + self.shift

    @classmethod
    def from_spec(cls, spec) -> InitialData:
        if isinstance(spec, (int, float)):
            return cls("constant", value=float(spec))
        if isinstance(spec, dict):
            return cls(**{k: (v if k == "kind" else float(v)) for k, v in spec.items()})
        raise DomainError(f"cannot interpret initial data {spec!r}")


def _as_initial(v) -> InitialData:
    return v if isinstance(v, InitialData) else InitialData.from_spec(v)


class GapEstimate(NamedTuple):
    value: float
    stderr: float


def initial_gap(xi, eta, n_paths: int = 100_000, seed: int = 0) -> GapEstimate:
    """``E[|xi - eta|^2]``: exact for constants, Monte Carlo otherwise.

    Initial data carry no volatility dependence, so the sublinear expectation
    reduces to an ordinary mean here.
    """
    xi, eta = _as_initial(xi), _as_initial(eta)
    if xi.deterministic and eta.deterministic:
        d = (xi.value + xi.shift) - (eta.value + eta.shift)
        return GapEstimate(d * d, 0.0)
    d2 = (xi.sample(n_paths, seed) - eta.sample(n_paths, seed)) ** 2
    se = float(np.std(d2, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else math.nan
    return GapEstimate(float(np.mean(d2)), se)


# -- Euler scheme -------------------------------------------------------------------


def euler_step(coeffs: CoefficientTriple, s: float, x, mean_value, dt: float, dB, dQV):
    """``x + b dt + h dQV + g dB`` with coefficients at ``(s, x, mean_value)``."""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if np.any(np.asarray(dQV) < 0):
        raise DomainError("quadratic-variation increment must be nonnegative")
    nxt = (x + coeffs.b(s, x, mean_value) * dt + coeffs.h(s, x, mean_value) * dQV
           + coeffs.g(s, x, mean_value) * dB)
    arr = np.asarray(nxt)
    if not np.all(np.isfinite(arr)) or np.any(np.abs(arr) > BLOWUP_LEVEL):
        raise SimulationBlowUp(f"state left [-{BLOWUP_LEVEL:g}, {BLOWUP_LEVEL:g}] at s={s}")
    return nxt if arr.ndim else float(arr)


@dataclass
class PairedRun:
    """Deviation statistics of two solutions under common noise.

    ``u[j]`` estimates ``E^[sup_{t <= w <= s_j} |X_w - Y_w|^2]`` (running sup per
    path, mean per scenario, max over scenarios); ``pointwise[j]`` is the same
    without the running sup.
    """

    grid: np.ndarray
    u: np.ndarray
    u_stderr: np.ndarray
    argmax_scenario: np.ndarray
    scenario_means: np.ndarray
    scenario_stderr: np.ndarray
    pointwise: np.ndarray
    pointwise_stderr: np.ndarray
    initial_gap: float
    initial_gap_stderr: float
    n_scenarios: int
    n_paths: int
    seed: int
    X_T: np.ndarray = field(repr=False)
    Y_T: np.ndarray = field(repr=False)
    X: np.ndarray | None = field(default=None, repr=False)
    Y: np.ndarray | None = field(default=None, repr=False)

    def sensitivity(self, j: int = -1) -> np.ndarray:
        """Estimate at grid index ``j`` using only the first ``n`` scenarios, ``n = 1..S``."""
        return np.maximum.accumulate(self.scenario_means[:, j])


def simulate_pair(coeffs: CoefficientTriple, xi, eta, ensemble: GPathEnsemble,
                  t: float | None = None, T: float | None = None,
                  keep_paths: bool = False) -> PairedRun:
    """Advance ``X`` from ``xi`` and ``Y`` from ``eta`` with identical increments per path."""
    grid = ensemble.grid
    if t is not None and not math.isclose(grid[0], t, abs_tol=1e-12):
        raise DomainError(f"ensemble grid starts at {grid[0]}, expected t={t}")
    if T is not None and not math.isclose(grid[-1], T, abs_tol=1e-12):
        raise DomainError(f"ensemble grid ends at {grid[-1]}, expected T={T}")
    xi, eta = _as_initial(xi), _as_initial(eta)
    S, P, M = ensemble.increments.shape
    x0 = xi.sample(P, ensemble.seed)
    y0 = eta.sample(P, ensemble.seed)
    X = np.broadcast_to(x0, (S, P)).copy()
    Y = np.broadcast_to(y0, (S, P)).copy()
    D = (X - Y) ** 2
    R = D.copy()
    run_sup = np.empty((S, P, 2))
    means = np.empty((S, M + 1))
    ses = np.empty((S, M + 1))
    pmeans = np.empty((S, M + 1))
    pses = np.empty((S, M + 1))
    traj_x = np.empty((S, P, M + 1)) if keep_paths else None
    traj_y = np.empty((S, P, M + 1)) if keep_paths else None

    def record(j):
        run_sup[..., 0] = R
        run_sup[..., 1] = D
        _, _, m, se = sup_expectation_curve(run_sup)
        means[:, j], ses[:, j] = m[:, 0], se[:, 0]
        pmeans[:, j], pses[:, j] = m[:, 1], se[:, 1]
        if keep_paths:
            traj_x[..., j] = X
            traj_y[..., j] = Y

    record(0)
    pointwise = coeffs.mean_slot == "pointwise"
    for j in range(M):
        s, dt = float(grid[j]), float(grid[j + 1] - grid[j])
        dB = ensemble.increments[:, :, j]
        dQ = ensemble.qv_increments[:, j][:, None]
        mx = X if pointwise else X.mean(axis=1, keepdims=True)
        my = Y if pointwise else Y.mean(axis=1, keepdims=True)
        try:
            X = euler_step(coeffs, s, X, mx, dt, dB, dQ)
            Y = euler_step(coeffs, s, Y, my, dt, dB, dQ)
        except SimulationBlowUp as exc:
            raise SimulationBlowUp(f"{exc} (step {j} of {M})") from None
        D = (X - Y) ** 2
        np.maximum(R, D, out=R)
        record(j + 1)

    k = np.argmax(means, axis=0)
    kp = np.argmax(pmeans, axis=0)
    cols = np.arange(M + 1)
    gap = float(np.mean((x0 - y0) ** 2))
    gap_se = float(np.std((x0 - y0) ** 2, ddof=1) / math.sqrt(P)) if P > 1 else 0.0
    return PairedRun(
        grid=grid,
        u=means[k, cols],
        u_stderr=np.nanmax(ses, axis=0) if P > 1 else np.full(M + 1, math.nan),
        argmax_scenario=k,
        scenario_means=means,
        scenario_stderr=ses,
        pointwise=pmeans[kp, cols],
        pointwise_stderr=np.nanmax(pses, axis=0) if P > 1 else np.full(M + 1, math.nan),
        initial_gap=gap,
        initial_gap_stderr=gap_se,
        n_scenarios=S,
        n_paths=P,
        seed=ensemble.seed,
        X_T=X,
        Y_T=Y,
        X=traj_x,
        Y=traj_y,
    )
