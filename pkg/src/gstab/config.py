"""Declarative TOML experiment configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .ambiguity import AmbiguitySet, ScenarioFamily, generate_scenarios, strategy_from_spec
from .bihari import BihariTransform, ConstantCollection, StabilityModulus, constant_collection
from .kernel import (CoefficientBounds, DomainError, KernelSum, OsgoodKernel, WeightProfile,
                     kernel_from_spec, profile_from_spec)
from .msde import CATALOG, CoefficientTriple, InitialData
from . import stability  # noqa: F401  registers the saturating catalog entry


class ConfigError(ValueError):
    """Configuration problem; the message starts with the offending field path."""

    def __init__(self, field_path: str, msg: str):
        super().__init__(f"{field_path}: {msg}")
        self.field = field_path


def defaults_for_A4(ambiguity: AmbiguitySet, t: float, T: float) -> dict:
    """Default integral constants for a volatility interval.

    ``C_BDG = 4 sigma_high^2`` (Doob L2 constant times the largest variance rate)
    and ``C_QV = sigma_high^4`` (Cauchy-Schwarz on ``d<B> <= sigma_high^2 dr``).
    ``t`` and ``T`` are accepted for interface symmetry; neither default
    depends on the horizon.
    """
    if not t < T:
        raise DomainError("need t < T")
    s2 = ambiguity.sigma_high**2
    return {"C_BDG": 4.0 * s2, "C_QV": s2 * s2}


def _section(raw: dict, name: str, required: bool = False) -> dict:
    sec = raw.get(name)
    if sec is None:
        if required:
            raise ConfigError(name, "section is required")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be a table")
    return sec


def _num(sec: dict, key: str, path: str, default=None, positive=False, nonneg=False) -> float:
    v = sec.get(key, default)
    if v is None:
        raise ConfigError(f"{path}.{key}", "is required")
    try:
        v = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{path}.{key}", "must be finite")
    if positive and v <= 0:
        raise ConfigError(f"{path}.{key}", "must be positive")
    if nonneg and v < 0:
        raise ConfigError(f"{path}.{key}", "must be nonnegative")
    return v


def _int(sec: dict, key: str, path: str, default=None, minimum: int = 0) -> int:
    v = sec.get(key, default)
    if v is None:
        raise ConfigError(f"{path}.{key}", "is required")
    if isinstance(v, bool) or not isinstance(v, int) and not (isinstance(v, float) and v.is_integer()):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {v!r}")
    v = int(v)
    if v < minimum:
        raise ConfigError(f"{path}.{key}", f"must be >= {minimum}")
    return v


def _floats(v, path: str) -> np.ndarray:
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected a list of numbers, got {v!r}") from None
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigError(path, "expected a nonempty list of numbers")
    return arr


def _geom(sec: dict, path: str, lo: float, hi: float, n: int, decreasing=False) -> np.ndarray:
    if "values" in sec:
        return _floats(sec["values"], f"{path}.values")
    a = _num(sec, "u_min", path, lo, positive=True)
    b = _num(sec, "u_max", path, hi, positive=True)
    k = _int(sec, "points", path, n, minimum=1)
    if a > b:
        raise ConfigError(f"{path}.u_min", "must not exceed u_max")
    g = np.geomspace(a, b, k)
    return g[::-1] if decreasing else g


@dataclass
class ExperimentConfig:
    rho1: OsgoodKernel
    rho2: OsgoodKernel | None
    y_star: float
    weights: WeightProfile
    bounds: CoefficientBounds
    C1: float
    C_BDG: float
    C_QV: float
    absorb_horizon: bool
    ambiguity: AmbiguitySet
    strategies: list
    control_steps: int
    t: float
    T: float
    steps: int
    coefficients: CoefficientTriple | None
    xi: InitialData
    eta: InitialData
    paths_per_scenario: int
    seed: int
    tolerance_k: float
    partition_steps: int | None
    validate: bool
    sections: dict = field(default_factory=dict)
    constants_source: dict = field(default_factory=dict)

    @property
    def kernel(self) -> OsgoodKernel:
        return self.rho1 if self.rho2 is None else KernelSum((self.rho1, self.rho2))

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.t, self.T, self.steps + 1)

    @property
    def control_grid(self) -> np.ndarray:
        return np.linspace(self.t, self.T, self.control_steps + 1)

    def transform(self) -> BihariTransform:
        return BihariTransform(self.kernel, y_star=self.y_star)

    def collection(self) -> ConstantCollection:
        return constant_collection(self.bounds, self.weights, self.C_BDG, self.C_QV, self.t, self.T,
                                   C1=self.C1, absorb_horizon=self.absorb_horizon)

    def modulus(self) -> StabilityModulus:
        return StabilityModulus.from_collection(self.transform(), self.collection())

    def scenarios(self) -> ScenarioFamily:
        return generate_scenarios(self.ambiguity, self.strategies, self.control_grid)

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    def echo(self) -> dict:
        """Every constant that enters a report, for the audit trail."""
        cc = self.collection()
        return {
            "kernel": {"rho1": self.rho1.describe(), "rho2": None if self.rho2 is None else self.rho2.describe(),
                       "y_star": self.y_star},
            "weights": {"kappa": repr(self.weights.kappa), "K": repr(self.weights.K_weight)},
            "bounds": {k: getattr(self.bounds, k) for k in ("c_b", "c_h", "c_g", "beta_b", "beta_h", "beta_g")},
            "constants": {"C1": self.C1, "C_BDG": self.C_BDG, "C_QV": self.C_QV,
                          "absorb_horizon": self.absorb_horizon, "source": dict(self.constants_source),
                          "gamma": repr(cc.gamma), "C0": cc.C0, "factor": cc.factor},
            "ambiguity": {"sigma_low": self.ambiguity.sigma_low, "sigma_high": self.ambiguity.sigma_high,
                          "strategies": [repr(s) for s in self.strategies], "control_steps": self.control_steps},
            "grid": {"t": self.t, "T": self.T, "steps": self.steps},
            "coefficients": None if self.coefficients is None else
            {"name": self.coefficients.name, "params": dict(self.coefficients.params),
             "mean_slot": self.coefficients.mean_slot},
            "initial": {"xi": vars(self.xi), "eta": vars(self.eta)},
            "simulation": {"paths_per_scenario": self.paths_per_scenario, "seed": self.seed,
                           "tolerance_k": self.tolerance_k, "partition_steps": self.partition_steps},
        }


def _kernel(spec, path: str) -> OsgoodKernel:
    try:
        return kernel_from_spec(spec)
    except DomainError as exc:
        msg = str(exc)
        if msg.startswith("kernel.family: "):
            msg = msg[len("kernel.family: "):]
            path = f"{path}.family"
        raise ConfigError(path, msg) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def _coefficients(sec: dict, cfg_ctx: dict) -> CoefficientTriple | None:
    if not sec:
        return None
    name = sec.get("name")
    if name not in CATALOG:
        raise ConfigError("coefficients.name", f"unknown catalog entry {name!r}; choose from {sorted(CATALOG)}")
    params = dict(sec.get("params", {}))
    mean_slot = sec.get("mean_slot", "pointwise")
    try:
        if name == "saturating":
            coeffs = CATALOG[name](cfg_ctx["kernel"], cfg_ctx["weights"], cfg_ctx["t"], cfg_ctx["T"], **params)
            return CoefficientTriple(coeffs.b, coeffs.h, coeffs.g, cfg_ctx["bounds"], mean_slot, name, params)
        return CATALOG[name](**params, bounds=cfg_ctx["bounds"], mean_slot=mean_slot)
    except TypeError as exc:
        raise ConfigError("coefficients.params", str(exc)) from None
    except DomainError as exc:
        raise ConfigError("coefficients", str(exc)) from None


def _initial(spec, path: str) -> InitialData:
    try:
        return InitialData.from_spec(spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a parsed TOML document into an :class:`ExperimentConfig`."""
    grid = _section(raw, "grid", required=True)
    t = _num(grid, "t", "grid", 0.0)
    T = _num(grid, "T", "grid", 1.0)
    if not t < T:
        raise ConfigError("grid.T", f"must exceed grid.t={t}")
    steps = _int(grid, "steps", "grid", 512, minimum=1)

    ksec = _section(raw, "kernel", required=True)
    if "rho1" not in ksec:
        raise ConfigError("kernel.rho1", "is required")
    rho1 = _kernel(ksec["rho1"], "kernel.rho1")
    rho2 = _kernel(ksec["rho2"], "kernel.rho2") if "rho2" in ksec else None
    y_star = _num(ksec, "y_star", "kernel", 1.0, positive=True)

    wsec = _section(raw, "weights")
    try:
        weights = WeightProfile(profile_from_spec(wsec.get("kappa", 1.0), t, T),
                                profile_from_spec(wsec.get("K", 0.0), t, T))
    except DomainError as exc:
        raise ConfigError("weights", str(exc)) from None

    bsec = _section(raw, "bounds")
    bounds = CoefficientBounds(**{k: _num(bsec, k, "bounds", 0.0, nonneg=True)
                                  for k in ("c_b", "c_h", "c_g", "beta_b", "beta_h", "beta_g")})
    unknown = set(bsec) - {"c_b", "c_h", "c_g", "beta_b", "beta_h", "beta_g"}
    if unknown:
        raise ConfigError(f"bounds.{sorted(unknown)[0]}", "unknown field")

    asec = _section(raw, "ambiguity", required=True)
    try:
        amb = AmbiguitySet(_num(asec, "sigma_low", "ambiguity"), _num(asec, "sigma_high", "ambiguity"))
    except DomainError as exc:
        raise ConfigError("ambiguity", str(exc)) from None
    strat_spec = asec.get("strategies", ["extremes"])
    if isinstance(strat_spec, (str, dict)):
        strat_spec = [strat_spec]
    try:
        strategies = [strategy_from_spec(s) for s in strat_spec]
    except DomainError as exc:
        raise ConfigError("ambiguity.strategies", str(exc).split(": ", 1)[-1]) from None
    control_steps = _int(asec, "control_steps", "ambiguity", 4, minimum=1)

    csec = _section(raw, "constants")
    defaults = defaults_for_A4(amb, t, T)
    source = {k: ("config" if k in csec else "default") for k in ("C_BDG", "C_QV")}
    C1 = _num(csec, "C1", "constants", 4.0, positive=True)
    C_BDG = _num(csec, "C_BDG", "constants", defaults["C_BDG"], nonneg=True)
    C_QV = _num(csec, "C_QV", "constants", defaults["C_QV"], nonneg=True)
    absorb = bool(csec.get("absorb_horizon", True))

    ctx = {"kernel": rho1 if rho2 is None else KernelSum((rho1, rho2)), "weights": weights, "t": t, "T": T,
           "bounds": bounds}
    coeffs = _coefficients(_section(raw, "coefficients"), ctx)

    isec = _section(raw, "initial")
    xi = _initial(isec.get("xi", 0.0), "initial.xi")
    eta = _initial(isec.get("eta", 0.0), "initial.eta")

    ssec = _section(raw, "simulation")
    part = ssec.get("partition_steps")
    cfg = ExperimentConfig(
        rho1=rho1, rho2=rho2, y_star=y_star, weights=weights, bounds=bounds,
        C1=C1, C_BDG=C_BDG, C_QV=C_QV, absorb_horizon=absorb,
        ambiguity=amb, strategies=strategies, control_steps=control_steps,
        t=t, T=T, steps=steps, coefficients=coeffs, xi=xi, eta=eta,
        paths_per_scenario=_int(ssec, "paths_per_scenario", "simulation", 200, minimum=1),
        seed=_int(ssec, "seed", "simulation", 0, minimum=0),
        tolerance_k=_num(ssec, "tolerance_k", "simulation", 3.0, nonneg=True),
        partition_steps=None if part is None else _int(ssec, "partition_steps", "simulation", minimum=1),
        validate=bool(ssec.get("validate", True)),
        sections={k: v for k, v in raw.items() if isinstance(v, dict)},
        constants_source=source,
    )
    if cfg.steps % cfg.control_steps != 0:
        raise ConfigError("ambiguity.control_steps", f"must divide grid.steps={cfg.steps}")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"cannot parse TOML: {exc}") from None
    return parse_config(raw)


def u_grid_from(sec: dict, path: str, lo=1e-6, hi=10.0, n=30, decreasing=False) -> np.ndarray:
    return _geom(sec, path, lo, hi, n, decreasing)


def floats_from(sec: dict, key: str, path: str, default) -> np.ndarray:
    return _floats(sec.get(key, default), f"{path}.{key}")

