"""G-Brownian motion as a finite family of volatility-controlled Brownian scenarios.

The sublinear expectation is realised as the maximum of per-scenario
empirical means.  Because the scenario family is finite, that maximum is a
lower estimate of the sup over all admissible volatility controls.

Random numbers come from Philox keyed by ``(seed, scenario)`` with the path
index in the counter, so every path has its own substream and results do
not depend on evaluation order or on how many paths are drawn.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .kernel import DomainError

INITIAL_DATA_STREAM = 2**64 - 1
CONTROL_STREAM = 2**64 - 2


def substream(seed: int, scenario: int, path: int) -> np.random.Generator:
    """Independent generator for one ``(seed, scenario, path)`` triple."""
    key = np.array([seed % 2**64, scenario % 2**64], dtype=np.uint64)
    counter = np.array([0, path, 0, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True)
class AmbiguitySet:
    """Volatility interval ``[sigma_low, sigma_high]`` (one driving noise)."""

    sigma_low: float
    sigma_high: float
    dimension: int = 1

    def __post_init__(self):
        if not (0 < self.sigma_low <= self.sigma_high):
            raise DomainError(
                f"need 0 < sigma_low <= sigma_high, got [{self.sigma_low}, {self.sigma_high}]"
            )
        if self.dimension != 1:
            raise DomainError("only one-dimensional driving noise is supported")


# -- strategies ---------------------------------------------------------------


@dataclass(frozen=True)
class Extremes:
    pass


@dataclass(frozen=True)
class BangBang:
    """Controls alternating between the extremes, switching ``switches`` times."""

    switches: int = 1


@dataclass(frozen=True)
class LatinGrid:
    """``levels`` constant controls evenly spaced over the volatility interval."""

    levels: int = 3


@dataclass(frozen=True)
class RandomizedControls:
    count: int = 8
    seed: int = 0


Strategy = Extremes | BangBang | LatinGrid | RandomizedControls


def strategy_from_spec(spec) -> Strategy:
    """Parse ``"extremes"``, ``"bangbang"``/``{"bangbang": 2}``, ``{"latin": 5}``, ...."""
    if isinstance(spec, str):
        name, arg = spec, None
    elif isinstance(spec, dict) and len(spec) == 1:
        (name, arg), = spec.items()
    else:
        raise DomainError(f"ambiguity.strategies: cannot parse {spec!r}")
    name = name.lower().replace("_", "").replace("-", "")
    if name == "extremes":
        return Extremes()
    if name == "bangbang":
        return BangBang(int(arg) if arg is not None else 1)
    if name in ("latingrid", "latin"):
        return LatinGrid(int(arg) if arg is not None else 3)
    if name in ("randomizedcontrols", "randomized", "random"):
        if isinstance(arg, dict):
            return RandomizedControls(int(arg.get("count", 8)), int(arg.get("seed", 0)))
        return RandomizedControls(int(arg) if arg is not None else 8)
    raise DomainError(f"ambiguity.strategies: unknown strategy {name!r}")


@dataclass(frozen=True)
class ScenarioFamily:
    """Deterministic piecewise-constant volatility controls on a control grid.

    ``controls[i, j]`` is the volatility of scenario ``i`` on
    ``[grid[j], grid[j+1])``.
    """

    ambiguity: AmbiguitySet
    grid: np.ndarray
    controls: np.ndarray
    strategies: tuple = ()

    def __post_init__(self):
        lo, hi = self.ambiguity.sigma_low, self.ambiguity.sigma_high
        if self.controls.ndim != 2 or self.controls.shape[1] != len(self.grid) - 1:
            raise DomainError("controls must have one column per control interval")
        if np.any(self.controls < lo) or np.any(self.controls > hi):
            raise DomainError("control values must lie in [sigma_low, sigma_high]")

    def __len__(self):
        return self.controls.shape[0]

    def subset(self, n: int) -> ScenarioFamily:
        return ScenarioFamily(self.ambiguity, self.grid, self.controls[:n], self.strategies)

    def on_grid(self, sim_grid: np.ndarray) -> np.ndarray:
        """Volatility per scenario on each interval of a (finer) simulation grid."""
        sim_grid = np.asarray(sim_grid, dtype=float)
        if sim_grid[0] < self.grid[0] - 1e-12 or sim_grid[-1] > self.grid[-1] + 1e-12:
            raise DomainError("simulation grid extends past the control grid")
        mids = 0.5 * (sim_grid[1:] + sim_grid[:-1])
        idx = np.clip(np.searchsorted(self.grid, mids, side="right") - 1, 0, self.controls.shape[1] - 1)
        return self.controls[:, idx]


def _bangbang(lo: float, hi: float, n: int, switches: int) -> list[np.ndarray]:
    out = []
    for k in range(1, switches + 1):
        for cut in itertools.combinations(range(1, n), k):
            for first in (lo, hi):
                row = np.empty(n)
                level, start = first, 0
                for c in (*cut, n):
                    row[start:c] = level
                    level = hi if level == lo else lo
                    start = c
                out.append(row)
    return out


def generate_scenarios(ambiguity: AmbiguitySet, strategy: Strategy | Sequence[Strategy],
                       grid) -> ScenarioFamily:
    """Build the scenario family; the two constant extremes are always included.

    ``BangBang(k)`` enumerates every placement of ``1..k`` switches over the
    interior breakpoints of ``grid`` and both starting levels.  Duplicate
    controls are dropped, keeping first occurrence.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise DomainError("scenario grid needs at least two points")
    if np.any(np.diff(grid) <= 0):
        raise DomainError("scenario grid must be strictly increasing")
    strategies = tuple(strategy) if isinstance(strategy, (list, tuple)) else (strategy,)
    lo, hi = ambiguity.sigma_low, ambiguity.sigma_high
    n = len(grid) - 1
    rows = [np.full(n, lo), np.full(n, hi)]
    for st in strategies:
        if isinstance(st, Extremes):
            continue
        if isinstance(st, BangBang):
            rows.extend(_bangbang(lo, hi, n, st.switches))
        elif isinstance(st, LatinGrid):
            rows.extend(np.full(n, v) for v in np.linspace(lo, hi, st.levels))
        elif isinstance(st, RandomizedControls):
            for i in range(st.count):
                g = substream(st.seed, CONTROL_STREAM, i)
                rows.append(lo + (hi - lo) * g.random(n))
        else:
            raise DomainError(f"unknown strategy {st!r}")
    arr = np.vstack(rows)
    _, first = np.unique(arr, axis=0, return_index=True)
    arr = arr[np.sort(first)]
    return ScenarioFamily(ambiguity, grid, arr, strategies)


# -- path ensembles -----------------------------------------------------------


@dataclass(frozen=True)
class GPathEnsemble:
    """B-increments per ``(scenario, path, step)`` and deterministic QV increments.

    ``qv_increments[i, j] = sigma[i, j]**2 * (grid[j+1] - grid[j])`` is shared
    by every path of scenario ``i``.
    """

    grid: np.ndarray
    increments: np.ndarray
    qv_increments: np.ndarray
    sigma: np.ndarray
    seed: int
    family: ScenarioFamily = field(repr=False)

    @property
    def n_scenarios(self) -> int:
        return self.increments.shape[0]

    @property
    def n_paths(self) -> int:
        return self.increments.shape[1]

    def records(self):
        """Flat rows ``(scenario, path, time_index, dB, dQV)``."""
        S, P, M = self.increments.shape
        for i in range(S):
            for p in range(P):
                for j in range(M):
                    yield i, p, j, float(self.increments[i, p, j]), float(self.qv_increments[i, j])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scenario", "path", "time_index", "dB", "dQV"])
            for i, p, j, db, dq in self.records():
                w.writerow([i, p, j, repr(db), repr(dq)])

    BINARY_DTYPE = np.dtype([("scenario", "<u4"), ("path", "<u4"), ("time_index", "<u4"),
                             ("dB", "<f8"), ("dQV", "<f8")])

    def to_binary(self, path) -> None:
        """Little-endian packed records, layout :attr:`BINARY_DTYPE`."""
        S, P, M = self.increments.shape
        rec = np.empty(S * P * M, dtype=self.BINARY_DTYPE)
        i, p, j = np.meshgrid(np.arange(S), np.arange(P), np.arange(M), indexing="ij")
        rec["scenario"] = i.ravel()
        rec["path"] = p.ravel()
        rec["time_index"] = j.ravel()
        rec["dB"] = self.increments.ravel()
        rec["dQV"] = np.broadcast_to(self.qv_increments[:, None, :], (S, P, M)).ravel()
        rec.tofile(path)


def sample_paths(family: ScenarioFamily, paths_per_scenario: int, seed: int,
                 grid=None) -> GPathEnsemble:
    """Draw Brownian increments for every scenario.

    ``grid`` is the simulation grid (defaults to the control grid); it must
    lie within the control grid's span.
    """
    if paths_per_scenario < 1:
        raise DomainError("paths_per_scenario must be >= 1")
    grid = family.grid if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise DomainError("simulation grid must be strictly increasing")
    dt = np.diff(grid)
    sigma = family.on_grid(grid)
    S, M = sigma.shape
    z = np.empty((S, paths_per_scenario, M))
    for i in range(S):
        for p in range(paths_per_scenario):
            z[i, p] = substream(seed, i, p).standard_normal(M)
    scale = sigma * np.sqrt(dt)
    return GPathEnsemble(
        grid=grid,
        increments=z * scale[:, None, :],
        qv_increments=sigma**2 * dt,
        sigma=sigma,
        seed=int(seed),
        family=family,
    )


# -- sublinear expectation ------------------------------------------------------


class SupExpectation(NamedTuple):
    estimate: float
    argmax_scenario: int
    per_scenario_means: np.ndarray
    std_errors: np.ndarray


def _std_errors(arrs) -> np.ndarray:
    return np.array([np.std(a, ddof=1) / math.sqrt(len(a)) if len(a) > 1 else math.nan for a in arrs])


def sup_expectation(values) -> SupExpectation:
    """Max over scenarios of the empirical mean (ties go to the lowest index).

    ``values`` is a 2-D ``(scenarios, samples)`` array or a sequence of 1-D
    arrays, one per scenario.
    """
    if isinstance(values, np.ndarray) and values.ndim == 2:
        arrs = list(values)
    else:
        arrs = [np.asarray(v, dtype=float).ravel() for v in values]
    if not arrs or any(len(a) == 0 for a in arrs):
        raise DomainError("sup_expectation needs at least one scenario with at least one sample")
    means = np.array([np.mean(a) for a in arrs])
    k = int(np.argmax(means))
    return SupExpectation(float(means[k]), k, means, _std_errors(arrs))


def sup_expectation_curve(values: np.ndarray):
    """Vectorised version over time for ``values[scenario, path, time]``.

    Returns ``(estimate[time], argmax[time], means[scenario, time], stderr[scenario, time])``.
    """
    means = values.mean(axis=1)
    P = values.shape[1]
    if P > 1:
        stderr = values.std(axis=1, ddof=1) / math.sqrt(P)
    else:
        stderr = np.full_like(means, math.nan)
    arg = np.argmax(means, axis=0)
    return means.max(axis=0), arg, means, stderr
