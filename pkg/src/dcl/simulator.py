"""Monte Carlo engine for the refracted diffusion

    dU_t = (mu - K U_t 1{U_t > b}) dt + sigma dB_t

under two discretizations:

* Euler-Maruyama on a uniform grid;
* piecewise-constant noise: the Brownian part is frozen on each cell and the
  resulting piecewise-linear ODE is integrated exactly inside the cell.

Path functionals are estimated with per-path seeded streams, so results are
bit-identical for a given seed whatever the number of worker threads.
"""

from __future__ import annotations

import enum
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels as kern
from .errors import AccuracyWarning, ConfigError, DomainError
from .params import ControlParams, ModelParams
from .specfun import h_func, w_scale
from .valuation import value, value_rep

BLOCK = 2048
_PILOT_PATHS = 1000
_PILOT_SALT = 0x5851F42D4C957F2D


class Scheme(str, enum.Enum):
    EULER_MARUYAMA = "EulerMaruyama"
    PIECEWISE_NOISE = "PiecewiseNoise"

    @property
    def code(self) -> int:
        return kern.EULER if self is Scheme.EULER_MARUYAMA else kern.PIECEWISE


class Kind(str, enum.Enum):
    DISCOUNTED_DIVIDENDS = "DiscountedDividends"
    FIRST_PASSAGE_LAPLACE = "FirstPassageLaplace"
    TWO_SIDED_EXIT = "TwoSidedExit"
    DISCOUNTED_LINEAR_OU = "DiscountedLinearOU"


@dataclass(frozen=True)
class SimConfig:
    """Discretization and sampling settings.

    ``horizon=None`` asks :func:`estimate` to pick the truncation time from a
    pilot run so that the discounted tail stays below a tenth of the standard
    error.
    """

    step: float
    paths: int
    seed: int = 0
    scheme: Scheme = Scheme.EULER_MARUYAMA
    horizon: float | None = None
    bridge: bool = True

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ConfigError(f"step must be > 0, got {self.step}")
        if self.horizon is not None and not self.horizon >= self.step:
            raise ConfigError(f"horizon must be >= step, got {self.horizon}")
        if int(self.paths) != self.paths or self.paths < 1:
            raise ConfigError(f"paths must be a positive integer, got {self.paths}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        object.__setattr__(self, "scheme", Scheme(self.scheme))


@dataclass(frozen=True)
class PathFunctionalSpec:
    kind: Kind
    x0: float
    level: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Kind(self.kind))
        needs_level = self.kind is not Kind.DISCOUNTED_LINEAR_OU
        if needs_level and self.level is None:
            raise ConfigError(f"{self.kind.value} needs a level")
        if self.kind is Kind.DISCOUNTED_DIVIDENDS and self.level < 0:
            raise ConfigError("dividend barrier must be >= 0")
        if self.kind is Kind.FIRST_PASSAGE_LAPLACE and not self.level < self.x0:
            raise ConfigError("first passage from above needs level < x0")
        if self.kind is Kind.TWO_SIDED_EXIT and not 0 <= self.x0 <= self.level:
            raise ConfigError("two-sided exit needs 0 <= x0 <= level")

    @classmethod
    def dividends(cls, b: float, x0: float) -> "PathFunctionalSpec":
        return cls(Kind.DISCOUNTED_DIVIDENDS, x0, b)

    @classmethod
    def first_passage(cls, a: float, x0: float) -> "PathFunctionalSpec":
        return cls(Kind.FIRST_PASSAGE_LAPLACE, x0, a)

    @classmethod
    def two_sided(cls, a: float, x0: float) -> "PathFunctionalSpec":
        return cls(Kind.TWO_SIDED_EXIT, x0, a)

    @classmethod
    def linear_ou(cls, x0: float) -> "PathFunctionalSpec":
        return cls(Kind.DISCOUNTED_LINEAR_OU, x0)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float | None
    n: int
    scheme: Scheme
    step: float
    horizon: float
    seed: int

    def z_score(self, target: float) -> float | None:
        if self.std_error is None or self.std_error == 0:
            return None
        return (self.mean - target) / self.std_error


def worker_count() -> int:
    cap = os.environ.get("DCL_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"DCL_THREADS must be an integer, got {cap!r}") from None
    return n


def closed_form(m: ModelParams, c: ControlParams, spec: PathFunctionalSpec) -> float:
    """Analytic value of the functional the simulator estimates."""
    if spec.kind is Kind.DISCOUNTED_DIVIDENDS:
        return value(spec.x0, value_rep(spec.level, m, c))
    if spec.kind is Kind.FIRST_PASSAGE_LAPLACE:
        return h_func(spec.x0, m, c).value / h_func(spec.level, m, c).value
    if spec.kind is Kind.TWO_SIDED_EXIT:
        return w_scale(spec.x0, m, c).value / w_scale(spec.level, m, c).value
    return (spec.x0 + m.mu / c.q) / (c.q + c.k)


def _kernel_args(m: ModelParams, c: ControlParams, spec: PathFunctionalSpec):
    inf = math.inf
    if spec.kind is Kind.DISCOUNTED_DIVIDENDS:
        return dict(k=c.k, b=spec.level, lo=0.0, lo_pays=False, hi=inf, hi_pays=False,
                    running=kern.RUN_DIVIDENDS)
    if spec.kind is Kind.FIRST_PASSAGE_LAPLACE:
        return dict(k=c.k, b=-inf, lo=spec.level, lo_pays=True, hi=inf, hi_pays=False,
                    running=kern.RUN_NONE)
    if spec.kind is Kind.TWO_SIDED_EXIT:
        return dict(k=0.0, b=inf, lo=0.0, lo_pays=False, hi=spec.level, hi_pays=True,
                    running=kern.RUN_NONE)
    return dict(k=c.k, b=-inf, lo=-inf, lo_pays=False, hi=inf, hi_pays=False,
                running=kern.RUN_STATE)


def _tail_scale(m: ModelParams, c: ControlParams, spec: PathFunctionalSpec) -> float:
    """Bound on the undiscounted value remaining after truncation."""
    if spec.kind in (Kind.FIRST_PASSAGE_LAPLACE, Kind.TWO_SIDED_EXIT):
        return 1.0
    level = max(spec.x0, 0.0)
    if c.k > 0:
        level = max(level, m.mu / c.k)
    return (level + abs(m.mu) / c.q) / (c.q + c.k)


def truncation_horizon(m: ModelParams, c: ControlParams, spec: PathFunctionalSpec,
                       tol: float) -> float:
    """Smallest T with exp(-q T) * tail_scale <= tol."""
    scale = _tail_scale(m, c, spec)
    if not tol > 0:
        raise ConfigError(f"truncation tolerance must be > 0, got {tol}")
    return max(0.0, math.log(scale / tol) / c.q)


def sample_payoffs(m: ModelParams, c: ControlParams, spec: PathFunctionalSpec,
                   cfg: SimConfig, horizon: float, first_path: int = 0,
                   seed: int | None = None) -> np.ndarray:
    """Per-path discounted payoffs, ordered by path index."""
    if spec.kind is Kind.FIRST_PASSAGE_LAPLACE and not c.k > 0 and m.mu > 0:
        warnings.warn("first passage from above with k = 0 and mu > 0 may never occur",
                      AccuracyWarning, stacklevel=2)
    args = _kernel_args(m, c, spec)
    nsteps = max(1, int(math.ceil(horizon / cfg.step - 1e-9)))
    seed = np.uint64(cfg.seed if seed is None else seed)
    out = np.empty(cfg.paths)

    lanes = spec.kind is Kind.DISCOUNTED_LINEAR_OU and c.k > 0

    def run(start: int) -> None:
        stop = min(start + BLOCK, cfg.paths)
        if lanes:
            kern.ou_state_paths(out[start:stop], first_path + start, seed, cfg.scheme.code,
                                float(spec.x0), m.mu, m.sigma, c.k, c.q, cfg.step, nsteps)
            return
        kern.estimate_paths(out[start:stop], first_path + start, seed, cfg.scheme.code,
                            float(spec.x0), m.mu, m.sigma, float(args["k"]), float(args["b"]),
                            c.q, cfg.step, nsteps, float(args["lo"]), args["lo_pays"],
                            float(args["hi"]), args["hi_pays"], args["running"], cfg.bridge)

    starts = range(0, cfg.paths, BLOCK)
    workers = min(worker_count(), len(starts))
    if workers <= 1:
        for s in starts:
            run(s)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, starts))
    return out


def _auto_horizon(m, c, spec, cfg) -> float:
    scale = _tail_scale(m, c, spec)
    pilot_cfg = SimConfig(step=cfg.step, paths=min(cfg.paths, _PILOT_PATHS), seed=cfg.seed,
                          scheme=cfg.scheme, bridge=cfg.bridge)
    pilot_h = max(cfg.step, truncation_horizon(m, c, spec, 1e-3 * scale))
    pilot = sample_payoffs(m, c, spec, pilot_cfg, pilot_h, seed=cfg.seed ^ _PILOT_SALT)
    spread = float(np.std(pilot, ddof=1)) if pilot.size > 1 else 0.0
    target_se = spread / math.sqrt(cfg.paths)
    if not target_se > 0:
        target_se = 1e-3 * scale
    return max(cfg.step, truncation_horizon(m, c, spec, 0.1 * target_se))


def estimate(m: ModelParams, c: ControlParams, spec: PathFunctionalSpec,
             cfg: SimConfig) -> McEstimate:
    """Monte Carlo mean of a path functional with its standard error."""
    horizon = cfg.horizon if cfg.horizon is not None else _auto_horizon(m, c, spec, cfg)
    payoffs = sample_payoffs(m, c, spec, cfg, horizon)
    mean = float(np.mean(payoffs))
    se = float(np.std(payoffs, ddof=1) / math.sqrt(payoffs.size)) if payoffs.size > 1 else None
    if se is not None and se > 0.05 * abs(mean):
        warnings.warn(f"standard error {se:.3g} exceeds 5% of the mean {mean:.3g}",
                      AccuracyWarning, stacklevel=2)
    return McEstimate(mean=mean, std_error=se, n=int(payoffs.size), scheme=cfg.scheme,
                      step=cfg.step, horizon=horizon, seed=int(cfg.seed))


_STOPS = {"horizon": 0, "ruin": 1, "level": 2}


def simulate_path(m: ModelParams, c: ControlParams, b: float, x0: float, cfg: SimConfig,
                  stop: str = "ruin", level: float | None = None,
                  path_index: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """One discretized path of the refracted process up to the stop rule.

    ``stop`` is ``"ruin"`` (first grid time with U < 0), ``"level"`` (first
    grid time on the other side of ``level``) or ``"horizon"``.
    """
    if stop not in _STOPS:
        raise ConfigError(f"unknown stopping rule {stop!r}; expected one of {sorted(_STOPS)}")
    if stop == "level" and level is None:
        raise ConfigError("stop='level' needs a level")
    if cfg.horizon is None:
        raise ConfigError("simulate_path needs an explicit horizon")
    nsteps = max(1, int(math.ceil(cfg.horizon / cfg.step - 1e-9)))
    states = kern.record_path(np.uint64(cfg.seed), path_index, cfg.scheme.code, float(x0),
                              m.mu, m.sigma, c.k, float(b), cfg.step, nsteps,
                              _STOPS[stop], float(level if level is not None else 0.0))
    times = cfg.step * np.arange(states.size)
    return times, states


@dataclass(frozen=True)
class ConvergenceRow:
    mesh: float
    mean_sup_distance: float
    std_error: float
    # same mesh, same increments, other scheme
    cross_scheme_distance: float


def strong_convergence_check(m: ModelParams, c: ControlParams, b: float, x0: float,
                             horizon: float, meshes, paths: int, seed: int = 0,
                             scheme: Scheme = Scheme.PIECEWISE_NOISE,
                             refinement: int = 8) -> list[ConvergenceRow]:
    """Mean of sup_t |U^h - U^ref| over coupled paths, one row per mesh.

    The reference path uses step ``min(meshes) / refinement`` and every mesh
    is an integer multiple of it, so all meshes see the same Brownian path.
    The supremum is taken over the nodes of the coarser grid, on [0, horizon]
    without killing.
    """
    meshes = [float(h) for h in meshes]
    if not meshes or any(a <= b_ for a, b_ in zip(meshes, meshes[1:])):
        raise ConfigError("meshes must be a non-empty strictly decreasing sequence")
    if refinement < 1:
        raise ConfigError("refinement must be >= 1")
    h_ref = meshes[-1] / refinement
    ratios = np.array([round(h / h_ref) for h in meshes], dtype=np.int64)
    if np.any(np.abs(ratios * h_ref - meshes) > 1e-9 * np.array(meshes)):
        raise ConfigError("meshes must be integer multiples of the finest mesh / refinement")
    n_ref = int(round(horizon / h_ref))
    if np.any(n_ref % ratios):
        raise ConfigError("horizon must be a whole number of steps of every mesh")
    scheme = Scheme(scheme)
    dist = np.empty((paths, len(meshes)))
    cross = np.empty((paths, len(meshes)))

    def run(start: int) -> None:
        stop = min(start + BLOCK, paths)
        kern.coupled_sup_distances(dist[start:stop], cross[start:stop], start, np.uint64(seed),
                                   scheme.code, float(x0), m.mu, m.sigma, c.k, float(b),
                                   h_ref, n_ref, ratios)

    starts = range(0, paths, BLOCK)
    workers = min(worker_count(), len(starts))
    if workers <= 1:
        for s in starts:
            run(s)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, starts))
    se = dist.std(axis=0, ddof=1) / math.sqrt(paths) if paths > 1 else np.zeros(len(meshes))
    return [ConvergenceRow(h, float(d), float(s), float(x))
            for h, d, s, x in zip(meshes, dist.mean(axis=0), se, cross.mean(axis=0))]

