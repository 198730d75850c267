"""Command-line front end.

Subcommands reproduce the standard experiments (value curves, the value
surface over (b, K), the optimal barrier as a function of K) and run the
verification and simulation drivers. Every output carries a header echoing
the resolved configuration; CSV headers are ``#`` comment lines.

Settings are resolved in this order, later ones winning: built-in preset,
``[DEFAULT]`` section of the config file, the subcommand's section of the
config file, command-line flags.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np

from .errors import (AccuracyError, BracketError, ConfigError, DegenerateError,
                     DomainError)
from .optimizer import barrier_residual, classical_barrier, solve_b_star
from .params import ControlParams, ModelParams
from .simulator import (Kind, PathFunctionalSpec, Scheme, SimConfig, closed_form,
                        estimate)
from .specfun import h_func, h_over_dh, w_scale
from .valuation import evaluate, hjb_check, pasting, value, value_rep

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

PRESETS: dict[str, dict[str, Any]] = {
    "fig1-top": dict(mu=0.3, sigma=4.5, q=0.025, k=0.1, x0=4.6),
    "fig1-bottom": dict(mu=0.3, sigma=4.5, q=0.05, k=0.1, x0=4.6),
    "fig2": dict(mu=0.3, sigma=2.5, q=0.07, k=0.1, x0=1.0,
                 grid_k_min=0.01, grid_k_max=1.0, grid_k_count=40, grid_b_count=81),
    "fig3": dict(mu=0.3, sigma=4.5, q=0.07, k=0.1, x0=1.0,
                 grid_k_min=0.01, grid_k_max=1000.0, grid_k_count=40),
    "remark": dict(mu=0.3, sigma=4.5, q=0.05, k=0.35, x0=4.6),
}

# applied between the preset and the config file
COMMAND_DEFAULTS: dict[str, dict[str, Any]] = {
    # the Monte Carlo table in verify is a smoke check, kept cheap
    "verify": dict(format="json", paths=10000, step=0.01),
    "simulate": dict(format="json"),
}

DEFAULT_PRESET = {
    "value-curve": "fig1-top",
    "value-surface": "fig2",
    "barrier-curve": "fig3",
    "verify": "fig1-top",
    "simulate": "fig1-top",
}

FUNCTIONALS = {
    "dividends": Kind.DISCOUNTED_DIVIDENDS,
    "first-passage": Kind.FIRST_PASSAGE_LAPLACE,
    "two-sided": Kind.TWO_SIDED_EXIT,
    "linear-ou": Kind.DISCOUNTED_LINEAR_OU,
}


@dataclass
class ExperimentConfig:
    experiment: str
    preset: str
    mu: float
    sigma: float
    q: float
    k: float
    x0: float
    b: float | None = None
    grid_b_min: float = 0.0
    grid_b_max: float | None = None  # None: c*
    grid_b_count: int = 401
    grid_k_min: float = 0.01
    grid_k_max: float = 1.0
    grid_k_count: int = 40
    grid_k_spacing: str = "log"
    grid_x_max: float | None = None  # None: 2 max(c*, b)
    grid_x_count: int = 200
    paths: int = 20000
    step: float = 1e-3
    seed: int = 0
    scheme: str = Scheme.EULER_MARUYAMA.value
    horizon: float | None = None
    functional: str = "dividends"
    level: float | None = None
    out: str | None = None
    format: str = "csv"
    model: ModelParams = field(init=False, repr=False)
    control: ControlParams = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.model = ModelParams(self.mu, self.sigma)
        self.control = ControlParams(self.q, self.k)
        for name in ("grid_b_count", "grid_k_count", "grid_x_count"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{name.replace('_', '-')} must be >= 2")
        if self.grid_b_max is not None and not self.grid_b_max > self.grid_b_min:
            raise ConfigError("grid-b range is empty: need grid-b-max > grid-b-min")
        if self.grid_b_min < 0:
            raise ConfigError("grid-b-min must be >= 0")
        if not 0 < self.grid_k_min <= self.grid_k_max:
            raise ConfigError("grid-k range must satisfy 0 < grid-k-min <= grid-k-max")
        if self.grid_k_spacing not in ("log", "linear"):
            raise ConfigError("grid-k-spacing must be 'log' or 'linear'")
        if self.grid_x_max is not None and not self.grid_x_max > 0:
            raise ConfigError("grid-x-max must be > 0")
        if self.b is not None and self.b < 0:
            raise ConfigError("b must be >= 0")
        if self.functional not in FUNCTIONALS:
            raise ConfigError(f"functional must be one of {sorted(FUNCTIONALS)}")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'")
        Scheme(self.scheme)

    def echo(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("model", None)
        d.pop("control", None)
        return d

    def k_grid(self) -> np.ndarray:
        if self.grid_k_min == self.grid_k_max:
            return np.array([self.grid_k_min])
        if self.grid_k_spacing == "log":
            return np.geomspace(self.grid_k_min, self.grid_k_max, self.grid_k_count)
        return np.linspace(self.grid_k_min, self.grid_k_max, self.grid_k_count)


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig) if f.init}


def _coerce(name: str, raw: Any) -> Any:
    if raw is None:
        return None
    kind = _FIELD_TYPES[name]
    text = str(raw).strip()
    if "None" in kind and text.lower() in ("", "none", "auto"):
        return None
    try:
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"{name.replace('_', '-')}: cannot parse {text!r}") from None
    return text


def _read_config(path: str, section: str) -> dict[str, str]:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    items = dict(parser.defaults())
    if parser.has_section(section):
        items.update(parser.items(section))
    out = {}
    for key, val in items.items():
        name = key.replace("-", "_")
        if name not in _FIELD_TYPES or name == "experiment":
            raise ConfigError(f"{path}: unknown key {key!r}")
        out[name] = val
    return out


def resolve(args: argparse.Namespace) -> ExperimentConfig:
    """Merge preset, config file and flags into one validated config."""
    from_file = _read_config(args.config, args.command) if args.config else {}
    flags = {name: getattr(args, name) for name in _FIELD_TYPES
             if getattr(args, name, None) is not None}
    preset = flags.get("preset") or from_file.get("preset") or DEFAULT_PRESET[args.command]
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    merged: dict[str, Any] = dict(PRESETS[preset])
    merged.update(COMMAND_DEFAULTS.get(args.command, {}))
    merged.update(from_file)
    merged.update(flags)
    merged["preset"] = preset
    merged["experiment"] = args.command
    values = {k: _coerce(k, v) if k not in ("preset", "experiment") else v
              for k, v in merged.items()}
    return ExperimentConfig(**values)


# ---------------------------------------------------------------- output

def _num(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return "%.12g" % x
    return str(x)


def render_csv(cfg: ExperimentConfig, columns: list[str], rows: list[dict],
               notes: dict[str, Any] | None = None) -> str:
    buf = io.StringIO()
    for key, val in cfg.echo().items():
        buf.write(f"# {key} = {_num(val)}\n")
    for key, val in (notes or {}).items():
        buf.write(f"# {key} = {_num(val)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_num(row.get(c)) for c in columns])
    return buf.getvalue()


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def render_json(cfg: ExperimentConfig, payload: dict) -> str:
    doc = {"config": cfg.echo(), **payload}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _render(cfg: ExperimentConfig, columns, rows, notes=None) -> str:
    if cfg.format == "json":
        return render_json(cfg, {"notes": notes or {}, "rows": rows})
    return render_csv(cfg, columns, rows, notes)


# ---------------------------------------------------------------- commands

def _b_grid(cfg: ExperimentConfig, c_star: float) -> np.ndarray:
    hi = cfg.grid_b_max if cfg.grid_b_max is not None else c_star
    if not hi > cfg.grid_b_min:
        raise ConfigError(f"grid-b range is empty: [{cfg.grid_b_min}, {hi}]")
    return np.linspace(cfg.grid_b_min, hi, cfg.grid_b_count)


def _value_at(b: float, x0: float, m: ModelParams, c: ControlParams) -> float:
    return value(x0, value_rep(float(b), m, c))


def cmd_value_curve(cfg: ExperimentConfig) -> tuple[str, int]:
    """v_b(x0) along a grid of barriers, plus the optimum row."""
    m, c = cfg.model, cfg.control
    decision = solve_b_star(m, c)
    rows = [{"kind": "curve", "b": b, "value": _value_at(b, cfg.x0, m, c)}
            for b in _b_grid(cfg, decision.c_star)]
    best = max(rows, key=lambda r: r["value"])
    rows.append({"kind": "optimum", "b": decision.b_star,
                 "value": _value_at(decision.b_star, cfg.x0, m, c)})
    notes = {"regime": decision.regime.value, "delta": decision.delta,
             "threshold": decision.threshold, "c_star": decision.c_star,
             "grid_argmax_b": best["b"]}
    return _render(cfg, ["kind", "b", "value"], rows, notes), EXIT_OK


def cmd_value_surface(cfg: ExperimentConfig) -> tuple[str, int]:
    """v_b(x0) over (b, K) and the ridge b*(K)."""
    m = cfg.model
    c_star = classical_barrier(m, cfg.control)
    bs = _b_grid(cfg, c_star)
    rows, ridge = [], []
    for k in cfg.k_grid():
        c = ControlParams(cfg.q, float(k))
        for b in bs:
            rows.append({"kind": "surface", "k": k, "b": b, "value": _value_at(b, cfg.x0, m, c)})
        d = solve_b_star(m, c)
        ridge.append({"kind": "ridge", "k": k, "b": d.b_star,
                      "value": _value_at(d.b_star, cfg.x0, m, c), "regime": d.regime.value})
    notes = {"c_star": c_star}
    return _render(cfg, ["kind", "k", "b", "value", "regime"], rows + ridge, notes), EXIT_OK


def cmd_barrier_curve(cfg: ExperimentConfig) -> tuple[str, int]:
    """b*(K) on a K grid and the classical level c*."""
    m = cfg.model
    rows = []
    for k in cfg.k_grid():
        d = solve_b_star(m, ControlParams(cfg.q, float(k)))
        rows.append({"kind": "curve", "k": k, "b_star": d.b_star, "regime": d.regime.value})
    c_star = classical_barrier(m, cfg.control)
    rows.append({"kind": "c_star", "b_star": c_star})
    return _render(cfg, ["kind", "k", "b_star", "regime"], rows), EXIT_OK


def _check(name: str, passed: bool, measured: float, tolerance: float | None, **extra) -> dict:
    return {"name": name, "passed": bool(passed), "measured": measured,
            "tolerance": tolerance, **extra}


def _mc_specs(cfg: ExperimentConfig, b: float) -> list[PathFunctionalSpec]:
    x0 = cfg.x0
    return [
        PathFunctionalSpec.dividends(b, x0),
        PathFunctionalSpec.first_passage(0.5 * x0, x0),
        PathFunctionalSpec.two_sided(2.0 * x0, x0),
        PathFunctionalSpec.linear_ou(x0),
    ]


def cmd_verify(cfg: ExperimentConfig) -> tuple[str, int]:
    """ODE, pasting, HJB, inequality and Monte Carlo checks at one barrier.

    The barrier is ``cfg.b`` when given, b* otherwise. Exit status is nonzero
    when any check fails.
    """
    m, c = cfg.model, cfg.control
    if not c.k > 0:
        raise ConfigError("verify needs k > 0")
    if not cfg.x0 > 0:
        raise ConfigError("verify needs x0 > 0")
    decision = solve_b_star(m, c)
    b = decision.b_star if cfg.b is None else cfg.b
    rep = value_rep(b, m, c)
    x_max = cfg.grid_x_max if cfg.grid_x_max is not None else 2.0 * max(decision.c_star, b, cfg.x0)
    grid = np.linspace(x_max / cfg.grid_x_count, x_max, cfg.grid_x_count)
    s2 = m.sigma * m.sigma
    checks = []

    w_res = h_res = 0.0
    for x in grid:
        w = w_scale(x, m, c)
        r = 0.5 * s2 * w.d2 + m.mu * w.d1 - c.q * w.value
        w_res = max(w_res, abs(r) / max(1.0, abs(c.q * w.value)))
        h = h_func(x, m, c)
        r = 0.5 * s2 * h.d2 + (m.mu - c.k * x) * h.d1 - c.q * h.value
        h_res = max(h_res, abs(r) / max(1.0, abs(c.q * h.value)))
    checks.append(_check("ode_w", w_res <= 1e-8, w_res, 1e-8))
    checks.append(_check("ode_h", h_res <= 1e-8, h_res, 1e-8))

    if b > 0:
        p = pasting(rep)
        scale = 1.0 + abs(p.left.value)
        j0, j1, j2 = (abs(j) / scale for j in p.jumps)
        checks.append(_check("pasting_c0", j0 <= 1e-9, j0, 1e-9))
        checks.append(_check("pasting_c1", j1 <= 1e-9, j1, 1e-9))
        checks.append(_check("pasting_c2", j2 <= 1e-7, j2, 1e-7))

    report = hjb_check(rep, grid)
    checks.append(_check("hjb_residual", report.max_abs_residual <= 1e-7,
                         report.max_abs_residual, 1e-7))
    bad = [x for x, ok in zip(report.grid, report.gradient_ok) if not ok]
    checks.append(_check("hjb_gradient", not bad, float(len(bad)), 0.0,
                         failing_points=len(bad),
                         first_failure=bad[0] if bad else None))

    # q H(b)/H'(b) < K (mu/K - b) for all b >= 0
    worst = -math.inf
    for bb in np.linspace(0.0, x_max, cfg.grid_x_count):
        gap = c.q * h_over_dh(bb, m, c) - (m.mu - c.k * bb)
        worst = max(worst, gap)
    checks.append(_check("inequality_scan", worst < 0, worst, 0.0))

    mc_rows = []
    sim = SimConfig(step=cfg.step, paths=cfg.paths, seed=cfg.seed, scheme=Scheme(cfg.scheme),
                    horizon=cfg.horizon)
    for spec in _mc_specs(cfg, b):
        est = estimate(m, c, spec, sim)
        target = closed_form(m, c, spec)
        z = est.z_score(target)
        ok = z is not None and abs(z) <= 3.0
        mc_rows.append({"kind": spec.kind.value, "level": spec.level, "x0": spec.x0,
                        "mean": est.mean, "std_error": est.std_error, "target": target,
                        "z_score": z, "horizon": est.horizon, "passed": ok})
        checks.append(_check(f"mc_{spec.kind.value}", ok, abs(z) if z is not None else math.nan, 3.0))

    passed = all(ch["passed"] for ch in checks)
    summary = {
        "passed": passed,
        "barrier": b,
        "regime": decision.regime.value,
        "b_star": decision.b_star,
        "c_star": decision.c_star,
        "delta": decision.delta,
        "threshold": decision.threshold,
        "barrier_residual": barrier_residual(b, m, c) if b > 0 else None,
        "c_b": rep.c_b,
        "d_b": rep.d_b,
        "value_x0": evaluate(cfg.x0, rep).value,
    }
    status = EXIT_OK if passed else EXIT_CHECK_FAILED
    if cfg.format == "csv":
        cols = ["name", "passed", "measured", "tolerance"]
        return render_csv(cfg, cols, checks, summary), status
    return render_json(cfg, {"summary": summary, "checks": checks,
                             "hjb": {"grid": report.grid, "residual": report.residual,
                                     "gradient_ok": report.gradient_ok},
                             "monte_carlo": mc_rows}), status


def cmd_simulate(cfg: ExperimentConfig) -> tuple[str, int]:
    """One Monte Carlo estimate against its closed form."""
    m, c = cfg.model, cfg.control
    kind = FUNCTIONALS[cfg.functional]
    notes: dict[str, Any] = {}
    if kind is Kind.DISCOUNTED_DIVIDENDS:
        if cfg.b is None:
            d = solve_b_star(m, c)
            level = d.b_star
            notes["regime"] = d.regime.value
        else:
            level = cfg.b
    elif kind is Kind.DISCOUNTED_LINEAR_OU:
        level = None
    else:
        if cfg.level is None:
            raise ConfigError(f"functional {cfg.functional} needs --level")
        level = cfg.level
    spec = PathFunctionalSpec(kind, cfg.x0, level)
    sim = SimConfig(step=cfg.step, paths=cfg.paths, seed=cfg.seed, scheme=Scheme(cfg.scheme),
                    horizon=cfg.horizon)
    est = estimate(m, c, spec, sim)
    target = closed_form(m, c, spec)
    result = {
        "kind": kind.value,
        "level": level,
        "x0": cfg.x0,
        "mean": est.mean,
        "std_error": est.std_error,
        "n": est.n,
        "scheme": est.scheme.value,
        "step": est.step,
        "horizon": est.horizon,
        "seed": est.seed,
        "target": target,
        "z_score": est.z_score(target),
        **notes,
    }
    if cfg.format == "csv":
        return render_csv(cfg, list(result), [result]), EXIT_OK
    return render_json(cfg, {"estimate": result}), EXIT_OK


COMMANDS = {
    "value-curve": cmd_value_curve,
    "value-surface": cmd_value_surface,
    "barrier-curve": cmd_barrier_curve,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
}


# ---------------------------------------------------------------- parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model and control")
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--config", help="INI file; [DEFAULT] plus one section per subcommand")
    for name in ("mu", "sigma", "q", "k", "x0", "b"):
        g.add_argument(f"--{name}", type=float)
    g = common.add_argument_group("grids")
    g.add_argument("--grid-b-min", type=float)
    g.add_argument("--grid-b-max", type=float)
    g.add_argument("--grid-b-count", type=int)
    g.add_argument("--grid-k-min", type=float)
    g.add_argument("--grid-k-max", type=float)
    g.add_argument("--grid-k-count", type=int)
    g.add_argument("--grid-k-spacing", choices=["log", "linear"])
    g.add_argument("--grid-x-max", type=float)
    g.add_argument("--grid-x-count", type=int)
    g = common.add_argument_group("simulation")
    g.add_argument("--paths", type=int)
    g.add_argument("--step", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--scheme", choices=[s.value for s in Scheme])
    g.add_argument("--horizon", type=float)
    g.add_argument("--functional", choices=sorted(FUNCTIONALS))
    g.add_argument("--level", type=float)
    g = common.add_argument_group("output")
    g.add_argument("--out", help="output file (default: stdout)")
    g.add_argument("--format", choices=["csv", "json"])

    parser = argparse.ArgumentParser(prog="dcl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "value-curve": "value of pi_b at x0 as a function of b",
        "value-surface": "value over (b, K) with the optimal ridge",
        "barrier-curve": "optimal barrier b* as a function of K",
        "verify": "analytic and Monte Carlo checks at one barrier (JSON)",
        "simulate": "Monte Carlo estimate vs closed form (JSON)",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        text, status = COMMANDS[args.command](cfg)
    except OSError as exc:
        print(f"dcl: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, DomainError) as exc:
        print(f"dcl: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (AccuracyError, DegenerateError, BracketError) as exc:
        print(f"dcl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if cfg.out:
        try:
            with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"dcl: cannot write {cfg.out}: {exc}", file=sys.stderr)
            return EXIT_IO
    else:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
