"""Command-line experiment runner writing CSV tables."""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np

from . import nlwave_bench, ode_bench, stability, wave_bench
from .schemes import (PIRK1Custom, PIRK2Custom, PIRK3Custom, PIRK4_COEFFS,
                      ERK4_C, resolve)

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 2, 3
SUBCOMMANDS = ("ode", "wave", "nlwave", "stability-scan", "convergence",
               "verify-pirk4")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    scheme: str | None
    params: dict = field(default_factory=dict)
    out: str | None = None
    stride: int = 1
    workers: int = 1


@dataclass
class CsvReport:
    header: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def __post_init__(self):
        for r in self.rows:
            if len(r) != len(self.header):
                raise ValueError("row length differs from header length")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(report: CsvReport, path: str | None) -> None:
    """Header plus rows; floats in shortest round-trip form, LF endings."""
    rows = [list(report.header)] + [[_fmt(v) for v in r] for r in report.rows]
    if path in (None, "-"):
        csv.writer(sys.stdout, lineterminator="\n").writerows(rows)
        return
    with open(path, "w", encoding="utf-8", newline="") as f:
        csv.writer(f, lineterminator="\n").writerows(rows)


# --------------------------------------------------------------------------
# argument parsing

def _finite(text: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(x):
        raise argparse.ArgumentTypeError(f"not finite: {text!r}")
    return x


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return n


def _float_list(text: str) -> list[float]:
    return [_finite(t) for t in text.split(",") if t.strip()]


def _mode(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("mode must be n,l,m")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad mode {text!r}") from None


def _range(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("range must be a:b:step")
    a, b, step = (_finite(p) for p in parts)
    if step <= 0 or b < a:
        raise argparse.ArgumentTypeError(f"bad range {text!r}")
    n = int(math.floor((b - a) / step + 1e-9))
    return [round(a + i * step, 12) for i in range(n + 1)]


def _common(p: argparse.ArgumentParser, time_step: bool = True) -> None:
    p.add_argument("--scheme", default="pirk1")
    if time_step:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--dt", type=_finite)
        g.add_argument("--cfl", type=_finite)
    p.add_argument("--t-end", type=_finite)
    p.add_argument("--out")
    p.add_argument("--stride", type=_positive_int, default=1)
    p.add_argument("--workers", type=_positive_int, default=1)


def _wave_setup(p: argparse.ArgumentParser) -> None:
    p.add_argument("--coords", choices=("spherical", "cartesian"), default="spherical")
    p.add_argument("--dims", type=int, choices=(1, 2, 3), default=2)
    p.add_argument("--nr", type=_positive_int, default=100)
    p.add_argument("--ntheta", type=_positive_int, default=32)
    p.add_argument("--nphi", type=_positive_int, default=32)
    p.add_argument("--space-order", type=int, default=4)
    p.add_argument("--mode", type=_mode)
    p.add_argument("--c1", type=_finite)
    p.add_argument("--c2", type=_finite)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pirk", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("ode", help="linear oscillator test problem")
    _common(p)
    p.add_argument("--sigma", type=_finite, default=0.0)
    p.add_argument("--phi-over-pi", type=_finite, default=0.5)
    p.add_argument("--omega", type=_finite, default=1.0)
    p.add_argument("--c1", type=_finite)
    p.add_argument("--c2", type=_finite)

    p = sub.add_parser("wave", help="linear wave equation eigenmode run")
    _common(p)
    _wave_setup(p)

    p = sub.add_parser("nlwave", help="nonlinear wave equation run or CFL scan")
    _common(p)
    p.add_argument("--points", type=_positive_int, default=100)
    p.add_argument("--amplitude", type=_finite, default=2.0)
    p.add_argument("--space-order", type=int, default=6)
    p.add_argument("--cfl-list", type=_float_list)
    p.add_argument("--split", choices=nlwave_bench.SPLITS, default="implicit",
                   help="where the -h^3 force goes: L3 (explicit) or L2 (implicit)")

    p = sub.add_parser("stability-scan", help="wave stability region over C and CFL")
    _common(p, time_step=False)
    _wave_setup(p)
    p.add_argument("--c1-range", type=_range, required=True)
    p.add_argument("--c2-range", type=_range)
    p.add_argument("--cfl-list", type=_float_list, required=True)

    p = sub.add_parser("convergence", help="wave convergence study")
    _common(p, time_step=False)
    p.add_argument("--coords", choices=("spherical", "cartesian"), default="spherical")
    p.add_argument("--dims", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--base", type=lambda s: tuple(int(x) for x in s.split(",")))
    p.add_argument("--factors", type=_float_list, default=[2.0, 4.0, 8.0])
    p.add_argument("--cfl", type=_finite, default=0.8)

    p = sub.add_parser("verify-pirk4", help="check |det M4| <= 1 on [s_min, 0]")
    p.add_argument("--s-min", type=_finite, default=-27.0)
    p.add_argument("--coeffs", type=_float_list)
    p.add_argument("--optimize", action="store_true",
                   help="search coefficients feasible on the interval")
    p.add_argument("--seed", choices=("reference", "erk4"), default="reference",
                   help="starting coefficients for --optimize")
    p.add_argument("--schedule", type=_float_list)
    p.add_argument("--out")
    return parser


def parse_args(argv=None) -> RunConfig:
    parser = build_parser()
    ns = parser.parse_args(argv)
    params = {k: v for k, v in vars(ns).items()
              if k not in ("subcommand", "scheme", "out", "stride", "workers")}
    cfg = RunConfig(ns.subcommand, getattr(ns, "scheme", None), params,
                    ns.out, getattr(ns, "stride", 1), getattr(ns, "workers", 1))
    try:
        _validate(cfg)
    except (ConfigError, ValueError) as exc:
        parser.error(str(exc))
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.scheme is not None and not (cfg.subcommand == "ode"
                                       and cfg.scheme == "analytic"):
        _scheme_for(cfg)
    p = cfg.params
    if cfg.subcommand == "ode":
        if p["dt"] is None:
            raise ConfigError("ode needs --dt")
        ode_bench.OdeProblem(p["sigma"], p["phi_over_pi"] * math.pi, p["omega"])
        if p["dt"] <= 0:
            raise ConfigError("--dt must be positive")
    if cfg.subcommand in ("wave", "stability-scan"):
        _grid(cfg)
        _wave_mode(cfg)
    if cfg.subcommand in ("wave", "nlwave"):
        if p.get("dt") is not None and p["dt"] <= 0 or (
                p.get("cfl") is not None and p["cfl"] <= 0):
            raise ConfigError("time step must be positive")
    if cfg.subcommand == "nlwave":
        nlwave_bench.NlWaveConfig(p["points"], p["amplitude"], p["space_order"],
                                  p["t_end"] or 2000.0, split=p["split"])


def _scheme_for(cfg: RunConfig, c1=None, c2=None):
    """Named scheme, or a custom-coefficient member of its family."""
    p = cfg.params
    c1 = p.get("c1") if c1 is None else c1
    c2 = p.get("c2") if c2 is None else c2
    base = resolve(cfg.scheme)
    if c1 is None and c2 is None:
        return base
    order = base.order
    if order == 1:
        return PIRK1Custom(c1)
    if order in (2, 3):
        if c1 is None or c2 is None:
            raise ConfigError("custom second/third-order schemes need --c1 and --c2")
        return (PIRK2Custom if order == 2 else PIRK3Custom)(c1, c2)
    raise ConfigError("custom coefficients are supported for orders 1-3")


def _resolution(cfg: RunConfig) -> tuple[int, ...]:
    p = cfg.params
    if p["coords"] == "cartesian":
        return (p["nr"],) * p["dims"]
    return (p["nr"], p["ntheta"], p["nphi"])[:p["dims"]]


def _grid(cfg: RunConfig):
    p = cfg.params
    return wave_bench.make_grid(p["coords"], p["dims"], _resolution(cfg),
                                p["space_order"])


def _wave_mode(cfg: RunConfig) -> wave_bench.WaveMode:
    p = cfg.params
    if p["coords"] == "cartesian":
        if p["mode"] is not None:
            raise ConfigError("--mode applies to spherical coordinates")
        return wave_bench.WaveMode.default("cartesian", p["dims"])
    return wave_bench.WaveMode(*p["mode"]) if p["mode"] else \
        wave_bench.WaveMode.default("spherical", p["dims"])


# --------------------------------------------------------------------------
# commands

def _summary(scheme, dt, verdict, error, extra: str = "") -> str:
    st = resolve(scheme)
    line = (f"scheme={st.name} dt={dt!r} stages={st.stages} "
            f"cost={st.stages / dt!r} verdict={verdict} final_error={error!r}")
    return line + (" " + extra if extra else "")


def _emit(cfg: RunConfig, report: CsvReport, summary: str) -> None:
    write_csv(report, cfg.out)
    print(summary, file=sys.stderr if cfg.out in (None, "-") else sys.stdout)


ODE_COLUMNS = ("t", "u_num", "v_num", "u_ana", "v_ana", "l2norm")


def _ode_rows(problem, times, u, v, norm, stride: int) -> list[tuple]:
    """Rows for t_1, t_2, ... (the norm is undefined at t_0)."""
    ua, va = ode_bench.ode_analytic(problem, times)
    idx = list(range(0, len(norm), stride))
    if idx and idx[-1] != len(norm) - 1:
        idx.append(len(norm) - 1)
    return [(float(times[i + 1]), float(u[i + 1]), float(v[i + 1]),
             float(ua[i + 1]), float(va[i + 1]), float(norm[i])) for i in idx]


def cmd_ode(cfg: RunConfig) -> int:
    p = cfg.params
    problem = ode_bench.OdeProblem(p["sigma"], p["phi_over_pi"] * math.pi, p["omega"])
    dt, t_end = p["dt"], p["t_end"] or ode_bench.VERDICT_TIME
    if cfg.scheme == "analytic":
        n = int(math.floor(t_end / dt + 1e-9))
        times = np.arange(n + 1) * dt
        if times[-1] < t_end * (1 - 1e-12):
            times = np.append(times, t_end)
        u, v = ode_bench.ode_analytic(problem, times)
        norm = ode_bench.ode_error_norm(times, u, problem, dt)
        _emit(cfg, CsvReport(ODE_COLUMNS, _ode_rows(problem, times, u, v, norm,
                                                    cfg.stride)),
              f"scheme=analytic dt={dt!r} verdict=stable final_error={float(norm[-1])!r}")
        return EXIT_OK
    scheme = _scheme_for(cfg)
    rep = ode_bench.run_ode_experiment(scheme, problem.sigma, problem.phi, dt,
                                       t_end, problem.omega)
    samples, times = rep.extras["samples"], rep.extras["sample_times"]
    rows = _ode_rows(problem, times, samples[:, 0], samples[:, 1], rep.norm, cfg.stride)
    final = float(rep.norm[-1]) if len(rep.norm) else math.nan
    _emit(cfg, CsvReport(ODE_COLUMNS, rows),
          _summary(scheme, dt, "stable" if rep.stable else "unstable", final))
    return EXIT_FAILURE if rep.failed else EXIT_OK


def cmd_wave(cfg: RunConfig) -> int:
    p = cfg.params
    grid = _grid(cfg)
    cfl = p["cfl"] if p["cfl"] is not None else (
        p["dt"] / grid.dt_max if p["dt"] is not None else 0.5)
    scheme = _scheme_for(cfg)
    wc = wave_bench.WaveConfig(p["coords"], p["dims"], _resolution(cfg),
                               p["space_order"], scheme, cfl, _wave_mode(cfg),
                               p["t_end"], stride=cfg.stride)
    rep = wave_bench.run_wave_experiment(wc)
    rows = [(float(t), float(v)) for t, v in zip(rep.times, rep.norm)]
    _emit(cfg, CsvReport(("t", "l2norm"), rows),
          _summary(scheme, rep.config["dt"], "stable" if rep.stable else "unstable",
                   rep.extras["final_norm"], f"cfl={cfl!r}"))
    return EXIT_FAILURE if rep.failed else EXIT_OK


def _nl_config(cfg: RunConfig, scheme) -> nlwave_bench.NlWaveConfig:
    p = cfg.params
    return nlwave_bench.NlWaveConfig(p["points"], p["amplitude"], p["space_order"],
                                     p["t_end"] or 2000.0, scheme, p["split"])


class _NlJob:
    def __init__(self, config):
        self.config = config

    def __call__(self, cfl):
        rep = nlwave_bench.run_nlwave_experiment(self.config, cfl)
        return rep.stable, rep.extras["error_H"]


def cmd_nlwave(cfg: RunConfig) -> int:
    p = cfg.params
    scheme = _scheme_for(cfg)
    conf = _nl_config(cfg, scheme)
    if p["cfl_list"]:
        grid = sorted(p["cfl_list"])
        results = _map(cfg.workers, _NlJob(conf), grid)
        best = None
        for cfl, (ok, _) in zip(grid, results):
            if not ok:
                break
            best = cfl
        rows = [(c, e, ok) for c, (ok, e) in zip(grid, results)]
        _emit(cfg, CsvReport(("cfl", "error_H", "stable"), rows),
              f"scheme={resolve(scheme).name} points={conf.n_points} "
              f"max_stable_cfl={'none' if best is None else repr(best)}")
        return EXIT_OK
    cfl = p["cfl"] if p["cfl"] is not None else (
        p["dt"] / conf.dt_max if p["dt"] is not None else 0.8)
    rep = nlwave_bench.run_nlwave_experiment(conf, cfl, keep=cfg.stride)
    s = rep.extras["series"]
    cols = ("H", "T", "P", "V", "a_cosx", "a_cos3x", "a_sinx", "rel_dH")
    rows = [(float(t),) + tuple(float(s[c][i]) for c in cols)
            for i, t in enumerate(rep.times)]
    _emit(cfg, CsvReport(("t",) + cols, rows),
          _summary(scheme, rep.config["dt"], "stable" if rep.stable else "unstable",
                   rep.extras["error_H"], f"cfl={cfl!r}"))
    return EXIT_FAILURE if rep.failed else EXIT_OK


def _map(workers: int, fn, items):
    items = list(items)
    if workers > 1 and len(items) > 1:
        with Pool(min(workers, len(items))) as pool:
            return pool.map(fn, items)
    return list(map(fn, items))


class _WaveScanRun:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg

    def __call__(self, C, cfl):
        p = self.cfg.params
        scheme = _scheme_for(self.cfg, *(tuple(C) + (None,))[:2])
        wc = wave_bench.WaveConfig(p["coords"], p["dims"], _resolution(self.cfg),
                                   p["space_order"], scheme, cfl,
                                   _wave_mode(self.cfg), p["t_end"], stride=50)
        rep = wave_bench.run_wave_experiment(wc)
        return math.inf if rep.failed else rep.extras["final_norm"]


def cmd_stability_scan(cfg: RunConfig) -> int:
    p = cfg.params
    order = resolve(cfg.scheme).order
    if order > 1 and p["c2_range"] is None:
        raise ConfigError("orders 2 and 3 need --c2-range")
    if order == 1:
        C_grid = [(c,) for c in p["c1_range"]]
    else:
        C_grid = [(a, b) for a in p["c1_range"] for b in p["c2_range"]]
    run = _WaveScanRun(cfg)
    pool = Pool(cfg.workers) if cfg.workers > 1 else None
    try:
        table = stability.scan_stability_region(
            run, C_grid, p["cfl_list"], map_fn=pool.map if pool else map)
    finally:
        if pool:
            pool.close()
    rows = [(pt.coefficients[0], pt.coefficients[1] if len(pt.coefficients) > 1
             else None, pt.cfl, pt.value, pt.stable) for pt in table.points]
    write_csv(CsvReport(("C1", "C2", "cfl", "l2_at_verdict", "stable"), rows), cfg.out)
    bounds = table.boundaries(0)
    brows = [(cfl, b[0] if b else None, b[1] if b else None)
             for cfl, b in bounds.items()]
    if cfg.out not in (None, "-"):
        stem = cfg.out[:-4] if cfg.out.endswith(".csv") else cfg.out
        write_csv(CsvReport(("cfl", "C1_min", "C1_max"), brows), stem + "_boundary.csv")
    n_stable = sum(pt.stable for pt in table.points)
    print(f"scheme={resolve(cfg.scheme).name} points={len(table.points)} "
          f"stable={n_stable}", file=sys.stderr if cfg.out in (None, "-") else sys.stdout)
    return EXIT_OK


def cmd_convergence(cfg: RunConfig) -> int:
    p = cfg.params
    scheme = _scheme_for(cfg)
    table = wave_bench.convergence_study(scheme, p["dims"], p["coords"], p["base"],
                                         tuple(p["factors"]), cfl=p["cfl"])
    rows = [(f, d, e) for f, d, e in zip(table.factors, table.dt, table.error)]
    slope, rms = table.slope("l2"), table.slope("rms")
    _emit(cfg, CsvReport(("factor", "dt", "error"), rows),
          f"scheme={resolve(scheme).name} slope={'none' if slope is None else repr(slope)}"
          f" slope_rms={'none' if rms is None else repr(rms)}")
    return EXIT_OK


def cmd_verify_pirk4(cfg: RunConfig) -> int:
    p = cfg.params
    s_min = p["s_min"]
    if s_min >= 0:
        raise ConfigError("--s-min must be negative")
    coeffs = tuple(p["coeffs"]) if p["coeffs"] else PIRK4_COEFFS
    if len(coeffs) != 5:
        raise ConfigError("--coeffs needs five values")
    rows = []
    if p["optimize"]:
        schedule = p["schedule"] or [5, 10, 15, 20, 23, 25, 26, -s_min]
        seed = PIRK4_COEFFS if p["seed"] == "reference" else ERK4_C
        opt = stability.optimize_pirk4_coefficients(schedule, seed=seed)
        coeffs = tuple(opt.coefficients)
        rows = [("optimized_C%d" % (i + 1), c) for i, c in enumerate(coeffs)]
    res = stability.verify_pirk4_interval(coeffs, (s_min, 0.0))
    lo = f"[{s_min:g},0]"
    verdict = f"pass {lo}" if res.passed else (
        f"fail {lo} first_violation_s={res.first_violation[1]!r} "
        f"max_abs_det={res.max_abs_det!r}")
    rows += [("max_abs_det", res.max_abs_det)]
    if cfg.out:
        write_csv(CsvReport(("quantity", "value"), rows), cfg.out)
    print(verdict)
    return EXIT_OK


COMMANDS = {"ode": cmd_ode, "wave": cmd_wave, "nlwave": cmd_nlwave,
            "stability-scan": cmd_stability_scan, "convergence": cmd_convergence,
            "verify-pirk4": cmd_verify_pirk4}


def run(cfg: RunConfig) -> int:
    try:
        return COMMANDS[cfg.subcommand](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def main(argv=None) -> int:
    try:
        cfg = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
