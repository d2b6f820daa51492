"""Command-line front end: single-point rates, parameter sweeps, intensity
optimization, and canned figure-reproduction recipes.

Configuration is a flat JSON object; repeated ``--param key=value`` flags
override file values, which override built-in defaults.  Curves are written
as CSV with the resolved parameter set in ``#`` header lines (fixed
scientific notation, 12 significant digits) plus a rendered PNG alongside;
single-point runs emit a JSON report.

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(truncation or leakage).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .components import Numerics, ParameterError, SystemParams
from .fock import TruncationError
from .keyrate import key_rate
from .repeater import FixtureCache, repeater_output
from .sweep import (
    SweepSpec,
    crossover_distance,
    evaluate_point,
    optimal_spacing,
    optimize_intensity,
    rate_vs_distance,
)


class ConfigError(Exception):
    """Invalid, unknown, or missing configuration keys."""


_PARAM_TYPES = {f.name: f.type for f in dataclasses.fields(SystemParams)}
_NUMERICS_TYPES = {f.name: f.type for f in dataclasses.fields(Numerics)}
# command-level keys and their parsers
_RUN_KEYS = {
    "source": str,
    "normalization": str,
    "levels": str,
    "l_min": float,
    "l_max": float,
    "l_step": float,
    "alpha_min": float,
    "alpha_max": float,
    "alpha_step": float,
    "eta_r_min": float,
    "eta_r_max": float,
    "eta_r_step": float,
    "optimize_eta_sps": bool,
    "optimize_alpha": bool,
    "seed": int,
}


def _parse_bool(raw: str) -> bool:
    low = str(raw).strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"cannot parse boolean value {raw!r}")


def _coerce(key: str, raw):
    if key in _PARAM_TYPES:
        target = _PARAM_TYPES[key]
    elif key in _NUMERICS_TYPES:
        target = _NUMERICS_TYPES[key]
    elif key in _RUN_KEYS:
        target = _RUN_KEYS[key]
    else:
        raise ConfigError(f"unknown configuration key {key!r}")
    if target in (bool, "bool"):
        return raw if isinstance(raw, bool) else _parse_bool(raw)
    if target in (int, "int"):
        return int(raw)
    if target in (float, "float"):
        return float(raw)
    return str(raw)


def load_config(path: str | None, overrides: list[str]) -> dict:
    """Merge file values and command-line overrides into one flat mapping."""
    flat: dict = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a flat JSON object")
        flat.update(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        flat[key.strip()] = value.strip()
    return {k: _coerce(k, v) for k, v in flat.items()}


def split_config(flat: dict) -> tuple[SystemParams, Numerics, dict]:
    params_kw = {k: v for k, v in flat.items() if k in _PARAM_TYPES}
    numerics_kw = {k: v for k, v in flat.items() if k in _NUMERICS_TYPES}
    run = {k: v for k, v in flat.items() if k in _RUN_KEYS}
    try:
        params = SystemParams(**params_kw)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    return params, Numerics(**numerics_kw), run


def require(run: dict, flat: dict, *keys: str):
    for key in keys:
        if key not in flat:
            raise ConfigError(f"missing required configuration key {key!r}")


def _levels(run: dict) -> tuple[int, ...]:
    raw = run.get("levels", "0,1,2")
    try:
        levels = tuple(int(t) for t in str(raw).split(",") if t.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"cannot parse nesting levels {raw!r}") from exc
    if not levels or any(n not in (0, 1, 2) for n in levels):
        raise ConfigError("nesting levels must be a comma list within {0, 1, 2}")
    return levels


def _grid(run: dict, lo_key: str, hi_key: str, step_key: str,
          lo_default: float, hi_default: float, step_default: float) -> tuple[float, ...]:
    lo = run.get(lo_key, lo_default)
    hi = run.get(hi_key, hi_default)
    step = run.get(step_key, step_default)
    if not (lo < hi and step > 0):
        raise ConfigError(f"grid {lo_key}/{hi_key}/{step_key} is degenerate")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return tuple(lo + i * step for i in range(n))


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def fmt(x) -> str:
    """Locale-independent fixed scientific notation, 12 significant digits."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    v = float(x)
    if math.isnan(v):
        return "nan"
    return f"{v:.11e}"


def _header_lines(params: SystemParams, numerics: Numerics, run: dict) -> list[str]:
    lines = [f"# rmqkd version = {__version__}"]
    resolved = {**dataclasses.asdict(params), **dataclasses.asdict(numerics), **run}
    for key in sorted(resolved):
        value = resolved[key]
        lines.append(f"# {key} = {fmt(value) if isinstance(value, (int, float, np.floating)) else value}")
    return lines


def write_csv(path: Path, header: list[str], columns: dict[str, list],
              blocks: list[tuple[str, dict[str, list]]] | None = None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header:
            fh.write(line + "\n")
        if blocks is None:
            blocks = [("", columns)]
        for label, cols in blocks:
            if label:
                fh.write(f"# block: {label}\n")
            names = list(cols)
            fh.write(",".join(names) + "\n")
            for row in zip(*cols.values()):
                fh.write(",".join(fmt(v) for v in row) + "\n")


def write_json(path: Path, payload: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def _report_payload(report, params, numerics, run):
    return {
        "version": __version__,
        "params": dataclasses.asdict(params),
        "numerics": dataclasses.asdict(numerics),
        "run": run,
        "result": {
            "source_kind": report.source_kind,
            "q11_z": report.q11_z,
            "e11_x": report.e11_x,
            "q_signal_z": report.q_signal_z,
            "e_signal_z": report.e_signal_z,
            "r_per_pulse": report.r_per_pulse,
            "r_per_memory_hz": report.r_per_memory,
            "regime": report.regime,
            "R_ent_hz": report.R_ent,
            "R_rep_hz": report.R_rep,
            "N_QM": report.N_QM,
            "eta_sps_used": report.params.eta_sps,
            "secure": report.secure,
        },
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_rate(flat: dict, out: Path, cache: FixtureCache, threads: int) -> int:
    params, numerics, run = split_config(flat)
    require(run, flat, "source", "L_rep", "n")
    source = run["source"]
    if source not in ("sps", "coherent"):
        raise ConfigError("source must be 'sps' or 'coherent'")
    report = evaluate_point(
        params, source, run.get("normalization", "per_memory"), numerics, cache,
        optimize_eta_sps=run.get("optimize_eta_sps", False),
        optimize_alpha=run.get("optimize_alpha", False))
    write_json(out / "rate.json", _report_payload(report, params, numerics, run))
    print(f"rate: per-pulse {fmt(report.r_per_pulse)}, "
          f"per-memory {fmt(report.r_per_memory)} Hz, regime {report.regime}")
    return 0


def cmd_optimize(flat: dict, out: Path, cache: FixtureCache, threads: int) -> int:
    params, numerics, run = split_config(flat)
    require(run, flat, "L_rep", "n")
    interval = (run.get("alpha_min", 0.3), run.get("alpha_max", 2.0))
    alpha, rate = optimize_intensity(params, interval, numerics, cache,
                                     run.get("normalization", "per_pulse"),
                                     run.get("optimize_eta_sps", True))
    payload = {
        "version": __version__,
        "params": dataclasses.asdict(params),
        "run": run,
        "result": {"alpha_star": alpha, "mu_star": alpha ** 2 if not math.isnan(alpha) else math.nan,
                   "rate_star": rate, "secure": rate > 0.0},
    }
    write_json(out / "optimize.json", payload)
    print(f"optimal |alpha| = {fmt(alpha)} with rate {fmt(rate)}")
    return 0


def cmd_sweep(flat: dict, out: Path, cache: FixtureCache, threads: int) -> int:
    params, numerics, run = split_config(flat)
    require(run, flat, "source", "l_min", "l_max", "l_step")
    grid = _grid(run, "l_min", "l_max", "l_step", 0.0, 0.0, 0.0)
    spec = SweepSpec("L_total", grid, params, _levels(run), run["source"],
                     run.get("normalization", "per_pulse"),
                     run.get("optimize_eta_sps", True),
                     run.get("optimize_alpha", False))
    result = rate_vs_distance(spec, numerics, cache, threads)
    columns = {"L_km": list(grid)}
    for n in spec.nesting_levels:
        columns[f"rate_n{n}"] = result.metric_curve(n)
    header = _header_lines(params, numerics, run)
    header += [f"# derived: {k} = {fmt(v)}" for k, v in sorted(result.derived.items())]
    write_csv(out / "sweep.csv", header, columns)
    from .plotting import plot_curves
    plot_curves(grid, {f"n={n}": columns[f"rate_n{n}"] for n in spec.nesting_levels},
                "total distance L [km]",
                "rate per pulse" if spec.normalization == "per_pulse"
                else "rate per memory [Hz]",
                out / "sweep.png")
    print(f"sweep: {len(grid)} points -> {out / 'sweep.csv'}")
    return 0


def _reproduce_fig5(params, numerics, run, out, cache):
    from .keyrate import gamma_table
    alphas = _grid(run, "alpha_min", "alpha_max", "alpha_step", 0.3, 2.0, 0.05)
    base = params.with_(L_rep=run.get("L_rep", params.L_rep), n=0)
    blocks = []
    curves = {}
    variants = [("d_c", v) for v in (1e-9, 1e-8, 1e-7, 1e-6)] + \
               [("p", v) for v in (1e-4, 1e-3, 1e-2)]
    for name, value in variants:
        p_var = base.with_(**{name: value})
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            outp = repeater_output(p_var, numerics, cache)
        t11 = (gamma_table(p_var, "z", "11", outp.link, numerics),
               gamma_table(p_var, "x", "11", outp.link, numerics))
        rates = []
        for alpha in alphas:
            pa = p_var.with_(mu=alpha ** 2, nu=alpha ** 2)
            rates.append(key_rate(pa, "coherent", outp, numerics, tables_11=t11).r_per_pulse)
        label = f"{name}={fmt(value)}"
        blocks.append((label, {"alpha": list(alphas), "rate_per_pulse": rates}))
        curves[label] = rates
    header = _header_lines(base, numerics, run)
    write_csv(out / "fig5.csv", header, {}, blocks)
    from .plotting import plot_curves
    plot_curves(alphas, curves, "|alpha|", "rate per pulse", out / "fig5.png",
                title="key rate vs source intensity")
    return ["fig5.csv", "fig5.png"]


def _reproduce_distance_figure(name, normalization, params, numerics, run, out, cache, threads):
    files = []
    l_lo = 2.0 * params.L_s + run.get("l_step", 100.0)
    grid = _grid(run, "l_min", "l_max", "l_step", l_lo, 3000.0, 100.0)
    for source, tag in (("sps", "sps"), ("coherent", "decoy")):
        spec = SweepSpec("L_total", grid, params, _levels(run), source,
                         normalization, run.get("optimize_eta_sps", True),
                         run.get("optimize_alpha", False))
        result = rate_vs_distance(spec, numerics, cache, threads)
        columns = {"L_km": list(grid)}
        for n in spec.nesting_levels:
            columns[f"rate_n{n}"] = result.metric_curve(n)
        write_csv(out / f"{name}_{tag}.csv", _header_lines(params, numerics, run), columns)
        from .plotting import plot_curves
        plot_curves(grid, {f"n={n}": columns[f"rate_n{n}"] for n in spec.nesting_levels},
                    "total distance L [km]",
                    "rate per pulse" if normalization == "per_pulse"
                    else "rate per memory [Hz]",
                    out / f"{name}_{tag}.png", title=f"{tag} source")
        files += [f"{name}_{tag}.csv", f"{name}_{tag}.png"]
    return files


def _reproduce_fig9(params, numerics, run, out, cache):
    files = []
    # (a) crossover distances against memory recall efficiency
    etas = _grid(run, "eta_r_min", "eta_r_max", "eta_r_step", 0.3, 0.9, 0.1)
    x01, x12 = [], []
    for eta in etas:
        p = params.with_(eta_r=eta)
        x01.append(crossover_distance(p, 0, 1, "sps", "per_memory", numerics, cache,
                                      optimize_eta_sps=run.get("optimize_eta_sps", True)) or math.nan)
        x12.append(crossover_distance(p, 1, 2, "sps", "per_memory", numerics, cache,
                                      optimize_eta_sps=run.get("optimize_eta_sps", True)) or math.nan)
    write_csv(out / "fig9a.csv", _header_lines(params, numerics, run),
              {"eta_r": list(etas), "crossover_01_km": x01, "crossover_12_km": x12})
    from .plotting import plot_curves, plot_staircase
    plot_curves(etas, {"n0 -> n1": x01, "n1 -> n2": x12}, "recall efficiency",
                "crossover distance [km]", out / "fig9a.png", logy=False)
    files += ["fig9a.csv", "fig9a.png"]
    # (b) optimal node spacing at degraded recall efficiency
    p_low = params.with_(eta_r=run.get("eta_r_min", 0.3))
    grid = _grid(run, "l_min", "l_max", "l_step", 2.0 * params.L_s + 50.0, 2500.0, 50.0)
    spacing = []
    levels = []
    for l_total in grid:
        res = optimal_spacing(p_low, l_total, "sps", numerics, cache,
                              optimize_eta_sps=run.get("optimize_eta_sps", True))
        spacing.append(res[1] if res else math.nan)
        levels.append(res[0] if res else -1)
    write_csv(out / "fig9b.csv", _header_lines(p_low, numerics, run),
              {"L_km": list(grid), "L0_star_km": spacing, "n_star": levels})
    plot_staircase(grid, spacing, "total distance L [km]", "optimal spacing L0 [km]",
                   out / "fig9b.png")
    files += ["fig9b.csv", "fig9b.png"]
    return files


def cmd_reproduce(figure: str, flat: dict, out: Path, cache: FixtureCache,
                  threads: int) -> int:
    params, numerics, run = split_config(flat)
    if figure == "fig5":
        files = _reproduce_fig5(params, numerics, run, out, cache)
    elif figure == "fig7":
        files = _reproduce_distance_figure("fig7", "per_pulse", params, numerics,
                                           run, out, cache, threads)
    elif figure == "fig8":
        files = _reproduce_distance_figure("fig8", "per_memory", params, numerics,
                                           run, out, cache, threads)
    elif figure == "fig9":
        files = _reproduce_fig9(params, numerics, run, out, cache)
    else:
        raise ConfigError(f"unknown figure {figure!r}; expected fig5, fig7, fig8 or fig9")
    print(f"reproduce {figure}: wrote {', '.join(files)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmqkd",
        description="Key-rate simulator for repeater-assisted trust-free MDI-QKD links")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="flat JSON configuration file")
        p.add_argument("--out", metavar="DIR", default="out", help="output directory")
        p.add_argument("--param", metavar="KEY=VALUE", action="append", default=[],
                       help="override one configuration key (repeatable)")
        p.add_argument("--fixtures", metavar="PATH",
                       help="persistent repeater-state cache file")
        p.add_argument("--threads", type=int, default=1, metavar="N",
                       help="worker threads for sweep grids")

    common(sub.add_parser("rate", help="evaluate the key rate at one point"))
    common(sub.add_parser("sweep", help="key rate against total distance"))
    common(sub.add_parser("optimize", help="optimal coherent-source intensity"))
    rep = sub.add_parser("reproduce", help="run a canned figure recipe")
    rep.add_argument("figure", help="fig5, fig7, fig8 or fig9")
    common(rep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        flat = load_config(args.config, args.param)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        cache = FixtureCache(args.fixtures)
        if args.command == "rate":
            code = cmd_rate(flat, out, cache, args.threads)
        elif args.command == "sweep":
            code = cmd_sweep(flat, out, cache, args.threads)
        elif args.command == "optimize":
            code = cmd_optimize(flat, out, cache, args.threads)
        else:
            code = cmd_reproduce(args.figure, flat, out, cache, args.threads)
        cache.save()
        return code
    except TruncationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
