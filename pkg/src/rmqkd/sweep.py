"""Optimization and experiment harness: optimal source intensity, rate-vs-
distance curves, cutoff and crossover distances, and node spacing.

All searches are deterministic (golden-section maximization and bisection on
fixed brackets), so identical inputs and fixture caches reproduce results
bit for bit.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .components import Numerics, ParameterError, SystemParams
from .keyrate import KeyRateReport, gamma_table, key_rate
from .repeater import FixtureCache, repeater_output

INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

NORMALIZATIONS = ("per_pulse", "per_memory")


def golden_section_max(f, lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Deterministic bounded golden-section maximization of a unimodal f."""
    a, b = lo, hi
    x1 = b - INV_GOLDEN * (b - a)
    x2 = a + INV_GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while (b - a) > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_GOLDEN * (b - a)
            f1 = f(x1)
    if f1 >= f2:
        return x1, f1
    return x2, f2


def _metric(report: KeyRateReport, normalization: str) -> float:
    if normalization == "per_pulse":
        return report.r_per_pulse
    return report.r_per_memory


@dataclass(frozen=True)
class SweepSpec:
    """One parameter scan: the grid, the fixed operating point, and what to
    optimize at every point."""

    parameter: str
    grid: tuple[float, ...]
    params: SystemParams
    nesting_levels: tuple[int, ...] = (0, 1, 2)
    source_kind: str = "sps"
    normalization: str = "per_pulse"
    optimize_eta_sps: bool = True
    optimize_alpha: bool = False
    alpha_interval: tuple[float, float] = (0.3, 2.0)

    def __post_init__(self):
        if not self.grid:
            raise ParameterError("sweep grid must be non-empty")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ParameterError("sweep grid must be strictly increasing")
        if self.normalization not in NORMALIZATIONS:
            raise ParameterError(f"normalization must be one of {NORMALIZATIONS}")
        if self.source_kind not in ("sps", "coherent"):
            raise ParameterError("source kind must be 'sps' or 'coherent'")
        if any(n not in (0, 1, 2) for n in self.nesting_levels):
            raise ParameterError("nesting levels must be within {0, 1, 2}")


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    reports: tuple[dict[int, KeyRateReport], ...]  # one map per grid value
    derived: dict = field(default_factory=dict)

    def metric_curve(self, n: int) -> list[float]:
        return [_metric(row[n], self.spec.normalization) for row in self.reports]


def evaluate_point(params: SystemParams, source_kind: str, normalization: str,
                   numerics: Numerics = Numerics(),
                   cache: FixtureCache | None = None,
                   optimize_eta_sps: bool = True,
                   optimize_alpha: bool = False,
                   alpha_interval: tuple[float, float] = (0.3, 2.0),
                   eta_sps_bounds: tuple[float, float] = (0.02, 0.98),
                   eta_sps_tol: float = 2e-3) -> KeyRateReport:
    """Key-rate report at one operating point, optimizing the repeater
    source splitting ratio (and optionally the coherent intensity) on the
    requested normalization."""

    def report_at(p: SystemParams) -> KeyRateReport:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out = repeater_output(p, numerics, cache)
            return key_rate(p, source_kind, out, numerics)

    def best_eta(p: SystemParams) -> SystemParams:
        if not optimize_eta_sps:
            return p
        e_star, _ = golden_section_max(
            lambda e: _metric(report_at(p.with_(eta_sps=e)), normalization),
            eta_sps_bounds[0], eta_sps_bounds[1], eta_sps_tol)
        return p.with_(eta_sps=e_star)

    params = best_eta(params)
    if optimize_alpha and source_kind == "coherent":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out = repeater_output(params, numerics, cache)
        t11 = (gamma_table(params, "z", "11", out.link, numerics),
               gamma_table(params, "x", "11", out.link, numerics))

        def rate_of_alpha(alpha: float) -> float:
            p = params.with_(mu=alpha ** 2, nu=alpha ** 2)
            return _metric(key_rate(p, source_kind, out, numerics, tables_11=t11),
                           normalization)

        a_star, _ = golden_section_max(rate_of_alpha, alpha_interval[0],
                                       alpha_interval[1], 1e-3)
        params = params.with_(mu=a_star ** 2, nu=a_star ** 2)
        params = best_eta(params)
    return report_at(params)


def optimize_intensity(params: SystemParams, interval: tuple[float, float],
                       numerics: Numerics = Numerics(),
                       cache: FixtureCache | None = None,
                       normalization: str = "per_pulse",
                       optimize_eta_sps: bool = True) -> tuple[float, float]:
    """Best symmetric coherent amplitude |alpha| = |beta| and its rate.

    The repeater splitting ratio is optimized once at unit intensity and
    held; the intensity-independent single-photon tables are reused across
    the scan.  Returns (nan, 0.0) when no intensity in the interval is
    secure.
    """
    if not (0.0 < interval[0] < interval[1] <= 3.0):
        raise ParameterError("intensity interval must lie inside (0, 3]")
    base = params.with_(mu=1.0, nu=1.0)
    if optimize_eta_sps:
        def rate_eta(e: float) -> float:
            rep = evaluate_point(base.with_(eta_sps=e), "coherent", normalization,
                                 numerics, cache, optimize_eta_sps=False)
            return _metric(rep, normalization)

        e_star, _ = golden_section_max(rate_eta, 0.02, 0.98, 2e-3)
        base = base.with_(eta_sps=e_star)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = repeater_output(base, numerics, cache)
    t11 = (gamma_table(base, "z", "11", out.link, numerics),
           gamma_table(base, "x", "11", out.link, numerics))

    def rate_of_alpha(alpha: float) -> float:
        p = base.with_(mu=alpha ** 2, nu=alpha ** 2)
        return _metric(key_rate(p, "coherent", out, numerics, tables_11=t11),
                       normalization)

    a_star, r_star = golden_section_max(rate_of_alpha, interval[0], interval[1], 1e-3)
    if r_star <= 0.0:
        return math.nan, 0.0
    return a_star, r_star


def _params_at_distance(params: SystemParams, l_total: float, n: int) -> SystemParams:
    l_rep = l_total - 2.0 * params.L_s
    if l_rep <= 0:
        raise ParameterError("total distance must exceed the two access segments")
    return params.with_(L_rep=l_rep, n=n)


def rate_vs_distance(spec: SweepSpec, numerics: Numerics = Numerics(),
                     cache: FixtureCache | None = None,
                     threads: int = 1) -> SweepResult:
    """Key rate against total user-to-user distance for each nesting level.

    Grid points are independent; results are merged in grid order so thread
    count never changes the output.
    """

    def one_point(l_total: float) -> dict[int, KeyRateReport]:
        row = {}
        for n in spec.nesting_levels:
            p = _params_at_distance(spec.params, l_total, n)
            row[n] = evaluate_point(p, spec.source_kind, spec.normalization,
                                    numerics, cache, spec.optimize_eta_sps,
                                    spec.optimize_alpha, spec.alpha_interval)
        return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = tuple(pool.map(one_point, spec.grid))
    else:
        reports = tuple(one_point(l) for l in spec.grid)
    derived = {}
    for n in spec.nesting_levels:
        curve = [_metric(row[n], spec.normalization) for row in reports]
        positive = [l for l, r in zip(spec.grid, curve) if r > 0.0]
        derived[f"max_rate_n{n}"] = max(curve)
        derived[f"argmax_km_n{n}"] = spec.grid[curve.index(max(curve))]
        derived[f"last_secure_km_n{n}"] = positive[-1] if positive else 0.0
    return SweepResult(spec, reports, derived)


def _rate_at_distance(params: SystemParams, l_total: float, n: int,
                      source_kind: str, normalization: str, numerics: Numerics,
                      cache, optimize_eta_sps: bool, optimize_alpha: bool) -> float:
    try:
        p = _params_at_distance(params, l_total, n)
    except ParameterError:
        return 0.0
    rep = evaluate_point(p, source_kind, normalization, numerics, cache,
                         optimize_eta_sps, optimize_alpha)
    return _metric(rep, normalization)


def cutoff_distance(params: SystemParams, n: int, source_kind: str = "sps",
                    normalization: str = "per_pulse",
                    numerics: Numerics = Numerics(),
                    cache: FixtureCache | None = None,
                    l_max: float = 4000.0, resolution: float = 10.0,
                    optimize_eta_sps: bool = True,
                    optimize_alpha: bool = False) -> float:
    """Largest distance with a positive key rate, located by bisection.

    Returns the secure bracket edge, so the rate is positive at the reported
    value and non-positive one resolution step beyond the opposite edge.
    Returns 0 when no scanned distance is secure.
    """

    def rate(l_total: float) -> float:
        return _rate_at_distance(params, l_total, n, source_kind, normalization,
                                 numerics, cache, optimize_eta_sps, optimize_alpha)

    lo = None
    hi = None
    probe = max(4.0 * params.L_s, 50.0)
    while probe <= l_max:
        if rate(probe) > 0.0:
            lo = probe
        else:
            if lo is not None:
                hi = probe
                break
        probe *= 1.6
    if lo is None:
        return 0.0
    if hi is None:
        return l_max
    while (hi - lo) > resolution:
        mid = 0.5 * (lo + hi)
        if rate(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def crossover_distance(params: SystemParams, n_low: int, n_high: int,
                       source_kind: str = "sps", normalization: str = "per_pulse",
                       numerics: Numerics = Numerics(),
                       cache: FixtureCache | None = None,
                       l_min: float | None = None, l_max: float = 4000.0,
                       resolution: float = 10.0,
                       optimize_eta_sps: bool = True,
                       optimize_alpha: bool = False) -> float | None:
    """Distance beyond which nesting level n_high outperforms n_low.

    Bisection on the sign change of the rate difference; near-exact ties
    resolve to the lower level.  Returns None when the levels never cross in
    the scanned range.
    """
    if n_high != n_low + 1:
        raise ParameterError("crossovers are computed between adjacent levels")

    def diff(l_total: float) -> float:
        r_hi = _rate_at_distance(params, l_total, n_high, source_kind, normalization,
                                 numerics, cache, optimize_eta_sps, optimize_alpha)
        r_lo = _rate_at_distance(params, l_total, n_low, source_kind, normalization,
                                 numerics, cache, optimize_eta_sps, optimize_alpha)
        d = r_hi - r_lo
        return 0.0 if abs(d) < 1e-15 else d

    lo = l_min if l_min is not None else max(4.0 * params.L_s, 50.0)
    if diff(lo) > 0.0:
        return lo
    hi = None
    probe = lo * 1.5
    while probe <= l_max:
        if diff(probe) > 0.0:
            hi = probe
            break
        lo = probe
        probe *= 1.5
    if hi is None:
        return None
    while (hi - lo) > resolution:
        mid = 0.5 * (lo + hi)
        if diff(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def optimal_spacing(params: SystemParams, l_total: float,
                    source_kind: str = "sps",
                    numerics: Numerics = Numerics(),
                    cache: FixtureCache | None = None,
                    optimize_eta_sps: bool = True) -> tuple[int, float] | None:
    """Nesting level maximizing the per-memory rate at a total distance, and
    the node spacing it implies.  Ties resolve to fewer swap stations.
    Returns None when no level is secure."""
    best = None
    for n in (0, 1, 2):
        rate = _rate_at_distance(params, l_total, n, source_kind, "per_memory",
                                 numerics, cache, optimize_eta_sps, False)
        if rate > 0.0 and (best is None or rate > best[1] + 1e-15):
            best = (n, rate)
    if best is None:
        return None
    n_star = best[0]
    l0 = (l_total - 2.0 * params.L_s) / 2 ** n_star
    return n_star, l0
