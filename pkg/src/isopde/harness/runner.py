"""
Scenario pipelines: geometry -> solve -> stability -> symmetry -> threshold.

Every run produces an :class:`ExperimentRecord`, also when a module raises;
the error is stored with its scenario context and the status is ``failed``.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import os
import tempfile
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import __version__
from ..discretize import (
    DiscreteField,
    apply_to_function,
    assemble_fiber_laplacian,
    assemble_laplacian,
    build_grid,
)
from ..errors import ConfigError, WindowError
from ..functions import Cos, Power, Sin
from ..geometry import Coupling, FiberSpec, WarpedGeometry, volume_growth_diagnostic
from ..nlsolve import newton_solve, random_initial_guess, softplus
from ..stability import check_stability, lambda1
from ..symmetry import (
    commutation_residual,
    killing_commutation_residual,
    leaf_average,
    pointwise_laplacian,
    symmetry_report,
    weighted_inner,
)
from ..thresholds import build_barrier, compute_threshold, infinite_annulus_diagnostic
from .config import ExperimentConfig

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "h_r", "h_f", "newton_iters", "residual", "lambda1",
    "defect_inf", "defect_l2", "tangential_grad_max", "b_max", "runtime_ms",
)
TIMING_KEYS = {"runtime_ms", "wall_time_ms"}


def _clean(x):
    """JSON-safe plain python values (NaN -> None)."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def loglog_slope(h, values) -> float:
    """Least-squares slope of ``log(values)`` against ``log(h)``."""
    h = np.asarray(h, dtype=float)
    v = np.asarray(values, dtype=float)
    ok = (h > 0) & (v > 0) & np.isfinite(v)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(h[ok]), np.log(v[ok]), 1)[0])


@dataclass
class ExperimentRecord:
    name: str
    scenario: str
    config_hash: str
    version: str
    seed: int
    status: str = "running"
    grids: list = field(default_factory=list)
    assertions: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    error: str | None = None
    wall_time_ms: float = 0.0

    @property
    def passed(self) -> bool:
        return self.status == "passed"

    def check(self, name: str, passed: bool, detail: str = ""):
        self.assertions.append({"name": name, "passed": bool(passed), "detail": detail})
        log.info("%s %s %s", "PASS" if passed else "FAIL", name, detail)

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentRecord":
        return cls(**data)


def _h(row) -> float:
    return max(row["h_r"], row["h_f"] if row["h_f"] is not None else 0.0)


def _row(grid, **kw) -> dict:
    row = {k: None for k in CSV_COLUMNS}
    row["h_r"] = grid.h_r
    row["h_f"] = grid.h_f if grid.fiber_ndim else None
    row.update(kw)
    return row


def _pmap(fn, items, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------- solving

def _solve_level(cfg: ExperimentConfig, f, n_r, n_f, starts: int, b_max):
    t0 = time.perf_counter()
    geom = cfg.geometry
    grid = build_grid(geom, n_r, n_f)
    op = assemble_laplacian(geom, grid)
    sols, reports = [], []
    for k in range(starts):
        u0 = random_initial_guess(grid, cfg.c1, cfg.c2, cfg.seed + k) if starts > 1 or grid.fiber_ndim else None
        rep = newton_solve(geom, grid, f, cfg.c1, cfg.c2, u0, cfg.tol, op=op)
        spec = check_stability(geom, grid, rep, f)
        sym = symmetry_report(geom, grid, rep.solution)
        rep.symmetry_defect = sym.defect_inf
        reports.append((rep, spec, sym))
        sols.append(rep.solution.values)
    dist = max((float(np.abs(a - b).max()) for a, b in itertools.combinations(sols, 2)), default=0.0)
    rep, spec, sym = reports[0]
    d2f_max = max(float(np.max(f.d2f(u))) for u in sols)
    row = _row(
        grid,
        newton_iters=max(r.newton_iters for r, _, _ in reports),
        residual=max(r.residual for r, _, _ in reports),
        lambda1=min(s.lambda1 for _, s, _ in reports),
        defect_inf=max(s.defect_inf for _, _, s in reports),
        defect_l2=max(s.defect_l2 for _, _, s in reports),
        tangential_grad_max=max(s.tangential_grad_max for _, _, s in reports),
        b_max=b_max,
        runtime_ms=1e3 * (time.perf_counter() - t0),
    )
    profile = leaf_average(geom, grid, rep.solution).as_array()[:, 0]
    return {
        "row": row,
        "converged": all(r.converged for r, _, _ in reports),
        "pairwise": dist,
        "profile": {"r": grid.r, "u": profile},
        "classes": [s.classification for _, s, _ in reports],
        "d2f_max": d2f_max,
    }


def _threshold_or_none(geom, record):
    try:
        return compute_threshold(geom)
    except Exception as exc:  # threshold is informative for non-threshold scenarios
        record.notes.append(f"threshold unavailable: {exc}")
        return None


def _solve_scenario(cfg: ExperimentConfig, record: ExperimentRecord, jobs: int, starts: int,
                    require_concave: bool):
    geom = cfg.geometry
    b_max = _threshold_or_none(geom, record)
    f = cfg.nonlinearity
    frac = cfg.params.get("b_fraction")
    if frac is not None:
        if f.name != "softplus" or b_max is None:
            raise ConfigError("params.b_fraction needs a softplus nonlinearity and a threshold")
        f = softplus(frac * b_max, f.params.get("offset", 0.0))
        record.summary["B"] = f.lower_bound_B
    if require_concave:
        B = f.lower_bound_B
        ok = B is not None and b_max is not None and B < b_max
        record.check("certified B below threshold", ok, f"B={B}, b_max={b_max}")
    levels = _pmap(lambda g: _solve_level(cfg, f, g[0], g[1], starts, b_max), cfg.grids, jobs)
    for lev in levels:
        record.grids.append(lev["row"])
    record.series["profile"] = levels[-1]["profile"]
    record.summary["b_max"] = b_max
    record.summary["pairwise_distance"] = [lev["pairwise"] for lev in levels]
    record.check("all grids converged", all(lev["converged"] for lev in levels))
    if require_concave:
        # concavity is only needed on the range of the solutions
        worst = max(lev["d2f_max"] for lev in levels)
        ok = f.concavity == "concave" or (f.concavity != "affine" and worst <= 1e-12)
        record.check("f concave and non-affine on the solution range", ok,
                     f"concavity={f.concavity}, max f''(u)={worst:.3e}")
    return f, levels


def _symmetry_checks(record: ExperimentRecord):
    hs = [_h(r) for r in record.grids]
    defects = [r["defect_inf"] for r in record.grids]
    for h, d in zip(hs, defects):
        record.check(f"defect_inf <= 10 h^2 (h={h:.4g})", d <= 10 * h * h, f"defect={d:.3e}")
    record.series["convergence"] = {"label": "defect_inf", "h": hs, "values": defects, "reference": "10 h^2"}
    record.series["lambda1"] = {"h": hs, "values": [r["lambda1"] for r in record.grids]}


def scenario_affine(cfg, record, jobs):
    f = cfg.nonlinearity
    record.check("nonlinearity affine", f.concavity == "affine")
    _solve_scenario(cfg, record, jobs, starts=1, require_concave=False)
    _symmetry_checks(record)


def scenario_concave(cfg, record, jobs):
    _, levels = _solve_scenario(cfg, record, jobs, cfg.params.get("starts", 5), require_concave=True)
    _symmetry_checks(record)
    for row in record.grids:
        record.check(f"lambda1(-L) > 0 (h_r={row['h_r']:.4g})", row["lambda1"] > 0, f"lambda1={row['lambda1']:.6g}")


def scenario_gaussian(cfg, record, jobs):
    geom = cfg.geometry
    gaussian = (geom.sigma.is_constant and float(geom.sigma(0.0)) == 1.0
                and np.allclose(geom.phi(np.array([0.0, 1.0, 2.0])), [0.0, 0.5, 2.0]))
    record.check("geometry is a Gaussian slab", gaussian)
    scenario_concave(cfg, record, jobs)
    _threshold_series(geom, record, 0.9)


def scenario_uniqueness(cfg, record, jobs):
    tol = cfg.params.get("uniqueness_tol", 1e-7)
    _solve_scenario(cfg, record, jobs, cfg.params.get("starts", 5), require_concave=True)
    for row, d in zip(record.grids, record.summary["pairwise_distance"]):
        record.check(f"multistart pairwise distance <= {tol:g} (h_r={row['h_r']:.4g})", d <= tol, f"max={d:.3e}")
    record.series["lambda1"] = {"h": [_h(r) for r in record.grids], "values": [r["lambda1"] for r in record.grids]}
    if cfg.params.get("affine_marginal", True):
        _affine_marginal(cfg, record)


def _affine_marginal(cfg, record):
    """The affine exception: ``f(t) = -lambda_inf t`` is marginally stable."""
    radial = cfg.geometry.radial_only()
    sizes = cfg.params.get("marginal_n_r", [64, 128, 256])
    lams = [lambda1(radial, build_grid(radial, n)).lambda1 for n in sizes]
    hs = [build_grid(radial, n).h_r for n in sizes]
    # Richardson extrapolation of the O(h^2) eigenvalue error
    lam_inf = lams[-1] + (lams[-1] - lams[-2]) * hs[-1] ** 2 / (hs[-2] ** 2 - hs[-1] ** 2)
    marg = [lambda1(radial, build_grid(radial, n), -lam_inf).lambda1 for n in sizes]
    record.summary["affine_marginal"] = {"n_r": sizes, "lambda_inf": lam_inf, "lambda1_L": marg}
    record.check("affine case marginal: |lambda1(-L)| < 1e-3 at finest grid", abs(marg[-1]) < 1e-3,
                 f"lambda1={marg[-1]:.3e}")


# ---------------------------------------------------------------- thresholds

def _threshold_series(geom, record, fraction):
    b_max = compute_threshold(geom)
    rep = build_barrier(geom.radial_only(), fraction * b_max, b_max=b_max)
    record.series["threshold"] = rep.table()
    record.summary["barrier"] = rep.summary()
    return b_max, rep


def scenario_threshold(cfg, record, jobs):
    geom = cfg.geometry
    b_max, rep = _threshold_series(geom, record, cfg.params.get("success_fraction", 0.9))
    record.summary["b_max"] = b_max
    record.check("barrier at 0.9 b_max positive and decreasing", rep.phi_min > 0 and rep.phi_max <= 1.0,
                 f"phi in [{rep.phi_min:.4g}, {rep.phi_max:.4g}]")
    record.check("barrier residual <= 1e-8", rep.barrier_residual <= 1e-8, f"{rep.barrier_residual:.3e}")
    try:
        build_barrier(geom.radial_only(), cfg.params.get("failure_fraction", 1.1) * b_max, b_max=b_max)
        record.check("WindowError at 1.1 b_max", False, "barrier unexpectedly built")
    except WindowError as exc:
        record.check("WindowError at 1.1 b_max", True, str(exc))
    if geom.sigma.is_constant and geom.phi.is_constant:
        W = geom.width
        val = b_max * W * W
        record.check("flat closed form b_max W^2 = 2", abs(val - 2.0) <= 2e-8, f"{val!r}")
    n = cfg.n_r[-1] if cfg.n_r else 128
    radial = geom.radial_only()
    lam = lambda1(radial, build_grid(radial, n), -0.9 * b_max).lambda1
    record.summary["lambda1_at_0.9"] = lam
    record.check("lambda1(-(Delta + 0.9 b_max)) > 0", lam > 0, f"{lam:.6g}")


# ---------------------------------------------------------------- commutation

def _manufactured(r, xi):
    return np.exp(r) + np.cos(2 * r) * np.sin(xi[..., 0])


def scenario_commutation(cfg, record, jobs):
    geom = cfg.geometry
    if geom.fiber.kind == "point":
        raise ConfigError("CommutationSuite needs a circle or torus fiber")
    coupled = WarpedGeometry(geom.dim_m, geom.r1, geom.r2, geom.sigma, geom.phi, geom.fiber,
                             Coupling(Power(1.0), Sin()))
    gam = list(geom.fiber.gamma)
    gam[0] = Cos()
    nonkilling = WarpedGeometry(geom.dim_m, geom.r1, geom.r2, geom.sigma, geom.phi,
                                FiberSpec(geom.fiber.kind, geom.fiber.lengths, tuple(gam)))

    def level(g):
        t0 = time.perf_counter()
        n_r, n_f = g
        grid = build_grid(geom, n_r, n_f)
        out = {
            "split": commutation_residual(geom, grid, _manufactured),
            "killing": killing_commutation_residual(geom, grid, _manufactured),
            "nonsplit": commutation_residual(coupled, build_grid(coupled, n_r, n_f), _manufactured),
            "nonkilling": killing_commutation_residual(nonkilling, build_grid(nonkilling, n_r, n_f),
                                                       _manufactured, check=False),
        }
        out.update(_identities(geom, grid, cfg.seed))
        out["row"] = _row(grid, runtime_ms=1e3 * (time.perf_counter() - t0))
        return out

    levels = _pmap(level, cfg.grids, jobs)
    hs = [lev["row"]["h_r"] for lev in levels]
    record.grids = [lev["row"] for lev in levels]
    for key in ("split", "killing", "nonsplit", "nonkilling"):
        record.series[f"residual_{key}"] = {"h": hs, "values": [lev[key] for lev in levels]}
    for key in ("split", "killing"):
        s = loglog_slope(hs, [lev[key] for lev in levels])
        record.slopes[key] = s
        record.check(f"{key} commutation residual O(h^2): slope in [1.6, 2.4]", 1.6 <= s <= 2.4, f"slope={s:.3f}")
    for key in ("nonsplit", "nonkilling"):
        vals = [lev[key] for lev in levels]
        plateau = vals[-1] >= 0.1 and vals[0] / vals[-1] <= 2.0
        record.check(f"{key} negative control plateaus at O(1)", plateau,
                     f"residuals={', '.join(f'{v:.3g}' for v in vals)}")
    for key in ("fiber_sum", "weighted_symmetry", "idempotence", "orthogonality"):
        worst = max(lev[key] for lev in levels)
        record.summary[key] = worst
        record.check(f"{key} <= 1e-12", worst <= 1e-12, f"{worst:.3e}")
    record.series["convergence"] = {"label": "commutation residual", "h": hs,
                                    "values": [lev["split"] for lev in levels]}


def _identities(geom, grid, seed) -> dict:
    rng = np.random.default_rng(seed)
    u = DiscreteField(grid, rng.standard_normal(grid.size))
    F = assemble_fiber_laplacian(geom, grid)
    Fu = (F @ u.values).reshape(grid.shape)
    lw = grid.leaf_weights
    scale = np.abs(Fu).max()
    fiber_sum = float(np.abs((lw * Fu).sum(axis=1)).max() / scale)
    op = assemble_laplacian(geom, grid)
    Au = leaf_average(geom, grid, u)
    AAu = leaf_average(geom, grid, Au)
    ortho = weighted_inner(grid, u.values - Au.values, Au.values)
    norm = weighted_inner(grid, u.values, u.values)
    return {
        "fiber_sum": fiber_sum,
        "weighted_symmetry": op.symmetry_defect(),
        "idempotence": float(np.abs(AAu.values - Au.values).max()),
        "orthogonality": abs(ortho) / norm,
    }


# ---------------------------------------------------------------- refinement / diagnostics

def scenario_refinement(cfg, record, jobs):
    geom = cfg.geometry
    W = geom.width

    def u_exact(r, xi):
        base = np.sin(np.pi * (r - geom.r1) / W)
        if xi.shape[-1]:
            base = base * (1.0 + 0.5 * np.cos(2 * np.pi * xi[..., 0] / geom.fiber.lengths[0]))
        return base

    def residual(g):
        grid = build_grid(geom, *g)
        op = assemble_laplacian(geom, grid)
        R, XI = grid.nodes
        exact = np.broadcast_to(pointwise_laplacian(geom, u_exact, R, XI), grid.shape).ravel()
        return float(np.abs(apply_to_function(op, u_exact) - exact).max())

    res = _pmap(residual, cfg.grids, jobs)
    _solve_scenario(cfg, record, jobs, starts=1, require_concave=False)
    hs = [r["h_r"] for r in record.grids]
    s = loglog_slope(hs, res)
    record.slopes["operator"] = s
    record.series["convergence"] = {"label": "manufactured residual", "h": hs, "values": res}
    record.series["lambda1"] = {"h": hs, "values": [r["lambda1"] for r in record.grids]}
    lo, hi = cfg.params.get("slope_window", [1.7, 2.3])
    record.check(f"operator residual slope in [{lo}, {hi}]", lo <= s <= hi, f"slope={s:.3f}")


def scenario_infinite(cfg, record, jobs):
    geom = cfg.geometry
    r_max = cfg.params["r_max"]
    r_max = r_max if isinstance(r_max, list) else [r_max]
    rows = []
    for R in r_max:
        total, conv = infinite_annulus_diagnostic(geom, float(R))
        growth = volume_growth_diagnostic(geom, float(R))
        rows.append({"r_max": R, "theta_integral": total, "converging": conv, "volume_growth": growth})
    record.summary["infinite_annulus"] = rows
    record.series["theta_tail"] = {"h": r_max, "values": [r["theta_integral"] for r in rows]}
    expect = cfg.params.get("expect_converging")
    if expect is not None:
        record.check("theta integrability flag as expected", rows[-1]["converging"] == bool(expect),
                     f"converging={rows[-1]['converging']}")
    record.notes.append("truncation evidence only; no analytic convergence claim")


SCENARIO_FUNCS = {
    "AffineSymmetry": scenario_affine,
    "ConcaveSymmetry": scenario_concave,
    "UniquenessMultistart": scenario_uniqueness,
    "ThresholdSharpness": scenario_threshold,
    "CommutationSuite": scenario_commutation,
    "GaussianSlab": scenario_gaussian,
    "RefinementStudy": scenario_refinement,
    "InfiniteAnnulusDiag": scenario_infinite,
}


def execute(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentRecord:
    """Run the scenario in memory; never raises for module errors."""
    record = ExperimentRecord(cfg.name, cfg.scenario, cfg.config_hash(), __version__, cfg.seed)
    t0 = time.perf_counter()
    try:
        SCENARIO_FUNCS[cfg.scenario](cfg, record, jobs)
        ok = record.assertions and all(a["passed"] for a in record.assertions)
        record.status = "passed" if ok else "failed"
    except Exception as exc:
        record.status = "failed"
        record.error = f"{cfg.scenario}: {type(exc).__name__}: {exc}"
        log.debug("scenario failed\n%s", traceback.format_exc())
    record.wall_time_ms = 1e3 * (time.perf_counter() - t0)
    return record


# ---------------------------------------------------------------- persistence

def atomic_write(path, text: str):
    """Write-temp-then-rename, so readers never see a partial file."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def record_json(record: ExperimentRecord) -> str:
    return json.dumps(record.to_dict(), sort_keys=True, indent=2) + "\n"


def record_csv(record: ExperimentRecord) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in record.grids:
        writer.writerow({k: ("" if row.get(k) is None else repr(row[k])) for k in CSV_COLUMNS})
    return buf.getvalue()


def resolve_out_dir(out_dir=None, cfg: ExperimentConfig | None = None) -> str:
    """Explicit argument, then the config's ``[output] dir``, then ``ISOPDE_OUT``, then ``./out``."""
    for cand in (out_dir, cfg.out_dir if cfg else None, os.environ.get("ISOPDE_OUT")):
        if cand:
            return os.fspath(cand)
    return "out"


def write_record(record: ExperimentRecord, out_dir) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "record": os.path.join(out_dir, f"{record.name}.record.json"),
        "csv": os.path.join(out_dir, f"{record.name}.csv"),
    }
    atomic_write(paths["csv"], record_csv(record))
    if "threshold" in record.series:
        paths["threshold_csv"] = os.path.join(out_dir, f"{record.name}.threshold.csv")
        t = record.series["threshold"]
        lines = ["r,theta,phi"] + [f"{a!r},{b!r},{c!r}" for a, b, c in zip(t["r"], t["theta"], t["phi"])]
        atomic_write(paths["threshold_csv"], "\n".join(lines) + "\n")
    # the record is written last so it can list the plot files
    atomic_write(paths["record"], record_json(record))
    return paths


def run(cfg: ExperimentConfig, out_dir=None, jobs: int = 1, plots: bool = True) -> ExperimentRecord:
    """Execute the scenario and write ``<name>.record.json``, ``<name>.csv`` and SVG plots."""
    from .plots import emit_plots

    out_dir = resolve_out_dir(out_dir, cfg)
    record = execute(cfg, jobs)
    if plots:
        try:
            record.summary["plots"] = sorted(os.path.basename(p) for p in emit_plots(record, out_dir))
        except OSError as exc:
            record.notes.append(f"plots not written: {exc}")
    write_record(record, out_dir)
    return record
