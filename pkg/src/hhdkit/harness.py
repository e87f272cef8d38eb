"""Convergence studies, error metrics, order fitting, and report emission.

Errors use the discrete root-mean-square norm over a point set,
``sqrt(mean |g(x_j)|^2)``, normalized by the same norm of the reference
field.  Convergence orders are least-squares slopes of log(error) against
log(mesh norm), with per-pair slopes reported alongside.

Two studies ship:

* ``divfree-annulus`` fits the analytic target with divergence-free
  boundary conditions (g = 0) on the annulus and measures every level
  against the exact decomposition terms on the finest level's centers.
* ``full-hhd`` runs the two-step split on the wavy annulus; the exact
  decomposition is unknown there, so each level's parts are measured
  against the finest level's parts evaluated at that level's centers.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import fields, solver
from .geometry import DomainSpec, NodeSet, estimate_mesh_norm, gen_domain_nodes, \
    spacing_for_count, standard_annulus, standard_wavy_annulus
from .kernels import matern5_profile

__all__ = [
    "RunConfig",
    "LevelRecord",
    "OrderFit",
    "ConvergenceReport",
    "rel_l2_error",
    "fit_order",
    "run_divfree_annulus",
    "run_full_hhd",
    "emit_outputs",
    "emit_report_csv",
    "emit_convergence_svg",
    "emit_decomposition_csv",
    "emit_decomposition_svg",
    "check_report",
    "parse_config",
]

REPORT_COLUMNS = ["level", "N", "M", "h", "rel_err_full", "rel_err_div",
                  "rel_err_curl", "residual", "seconds"]
DECOMP_COLUMNS = ["x", "y", "sx", "sy", "divx", "divy", "curlx", "curly", "psi", "q"]

EXPERIMENTS = ("divfree-annulus", "full-hhd")


def _values(f, pts: np.ndarray) -> np.ndarray:
    return f(pts) if callable(f) else np.asarray(f, dtype=float)


def discrete_norm(values: np.ndarray) -> float:
    """Root mean square of the Euclidean point norms."""
    values = np.atleast_2d(values)
    return float(np.sqrt(np.mean(np.sum(values * values, axis=1))))


def rel_l2_error(a, b, pts) -> float:
    """Relative RMS error of a against b over the points.

    a and b may be callables over (n, d) arrays or precomputed (n, d)
    value arrays.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("empty evaluation set")
    va = _values(a, pts)
    vb = _values(b, pts)
    denom = discrete_norm(vb)
    if denom == 0:
        raise ValueError("reference field vanishes on the evaluation set")
    return discrete_norm(va - vb) / denom


@dataclass(frozen=True)
class OrderFit:
    """Least-squares convergence order with per-pair slopes."""

    slope: float
    pairwise: np.ndarray


def fit_order(hs: Sequence[float], errs: Sequence[float]) -> OrderFit:
    """Slope of log(err) vs log(h) plus slopes between consecutive levels."""
    hs = np.asarray(hs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    if hs.shape != errs.shape or hs.size < 2:
        raise ValueError("need at least two matching (h, err) levels")
    if np.any(hs <= 0) or np.any(errs <= 0):
        raise ValueError("h and err values must be positive")
    if np.unique(hs).size != hs.size:
        raise ValueError("h values must be distinct")
    lh = np.log(hs)
    le = np.log(errs)
    slope = float(np.polyfit(lh, le, 1)[0])
    pairwise = np.diff(le) / np.diff(lh)
    return OrderFit(slope=slope, pairwise=pairwise)


@dataclass
class LevelRecord:
    level: int
    n: int
    m: int
    h: float
    rel_err_full: float
    rel_err_div: float
    rel_err_curl: float
    residual: float
    seconds: float
    extras: Dict[str, float] = field(default_factory=dict)


@dataclass
class ConvergenceReport:
    experiment: str
    levels: List[LevelRecord]
    orders: Dict[str, float]
    pairwise: Dict[str, List[float]]

    def column(self, name: str) -> np.ndarray:
        vals = []
        for rec in self.levels:
            if hasattr(rec, name):
                vals.append(getattr(rec, name))
            else:
                vals.append(rec.extras[name])
        return np.asarray(vals, dtype=float)


@dataclass(frozen=True)
class RunConfig:
    """Configuration of a convergence study.

    levels holds target center counts, coarse to fine; at least three are
    required so orders can be fitted.  probe_factor scales the mesh-norm
    probe density relative to the node density.
    """

    domain: DomainSpec
    experiment: str
    eps: float = 5.0
    levels: Sequence[int] = (600, 1200, 2400, 4800)
    use_schur: bool = True
    jitter: float = 0.0
    probe_factor: float = 10.0
    record_timing: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if len(self.levels) < 3:
            raise ValueError("need at least 3 refinement levels to fit orders")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


def default_config(experiment: str, n_levels: int = 4, eps: float = 5.0,
                   base_count: int = 600, **kw) -> RunConfig:
    """Standard study setup: counts doubling from base_count."""
    domain = standard_annulus() if experiment == "divfree-annulus" \
        else standard_wavy_annulus()
    levels = tuple(base_count * 2**i for i in range(n_levels))
    return RunConfig(domain=domain, experiment=experiment, eps=eps,
                     levels=levels, **kw)


def _level_nodes(cfg: RunConfig) -> List[NodeSet]:
    out = []
    for target in cfg.levels:
        h = spacing_for_count(cfg.domain, int(target))
        out.append(gen_domain_nodes(cfg.domain, h))
    return out


def _fit_orders(levels: List[LevelRecord], names: Sequence[str]):
    orders: Dict[str, float] = {}
    pairwise: Dict[str, List[float]] = {}
    hs = np.array([rec.h for rec in levels])
    for name in names:
        errs = []
        hh = []
        for rec, h in zip(levels, hs):
            val = getattr(rec, name) if hasattr(rec, name) else rec.extras.get(name)
            if val is not None and val > 0:
                errs.append(val)
                hh.append(h)
        if len(errs) >= 2:
            f = fit_order(hh, errs)
            orders[name] = f.slope
            pairwise[name] = list(f.pairwise)
    return orders, pairwise


def run_divfree_annulus(cfg: RunConfig) -> ConvergenceReport:
    """Divergence-free-boundary study against the exact decomposition.

    Per level: generate nodes, fit the target with g = 0, and measure the
    relative errors of the fit, its divergence-free part, and its curl-free
    part against the analytic target, the exact boundary-tangent term, and
    the exact gradient term on the finest level's centers.
    """
    if cfg.experiment != "divfree-annulus":
        raise ValueError(f"config is for {cfg.experiment!r}")
    profile = matern5_profile(cfg.eps)
    node_sets = _level_nodes(cfg)
    fits = []
    times = []
    for nodes in node_sets:
        t0 = time.perf_counter()
        it = solver.fit_divfree(nodes, profile, fields.annulus_target(nodes.interior),
                                np.zeros(nodes.n_boundary),
                                use_schur=cfg.use_schur, jitter=cfg.jitter)
        times.append(time.perf_counter() - t0 if cfg.record_timing else 0.0)
        fits.append(it)
    X_ref = node_sets[-1].interior
    exact_full = fields.annulus_target(X_ref)
    exact_div = fields.annulus_leray_exact(X_ref)
    exact_curl = fields.annulus_gradient_part(X_ref)
    records = []
    for i, (nodes, it) in enumerate(zip(node_sets, fits)):
        h = estimate_mesh_norm(nodes, cfg.domain,
                               cfg.probe_factor * math.sqrt(nodes.n_interior / cfg.domain.area()))
        records.append(LevelRecord(
            level=i + 1, n=nodes.n_interior, m=nodes.n_boundary, h=h,
            rel_err_full=rel_l2_error(it.evaluate(X_ref), exact_full, X_ref),
            rel_err_div=rel_l2_error(it.div_part(X_ref), exact_div, X_ref),
            rel_err_curl=rel_l2_error(it.curl_part(X_ref), exact_curl, X_ref),
            residual=it.solve_residual, seconds=times[i]))
    # The finest level doubles as the evaluation set, where its own fit is
    # superconvergent (it interpolates there); orders are fitted over the
    # other levels.
    orders, pairwise = _fit_orders(records[:-1],
                                   ["rel_err_full", "rel_err_div", "rel_err_curl"])
    return ConvergenceReport(experiment=cfg.experiment, levels=records,
                             orders=orders, pairwise=pairwise)


def run_full_hhd(cfg: RunConfig) -> ConvergenceReport:
    """Two-step full-decomposition study with finest-level proxies.

    The finest level's three parts stand in for the unknown exact terms:
    each coarser level's parts are compared against them at that level's
    own centers, so the finest level's proxy errors are exactly zero and
    orders are fitted over the remaining levels.  rel_err_full measures the
    step-one interpolant against the target on the finest centers.
    """
    if cfg.experiment != "full-hhd":
        raise ValueError(f"config is for {cfg.experiment!r}")
    profile = matern5_profile(cfg.eps)
    node_sets = _level_nodes(cfg)
    decomps = []
    times = []
    for nodes in node_sets:
        t0 = time.perf_counter()
        decomps.append(solver.full_hhd(fields.annulus_target, nodes, profile,
                                       use_schur=cfg.use_schur, jitter=cfg.jitter))
        times.append(time.perf_counter() - t0 if cfg.record_timing else 0.0)
    finest = decomps[-1]
    X_ref = node_sets[-1].interior
    exact_full = fields.annulus_target(X_ref)
    records = []
    for i, (nodes, dec) in enumerate(zip(node_sets, decomps)):
        X = nodes.interior
        h = estimate_mesh_norm(nodes, cfg.domain,
                               cfg.probe_factor * math.sqrt(nodes.n_interior / cfg.domain.area()))
        records.append(LevelRecord(
            level=i + 1, n=nodes.n_interior, m=nodes.n_boundary, h=h,
            rel_err_full=rel_l2_error(dec.step1.evaluate(X_ref), exact_full, X_ref),
            rel_err_div=rel_l2_error(dec.leray_part(X), finest.leray_part(X), X),
            rel_err_curl=rel_l2_error(dec.normal_part(X), finest.normal_part(X), X),
            residual=max(dec.step1.solve_residual, dec.step2.solve_residual),
            seconds=times[i],
            extras={
                "rel_err_harmonic": rel_l2_error(dec.harmonic_part(X),
                                                 finest.harmonic_part(X), X),
                "sum_residual": dec.sum_residual,
            }))
    orders, pairwise = _fit_orders(
        records[:-1],
        ["rel_err_full", "rel_err_div", "rel_err_curl", "rel_err_harmonic"])
    return ConvergenceReport(experiment=cfg.experiment, levels=records,
                             orders=orders, pairwise=pairwise)


def run_experiment(cfg: RunConfig) -> ConvergenceReport:
    if cfg.experiment == "divfree-annulus":
        return run_divfree_annulus(cfg)
    return run_full_hhd(cfg)


# ---------------------------------------------------------------------------
# threshold checks
# ---------------------------------------------------------------------------

def check_report(report: ConvergenceReport, min_order: float = 4.5,
                 max_finest_err: float = 1e-4,
                 max_sum_residual: float = 1e-8) -> List[str]:
    """Threshold checks for ``converge --check``; returns failure messages."""
    failures = []
    if report.experiment == "divfree-annulus":
        order = report.orders.get("rel_err_div", float("nan"))
        if not order >= min_order:
            failures.append(
                f"divergence-free part order {order:.2f} below {min_order}")
        finest = report.levels[-1].rel_err_div
        if not finest <= max_finest_err:
            failures.append(
                f"finest-level div-part error {finest:.3e} above {max_finest_err:g}")
    else:
        for name, label in (("rel_err_curl", "normal part"),
                            ("rel_err_div", "tangent div-free part"),
                            ("rel_err_harmonic", "harmonic part")):
            order = report.orders.get(name, float("nan"))
            if not order >= min_order:
                failures.append(f"{label} proxy order {order:.2f} below {min_order}")
        for rec in report.levels:
            sr = rec.extras.get("sum_residual", 0.0)
            if not sr <= max_sum_residual:
                failures.append(
                    f"level {rec.level}: sum-of-parts residual {sr:.3e} "
                    f"above {max_sum_residual:g}")
    return failures


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def emit_report_csv(report: Optional[ConvergenceReport], path,
                    include_timing: bool = False) -> None:
    """Write the per-level report; columns are fixed.

    The seconds column is written as 0.0 unless include_timing is set, so
    that identical runs emit byte-identical files.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        if report is None:
            return
        for rec in report.levels:
            seconds = rec.seconds if include_timing else 0.0
            writer.writerow([rec.level, rec.n, rec.m, repr(rec.h),
                             repr(rec.rel_err_full), repr(rec.rel_err_div),
                             repr(rec.rel_err_curl), repr(rec.residual),
                             repr(float(seconds))])


def read_report_csv(path) -> List[Dict[str, float]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [{k: float(v) for k, v in row.items()} for row in reader]


def emit_convergence_svg(report: Optional[ConvergenceReport], path,
                         reference_order: float = 5.5) -> None:
    """Loglog error-versus-h plot with a reference slope line."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    if report is not None and report.levels:
        hs = report.column("h")
        series = [("rel_err_full", "interpolant", "o-"),
                  ("rel_err_div", "div-free part", "s-"),
                  ("rel_err_curl", "curl-free part", "d-")]
        for name, label, style in series:
            errs = report.column(name)
            mask = errs > 0
            if mask.any():
                ax.loglog(hs[mask], errs[mask], style, label=label)
        ref = report.column("rel_err_div")
        mask = ref > 0
        if mask.any():
            anchor_h = hs[mask][-1]
            anchor_e = ref[mask][-1]
            hh = np.array([hs.max(), hs[mask].min()])
            ax.loglog(hh, anchor_e * (hh / anchor_h) ** reference_order, "k--",
                      label=f"slope {reference_order:g}")
    ax.set_xlabel("mesh norm h")
    ax.set_ylabel("relative error")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def emit_decomposition_csv(it: solver.Interpolant, pts, path) -> None:
    """Samples of a fitted field, its two parts, and its potentials."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    s = it.evaluate(pts)
    dv = it.div_part(pts)
    cl = it.curl_part(pts)
    psi, q = it.potentials(pts)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DECOMP_COLUMNS)
        for i in range(pts.shape[0]):
            writer.writerow([repr(float(v)) for v in
                             (pts[i, 0], pts[i, 1], s[i, 0], s[i, 1], dv[i, 0],
                              dv[i, 1], cl[i, 0], cl[i, 1], psi[i], q[i])])


def emit_decomposition_svg(it: solver.Interpolant, spec: DomainSpec, path,
                           arrows: int = 700) -> None:
    """Quiver of both parts with contours of their potentials."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # plotting grid only; keep the spacing fine enough for the generator's
    # boundary-count minimum
    h = min(math.sqrt(spec.area() / max(arrows, 50)),
            0.9 * 2.0 * math.pi * spec.inner / 16.0)
    nodes = gen_domain_nodes(spec, h)
    P = nodes.interior
    dv = it.div_part(P)
    cl = it.curl_part(P)
    psi, q = it.potentials(P)
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.2))
    for ax, vecs, pot, title in ((axes[0], dv, psi, "divergence-free part / stream"),
                                 (axes[1], cl, q, "curl-free part / potential")):
        ax.tricontour(P[:, 0], P[:, 1], pot, levels=14, linewidths=0.7)
        ax.quiver(P[:, 0], P[:, 1], vecs[:, 0], vecs[:, 1], angles="xy", width=0.003)
        ax.set_aspect("equal")
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def emit_outputs(report: ConvergenceReport, out_dir, name: str = "report",
                 include_timing: bool = False,
                 reference_order: float = 5.5) -> Dict[str, str]:
    """Write the report CSV and the convergence SVG under out_dir."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{name}.csv")
    svg_path = os.path.join(out_dir, f"{name}.svg")
    emit_report_csv(report, csv_path, include_timing=include_timing)
    emit_convergence_svg(report, svg_path, reference_order=reference_order)
    return {"csv": csv_path, "svg": svg_path}


# ---------------------------------------------------------------------------
# flat key=value config files
# ---------------------------------------------------------------------------

def parse_config(path) -> Dict[str, str]:
    """Read a flat key=value file; '#' starts a comment line."""
    out: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out
