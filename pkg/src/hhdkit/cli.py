"""Command-line interface.

Subcommands:

* ``gen-nodes``   write a quasi-uniform node file for a built-in domain
* ``decompose``   one-shot decomposition of a sampled field (div-free BCs)
* ``hhd``         two-step full decomposition
* ``converge``    convergence study with report emission

Options may come from a flat key=value config file (``--config``); any key
can be overridden by the command-line flag of the same name.  Exit codes:
0 success, 2 configuration error, 3 solver failure, 4 threshold failure in
``converge --check``.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional

import numpy as np

from . import fields, geometry, harness, solver
from .geometry import DomainSpec, NodeFileError
from .kernels import matern5_profile

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4


class ConfigError(ValueError):
    pass


def _domain_from_name(name: str) -> DomainSpec:
    if name == "annulus":
        return geometry.standard_annulus()
    if name == "wavy-annulus":
        return geometry.standard_wavy_annulus()
    raise ConfigError(f"unknown domain {name!r} (expected annulus or wavy-annulus)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hhdkit",
        description="Mesh-free vector-field decompositions with RBF kernels")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, nodes_flag=True):
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--domain", default=None, choices=["annulus", "wavy-annulus"])
        p.add_argument("--eps", type=float, default=None, help="shape parameter (default 5)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--schur", action="store_true", default=None,
                       help="use the block Schur solve path")
        p.add_argument("--jitter", type=float, default=None,
                       help="diagonal regularization (default 0)")
        if nodes_flag:
            p.add_argument("--nodes", default=None,
                           help="node file path (bypasses the generator)")

    p = sub.add_parser("gen-nodes", help="generate a node file")
    common(p, nodes_flag=False)
    p.add_argument("--count", type=int, default=None,
                   help="target number of centers (default 600)")
    p.add_argument("--h", dest="spacing", type=float, default=None,
                   help="target spacing (overrides --count)")

    p = sub.add_parser("decompose", help="decompose a sampled field (div-free BCs)")
    common(p)
    p.add_argument("--field", default=None,
                   help="sample CSV of the field; default: built-in analytic target")
    p.add_argument("--g", dest="gspec", default=None,
                   help="boundary data: zero or file:<path> (default zero)")
    p.add_argument("--count", type=int, default=None,
                   help="target centers when generating nodes (default 600)")

    p = sub.add_parser("hhd", help="two-step full decomposition")
    common(p)
    p.add_argument("--field", default=None)
    p.add_argument("--count", type=int, default=None)

    p = sub.add_parser("converge", help="convergence study")
    common(p, nodes_flag=False)
    p.add_argument("--levels", type=int, default=None,
                   help="number of refinement levels (default 4)")
    p.add_argument("--base-count", dest="base_count", type=int, default=None,
                   help="target centers at the coarsest level (default 600)")
    p.add_argument("--experiment", default=None, choices=list(harness.EXPERIMENTS))
    p.add_argument("--check", action="store_true", default=None,
                   help="fail (exit 4) when thresholds are not met")
    p.add_argument("--min-order", dest="min_order", type=float, default=None,
                   help="order threshold for --check (default 4.5)")
    p.add_argument("--timing", action="store_true", default=None,
                   help="record wall times in the report CSV (breaks byte determinism)")
    return parser


_BOOL_KEYS = {"schur", "check", "timing"}


def _merged(args: argparse.Namespace, defaults: dict) -> dict:
    """Defaults, then config file values, then explicit CLI flags."""
    opts = dict(defaults)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            raw = harness.parse_config(cfg_path)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        for key, value in raw.items():
            key = key.replace("-", "_")
            if key not in opts:
                raise ConfigError(f"unknown config key {key!r}")
            if key in _BOOL_KEYS:
                opts[key] = value.lower() in ("1", "true", "yes", "on")
            elif opts[key] is None or isinstance(opts[key], str):
                opts[key] = value
            else:
                opts[key] = type(opts[key])(value)
    for key in opts:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    return opts


def _load_or_generate_nodes(opts) -> geometry.NodeSet:
    if opts.get("nodes"):
        return geometry.load_nodes(opts["nodes"])
    domain = _domain_from_name(opts["domain"])
    h = geometry.spacing_for_count(domain, int(opts["count"]))
    return geometry.gen_domain_nodes(domain, h)


def _field_samples(opts, nodes: geometry.NodeSet) -> np.ndarray:
    if opts.get("field"):
        try:
            sampled = fields.read_samples(opts["field"])
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        try:
            return sampled(nodes.interior)
        except fields.MissingSampleError as exc:
            raise ConfigError(f"field CSV does not cover the centers: {exc}") from exc
    return fields.annulus_target(nodes.interior)


def _boundary_data(opts, nodes: geometry.NodeSet) -> np.ndarray:
    gspec = opts.get("gspec") or "zero"
    if gspec == "zero":
        return np.zeros(nodes.n_boundary)
    if gspec.startswith("file:"):
        path = gspec[len("file:"):]
        try:
            vals = np.loadtxt(path, dtype=float, ndmin=1)
        except OSError as exc:
            raise ConfigError(str(exc)) from exc
        if vals.shape != (nodes.n_boundary,):
            raise ConfigError(
                f"boundary data file has {vals.shape[0]} values, "
                f"need {nodes.n_boundary}")
        return vals
    raise ConfigError(f"--g must be zero or file:<path>, got {gspec!r}")


def _out_dir(opts) -> str:
    out = opts.get("out") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_gen_nodes(args) -> int:
    opts = _merged(args, dict(domain="annulus", eps=5.0, out=None, schur=False,
                              jitter=0.0, count=600, spacing=None))
    domain = _domain_from_name(opts["domain"])
    if opts["spacing"] is not None:
        h = float(opts["spacing"])
    else:
        h = geometry.spacing_for_count(domain, int(opts["count"]))
    nodes = geometry.gen_domain_nodes(domain, h)
    out = _out_dir(opts)
    path = os.path.join(out, f"{opts['domain']}-nodes.txt")
    geometry.emit_nodes(nodes, path)
    print(f"wrote {nodes.n_interior} centers, {nodes.n_boundary} boundary sites "
          f"to {path}")
    return EXIT_OK


def _cmd_decompose(args) -> int:
    opts = _merged(args, dict(domain="annulus", eps=5.0, out=None, schur=False,
                              jitter=0.0, nodes=None, field=None, gspec="zero",
                              count=600))
    nodes = _load_or_generate_nodes(opts)
    samples = _field_samples(opts, nodes)
    g = _boundary_data(opts, nodes)
    profile = matern5_profile(float(opts["eps"]))
    it = solver.fit_divfree(nodes, profile, samples, g,
                            use_schur=bool(opts["schur"]), jitter=float(opts["jitter"]))
    out = _out_dir(opts)
    path = os.path.join(out, "decomposition.csv")
    harness.emit_decomposition_csv(it, nodes.interior, path)
    if not opts.get("nodes"):
        svg = os.path.join(out, "decomposition.svg")
        harness.emit_decomposition_svg(it, _domain_from_name(opts["domain"]), svg)
    print(f"solve residual {it.solve_residual:.3e}; wrote {path}")
    return EXIT_OK


def _cmd_hhd(args) -> int:
    opts = _merged(args, dict(domain="wavy-annulus", eps=5.0, out=None, schur=False,
                              jitter=0.0, nodes=None, field=None, count=600))
    nodes = _load_or_generate_nodes(opts)
    samples = _field_samples(opts, nodes)
    profile = matern5_profile(float(opts["eps"]))
    dec = solver.full_hhd(samples, nodes, profile,
                          use_schur=bool(opts["schur"]), jitter=float(opts["jitter"]))
    out = _out_dir(opts)
    step1 = os.path.join(out, "step1_decomposition.csv")
    step2 = os.path.join(out, "step2_decomposition.csv")
    harness.emit_decomposition_csv(dec.step1, nodes.interior, step1)
    harness.emit_decomposition_csv(dec.step2, nodes.interior, step2)
    print(f"sum-of-parts residual {dec.sum_residual:.3e}; wrote {step1} and {step2}")
    return EXIT_OK


def _cmd_converge(args) -> int:
    opts = _merged(args, dict(domain="annulus", eps=5.0, out=None, schur=True,
                              jitter=0.0, levels=4, base_count=600, experiment=None,
                              check=False, min_order=4.5, timing=False))
    domain = _domain_from_name(opts["domain"])
    experiment = opts["experiment"]
    if experiment is None:
        experiment = "divfree-annulus" if domain.kind == "annulus" else "full-hhd"
    try:
        cfg = harness.RunConfig(
            domain=domain, experiment=experiment, eps=float(opts["eps"]),
            levels=tuple(int(opts["base_count"]) * 2**i for i in range(int(opts["levels"]))),
            use_schur=bool(opts["schur"]), jitter=float(opts["jitter"]),
            record_timing=bool(opts["timing"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = harness.run_experiment(cfg)
    out = _out_dir(opts)
    paths = harness.emit_outputs(report, out, name=experiment,
                                 include_timing=bool(opts["timing"]))
    for name, order in sorted(report.orders.items()):
        print(f"{name}: fitted order {order:.2f}")
    print(f"wrote {paths['csv']} and {paths['svg']}")
    if opts["check"]:
        failures = harness.check_report(report, min_order=float(opts["min_order"]))
        if failures:
            for msg in failures:
                print(f"CHECK FAILED: {msg}", file=sys.stderr)
            return EXIT_CHECK
        print("all checks passed")
    return EXIT_OK


_COMMANDS = {
    "gen-nodes": _cmd_gen_nodes,
    "decompose": _cmd_decompose,
    "hhd": _cmd_hhd,
    "converge": _cmd_converge,
}


def main(argv: Optional[list] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage, which matches the config-error code
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, NodeFileError, fields.MissingSampleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except solver.SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
