"""Command-line front end: scenario files in; CSV, JSON and figures out.

Exit codes: 0 success, 2 configuration error, 3 guard halt (a healthy early
stop), 4 numerical failure. The output directory is taken from --output, then
from the PATCHDYN_OUTPUT_DIR environment variable, then from the scenario's
output.directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .commutator import QuadratureError, lemma3_check
from .config import (
    ConfigError,
    build_curve,
    build_kernel,
    from_dict,
    parse_config,
    parse_kernel_expression,
    require_evolution,
)
from .curve import CurveError, diameter, read_curve_csv, tangent_normal, write_curve_csv
from .evolve import NON_FINITE, DiagnosticsRecord, RunSettings, gronwall_monitor, recompute_records, run
from .extension import (
    ExtensionError,
    Lemma1ViolationError,
    divergence_free_field,
    eval_extension,
    fd_divergence,
    jet_constant_verify,
    jet_residuals,
    sampled_holder_ratio,
    whitney_extend,
)
from .kernel import KernelError
from .plotting import emit_plot_script, render_run_figures
from .velocity import ProximityError, default_epsilons, named_even_kernel, tstar

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GUARD = 3
EXIT_NUMERICAL = 4
OUTPUT_ENV = "PATCHDYN_OUTPUT_DIR"

log = logging.getLogger("patchdyn")


# ---------------------------------------------------------------------------
# helpers


def output_dir(args, cfg=None):
    if getattr(args, "output", None):
        path = Path(args.output)
    elif os.environ.get(OUTPUT_ENV):
        path = Path(os.environ[OUTPUT_ENV])
    elif cfg is not None:
        path = Path(cfg.output.directory)
    else:
        path = Path("out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_rows(path, header, rows):
    """CSV with full-precision floats (repr) so reruns are byte-identical."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _parse_params(items):
    params = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got {item!r}", "--param")
        if "," in value:
            params[key] = [float(v) for v in value.split(",")]
        else:
            try:
                params[key] = int(value)
            except ValueError:
                params[key] = float(value)
    return params


def scenario_from_args(args):
    """Scenario from --config, or from --shape/--n/--param/--gamma flags."""
    if getattr(args, "config", None):
        cfg = parse_config(args.config)
        if getattr(args, "gamma", None) is not None:
            cfg.diagnostics.gamma = args.gamma
        return cfg
    shape = {"preset": args.shape, "n": args.n}
    shape.update(_parse_params(args.param))
    if args.shape == "file":
        shape["file"] = args.curve
    data = {"shape": shape}
    if getattr(args, "gamma", None) is not None:
        data["diagnostics"] = {"gamma": args.gamma}
    return from_dict(data)


def _add_shape_args(p, default_shape="circle"):
    p.add_argument("--config", help="scenario TOML file (overrides the shape flags)")
    p.add_argument("--shape", default=default_shape, choices=["circle", "ellipse", "perturbed_circle", "file"])
    p.add_argument("--curve", help="curve CSV (theta,x,y) when --shape file")
    p.add_argument("--n", type=int, default=128, help="marker count (default 128)")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="shape parameter, e.g. a=2, eps=0.05, center=1,0 (repeatable)")
    p.add_argument("--gamma", type=float, help="Hoelder exponent (default 0.5)")
    p.add_argument("--output", help="output directory")


def _kernel(args, cfg):
    if getattr(args, "kernel", None):
        return parse_kernel_expression(args.kernel)
    return build_kernel(cfg.kernel)


# ---------------------------------------------------------------------------
# subcommands


def snapshot_name(step, t):
    return f"snap_{step:07d}_t{t:.6f}.csv"


def cmd_simulate(args):
    cfg = parse_config(args.config)
    require_evolution(cfg)
    out = output_dir(args, cfg)
    curve = build_curve(cfg.shape, cfg.diagnostics.gamma)
    spec = build_kernel(cfg.kernel)
    e = cfg.evolution
    settings = RunSettings(
        dt=e.dt,
        t_final=e.t_final,
        gamma=cfg.diagnostics.gamma,
        record_every=e.record_every,
        snapshot_every=e.snapshot_every,
        b_collapse=e.b_collapse,
        max_speed=e.max_speed,
        cfl=e.cfl,
        probe_spacings=cfg.diagnostics.probe_spacings,
        resample_ratio=e.resample_ratio,
    )
    result = run(curve, spec, settings)
    write_rows(out / "diagnostics.csv", DiagnosticsRecord.columns(), [r.row() for r in result.records])
    snaps = []
    if result.snapshots:
        (out / "snapshots").mkdir(exist_ok=True)
        for step_no, t, c in result.snapshots:
            name = snapshot_name(step_no, t)
            write_curve_csv(c, out / "snapshots" / name)
            snaps.append({"step": step_no, "t": t, "file": f"snapshots/{name}"})
    mon = gronwall_monitor(result.records)
    code = EXIT_OK
    if result.halted:
        code = EXIT_NUMERICAL if result.halted == NON_FINITE else EXIT_GUARD
    manifest = {
        "command": "simulate",
        "version": __version__,
        "config": cfg.echo(),
        "halted": result.halted,
        "exit_code": code,
        "guard_events": [ev for ev in result.events if ev["kind"] == "guard"],
        "resample_events": [ev for ev in result.events if ev["kind"] == "resample"],
        "fitted_constants": {"gronwall": mon.as_dict()},
        "steps": result.state.step_count,
        "t_end": result.state.t,
        "snapshots": snaps,
        "outputs": ["diagnostics.csv"],
    }
    if args.plots or cfg.output.plots:
        emit_plot_script(out)
        manifest["figures"] = [p.name for p in render_run_figures(out)]
    write_json(out / "manifest.json", manifest)
    last = result.records[-1]
    print(f"t={last.t:g} area={last.area:.12g} b={last.b:.6g} q={last.q:.6g} "
          f"gronwall_C={manifest['fitted_constants']['gronwall']['C']} halted={result.halted}")
    return code


def cmd_diagnose(args):
    run_dir = Path(args.run_dir)
    try:
        manifest = json.loads((run_dir / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read manifest in {run_dir}: {exc}") from exc
    cfg = from_dict(manifest["config"])
    if manifest.get("resample_events"):
        raise ConfigError("run contains resampling events; the frozen reference changed mid-run", "snapshots")
    snaps = manifest.get("snapshots", [])
    if not snaps:
        raise ConfigError("run has no snapshots (set evolution.snapshot_every)", "evolution.snapshot_every")
    gamma = cfg.diagnostics.gamma
    curves = [read_curve_csv(run_dir / s["file"], gamma=gamma) for s in snaps]
    times = [s["t"] for s in snaps]
    spec = build_kernel(cfg.kernel)
    records = recompute_records(curves, times, curves[0], spec, gamma, cfg.diagnostics.probe_spacings)
    out = Path(args.output) if args.output else run_dir
    out.mkdir(parents=True, exist_ok=True)
    write_rows(out / "diagnostics_recomputed.csv", DiagnosticsRecord.columns(), [r.row() for r in records])
    # compare instantaneous columns with the simulate-time rows at the same times
    stored = {}
    diag = run_dir / "diagnostics.csv"
    if diag.exists():
        with open(diag) as fh:
            for row in csv.DictReader(fh):
                stored[float(row["t"])] = row
    worst = 0.0
    compared = 0
    skip = {"t", "gronwall_rhs"}
    for r in records:
        row = stored.get(float(r.t))
        if row is None:
            continue
        compared += 1
        for name in DiagnosticsRecord.columns():
            if name not in skip:
                worst = max(worst, abs(float(row[name]) - getattr(r, name)))
    summary = {"snapshots": len(records), "compared_rows": compared, "max_abs_difference": worst}
    write_json(out / "diagnose.json", summary)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_verify_lemma1(args):
    cfg = scenario_from_args(args)
    gamma = cfg.diagnostics.gamma
    curve = build_curve(cfg.shape, gamma)
    _, normal = tangent_normal(curve)
    out = output_dir(args, cfg if args.config else None)
    try:
        res = jet_constant_verify(curve, args.scale * normal, gamma)
        payload = res.as_dict()
        code = EXIT_OK
    except Lemma1ViolationError as exc:
        payload = {"passed": False, "error": str(exc)}
        code = EXIT_NUMERICAL
    payload.update({"gamma": gamma, "shape": cfg.echo()["shape"]})
    write_json(out / "lemma1.json", payload)
    if code == EXIT_OK:
        print(f"empirical_sup={res.empirical_sup:.10g} holder={res.holder_norm:.10g} "
              f"ratio={res.ratio:.10g} bound_A={res.bound_A:.10g} PASS")
    else:
        print(payload["error"])
    return code


def cmd_extend(args):
    cfg = scenario_from_args(args)
    gamma = cfg.diagnostics.gamma
    curve = build_curve(cfg.shape, gamma)
    tau, _ = tangent_normal(curve)
    d = cfg.diagnostics
    ext = whitney_extend(curve, tau, gamma, max_depth=args.depth or d.whitney_depth,
                         refine=args.refine or d.whitney_refine, collar=args.collar)
    out = output_dir(args, cfg if args.config else None)
    diam = diameter(curve)
    lo = curve.points.min(axis=0) - 0.25 * diam
    hi = curve.points.max(axis=0) + 0.25 * diam
    xs = np.linspace(lo[0], hi[0], args.grid)
    ys = np.linspace(lo[1], hi[1], args.grid)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    probes = np.column_stack([gx.ravel(), gy.ravel()])
    phi, gphi = eval_extension(ext, probes)
    g = divergence_free_field(ext, probes)
    div = fd_divergence(ext, probes, 1e-7 * diam)
    rows = np.column_stack([probes, phi, gphi, g, div])
    write_rows(out / "extension_grid.csv", ["x", "y", "phi", "gphi1", "gphi2", "g1", "g2", "divg_fd"], rows)
    phi_res, grad_res = jet_residuals(ext, curve, tau)
    ratio, g_norm, t_norm = sampled_holder_ratio(ext, curve, tau, gamma)
    summary = {
        "squares": ext.n_squares,
        "depth": ext.meta["depth"],
        "max_overlap": ext.max_overlap,
        "jet_constant": ext.jet_constant,
        "jet_phi_residual": phi_res,
        "jet_grad_residual": grad_res,
        "max_abs_divg_fd": float(np.max(np.abs(div))),
        "holder_g": g_norm,
        "holder_tau": t_norm,
        "holder_ratio": ratio,
    }
    write_json(out / "extension.json", summary)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_commutator_check(args):
    cfg = scenario_from_args(args)
    gamma = cfg.diagnostics.gamma
    d = cfg.diagnostics
    curve = build_curve(cfg.shape, gamma)
    spec = _kernel(args, cfg)
    tau, _ = tangent_normal(curve)
    ext = whitney_extend(curve, tau, gamma, max_depth=d.whitney_depth, refine=d.whitney_refine)
    report = lemma3_check(
        curve,
        spec,
        gamma,
        stride=args.stride or d.commutator_stride,
        tol=args.tol or d.commutator_tol,
        level=args.level or d.commutator_level,
        ext=ext,
    )
    out = output_dir(args, cfg if args.config else None)
    payload = report.as_dict()
    payload["kernel"] = args.kernel or cfg.echo()["kernel"]
    write_json(out / "commutator.json", payload)
    print(f"max_discrepancy={report.max_discrepancy:.4e} tol={report.tol:g} "
          f"fitted_C={report.fitted_C:.4g} {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def cmd_tstar(args):
    cfg = scenario_from_args(args)
    curve = build_curve(cfg.shape, cfg.diagnostics.gamma)
    try:
        point = np.array([float(v) for v in args.point.split(",")])
    except ValueError as exc:
        raise ConfigError(f"expected x,y, got {args.point!r}", "--point") from exc
    if point.shape != (2,):
        raise ConfigError(f"expected x,y, got {args.point!r}", "--point")
    try:
        kernel = named_even_kernel(args.kernel_entry)
    except ValueError as exc:
        raise ConfigError(str(exc), "--kernel-entry") from exc
    eps = default_epsilons(curve, count=args.eps_count, hi=args.eps_max, lo=args.eps_min)
    sweep = tstar(curve, kernel, point, epsilons=eps,
                  n_angles=args.angles or cfg.diagnostics.tstar_angles,
                  boundary_points=args.boundary_points or cfg.diagnostics.tstar_boundary_points,
                  budget=args.budget)
    out = output_dir(args, cfg if args.config else None)
    write_rows(out / "tstar.csv", ["epsilon", "value", "running_sup"], sweep.rows())
    summary = {"sup": sweep.sup, "n_angles": sweep.n_angles, "budget_exceeded": sweep.budget_exceeded,
               "point": point.tolist(), "kernel_entry": args.kernel_entry}
    write_json(out / "tstar.json", summary)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_emit_plots(args):
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise ConfigError(f"no such run directory {run_dir}")
    script = emit_plot_script(run_dir)
    print(script)
    if args.render:
        for path in render_run_figures(run_dir):
            print(path)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="patchdyn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="evolve a scenario and record diagnostics")
    p.add_argument("config")
    p.add_argument("--output")
    p.add_argument("--plots", action="store_true", help="render PNG figures and emit the plot script")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", help="recompute diagnostics from a run's snapshots")
    p.add_argument("run_dir")
    p.add_argument("--output")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("verify-lemma1", help="jet inequality ratio against 2^(3+gamma/2)")
    _add_shape_args(p)
    p.add_argument("--scale", type=float, default=1.0, help="multiply the normal field")
    p.set_defaults(func=cmd_verify_lemma1)

    p = sub.add_parser("extend", help="divergence-free extension of the unit tangent")
    _add_shape_args(p)
    p.add_argument("--depth", type=int, help="dyadic depth cap (default 12)")
    p.add_argument("--refine", type=int, help="jet-set upsampling factor (default 4)")
    p.add_argument("--collar", type=float, help="collar width (default: diameter)")
    p.add_argument("--grid", type=int, default=41, help="probe grid points per axis")
    p.set_defaults(func=cmd_extend)

    p = sub.add_parser("commutator-check", help="direct vs area-integral side of the commutator identity")
    _add_shape_args(p, default_shape="ellipse")
    p.add_argument("--kernel", help="biot_savart, grad_N or e.g. 0.5*biot_savart+0.5*grad_N")
    p.add_argument("--level", type=float, help="quadrature refinement level (default 1)")
    p.add_argument("--stride", type=int, help="check every STRIDE-th marker (default 4)")
    p.add_argument("--tol", type=float, help="relative tolerance (default 5e-2)")
    p.set_defaults(func=cmd_commutator_check)

    p = sub.add_parser("tstar", help="epsilon sweep of the truncated singular integral")
    _add_shape_args(p)
    p.add_argument("--point", required=True, help="evaluation point x,y (use --point=-1,0 for negatives)")
    p.add_argument("--kernel-entry", default="bs11", help="bsIJ, gnIJ, cos2 or sin2")
    p.add_argument("--eps-count", type=int, default=40)
    p.add_argument("--eps-max", type=float)
    p.add_argument("--eps-min", type=float)
    p.add_argument("--angles", type=int)
    p.add_argument("--boundary-points", type=int)
    p.add_argument("--budget", type=float, default=4.0e7, help="max rays x polygon vertices")
    p.set_defaults(func=cmd_tstar)

    p = sub.add_parser("emit-plots", help="write a standalone plot script into a run directory")
    p.add_argument("run_dir")
    p.add_argument("--render", action="store_true", help="also render the PNG figures now")
    p.set_defaults(func=cmd_emit_plots)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CurveError, KernelError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ExtensionError, QuadratureError, ProximityError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

