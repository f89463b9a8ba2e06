"""Command-line interface: mesh tooling and the reference experiments.

Every report command writes its delimited output, companion figures,
and a run-manifest.json echoing the resolved parameters into the run
directory.  A structured config file (INI sections ``mesh``,
``physics``, ``time``, ``output``) supplies defaults that individual
flags override.
"""

import argparse
import configparser
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import CLAMPED, DofMap, assemble
from .dynamics import PhysicalParams, StepFailure
from .experiments import (MESH_FAMILIES, build_mesh, condition_growth_slope,
                          jacobian_study, mean_cell_size, representative_state,
                          run_example1, run_example2, run_temporal_study,
                          write_convergence_csv, write_energy_csv,
                          write_jacobian_csv, write_temporal_csv)
from .mesh import (bridge_tagger, check_regularity, clamped_tagger,
                   generate_voronoi, read_mesh, write_mesh, write_vtk)


class ConfigError(Exception):
    """Malformed config file or inconsistent option combination."""


_SCHEMA = {
    "mesh": {"family": str, "n": int, "seed": int, "lloyd": int,
             "bounds": str},
    "physics": {"delta": float, "sigma": float, "P": float, "S": float},
    "time": {"dt": float, "T": float, "scheme": str},
    "output": {"directory": str},
}


def load_config(path):
    """Parse and validate an INI config into a {(section, key): value} map."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep P/S/T capitalized
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path!r}")
    cfg = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser[section].items():
            cast = _SCHEMA[section].get(key)
            if cast is None:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            try:
                cfg[(section, key)] = cast(raw)
            except ValueError as exc:
                raise ConfigError(
                    f"bad value for {section}.{key}: {raw!r}") from exc
    return cfg


def _opt(args, cfg, attr, section, key, default):
    value = getattr(args, attr, None)
    if value is not None:
        return value
    return cfg.get((section, key), default)


def _parse_bounds(text):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 4:
        raise ConfigError(f"bounds need four numbers, got {text!r}")
    return tuple(parts)


def _doubling_levels(count, base):
    return tuple(base * 2 ** i for i in range(count))


def _git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=10)
    except OSError:
        return None
    return out.stdout.strip() if out.returncode == 0 else None


def _out_dir(args, cfg):
    directory = _opt(args, cfg, "out_dir", "output", "directory", ".")
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_manifest(out_dir, command, parameters, outputs, wall_time):
    """Record the resolved parameters of one run for reproducibility."""
    doc = {
        "command": command,
        "parameters": parameters,
        "outputs": sorted(str(p) for p in outputs),
        "wall_time_seconds": round(wall_time, 3),
        "version": __version__,
        "git_describe": _git_describe(),
    }
    path = out_dir / "run-manifest.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return path


def _print_convergence(rows):
    print(f"{'h':>12} {'ndof':>7} {'err_h2':>12} {'err_rel':>12} "
          f"{'eoc':>7} {'newton':>6} {'cond':>10}")
    for r in rows:
        eoc = "-" if r.eoc is None else f"{r.eoc:7.3f}"
        print(f"{r.h:12.4e} {r.ndof:7d} {r.err_h2:12.4e} {r.err_rel:12.4e} "
              f"{eoc:>7} {r.newton_max:6d} {r.cond_estimate:10.3e}")


# -- mesh subcommands ------------------------------------------------------

def cmd_mesh_generate(args, cfg):
    bounds = _parse_bounds(_opt(args, cfg, "bounds", "mesh", "bounds",
                                "0,0,1,1"))
    family = _opt(args, cfg, "family", "mesh", "family", "square")
    n = _opt(args, cfg, "n", "mesh", "n", 8)
    seed = _opt(args, cfg, "seed", "mesh", "seed", 0)
    lloyd = _opt(args, cfg, "lloyd", "mesh", "lloyd", 2)
    tagger = (bridge_tagger(bounds) if args.tagger == "bridge"
              else clamped_tagger)
    if family == "voronoi":
        # here --n counts cells directly, unlike the study drivers
        mesh = generate_voronoi(n, bounds, lloyd, seed, tagger)
    else:
        mesh = build_mesh(family, n, bounds, tagger, seed, lloyd)
    mesh.validate()
    write_mesh(mesh, args.output)
    print(f"wrote {args.output}: {mesh.n_cells} cells, "
          f"{mesh.n_vertices} vertices, h={mesh.h:.4g}")
    if args.figure:
        from . import plots
        plots.plot_mesh(mesh, args.figure)
    return 0


def cmd_mesh_validate(args, cfg):
    mesh = read_mesh(args.path)
    report = check_regularity(mesh, args.gamma if args.gamma else 0.01)
    print(f"{args.path}: {mesh.n_cells} cells, {mesh.n_vertices} vertices, "
          f"h={mesh.h:.4g}")
    print(f"regularity: {report!r}")
    # regularity is enforced only on request; structure always is
    if args.gamma is not None and not report.passes:
        print(f"error: mesh violates the gamma={args.gamma} regularity bound",
              file=sys.stderr)
        return 1
    return 0


def cmd_mesh_convert(args, cfg):
    mesh = read_mesh(args.source)
    dst = Path(args.destination)
    if dst.suffix == ".vtk":
        write_vtk(mesh, dst)
    elif dst.suffix == ".json":
        write_mesh(mesh, dst)
    else:
        raise ConfigError(f"unsupported output format {dst.suffix!r} "
                          "(expected .json or .vtk)")
    print(f"wrote {dst}")
    return 0


# -- experiment subcommands ------------------------------------------------

def _spatial_params(args, cfg):
    return {
        "mesh_family": _opt(args, cfg, "mesh", "mesh", "family", "square"),
        "levels": _doubling_levels(args.levels, args.base),
        "dt_policy": args.dt_policy,
        "dt": _opt(args, cfg, "dt", "time", "dt", None),
        "scheme": _opt(args, cfg, "scheme", "time", "scheme", "nonlinear"),
        "sigma": _opt(args, cfg, "sigma", "physics", "sigma", 0.3),
        "delta": _opt(args, cfg, "delta", "physics", "delta", 1.0),
        "P": _opt(args, cfg, "P", "physics", "P", 1e-3),
        "S": _opt(args, cfg, "S", "physics", "S", 1e-5),
        "T": _opt(args, cfg, "T", "time", "T", 0.5),
        "seed": _opt(args, cfg, "seed", "mesh", "seed", 0),
        "with_conditioning": not args.no_conditioning,
        "workers": args.workers,
    }


def _run_spatial(args, cfg):
    out = _out_dir(args, cfg)
    params = _spatial_params(args, cfg)
    if params["dt_policy"] == "fixed" and params["dt"] is None:
        raise ConfigError("--dt-policy fixed requires --dt")
    t0 = time.perf_counter()
    rows = run_example1(
        progress=lambda n, row: print(f"  level n={n}: {row!r}"), **params)
    wall = time.perf_counter() - t0
    csv_path = out / "convergence.csv"
    write_convergence_csv(rows, csv_path)
    from . import plots
    fig_path = out / "convergence.png"
    plots.plot_convergence(rows, fig_path,
                           title=f"{params['mesh_family']} family, "
                                 f"{params['scheme']} scheme")
    manifest = write_manifest(out, args.command, params,
                              [csv_path, fig_path], wall)
    _print_convergence(rows)
    print(f"wrote {csv_path}, {fig_path}, {manifest}")
    return 0


def cmd_example1(args, cfg):
    return _run_spatial(args, cfg)


def cmd_example2(args, cfg):
    out = _out_dir(args, cfg)
    params = {
        "n": _opt(args, cfg, "n", "mesh", "n", 16),
        "dt": _opt(args, cfg, "dt", "time", "dt", 1e-3),
        "T": _opt(args, cfg, "T", "time", "T", 5.0),
        "scheme": _opt(args, cfg, "scheme", "time", "scheme", "nonlinear"),
        "sigma": _opt(args, cfg, "sigma", "physics", "sigma", 0.2),
        "P": _opt(args, cfg, "P", "physics", "P", 1e-3),
        "S": _opt(args, cfg, "S", "physics", "S", 1e-5),
        "load_amplitude": args.load_amplitude,
        "damping": args.damping,
    }
    t0 = time.perf_counter()
    traj, _system = run_example2(**params)
    wall = time.perf_counter() - t0
    energy_path = out / "energy.csv"
    write_energy_csv(traj, energy_path)
    traj_path = out / "trajectory.csv"
    traj.to_csv(traj_path)
    from . import plots
    fig_path = out / "energy.png"
    plots.plot_energy(traj, fig_path,
                      title=f"bridge ramp-down, damping={params['damping']}")
    manifest = write_manifest(out, "example2", params,
                              [energy_path, traj_path, fig_path], wall)
    first, last = traj.energy[0], traj.energy[-1]
    print(f"{len(traj.step)} steps, energy {first:.6g} -> {last:.6g} "
          f"(ratio {last / first:.4g})")
    print(f"wrote {energy_path}, {traj_path}, {fig_path}, {manifest}")
    return 0


def cmd_convergence(args, cfg):
    if args.mode == "spatial":
        return _run_spatial(args, cfg)
    out = _out_dir(args, cfg)
    dts = tuple(float(p) for p in args.dts.split(","))
    params = {
        "n": _opt(args, cfg, "n", "mesh", "n", 32),
        "dts": dts,
        "dt_ref": args.dt_ref,
        "T": _opt(args, cfg, "T", "time", "T", 0.5),
        "scheme": _opt(args, cfg, "scheme", "time", "scheme", "nonlinear"),
        "sigma": _opt(args, cfg, "sigma", "physics", "sigma", 0.3),
        "delta": _opt(args, cfg, "delta", "physics", "delta", 1.0),
        "P": _opt(args, cfg, "P", "physics", "P", 1e-3),
        "S": _opt(args, cfg, "S", "physics", "S", 1e-5),
    }
    t0 = time.perf_counter()
    rows = run_temporal_study(
        progress=lambda dt, row: print(f"  dt={dt:g}: {row!r}"), **params)
    wall = time.perf_counter() - t0
    csv_path = out / "temporal.csv"
    write_temporal_csv(rows, csv_path)
    from . import plots
    fig_path = out / "temporal.png"
    plots.plot_temporal(rows, fig_path)
    manifest = write_manifest(out, "convergence", params,
                              [csv_path, fig_path], wall)
    for r in rows:
        print(r)
    print(f"wrote {csv_path}, {fig_path}, {manifest}")
    return 0


def cmd_report_jacobian(args, cfg):
    out = _out_dir(args, cfg)
    params = {
        "levels": _doubling_levels(args.levels, args.base),
        "dt": _opt(args, cfg, "dt", "time", "dt", 0.1),
        "mesh_family": _opt(args, cfg, "mesh", "mesh", "family", "square"),
        "sigma": _opt(args, cfg, "sigma", "physics", "sigma", 0.3),
        "delta": _opt(args, cfg, "delta", "physics", "delta", 1.0),
        "P": _opt(args, cfg, "P", "physics", "P", 1e-3),
        "S": _opt(args, cfg, "S", "physics", "S", 1e-5),
        "seed": _opt(args, cfg, "seed", "mesh", "seed", 0),
    }
    t0 = time.perf_counter()
    study = jacobian_study(
        progress=lambda n, rep: print(f"  level n={n}: {rep!r}"), **params)
    outputs = [out / "jacobian.csv"]
    write_jacobian_csv(study, outputs[0])

    from . import plots
    # spy the coarsest level so individual entries stay visible
    n0 = params["levels"][0]
    mesh = build_mesh(params["mesh_family"], n0, seed=params["seed"])
    system = assemble(mesh, DofMap(mesh, CLAMPED), params["sigma"],
                      params["delta"])
    phys = PhysicalParams(delta=params["delta"], sigma=params["sigma"],
                          P=params["P"], S=params["S"])
    spy_path = out / "jacobian-sparsity.png"
    plots.plot_jacobian_sparsity(system, phys, representative_state(system),
                                 params["dt"], spy_path)
    outputs.append(spy_path)
    if len(study) > 1:
        growth_path = out / "condition-growth.png"
        plots.plot_condition_growth(study, growth_path)
        outputs.append(growth_path)
        print(f"condition growth slope vs 1/h: "
              f"{condition_growth_slope(study):.3f}")
    wall = time.perf_counter() - t0
    manifest = write_manifest(out, "report-jacobian", params, outputs, wall)
    print(f"wrote {', '.join(str(p) for p in outputs)}, {manifest}")
    return 0


# -- parser ----------------------------------------------------------------

def _add_config_flag(p):
    p.add_argument("--config", help="INI config file supplying defaults")


def _add_output_flag(p):
    p.add_argument("--out-dir", dest="out_dir",
                   help="directory for CSV/figure/manifest outputs")


def _add_physics_flags(p):
    p.add_argument("--sigma", type=float, help="Poisson ratio in (0, 1)")
    p.add_argument("--delta", type=float, help="damping coefficient")
    p.add_argument("--P", type=float, dest="P", help="pre-stress constant")
    p.add_argument("--S", type=float, dest="S", help="nonlocal stiffness")


def _add_spatial_flags(p):
    p.add_argument("--mesh", choices=MESH_FAMILIES, help="mesh family")
    p.add_argument("--levels", type=int, default=4,
                   help="number of doubling refinement levels")
    p.add_argument("--base", type=int, default=4,
                   help="subdivisions per axis on the coarsest level")
    p.add_argument("--dt-policy", dest="dt_policy",
                   choices=("h2", "fixed"), default="h2")
    p.add_argument("--dt", type=float, help="time step for --dt-policy fixed")
    p.add_argument("--scheme", choices=("nonlinear", "linearized"))
    p.add_argument("--T", type=float, dest="T", help="final time")
    p.add_argument("--seed", type=int, help="mesh generator seed")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel processes across levels")
    p.add_argument("--no-conditioning", action="store_true",
                   help="skip the per-level condition estimate")
    _add_physics_flags(p)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="platevem",
        description="Virtual element simulator for a damped nonlocal "
                    "plate model on polygonal meshes")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    mesh = sub.add_parser("mesh", help="generate, validate, convert meshes")
    mesh_sub = mesh.add_subparsers(dest="mesh_command", required=True)

    gen = mesh_sub.add_parser("generate", help="build a mesh and write JSON")
    gen.add_argument("--family", choices=MESH_FAMILIES)
    gen.add_argument("--n", type=int, help="subdivisions per axis, "
                     "or the cell count for the voronoi family")
    gen.add_argument("--bounds", help="domain rectangle x0,y0,x1,y1")
    gen.add_argument("--tagger", choices=("clamped", "bridge"),
                     default="clamped")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--lloyd", type=int, help="Lloyd smoothing iterations")
    gen.add_argument("--figure", help="optional mesh outline PNG")
    gen.add_argument("-o", "--output", required=True)
    _add_config_flag(gen)
    gen.set_defaults(func=cmd_mesh_generate)

    val = mesh_sub.add_parser("validate", help="check a mesh JSON file")
    val.add_argument("path")
    val.add_argument("--gamma", type=float,
                     help="also enforce this shape-regularity bound")
    _add_config_flag(val)
    val.set_defaults(func=cmd_mesh_validate)

    conv = mesh_sub.add_parser("convert", help="rewrite mesh JSON as .vtk")
    conv.add_argument("source")
    conv.add_argument("destination")
    _add_config_flag(conv)
    conv.set_defaults(func=cmd_mesh_convert)

    ex1 = sub.add_parser("example1",
                         help="manufactured clamped-plate convergence study")
    _add_spatial_flags(ex1)
    _add_config_flag(ex1)
    _add_output_flag(ex1)
    ex1.set_defaults(func=cmd_example1)

    ex2 = sub.add_parser("example2", help="bridge ramp-down energy decay")
    ex2.add_argument("--n", type=int, help="subdivisions per axis")
    ex2.add_argument("--dt", type=float)
    ex2.add_argument("--T", type=float, dest="T")
    ex2.add_argument("--scheme", choices=("nonlinear", "linearized"))
    ex2.add_argument("--damping", choices=("strip", "uniform", "none"),
                     default="strip")
    ex2.add_argument("--load-amplitude", dest="load_amplitude", type=float,
                     default=50.0, help="initial axial load amplitude")
    _add_physics_flags(ex2)
    _add_config_flag(ex2)
    _add_output_flag(ex2)
    ex2.set_defaults(func=cmd_example2)

    cvg = sub.add_parser("convergence",
                         help="generic spatial or temporal refinement study")
    cvg.add_argument("--mode", choices=("spatial", "temporal"),
                     default="spatial")
    _add_spatial_flags(cvg)
    cvg.add_argument("--n", type=int,
                     help="fixed mesh subdivisions (temporal mode)")
    cvg.add_argument("--dts", default="0.1,0.05,0.025,0.0125",
                     help="comma list of time steps (temporal mode)")
    cvg.add_argument("--dt-ref", dest="dt_ref", type=float,
                     default=1.0 / 640.0,
                     help="reference time step (temporal mode)")
    _add_config_flag(cvg)
    _add_output_flag(cvg)
    cvg.set_defaults(func=cmd_convergence)

    jac = sub.add_parser("report-jacobian",
                         help="Jacobian sparsity and conditioning report")
    jac.add_argument("--levels", type=int, default=4,
                     help="number of doubling refinement levels")
    jac.add_argument("--base", type=int, default=8,
                     help="subdivisions per axis on the coarsest level")
    jac.add_argument("--dt", type=float, help="fixed time step (default 0.1)")
    jac.add_argument("--mesh", choices=MESH_FAMILIES)
    jac.add_argument("--seed", type=int)
    _add_physics_flags(jac)
    _add_config_flag(jac)
    _add_output_flag(jac)
    jac.set_defaults(func=cmd_report_jacobian)

    return parser


def main(argv=None):
    """Entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config) if getattr(args, "config", None) else {}
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (StepFailure, RuntimeError, ValueError, ZeroDivisionError,
            np.linalg.LinAlgError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
