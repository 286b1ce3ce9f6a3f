"""Command-line entry point.

::

    vexflow solve        --config run.ini [--set section.key=value ...]
    vexflow mms          --preset stokes2d --levels 4
    vexflow sweep-k      --config run.ini
    vexflow certify-laws --samples 10000 --seed 7
    vexflow infsup       --levels 1 2 3

Exit status: 0 on success, 1 on configuration errors, 2 when an iteration
fails to converge.  Every run writes its effective configuration to
``config.ini`` in the output directory; rerunning from that file
reproduces the outputs.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .config import COMMANDS, RunConfig, load_config, parse_config
from .constitutive import ExponentField, FluxLaw, StressLaw, certify_laws
from .errors import ConfigurationError, InvalidDomainError, LinearSolveError, NonConvergenceError
from .fespace import build_space, build_spaces, write_field
from .mesh import build_structured, make_mesh_pair, write_mesh
from .scenarios import boundary_concentration, forcing
from .solver import IterationTrace, SolverConfig, final_energy, solve_coupled, sweep_k
from .verify import check_min_max, estimate_inf_sup, make_mms_case, run_convergence_study


# -- builders ----------------------------------------------------------------
def laws_from(cfg: RunConfig):
    s = cfg.values["stress"]
    stress = StressLaw(
        nu0=s["nu0"],
        kappa1=s["kappa1"],
        kappa2=s["kappa2"],
        exponent=ExponentField(s["r_minus"], s["r_plus"], gamma=s["gamma"], c_mid=s["c_mid"]),
    )
    return stress, FluxLaw(cfg["flux.k0"], cfg["flux.k1"])


def solver_config_from(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(**cfg.values["solver"])


def base_mesh_from(cfg: RunConfig):
    d = cfg.values["domain"]
    box = [(d["box"][2 * i], d["box"][2 * i + 1]) for i in range(d["dim"])]
    return build_structured(d["dim"], d["divisions"], box)


def data_from(cfg: RunConfig):
    d = cfg.values["data"]
    f = forcing(d["forcing"], d["forcing_amplitude"], cfg["domain.dim"])
    c_d = boundary_concentration(d["c_d"], d["c_d_value"], d["c_d_low"])
    return f, c_d


def _spaces(cfg: RunConfig):
    pair = make_mesh_pair(base_mesh_from(cfg), cfg["domain.fluid_level"], cfg["domain.conc_level"])
    return pair, build_spaces(pair, cfg["elements.velocity"], cfg["elements.pressure"])


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _fmt(x) -> str:
    return repr(float(x))


# -- commands ----------------------------------------------------------------
def cmd_solve(cfg: RunConfig, out: Path, echo) -> int:
    pair, spaces = _spaces(cfg)
    laws = laws_from(cfg)
    f, c_d = data_from(cfg)
    scfg = solver_config_from(cfg)
    try:
        sol, trace = solve_coupled(spaces, laws, f, c_d, scfg)
    except NonConvergenceError as exc:
        if isinstance(exc.trace, IterationTrace):
            exc.trace.to_csv(out / "trace.csv")
        raise
    trace.to_csv(out / "trace.csv")
    write_mesh(out / "fluid.mesh", pair.fluid)
    write_mesh(out / "conc.mesh", pair.conc)
    write_field(out / "U.field", sol.U)
    write_field(out / "P.field", sol.P)
    write_field(out / "C.field", sol.C)
    energy = final_energy(sol, laws[0], scfg)
    (out / "energy.txt").write_text(
        "".join(f"{k} = {v!r}\n" for k, v in energy.__dict__.items())
    )
    mm = check_min_max(sol.C, c_d)
    (out / "minmax.txt").write_text(mm.to_text())
    echo(f"converged in {len(trace)} outer iterations; min/max violation {mm.violation:.3e}")
    return 0


def cmd_mms(cfg: RunConfig, out: Path, echo) -> int:
    case = make_mms_case(cfg["mms.preset"])
    s = cfg.values["solver"]
    scfg = case.config(
        outer_tol=s["outer_tol"],
        outer_maxit=s["outer_maxit"],
        inner_tol=s["inner_tol"],
        inner_maxit=s["inner_maxit"],
        damping=s["damping"],
        degree=s["degree"],
        inner_method=s["inner_method"],
    )
    if cfg["domain.dim"] != case.dim:
        raise ConfigurationError(f"domain.dim: preset {case.name} is {case.dim}-dimensional")
    table = run_convergence_study(
        case,
        list(cfg["mms.levels"]),
        scfg,
        pair=(cfg["elements.velocity"], cfg["elements.pressure"]),
        base=base_mesh_from(cfg),
        conc_offset=cfg["mms.conc_offset"],
        interpolate_only=cfg["mms.interpolate_only"],
    )
    table.to_csv(out / "eoc.csv")
    (out / "eoc.txt").write_text(table.to_text())
    echo(table.to_text().rstrip())
    if not table.complete:
        echo(table.message)
        return 2
    return 0


def cmd_sweep(cfg: RunConfig, out: Path, echo) -> int:
    _, spaces = _spaces(cfg)
    laws = laws_from(cfg)
    f, c_d = data_from(cfg)
    rows = sweep_k(spaces, laws, f, c_d, solver_config_from(cfg), ks=cfg["sweep.ks"])
    _write_csv(out / "sweep.csv", ("k", "E_reg", "dist_prev"), [(_fmt(r.k), _fmt(r.E_reg), _fmt(r.dist_prev)) for r in rows])
    failed = [r for r in rows if r.error]
    for r in rows:
        echo(f"k={r.k:g}  E_reg={r.E_reg:.6e}  dist_prev={r.dist_prev:.6e}" + (f"  FAILED: {r.error}" if r.error else ""))
    return 2 if failed else 0


def cmd_certify(cfg: RunConfig, out: Path, echo) -> int:
    stress, flux = laws_from(cfg)
    report = certify_laws(
        stress,
        flux,
        cfg["certify.samples"],
        seed=cfg["run.seed"],
        c_range=(cfg["certify.c_min"], cfg["certify.c_max"]),
        dim=cfg["domain.dim"],
    )
    text = report.to_text()
    (out / "cert.txt").write_text(text)
    echo(text.rstrip())
    return 0


def cmd_infsup(cfg: RunConfig, out: Path, echo) -> int:
    base = base_mesh_from(cfg)
    rows = []
    for lev in cfg["infsup.levels"]:
        mesh = make_mesh_pair(base, lev, lev).fluid
        V = build_space(mesh, cfg["elements.velocity"])
        Q = build_space(mesh, cfg["elements.pressure"])
        beta = estimate_inf_sup(V, Q, mode=cfg["infsup.mode"], seed=cfg["run.seed"])
        rows.append((lev, _fmt(mesh.h), _fmt(beta)))
        echo(f"level {lev}  h={mesh.h:.4e}  beta={beta:.6e}")
    _write_csv(out / "infsup.csv", ("level", "h", "beta"), rows)
    return 0


HANDLERS = {
    "solve": cmd_solve,
    "mms": cmd_mms,
    "sweep-k": cmd_sweep,
    "certify-laws": cmd_certify,
    "infsup": cmd_infsup,
}


# -- argument parsing --------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vexflow", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--output", help="output directory (run.output)")
        p.add_argument("--seed", type=int, help="random seed (run.seed)")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override one configuration key (repeatable)",
        )
        p.add_argument("--quiet", action="store_true")
        if name == "mms":
            p.add_argument("--preset", help="manufactured-solution preset (mms.preset)")
            p.add_argument("--levels", type=int, help="run levels 1..N (mms.levels)")
        if name == "certify-laws":
            p.add_argument("--samples", type=int, help="number of samples (certify.samples)")
        if name == "infsup":
            p.add_argument("--levels", type=int, nargs="+", help="refinement levels (infsup.levels)")
    return parser


def _overrides(args) -> dict:
    ov = {"run.command": args.command}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        ov[key.strip()] = value
    if args.output:
        ov["run.output"] = args.output
    if args.seed is not None:
        ov["run.seed"] = str(args.seed)
    if getattr(args, "samples", None) is not None:
        ov["certify.samples"] = str(args.samples)
    if args.command == "mms":
        if args.preset:
            ov["mms.preset"] = args.preset
            ov.setdefault("domain.dim", args.preset[-2])
            if args.preset[-2] == "3":
                ov.setdefault("domain.box", "0 1 0 1 0 1")
                ov.setdefault("domain.divisions", "1 1 1")
        if args.levels is not None:
            ov["mms.levels"] = " ".join(str(i) for i in range(1, args.levels + 1))
    if args.command == "infsup" and args.levels:
        ov["infsup.levels"] = " ".join(str(i) for i in args.levels)
    return ov


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    args = parser.parse_args(argv)

    def echo(msg):
        if not args.quiet:
            print(msg, file=stdout)

    try:
        ov = _overrides(args)
        cfg = load_config(args.config, ov) if args.config else parse_config("", ov)
        out = Path(cfg["run.output"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(cfg.to_ini())
        return HANDLERS[cfg.command](cfg, out, echo)
    except (ConfigurationError, InvalidDomainError) as exc:
        print(f"configuration error: {exc}", file=stderr)
        return 1
    except (NonConvergenceError, LinearSolveError) as exc:
        print(f"solve failed: {exc}", file=stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
