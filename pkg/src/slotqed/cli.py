"""Command-line entry point: ``slotqed {solve,coupling,sweep,cqed} --config run.toml``.

Exit codes: 0 success, 2 configuration error, 3 solver failure. Every output
file embeds the toolkit version, the config hash and the fully-defaulted
config, and is written atomically into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path

from . import __version__
from ._util import atomic_write_text, dump_json
from .config import ConfigError, RunConfig, load_config, load_preset, preset_names
from .coupling import displacement_sweep, orientation_table, sweep_to_csv
from .cqed import EmitterParams, ResonatorSpec, cavity_figures, ghz_to_hz
from .geometry import CrossSection, GeometryError
from .materials import MaterialRangeError, get_material
from .modesolver import ModeSolverError, SolverSettings, SolveRequest, solve_modes, write_field_dump
from .sweep import (
    BANDS, GridSettings, ParamRange, SweepError, SweepSpec, optimize_geometry, points_to_csv,
    with_auto_padding, solve_fundamental,
)

log = logging.getLogger("slotqed")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class _Context:
    def __init__(self, cfg: RunConfig, out: Path, threads: int | None, dump_fields: bool):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        self.dump_fields = dump_fields

    def meta(self, command: str) -> dict:
        return {"command": command, "version": __version__, "config_hash": self.cfg.hash(),
                "config": self.cfg.to_dict()}

    def write(self, name: str, text: str) -> Path:
        # plain file names only: nothing escapes the output directory
        if Path(name).name != name:
            raise ValueError(f"bad output name {name!r}")
        return atomic_write_text(self.out / name, text)

    def wants(self, fmt: str) -> bool:
        return fmt in self.cfg.output.formats


def _cross_section(cfg: RunConfig) -> CrossSection:
    g = cfg.geometry
    return CrossSection(
        g.material, g.w_nm, g.h_nm, g.t_slot_nm,
        slot_material=g.slot_material,
        substrate_material=g.substrate_material,
        cladding_material=g.cladding_material,
        monolayer_y_offset=g.monolayer_y_offset_nm,
    )


def _grid(cfg: RunConfig) -> GridSettings:
    g = cfg.grid
    return GridSettings(g.dx_nm, g.dy_nm, g.padding_nm, g.auto_padding)


def _solver(cfg: RunConfig, boundary_tol: float | None = None) -> SolverSettings:
    s = cfg.solve
    if s is None:
        st = SolverSettings()
    else:
        st = SolverSettings(residual_tol=s.residual_tol, boundary_tol=s.boundary_tol,
                            maxiter=s.maxiter, arpack_tol=s.arpack_tol, seed=s.seed)
    if boundary_tol is not None:
        st = SolverSettings(**{**st.__dict__, "boundary_tol": boundary_tol})
    return st


def _tag(lam: float) -> str:
    return f"{lam:g}".replace(".", "p")


def cmd_solve(ctx: _Context) -> dict:
    cfg = ctx.cfg
    cfg.require("geometry", "solve")
    cs = _cross_section(cfg)
    s = cfg.solve
    sym = None if s.symmetry == "none" else s.symmetry

    def run(emap):
        return solve_modes(SolveRequest(emap, n_modes=s.n_modes, n_eff_guess=s.n_eff_guess,
                                        settings=_solver(cfg), symmetry=sym))

    modes, pad = with_auto_padding(cs, s.wavelength_nm, _grid(cfg), run)
    if not modes:
        raise ModeSolverError(f"no guided mode at {s.wavelength_nm} nm")
    rows = []
    for m in modes:
        row = {"index": m.index, "n_eff": m.n_eff, "n_g": m.n_g, "pol_fraction_y": m.pol_fraction_y,
               "gamma_slot": m.gamma_slot, "residual": m.residual}
        if ctx.dump_fields:
            name = f"mode_{m.index}.fields"
            write_field_dump(m, ctx.out / name)
            row["field_dump"] = name
        rows.append(row)
    g = modes[0].grid
    summary = {**ctx.meta("solve"), "wavelength_nm": s.wavelength_nm,
               "grid": {"nx": g.nx, "ny": g.ny, "dx_nm": g.dx, "dy_nm": g.dy, "padding_nm": pad},
               "modes": rows}
    ctx.write("solve_summary.json", dump_json(summary))
    return summary


def cmd_coupling(ctx: _Context) -> dict:
    cfg = ctx.cfg
    cfg.require("geometry", "coupling")
    cs = _cross_section(cfg)
    c = cfg.coupling
    pos = (0.0, cs.monolayer_y_offset)
    results = []
    for lam in c.wavelengths_nm:
        mode, pad = solve_fundamental(cs, lam, _grid(cfg), _solver(cfg))
        table = orientation_table(mode, pos, F_bg=c.F_bg)
        entry = {
            "wavelength_nm": lam, "n_eff": mode.n_eff, "n_g": mode.n_g,
            "pol_fraction_y": mode.pol_fraction_y, "mode_id": mode.index, "padding_nm": pad,
            "position_nm": list(pos),
            "orientations": {ax: {"beta": r.beta, "F_wg": r.F_wg, "F_P": r.F_P}
                             for ax, r in table.items() if ax in c.orientations},
        }
        if c.displacement_u:
            disp = {}
            for ax in c.orientations:
                rows = displacement_sweep(mode, cs, sorted(c.displacement_u), orientation=ax, F_bg=c.F_bg)
                disp[ax] = [{"u": u, "beta": r.beta, "F_wg": r.F_wg, "F_P": r.F_P} for u, r in rows]
                if ctx.wants("csv"):
                    name = f"displacement_{ax}_{_tag(lam)}nm.csv"
                    ctx.write(name, sweep_to_csv(rows, cs, lam))
            entry["displacement"] = disp
        results.append(entry)
    summary = {**ctx.meta("coupling"), "results": results}
    ctx.write("coupling_summary.json", dump_json(summary))
    return summary


def cmd_sweep(ctx: _Context) -> dict:
    cfg = ctx.cfg
    cfg.require("sweep")
    sw = cfg.sweep
    threads = ctx.threads or sw.threads
    grid = _grid(cfg)
    solver = _solver(cfg, boundary_tol=sw.boundary_tol)
    table = []
    for band_name in sw.bands:
        if band_name not in BANDS:
            raise ConfigError(f"[sweep] unknown band {band_name!r}; known: {', '.join(BANDS)}")
        for mat in sw.materials:
            spec = SweepSpec(
                mat, BANDS[band_name],
                w=ParamRange(*sw.w_range_nm), h=ParamRange(*sw.h_range_nm), t_slot=ParamRange(*sw.t_slot_range_nm),
                grid=grid, solver=solver, F_bg=sw.F_bg, refine=sw.refine,
            )
            stem = f"sweep_{mat}_{band_name}"
            res = optimize_geometry(spec, threads=threads, journal_path=ctx.out / f"{stem}.journal")
            if ctx.wants("csv"):
                ctx.write(f"{stem}_points.csv", points_to_csv(res.points))
            ctx.write(f"{stem}_summary.json", dump_json({**ctx.meta("sweep"), **res.summary()}))
            b = res.best
            table.append({"material": mat, "band": band_name, "beta": b.beta, "F_P": b.F_P, "F_wg": b.F_wg,
                          "w_nm": b.w, "h_nm": b.h, "t_slot_nm": b.t_slot,
                          "loss_note": get_material(mat).loss_note})
    summary = {**ctx.meta("sweep"), "table": table}
    ctx.write("material_table.json", dump_json(summary))
    if ctx.wants("csv"):
        cols = ("material", "band", "beta", "F_P", "F_wg", "w_nm", "h_nm", "t_slot_nm", "loss_note")
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(cols)
        for r in table:
            wr.writerow(["" if r[k] is None else repr(r[k]) if isinstance(r[k], float) else r[k] for k in cols])
        ctx.write("material_table.csv", buf.getvalue())
    return summary


def cmd_cqed(ctx: _Context) -> dict:
    cfg = ctx.cfg
    cfg.require("cqed")
    q = cfg.cqed
    res = ResonatorSpec(ghz_to_hz(q.nu_fsr_ghz), q.wavelength_nm, q.q0)
    em = EmitterParams(q.beta, q.F_P, q.gamma_l_per_s, q.N)
    fig = cavity_figures(res, em, q.gamma_total_per_s)
    summary = {**ctx.meta("cqed"), "figures": fig.to_dict(),
               "units": {"kappa0": "s^-1", "g1": "s^-1", "g_N": "s^-1"}}
    ctx.write("cqed.json", dump_json(summary))
    return summary


COMMANDS = {"solve": cmd_solve, "coupling": cmd_coupling, "sweep": cmd_sweep, "cqed": cmd_cqed}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="PATH", help="TOML run configuration")
    src.add_argument("--preset", metavar="NAME", help=f"shipped configuration ({', '.join(preset_names())})")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides [output] directory)")
    common.add_argument("--threads", type=int, metavar="N", help="parallel sweep workers")
    common.add_argument("--dump-fields", action="store_true", help="write one binary field file per solved mode")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="slotqed", description="Slot-waveguide emitter coupling toolkit")
    p.add_argument("--version", action="version", version=f"slotqed {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=COMMANDS[name].__name__.replace("cmd_", "run "))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.config:
            cfg = load_config(args.config)
        elif args.preset:
            cfg = load_preset(args.preset)
        else:
            raise ConfigError("one of --config PATH or --preset NAME is required")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = Path(args.out or cfg.output.directory)
        os.makedirs(out, exist_ok=True)
        COMMANDS[args.command](_Context(cfg, out, args.threads, args.dump_fields))
    except (ConfigError, GeometryError, MaterialRangeError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"slotqed {args.command}: configuration error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModeSolverError, SweepError) as exc:
        print(f"slotqed {args.command}: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
