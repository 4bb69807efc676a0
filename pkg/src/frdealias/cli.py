"""Command line entry point.

``frdealias run --config case.cfg`` integrates a configured case and writes CSV
diagnostics and figures; ``validate-mesh`` checks a mesh file; ``psd``
computes a Welch spectrum from a force history.

Exit status is 0 on success, 2 when the solution blows up (a
``blowup.json`` report is written) and 1 for configuration or I/O errors.
"""

import argparse
from dataclasses import dataclass
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .antialias import FilterLog
from .basis import reference_element
from .cases import Case, cartesian_case
from .config import ConfigError, parse_config, write_resolved
from .diagnostics import (CsvSeries, RunningMean, TimeSeries, conserved_totals, l2_error,
                          peak_frequencies, read_table, wall_forces, welch_psd, write_fields,
                          write_table, write_vtk)
from .fr_core import FRDiscretization, farfield_bc, wall_bc
from .mesh import MeshError, load_mesh
from .physics import GasModel, InadmissibleStateError, from_primitive
from .timeint import BlowupError, run

log = logging.getLogger("frdealias")

EXIT_OK, EXIT_ERROR, EXIT_BLOWUP = 0, 1, 2
VAR_NAMES = {1: ["rho", "rhou", "E"], 2: ["rho", "rhou", "rhov", "E"]}


def gas_from(cfg):
    return GasModel(cfg.gas_gamma, cfg.gas_prandtl, cfg.gas_mu)


def freestream_state(cfg, gas, dim):
    vel = np.array([cfg.freestream_u, cfg.freestream_v][:dim])
    return from_primitive(np.array(cfg.freestream_rho), vel, np.array(cfg.freestream_p), gas)


def build_case(cfg, element=None, gas=None):
    """Mesh, initial state, boundary conditions and exact solution for a config.

    Raises
    ------
    ConfigError
        For case/dimension mismatches or boundary tags without a condition.
    MeshError
        When the mesh file is malformed.
    """
    gas = gas or gas_from(cfg)
    if element is None:
        element = reference_element(cfg.p, cfg.dim, cfg.node_family)
    if cfg.case != "from_mesh_file":
        try:
            return cartesian_case(cfg.case, element, gas, cfg.mesh_n, dim=cfg.dim,
                                  skew=cfg.mesh_skew, seed=cfg.seed,
                                  perturbation=cfg.ic_perturbation,
                                  steepness=cfg.ic_steepness)
        except ValueError as exc:
            raise ConfigError(str(exc), key="case") from None

    mesh = load_mesh(cfg.mesh_path)
    if mesh.dim != cfg.dim:
        raise ConfigError(f"mesh is {mesh.dim}D but dim = {cfg.dim}", key="dim")
    ref = freestream_state(cfg, gas, mesh.dim)
    bcs = {}
    for tag in mesh.tags():
        kind = cfg.bc.get(tag)
        if kind is None:
            raise ConfigError(f"mesh boundary tag {tag!r} has no condition", key=f"bc.{tag}")
        bcs[tag] = farfield_bc(tag, ref) if kind == "farfield" else wall_bc(tag)
    u0 = np.broadcast_to(ref, (mesh.n_elements, element.n_sol, ref.size)).copy()
    wall = cfg.wall_tag or next((t for t in mesh.tags() if cfg.bc[t] != "farfield"), None)
    return Case("from_mesh_file", mesh, u0, bcs, None, ref, wall)


@dataclass
class RunOutcome:
    status: int
    out_dir: str
    steps: int = 0
    time: float = 0.0
    report: dict = None


class _Recorder:
    """Writes the per-cadence CSV rows and keeps what the figures need."""

    def __init__(self, cfg, case, disc, out):
        self.cfg, self.case, self.disc, self.out = cfg, case, disc, out
        mesh, el = disc.mesh, disc.element
        names = VAR_NAMES[mesh.dim]
        self.names = names
        self.totals = CsvSeries(os.path.join(out, "totals.csv"), ["step", "t"] + names)
        self.error = None
        if case.exact is not None:
            self.error = CsvSeries(os.path.join(out, "error.csv"), ["step", "t"] + names)
        self.forces = None
        if case.wall_tag:
            self.forces = CsvSeries(os.path.join(out, "forces.csv"), ["t", "C_L", "C_D"])
        self.error_rows = []
        self.force_rows = []
        self.last = None
        self.mean = RunningMean(cfg.outputs_average_start) if cfg.outputs_average_start >= 0 \
            else None
        self.freestream = (cfg.freestream_rho,
                           np.array([cfg.freestream_u, cfg.freestream_v][:mesh.dim]),
                           cfg.freestream_p)

    def __call__(self, step, state):
        mesh, el = self.disc.mesh, self.disc.element
        self.last = (step, state)
        self.totals.write(step, state.time, *conserved_totals(state, mesh, el))
        if self.error is not None:
            err = l2_error(state, lambda x: self.case.exact(x, state.time), mesh, el)
            self.error.write(step, state.time, *err)
            self.error_rows.append((state.time, err))
        if self.forces is not None:
            wf = wall_forces(state, mesh, el, self.disc.gas, self.case.wall_tag,
                             freestream=self.freestream, ref_length=self.cfg.ref_length,
                             disc=self.disc)
            self.forces.write(state.time, wf.cl, wf.cd)
            self.force_rows.append((state.time, wf.cl, wf.cd))
        if self.mean is not None:
            self.mean.update(state.time, state.u)

    def close(self):
        for w in (self.totals, self.error, self.forces):
            if w is not None:
                w.close()


def _uniform_prefix(times):
    """Longest prefix of ``times`` that is uniformly spaced (drops a short last step)."""
    times = np.asarray(times)
    if times.size < 3:
        return times.size
    d = np.diff(times)
    ok = np.abs(d - d[0]) <= 1e-9 * max(abs(d[0]), 1e-300)
    bad = np.flatnonzero(~ok)
    return times.size if bad.size == 0 else int(bad[0]) + 1


def _finish(cfg, rec, result_records, state, disc, out, plots):
    mesh, el, gas = disc.mesh, disc.element, disc.gas
    write_table(os.path.join(out, "progress.csv"), list(result_records[0]),
                [list(r.values()) for r in result_records])
    if state is not None and cfg.outputs_fields:
        write_fields(os.path.join(out, "fields.csv"), state, mesh, el, gas)
        if cfg.outputs_vtk:
            write_vtk(os.path.join(out, "fields.vtk"), state, mesh, el, gas)
    if rec.mean is not None and rec.mean.mean is not None:
        write_fields(os.path.join(out, "mean_fields.csv"), rec.mean.mean, mesh, el, gas)

    psd = None
    if rec.force_rows:
        t = np.array([r[0] for r in rec.force_rows])
        n = _uniform_prefix(t)
        if n >= cfg.psd_window and n >= 2:
            cl = np.array([r[1] for r in rec.force_rows])[:n]
            f, pw = welch_psd(TimeSeries(t[:n], cl), cfg.psd_window, cfg.psd_shift)
            write_table(os.path.join(out, "psd.csv"), ["f", "power"], zip(f, pw))
            psd = (f, pw)
        else:
            log.info("force history has %d uniform samples, fewer than psd.window; no PSD", n)

    if not plots:
        return
    from . import plotting
    if state is not None and mesh.dim in (1, 2):
        plotting.plot_field(os.path.join(out, "density.png"), state, mesh, el, gas, "rho",
                            title=f"{cfg.case}, t = {state.time:.4g}")
    if len(result_records) > 1:
        plotting.plot_history(os.path.join(out, "history.png"), result_records)
    if rec.error_rows:
        plotting.plot_error(os.path.join(out, "error.png"), [r[0] for r in rec.error_rows],
                            [r[1] for r in rec.error_rows], rec.names)
    if psd is not None:
        plotting.plot_psd(os.path.join(out, "psd.png"), *psd,
                          peaks=peak_frequencies(*psd, count=2))


def execute(cfg):
    """Run a validated configuration and write its outputs.

    Returns
    -------
    RunOutcome
        ``status`` is one of the exit codes of :func:`main`.
    """
    out = cfg.output_dir()
    os.makedirs(out, exist_ok=True)
    write_resolved(cfg, os.path.join(out, "resolved.cfg"))
    if cfg.threads > 1:
        log.info("threads = %d accepted; kernels are vectorised and run in one process",
                 cfg.threads)
    gas = gas_from(cfg)
    element = reference_element(cfg.p, cfg.dim, cfg.node_family)
    case = build_case(cfg, element, gas)
    antialias = cfg.antialias()
    disc = FRDiscretization(case.mesh, element, gas, case.bcs, antialias)
    try:
        disc.check_state(case.initial)
    except (InadmissibleStateError, FloatingPointError) as exc:
        raise ConfigError(f"initial state is not admissible: {exc}", key="case") from None

    flog = FilterLog(os.path.join(out, "filter_log.csv")) if cfg.outputs_filter_log else None
    rec = _Recorder(cfg, case, disc, out)
    records = None
    try:
        result = run(case.initial, disc, cfg.dt, cfg.t_end, cadence=cfg.outputs_cadence,
                     callback=rec, filter_log=flog, progress_every=max(1, cfg.outputs_cadence))
        records = result.records
    except BlowupError as exc:
        rec.close()
        report = exc.as_dict()
        if rec.last is not None:
            report["last_recorded_step"] = rec.last[0]
            report["last_recorded_time"] = rec.last[1].time
        report["config"] = os.path.join(out, "resolved.cfg")
        with open(os.path.join(out, "blowup.json"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
        if flog is not None:
            flog.write()
        log.error("blowup: %s", exc)
        if exc.records:
            write_table(os.path.join(out, "progress.csv"), list(exc.records[0]),
                        [list(r.values()) for r in exc.records])
        if exc.last_state is not None and cfg.outputs_fields:
            write_fields(os.path.join(out, "fields_last.csv"), exc.last_state, case.mesh,
                         element, gas)
        if cfg.outputs_plots and exc.last_state is not None:
            from .plotting import plot_field, plot_history
            plot_field(os.path.join(out, "density_last.png"), exc.last_state, case.mesh,
                       element, gas, "rho",
                       title=f"last good state, t = {exc.last_state.time:.4g}")
            if len(exc.records) > 1:
                plot_history(os.path.join(out, "history.png"), exc.records)
        return RunOutcome(EXIT_BLOWUP, out, exc.step or 0, exc.time or 0.0, report)
    rec.close()
    if flog is not None:
        flog.write()
    _finish(cfg, rec, records, result.state, disc, out, cfg.outputs_plots)
    return RunOutcome(EXIT_OK, out, result.steps, result.state.time)


# ---------------------------------------------------------------- commands
def cmd_run(args):
    try:
        cfg = parse_config(args.config, args.override or ())
        if args.output:
            cfg.outputs_dir = args.output
        outcome = execute(cfg)
    except (ConfigError, MeshError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if outcome.status == EXIT_BLOWUP:
        print(f"blowup at step {outcome.steps}, t = {outcome.time:.6g}; "
              f"report in {os.path.join(outcome.out_dir, 'blowup.json')}", file=sys.stderr)
    else:
        print(f"completed {outcome.steps} steps to t = {outcome.time:.6g}; "
              f"outputs in {outcome.out_dir}")
    return outcome.status


def cmd_validate_mesh(args):
    try:
        mesh = load_mesh(args.path)
    except (MeshError, OSError) as exc:
        print(f"invalid mesh: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(mesh.summary())
    return EXIT_OK


def cmd_psd(args):
    try:
        header, cols = read_table(args.input)
        if args.column not in cols or "t" not in cols:
            raise ValueError(f"{args.input} needs columns 't' and {args.column!r}; has {header}")
        t = cols["t"]
        n = _uniform_prefix(t)
        series = TimeSeries(t[:n], cols[args.column][:n])
        f, pw = welch_psd(series, args.window, args.shift)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = args.output or os.path.join(os.path.dirname(os.path.abspath(args.input)), "psd.csv")
    write_table(out, ["f", "power"], zip(f, pw))
    peaks = peak_frequencies(f, pw, count=args.peaks)
    print("peaks: " + ", ".join(f"{p:.6g}" for p in peaks))
    if args.plot:
        from .plotting import plot_psd
        plot_psd(os.path.splitext(out)[0] + ".png", f, pw, peaks=peaks)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="frdealias", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a configured case")
    r.add_argument("--config", required=True)
    r.add_argument("--override", action="append", metavar="KEY=VALUE",
                   help="override a config key; may be repeated")
    r.add_argument("--output", help="output directory (overrides outputs.dir)")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("validate-mesh", help="check a mesh file and print a summary")
    m.add_argument("path")
    m.set_defaults(func=cmd_validate_mesh)

    p = sub.add_parser("psd", help="Welch power spectral density of a force history")
    p.add_argument("--input", required=True, help="CSV with a 't' column")
    p.add_argument("--column", default="C_L")
    p.add_argument("--window", type=int, default=4096)
    p.add_argument("--shift", type=int, default=10)
    p.add_argument("--peaks", type=int, default=2, help="number of peaks to report")
    p.add_argument("--output", help="psd CSV path (default: next to the input)")
    p.add_argument("--plot", action="store_true", help="also render psd.png")
    p.set_defaults(func=cmd_psd)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
