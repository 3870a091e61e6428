"""Command-line entry point: ``dislocation <subcommand> --config FILE``.

Subcommands: mesh, solve, probe, reduce3d, invert, verify-lemmas. Every run
writes its data files and a ``manifest.json`` into the output directory.
Exit codes: 0 success, 1 invalid configuration or input, 2 numerical
failure (including a failed check). ``DISLOCATION_THREADS`` caps the
threads used by the linear algebra libraries and the inversion workers.
"""

from __future__ import annotations

import argparse
import os
import sys

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _cap_threads():
    n = os.environ.get("DISLOCATION_THREADS")
    if n:
        for var in THREAD_VARS:
            os.environ[var] = n


# the cap must be in place before numpy loads its BLAS
_cap_threads()

import hashlib  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import math  # noqa: E402
import time  # noqa: E402
from importlib.metadata import PackageNotFoundError, version  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from .config import ConfigError, parse_config, serialize  # noqa: E402

log = logging.getLogger("dislocation")

SUBCOMMANDS = ("mesh", "solve", "probe", "reduce3d", "invert", "verify-lemmas")


class StageError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage


def artifact_version():
    try:
        return version("dislocation")
    except PackageNotFoundError:
        return "0.0.0"


class Run:
    """Output directory bookkeeping: files, timings and checks for the manifest."""

    def __init__(self, out, cfg, subcommand, seed, emit_plot_csv):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.subcommand = subcommand
        self.seed = seed
        self.emit_plot_csv = emit_plot_csv
        self.files = []
        self.timings = {}
        self.checks = {}
        self.partial = False

    def path(self, name):
        p = self.out / name
        if name not in self.files:
            self.files.append(name)
        return p

    def write_text(self, name, text):
        with open(self.path(name), "w") as fh:
            fh.write(text)

    def stage(self, name):
        run = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()
                log.info("stage %s", name)

            def __exit__(self, exc_type, exc, tb):
                run.timings[name] = round(time.perf_counter() - self.t0, 6)
                if exc is not None:
                    run.partial = True
                return False

        return _Timer()

    def check(self, name, passed, detail=""):
        self.checks[name] = {"pass": bool(passed), "detail": detail}
        log.info("check %s: %s %s", name, "PASS" if passed else "FAIL", detail)

    def manifest(self, status, error=None):
        inventory = []
        for name in sorted(self.files):
            p = self.out / name
            if p.exists():
                inventory.append({"file": name, "bytes": p.stat().st_size,
                                  "sha256": hashlib.sha256(p.read_bytes()).hexdigest()})
        doc = {
            "subcommand": self.subcommand,
            "artifact_version": artifact_version(),
            "config_hash": self.cfg.hash(),
            "seed": self.seed,
            "status": status,
            "partial_outputs": self.partial,
            "error": error,
            "timings_s": self.timings,
            "files": inventory,
            "checks": self.checks,
            "all_checks_pass": all(c["pass"] for c in self.checks.values()),
        }
        with open(self.out / "manifest.json", "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return doc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_mesh(run):
    from .mesh import build_mesh, write_mesh
    cfg = run.cfg
    with run.stage("mesh"):
        m = cfg["mesh"]
        mesh = build_mesh(cfg.domain(), cfg.closure(), m["h"], m["min_angle"], m["corner_grading"])
        write_mesh(mesh, run.path("mesh.txt"))
    ok = bool(np.all(mesh.areas() > 0))
    run.check("positive_orientation", ok, f"{len(mesh.triangles)} triangles, {mesh.n_nodes} nodes")
    pairs_ok = len(mesh.fault_edges) > 0
    run.check("fault_split", pairs_ok, f"{len(mesh.plus_copies)} duplicated nodes")
    if run.emit_plot_csv:
        d = mesh.triangle_diameters()
        rows = [f"{i},{r},{a:.17g},{dd:.17g}" for i, (r, a, dd) in enumerate(zip(mesh.region, mesh.areas(), d))]
        run.write_text("plot_mesh_quality.csv", "triangle,region,area,diameter\n" + "\n".join(rows) + "\n")
    return mesh


def cmd_solve(run):
    from .elastostatics import solve_direct
    from .inversion import sample_boundary
    cfg = run.cfg
    mesh = cmd_mesh(run)
    with run.stage("solve"):
        s = cfg["solver"]
        field = solve_direct(mesh, cfg.params(), cfg.jumps(), kind=s["kind"], tol=s["tol"])
        field.to_csv(run.path("field.csv"))
    info = field.info
    run.check("jump_exactness", info["jump_error"] <= 1e-9 * info["jump_scale"],
              f"max |[u] - f| = {info['jump_error']:.3e}")
    run.check("dirichlet", info["dirichlet_max"] <= 1e-12, f"max |u| on Sigma_D = {info['dirichlet_max']:.3e}")
    run.check("residual", info["relative_residual"] <= 1e-8, f"relative residual {info['relative_residual']:.3e}")
    if cfg["domain"]["observation"]:
        with run.stage("observe"):
            obs = sample_boundary(field, cfg.scene())
            obs.to_csv(run.path("observation.csv"))
    return field


def _probe_tol(p, default):
    return p["tol"] if p["tol"] is not None else default


def cmd_probe(run):
    from .probe import (TOL_ANALYTIC, TOL_FEM, CornerCauchyData, cauchy_data_from_fem,
                        extract_f_mismatch, extract_g_relation, write_probe_csv, HOLDS, VIOLATED)
    cfg = run.cfg
    p = cfg["probe"]
    params = cfg.params()
    if p["source"] == "fem":
        field = cmd_solve(run)
        tol = _probe_tol(p, TOL_FEM)
        with run.stage("cauchy_data"):
            data = cauchy_data_from_fem(field, params, p["corner"], p["radius"])
    else:
        tol = _probe_tol(p, TOL_ANALYTIC)
        data = CornerCauchyData.constant(p["theta_m"], p["theta_M"], p["radius"], p["f_plus"], p["g_plus"],
                                         p["f_minus"], p["g_minus"], zero_gradient=p["zero_gradient"])
    with run.stage("probe"):
        rep_f = extract_f_mismatch(data, cfg.s_grid(), params.mu, params.lam, tol)
        write_probe_csv(rep_f, run.path("probe_f.csv"))
        lines = rep_f.lines()
        rep_g = None
        if rep_f.verdict == HOLDS and data.zero_gradient:
            rtol = p["relation_tol"] if p["relation_tol"] is not None else tol
            rep_g = extract_g_relation(data, cfg.s_grid(), params.mu, params.lam, tol, rep_f, rtol)
            write_probe_csv(rep_g, run.path("probe_g.csv"))
            lines += rep_g.lines()
        run.write_text("probe_report.txt", "\n".join(lines) + "\n")
    verdicts = [rep_f.verdict] + ([rep_g.verdict] if rep_g else [])
    run.check("probe_conclusive", all(v in (HOLDS, VIOLATED) for v in verdicts), " ".join(verdicts))
    return rep_f, rep_g


def cmd_reduce3d(run):
    from .reduction import BumpProfile, EdgeData3D, edge_probe_3d, read_edge_data
    cfg = run.cfg
    r = cfg["reduce3d"]
    params = cfg.params()
    with run.stage("edge_data"):
        if r["edge_data"]:
            edge = read_edge_data(r["edge_data"])
        else:
            edge = EdgeData3D.constant(r["theta_m"], r["theta_M"], r["radius"], r["f_plus"], r["g_plus"],
                                       r["f_minus"], r["g_minus"], zero_gradient=r["zero_gradient"])
    with run.stage("reduce3d"):
        profile = BumpProfile(r["profile_center"], r["profile_half_width"])
        profile.check_support(r["slab_half_width"])
        rep = edge_probe_3d(edge, profile, cfg.s_grid(), params.mu, params.lam, r["tol"], r["coefficient"])
        run.write_text("reduce3d_report.txt", "\n".join(rep.lines()) + "\n")
    from .probe import HOLDS, VIOLATED
    run.check("edge_probe_conclusive", rep.verdict in (HOLDS, VIOLATED), rep.verdict)
    return rep


def _initial_hypothesis(cfg, truth):
    inv = cfg["inversion"]
    if inv["initial"] is not None:
        return truth.with_geometry(np.array(inv["initial"], dtype=float).ravel())
    v = truth.vertices
    c = v.mean(axis=0)
    return truth.with_geometry((c + inv["initial_scale"] * (v - c)).ravel())


def write_hypothesis(hyp, path, extra=None):
    """Key-value text: ``closed``, ``vertices``, ``f`` and ``g`` as point lists."""
    pts = lambda a: "; ".join(" ".join(repr(float(c)) for c in p) for p in a)
    lines = [f"closed = {'true' if hyp.closed else 'false'}", f"vertices = {pts(hyp.vertices)}",
             f"f = {pts(hyp.f)}", f"g = {pts(hyp.g)}"]
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_invert(run):
    from .inversion import (default_workers, forward, read_observation_csv, reconstruct,
                            vertex_error)
    cfg = run.cfg
    inv = cfg["inversion"]
    scene = cfg.scene()
    truth = cfg.hypothesis()
    with run.stage("measured"):
        if inv["measured"]:
            measured = read_observation_csv(inv["measured"], scene)
        else:
            measured = forward(truth, scene.refined(inv["truth_refinement"]))
            if not measured.valid:
                raise StageError("measured", measured.reason)
            if inv["noise"] > 0:
                measured = measured.with_noise(inv["noise"], run.seed)
            measured.to_csv(run.path("measured.csv"))
    workers = min(inv["workers"], default_workers()) if os.environ.get("DISLOCATION_THREADS") else inv["workers"]
    with run.stage("reconstruct"):
        initial = _initial_hypothesis(cfg, truth)
        res = reconstruct(measured, initial, scene, cfg.inversion_config(workers))
    write_hypothesis(res.hypothesis, run.path("hypothesis.txt"),
                     {"misfit": repr(res.misfit), "stop_reason": res.stop_reason})
    rows = "\n".join(f"{i},{m:.17g},{s:.17g}" for i, m, s in res.convergence_rows())
    run.write_text("convergence.csv", "iteration,misfit,step\n" + rows + "\n")
    ident = res.identifiability
    run.write_text("identifiability.txt", "\n".join(
        [f"n_jump_unknowns = {ident['n_jump_unknowns']}", f"null_space_dim = {ident['null_space_dim']}",
         f"condition = {ident['condition']!r}", f"full_condition = {ident['full_condition']!r}",
         f"full_support = {str(ident['full_support']).lower()}",
         "singular_values = " + " ".join(repr(v) for v in ident["singular_values"])]) + "\n")
    run.check("monotone_misfit", all(b <= a for a, b in zip(res.history, res.history[1:])),
              f"{len(res.history)} iterations")
    if not inv["measured"]:
        err = vertex_error(res.hypothesis, truth)
        tol = (0.05 if inv["noise"] > 0 else 0.02) * scene.domain.diameter
        run.check("vertex_recovery", err <= tol, f"max vertex error {err:.4e} (limit {tol:.4e})")
    return res


def cmd_verify_lemmas(run):
    from .cgo import verify_lemmas, write_lemma_csv
    lem = run.cfg["lemmas"]
    with run.stage("verify_lemmas"):
        rows = verify_lemmas(tuple(lem["s_values"]), tuple(lem["openings"]), lem["center"], lem["h"],
                             run.cfg.params().mu, lem["tol"])
        write_lemma_csv(rows, run.path("lemmas.csv"))
    failed = [r.lemma_id for r in rows if not r.passed]
    run.check("lemmas", not failed, f"{len(rows)} rows, {len(failed)} failed")
    if run.emit_plot_csv:
        from .cgo import SectorSpec, scalar_sector_integral, sector_integral_u01
        s = np.geomspace(2.0, 200.0, 40)
        spec = SectorSpec(-lem["openings"][0] / 2, lem["openings"][0] / 2)
        body = "\n".join(f"{si:.17g},{abs(sector_integral_u01(spec, si)):.17g},"
                         f"{abs(scalar_sector_integral(spec, si)):.17g}" for si in s)
        run.write_text("plot_decay.csv", "s,abs_vector_sector,abs_scalar_sector\n" + body + "\n")
    return rows


COMMANDS = {"mesh": cmd_mesh, "solve": cmd_solve, "probe": cmd_probe, "reduce3d": cmd_reduce3d,
            "invert": cmd_invert, "verify-lemmas": cmd_verify_lemmas}


def build_parser():
    ap = argparse.ArgumentParser(prog="dislocation", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="experiment configuration (INI)")
    ap.add_argument("--out", help="output directory (default: [run] output)")
    ap.add_argument("--seed", type=int, help="random seed (default: [run] seed)")
    ap.add_argument("--verbose", action="store_true", help="log stages and checks to stderr")
    ap.add_argument("--emit-plot-csv", action="store_true", help="also write plot-ready tables")
    return ap


def _numerical_errors():
    from .elastostatics import ElasticityError, SolverError
    from .geometry import GeometryError
    from .inversion import InversionError
    from .probe import ProbeError
    from .reduction import ReductionError
    return (StageError, SolverError, ElasticityError, GeometryError, InversionError, ProbeError,
            ReductionError, ArithmeticError, np.linalg.LinAlgError)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        for line in exc.format():
            print(f"{args.config}: {line}", file=sys.stderr)
        return 1
    if args.seed is not None:
        if args.seed < 0:
            print("--seed must be nonnegative", file=sys.stderr)
            return 1
        cfg.values["run"]["seed"] = args.seed
    if "DISLOCATION_THREADS" not in os.environ and cfg["run"]["threads"] > 0:
        # only affects libraries that read the variables lazily
        for var in THREAD_VARS:
            os.environ.setdefault(var, str(cfg["run"]["threads"]))
    out = args.out or cfg["run"]["output"]
    run = Run(out, cfg, args.subcommand, cfg["run"]["seed"], args.emit_plot_csv)
    run.write_text("config.normalized.ini", serialize(cfg))
    try:
        COMMANDS[args.subcommand](run)
    except FileNotFoundError as exc:
        run.manifest("validation_error", str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _numerical_errors() as exc:
        stage = getattr(exc, "stage", None) or (list(run.timings)[-1] if run.timings else args.subcommand)
        msg = f"stage '{stage}': {type(exc).__name__}: {exc}" if not isinstance(exc, StageError) else str(exc)
        run.manifest("numerical_failure", msg)
        print(f"error: {msg}", file=sys.stderr)
        return 2
    doc = run.manifest("ok")
    if args.verbose:
        for name, c in doc["checks"].items():
            print(f"{name}: {'PASS' if c['pass'] else 'FAIL'} {c['detail']}", file=sys.stderr)
    if not doc["all_checks_pass"]:
        failed = [n for n, c in doc["checks"].items() if not c["pass"]]
        print(f"error: checks failed: {', '.join(failed)}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
