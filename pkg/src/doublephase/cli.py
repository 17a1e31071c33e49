"""Batch front-end: config parsing, job dispatch, CSV/JSON artifacts.

Config is a flat INI file with one section per module; every key has a
mirroring command-line flag ``--section.key value`` (flags win).  Outputs
are written with full round-trip precision (17 significant digits) plus a
manifest carrying the resolved config, code version, timings and a
content hash per file.  Exit status: 0 success, 1 solver failure,
2 config error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .asymptotics import (I_direct, I_limit, LimitSchedule, expansion_error)
from .dn_map import DNQuery, pairing
from .errors import ConfigError, DoublePhaseError
from .forward import ProblemSpec, solve_dirichlet, verify_principles
from .mesh import Domain, NodalField, boundary_values, build_mesh
from .reconstruct import (REDUCED_LATTICE, default_box, gaussian_bump,
                          metrics, run_reconstruction)
from .tensorops import ExponentPair, monotonicity_batch

COMMANDS = ("forward", "dn", "expand", "verify", "recon", "oracle-recon")

#: config schema: (section, key) -> (type, default)
SCHEMA = {
    ("run", "output_dir"): (str, ""),
    ("run", "workers"): (int, 1),
    ("run", "seed"): (int, 0),
    ("mesh", "nx"): (int, 64),
    ("mesh", "ny"): (int, 64),
    ("mesh", "x_min"): (float, 0.0),
    ("mesh", "x_max"): (float, 1.0),
    ("mesh", "y_min"): (float, 0.0),
    ("mesh", "y_max"): (float, 1.0),
    ("problem", "p"): (float, 2.0),
    ("problem", "q"): (float, 3.0),
    ("problem", "delta"): (float, 1e-8),
    ("problem", "newton_tol"): (float, 1e-10),
    ("problem", "max_iters"): (int, 200),
    ("problem", "continuation_steps"): (int, 8),
    ("coefficient", "preset"): (str, "gaussian"),
    ("coefficient", "value"): (float, 1.0),
    ("coefficient", "center_x"): (float, 0.5),
    ("coefficient", "center_y"): (float, 0.5),
    ("coefficient", "width"): (float, 50.0),
    ("coefficient", "amplitude"): (float, 1.0),
    ("coefficient", "file"): (str, ""),
    ("boundary", "preset"): (str, "plane-wave"),
    ("boundary", "z_x"): (float, 1.0),
    ("boundary", "z_y"): (float, 0.0),
    ("boundary", "amplitude"): (float, 1.0),
    ("boundary", "g_preset"): (str, "plane-wave"),
    ("boundary", "g_z_x"): (float, 0.0),
    ("boundary", "g_z_y"): (float, 1.0),
    ("schedule", "start"): (float, 0.0),  # 0 = regime default
    ("schedule", "ratio"): (float, 0.0),
    ("schedule", "count"): (int, 4),
    ("recon", "lattice"): (int, REDUCED_LATTICE),
    ("recon", "tau"): (float, 1e-2),
    ("recon", "box_margin"): (float, 0.5),
    ("verify", "cases"): (int, 20),
    ("verify", "samples"): (int, 100000),
}


def parse_config(argv):
    parser = argparse.ArgumentParser(
        prog="doublephase",
        description="double phase forward/DN/reconstruction batch runner")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="INI config file")
    for (section, key), (typ, default) in SCHEMA.items():
        parser.add_argument(f"--{section}.{key}", dest=f"{section}.{key}",
                            type=typ, default=None, metavar=key.upper())
    args = parser.parse_args(argv)

    values = {k: v for k, v in SCHEMA.items()}
    resolved = {k: default for k, (_, default) in values.items()}
    if args.config:
        cp = configparser.ConfigParser()
        read = cp.read(args.config)
        if not read:
            raise ConfigError(f"config file not found: {args.config}")
        for section in cp.sections():
            for key, raw in cp.items(section):
                if (section, key) not in SCHEMA:
                    raise ConfigError(f"unknown config key [{section}] {key}")
                typ = SCHEMA[(section, key)][0]
                try:
                    resolved[(section, key)] = typ(raw)
                except ValueError as exc:
                    raise ConfigError(
                        f"bad value for [{section}] {key}: {raw}") from exc
    for (section, key) in SCHEMA:
        override = getattr(args, f"{section}.{key}")
        if override is not None:
            resolved[(section, key)] = override
    return args.command, resolved


def _output_dir(cfg):
    out = cfg[("run", "output_dir")]
    if not out:
        out = os.environ.get("DOUBLEPHASE_OUTPUT_DIR", "doublephase-out")
    os.makedirs(out, exist_ok=True)
    return out


def build_problem(cfg):
    try:
        domain = Domain(cfg[("mesh", "x_min")], cfg[("mesh", "x_max")],
                        cfg[("mesh", "y_min")], cfg[("mesh", "y_max")])
        mesh = build_mesh(cfg[("mesh", "nx")], cfg[("mesh", "ny")], domain)
        exps = ExponentPair(cfg[("problem", "p")], cfg[("problem", "q")])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    a = coefficient_field(mesh, cfg)
    try:
        spec = ProblemSpec(exps, a,
                           delta=cfg[("problem", "delta")],
                           newton_tol=cfg[("problem", "newton_tol")],
                           max_iters=cfg[("problem", "max_iters")],
                           continuation_steps=cfg[("problem",
                                                   "continuation_steps")])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return spec


def coefficient_field(mesh, cfg):
    preset = cfg[("coefficient", "preset")]
    if preset == "zero":
        return NodalField.zeros(mesh)
    if preset == "constant":
        c = cfg[("coefficient", "value")]
        if c < 0:
            raise ConfigError("constant coefficient must be nonnegative")
        return NodalField(mesh, np.full(mesh.n_nodes, c))
    if preset == "gaussian":
        return gaussian_bump(
            mesh,
            center=(cfg[("coefficient", "center_x")],
                    cfg[("coefficient", "center_y")]),
            width=cfg[("coefficient", "width")],
            amplitude=cfg[("coefficient", "amplitude")])
    if preset == "from-file":
        path = cfg[("coefficient", "file")]
        if not path or not os.path.exists(path):
            raise ConfigError(f"coefficient file not found: {path!r}")
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        vals = data[:, 2] if data.ndim == 2 else np.atleast_1d(data)
        if len(vals) != mesh.n_nodes:
            raise ConfigError(
                f"coefficient file has {len(vals)} values for "
                f"{mesh.n_nodes} nodes")
        if np.any(vals < 0):
            raise ConfigError("coefficient file contains negative values")
        return NodalField(mesh, vals)
    raise ConfigError(f"unknown coefficient preset {preset!r}")


def boundary_data(mesh, cfg, prefix=""):
    preset = cfg[("boundary", prefix + "preset")]
    amp = cfg[("boundary", "amplitude")]
    zx = cfg[("boundary", prefix + "z_x")]
    zy = cfg[("boundary", prefix + "z_y")]
    if preset == "plane-wave":
        return amp * boundary_values(mesh, lambda x, y: zx * x + zy * y)
    if preset == "harmonic-quadratic":
        return amp * boundary_values(mesh, lambda x, y: x * x - y * y)
    if preset == "trig":
        return amp * boundary_values(
            mesh, lambda x, y: np.cos(np.pi * x) * y + np.sin(np.pi * y))
    raise ConfigError(f"unknown boundary preset {preset!r}")


def make_schedule(cfg, spec):
    start = cfg[("schedule", "start")]
    ratio = cfg[("schedule", "ratio")]
    count = cfg[("schedule", "count")]
    increasing = spec.exponents.p > spec.exponents.q
    if start <= 0.0:
        start = 5.0 if increasing else 0.2
    if ratio <= 0.0:
        ratio = 2.0 if increasing else 0.5
    try:
        return LimitSchedule(tuple(start * ratio ** k for k in range(count)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _fmt(x):
    return f"{x:.17g}"


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def write_field_csv(path, field):
    mesh = field.mesh
    rows = zip(mesh.nodes[:, 0], mesh.nodes[:, 1], field.values)
    write_csv(path, ["x", "y", "value"], ([float(a), float(b), float(c)]
                                          for a, b, c in rows))


class _Encoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, complex):
            return {"re": o.real, "im": o.imag}
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer, np.bool_)):
            return o.item()
        return super().default(o)


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, cls=_Encoder)
        fh.write("\n")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _cmd_forward(spec, cfg, outdir):
    f = boundary_data(spec.mesh, cfg)
    sol = solve_dirichlet(spec, f)
    write_field_csv(os.path.join(outdir, "solution.csv"), sol.u)
    write_json(os.path.join(outdir, "forward.json"), {
        "energy": sol.energy, "residual": sol.residual,
        "iterations": sol.iterations, "converged": sol.converged})
    return ["solution.csv", "forward.json"]


def _cmd_dn(spec, cfg, outdir):
    f = boundary_data(spec.mesh, cfg)
    g = boundary_data(spec.mesh, cfg, prefix="g_")
    value = pairing(DNQuery(spec, f, g))
    self_value = pairing(DNQuery(spec, f, f))
    write_json(os.path.join(outdir, "dn.json"),
               {"pairing_fg": value, "pairing_ff": self_value})
    return ["dn.json"]


def _cmd_expand(spec, cfg, outdir):
    mesh = spec.mesh
    zx, zy = cfg[("boundary", "z_x")], cfg[("boundary", "z_y")]
    v = NodalField(mesh, mesh.nodes @ np.array([zx, zy]))
    schedule = make_schedule(cfg, spec)
    report = expansion_error(spec, v, schedule)
    write_csv(os.path.join(outdir, "expansion.csv"), ["s", "error"],
              list(zip(report.schedule, report.errors)))
    write_json(os.path.join(outdir, "expansion.json"), {
        "fitted_order": report.fitted_order, "passed": report.passed})
    # test function aligned with the probe direction (a transverse g pairs
    # to ~0 for symmetric coefficients, making the comparison vacuous)
    g = v.values[mesh.boundary_nodes]
    est = I_limit(spec, v, g, schedule)
    write_json(os.path.join(outdir, "i_limit.json"), {
        "value": est.value, "error_bar": est.error_bar,
        "flagged": est.flagged, "samples": list(est.samples),
        "direct": I_direct(spec, v, g)})
    return ["expansion.csv", "expansion.json", "i_limit.json"]


def _cmd_verify(spec, cfg, outdir):
    rng = np.random.default_rng(cfg[("run", "seed")])
    n = cfg[("verify", "samples")]
    inequalities = {}
    for r in (1.3, 1.5, 2.0, 3.0, 4.7):
        x = rng.normal(size=(n // 5, 2)) * rng.lognormal(0, 1, (n // 5, 1))
        y = rng.normal(size=(n // 5, 2)) * rng.lognormal(0, 1, (n // 5, 1))
        out = monotonicity_batch(r, x, y)
        inequalities[str(r)] = {
            "convexity_min_slack": float(out["convexity_slack"].min()),
            "power_min_slack": float(out["power_slack"].min()),
            "pairing_min": float(out["pairing"].min()),
            "difference_ratio_max": float(out["difference_ratio"].max()),
        }
    cases = []
    for _ in range(cfg[("verify", "cases")]):
        c = rng.normal(size=3)
        f2 = boundary_values(
            spec.mesh, lambda x, y: c[0] * x + c[1] * np.cos(np.pi * y)
            + c[2] * np.sin(np.pi * x))
        f1 = f2 + rng.uniform(0.0, 1.0)
        rep = verify_principles(spec, f1, f2, rng=rng, bump_count=4)
        cases.append({
            "max_slack": rep.max_slack,
            "comparison_slack": rep.comparison_slack,
            "local_minimizer_worst": rep.local_minimizer_worst,
            "ok": bool(rep.max_principle_ok and rep.comparison_ok
                       and rep.local_minimizer_ok)})
    write_json(os.path.join(outdir, "verify.json"),
               {"inequalities": inequalities, "principles": cases,
                "all_ok": all(c["ok"] for c in cases)})
    return ["verify.json"]


def _cmd_recon(spec, cfg, outdir, mode):
    schedule = make_schedule(cfg, spec)
    box = default_box(spec.mesh.domain, cfg[("recon", "box_margin")])
    result = run_reconstruction(
        spec, box=box, lattice_size=cfg[("recon", "lattice")], mode=mode,
        schedule=schedule, tau=cfg[("recon", "tau")],
        workers=cfg[("run", "workers")])
    result = metrics(result, spec.a)
    rows = []
    for s in result.samples:
        rows.append([float(s.xi[0]), float(s.xi[1]),
                     float(s.a_hat.real), float(s.a_hat.imag),
                     float(s.error_bar if s.error_bar is not None else 0.0),
                     s.mode])
    write_csv(os.path.join(outdir, "ahat.csv"),
              ["xi1", "xi2", "re_ahat", "im_ahat", "error_bar", "mode"], rows)
    write_field_csv(os.path.join(outdir, "a_rec.csv"), result.a_rec)
    write_json(os.path.join(outdir, "metrics.json"), {
        "relative_l2_error": result.relative_l2_error,
        "max_node_error": result.max_node_error,
        "imag_residue": result.imag_residue,
        "n_samples": len(result.samples),
        "flagged": sum(1 for s in result.samples if s.flagged),
        "discrepancies": result.discrepancies})
    return ["ahat.csv", "a_rec.csv", "metrics.json"]


def run(command, cfg):
    """Run one command; returns the exit status after writing artifacts."""
    outdir = _output_dir(cfg)
    manifest = {
        "version": __version__,
        "kernel_backend": BACKEND,
        "command": command,
        "config": {f"{s}.{k}": v for (s, k), v in sorted(cfg.items())},
        "outputs": [],
        "status": "ok",
    }
    t0 = time.time()
    try:
        spec = build_problem(cfg)
        if command == "forward":
            files = _cmd_forward(spec, cfg, outdir)
        elif command == "dn":
            files = _cmd_dn(spec, cfg, outdir)
        elif command == "expand":
            files = _cmd_expand(spec, cfg, outdir)
        elif command == "verify":
            files = _cmd_verify(spec, cfg, outdir)
        elif command == "recon":
            files = _cmd_recon(spec, cfg, outdir, "pipeline")
        elif command == "oracle-recon":
            files = _cmd_recon(spec, cfg, outdir, "oracle")
        else:
            raise ConfigError(f"unknown command {command!r}")
    except ConfigError as exc:
        manifest["status"] = "config-error"
        manifest["error"] = str(exc)
        manifest["elapsed_seconds"] = time.time() - t0
        write_json(os.path.join(outdir, "manifest.json"), manifest)
        return 2
    except DoublePhaseError as exc:
        manifest["status"] = "solver-failure"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["elapsed_seconds"] = time.time() - t0
        write_json(os.path.join(outdir, "manifest.json"), manifest)
        return 1
    manifest["elapsed_seconds"] = time.time() - t0
    manifest["outputs"] = [
        {"path": f, "sha256": _sha256(os.path.join(outdir, f))}
        for f in files]
    write_json(os.path.join(outdir, "manifest.json"), manifest)
    return 0


def main(argv=None):
    try:
        command, cfg = parse_config(
            sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run(command, cfg)


if __name__ == "__main__":
    sys.exit(main())
