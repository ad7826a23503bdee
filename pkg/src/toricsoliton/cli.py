"""Command-line entry point: ``toricsoliton {flow,analyze,entropy}``.

Exit status: 0 success, 2 not converged within ``max_steps``, 3 blow-up,
4 configuration or snapshot-format error. Reports are ``key = value`` text;
every artifact embeds the job config and the code version.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import snapshot as snap_io
from .entropy import beta_sweep, entropy_nu, nu_closed_dp2
from .errors import BlowUpError, ConfigurationError, SnapshotFormatError
from .flow import Schedule, run
from .geometry import curvature_invariants, metric_from_potential
from .grid import N_MAX, N_MIN
from .polytope import BUILTIN_SURFACES, DelzantPolytope, SolitonVector, builtin_surface
from .soliton_analysis import fit_quartic, moment_alpha, verify_soliton_tensor

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_BLOWUP, EXIT_CONFIG = 0, 2, 3, 4


@dataclass
class JobConfig:
    surface: str = "dP2"
    polytope_file: Optional[str] = None
    N: int = 128
    tol: float = 1e-6
    kappa: float = 0.2
    max_steps: int = 200_000
    scheme: str = "explicit"
    snapshot_every: int = 0
    snapshot_dir: Optional[str] = None
    out: str = "out"
    threads: int = 1
    force: bool = False

    def validate(self) -> "JobConfig":
        if self.polytope_file is None and self.surface not in BUILTIN_SURFACES:
            raise ConfigurationError(f"unknown surface {self.surface!r}; choose from {', '.join(BUILTIN_SURFACES)}")
        if not N_MIN <= int(self.N) <= N_MAX:
            raise ConfigurationError(f"N must lie in [{N_MIN}, {N_MAX}], got {self.N}")
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if not 0 < self.kappa <= 1:
            raise ConfigurationError("kappa must lie in (0, 1]")
        if self.max_steps < 0 or self.snapshot_every < 0:
            raise ConfigurationError("max_steps and snapshot_every must be non-negative")
        if self.threads < 1:
            raise ConfigurationError("threads must be at least 1")
        if self.scheme not in ("explicit", "implicit"):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "JobConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "JobConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc

    def schedule(self) -> Schedule:
        return Schedule(tol=self.tol, max_steps=self.max_steps, kappa=self.kappa, scheme=self.scheme,
                        snapshot_every=self.snapshot_every)

    def polytope(self) -> DelzantPolytope:
        if self.polytope_file:
            return load_polytope(self.polytope_file)
        return builtin_surface(self.surface)


def load_polytope(path) -> DelzantPolytope:
    """Read ``{"name": ..., "edges": [{"normal": [n1, n2], "offset": c}, ...]}``."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read polytope file {path}: {exc}") from exc
    if not isinstance(data, dict) or "edges" not in data:
        raise ConfigurationError(f"{path}: expected an object with an 'edges' list")
    return DelzantPolytope.from_records(data["edges"], name=data.get("name", Path(path).stem))


# -- reporting --------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(v)
    return str(v)


def format_report(title: str, items: dict) -> str:
    lines = [f"# toricsoliton {title}"]
    lines += [f"{k} = {_fmt(v)}" for k, v in items.items()]
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        k, _, v = line.partition(" = ")
        out[k] = v
    return out


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _write_history(path: Path, rows, name: str, cfg: str):
    lines = [f"# config: {cfg}", f"# code_version: {__version__}", f"step,t,{name}"]
    lines += [f"{s},{t!r},{float(v)!r}" for s, t, v in rows]
    _write(path, "\n".join(lines) + "\n")


def _write_field_csv(path: Path, grid, values, name: str, cfg: str):
    lines = [f"# config: {cfg}", f"# code_version: {__version__}", f"x1,x2,{name}"]
    for i, j in np.argwhere(np.isfinite(values)):
        lines.append(f"{grid.x[i]!r},{grid.x[j]!r},{float(values[i, j])!r}")
    _write(path, "\n".join(lines) + "\n")


def _error(out: Optional[Path], kind: str, message: str, code: int) -> int:
    record = format_report("error", {"kind": kind, "message": message, "exit_status": code})
    sys.stderr.write(record)
    if out is not None:
        _write(out / "error.txt", record)
    return code


# -- commands ---------------------------------------------------------------


def cmd_flow(cfg: JobConfig, resume: Optional[str] = None) -> int:
    out = Path(cfg.out)
    state = None
    if resume:
        snap = snap_io.load(resume)
        p, state = snap.polytope, snap.state
        cfg.N = state.grid.N
    else:
        p = cfg.polytope()
    cfg_text = cfg.to_json()
    snap_dir = Path(cfg.snapshot_dir) if cfg.snapshot_dir else out / "snapshots"

    def on_snapshot(s, report):
        snap_dir.mkdir(parents=True, exist_ok=True)
        snap_io.write_binary(snap_dir / f"snap_{s.step_count:08d}.bin", snap_io.Snapshot(p, s, False, json.loads(cfg_text)))

    try:
        state, report = run(p, cfg.N, cfg.schedule(), state=state, on_snapshot=on_snapshot,
                            allow_nonanticanonical=cfg.force)
    except BlowUpError as exc:
        if exc.last_state is not None:
            snap_io.write_binary(out / "last_stable.bin", snap_io.Snapshot(p, exc.last_state, False, json.loads(cfg_text)))
        return _error(out, "blowup", str(exc), EXIT_BLOWUP)
    snap_io.write_binary(out / "final.bin", snap_io.Snapshot(p, state, report.converged, json.loads(cfg_text)))
    items = {
        "surface": p.name,
        "N": state.grid.N,
        "converged": report.converged,
        "alpha": report.alpha,
        "xi": list(report.xi),
        "c": report.c,
        "residual_sup": report.residual_sup,
        "time_elapsed_flow": report.time_elapsed_flow,
        "steps": report.steps,
        "scheme": cfg.scheme,
        "config": json.loads(cfg_text),
        "code_version": __version__,
    }
    text = format_report("flow report", items)
    _write(out / "report.txt", text)
    _write_history(out / "alpha_history.csv", report.alpha_history, "alpha", cfg_text)
    _write_history(out / "residual_history.csv", report.residual_history, "residual_sup", cfg_text)
    sys.stdout.write(text)
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def cmd_analyze(snapshot: str, out: str) -> int:
    snap = snap_io.load(snapshot)
    p, s = snap.polytope, snap.state
    g = s.grid
    outp = Path(out)
    cfg_text = json.dumps(snap.config, sort_keys=True)
    fit = fit_quartic(p, g, s.h, converged=snap.converged)
    md = metric_from_potential(p, g, s.h)
    cd = curvature_invariants(md)
    xi = SolitonVector(tuple(s.gauge[1]))
    items = {
        "surface": p.name,
        "N": g.N,
        "converged": snap.converged,
        "stale": fit.stale,
        "alpha": xi.alpha,
        "xi": list(xi.components),
    }
    for name, c in fit.table():
        items[f"fit[{name}]"] = c
    items["fit_gauge"] = list(fit.gauge)
    items["fit_rms_error"] = fit.rms_error
    items["fit_max_metric_error"] = fit.max_metric_error
    items["fit_max_inverse_metric_error"] = fit.max_inverse_metric_error
    items["fit_max_relative_metric_error"] = fit.max_relative_metric_error
    items["euler_integral"] = cd.euler_integrand.integrate()
    items["euler_expected"] = p.euler_characteristic
    items["ricci_scalar_mean"] = cd.ricci_scalar.integrate() / p.area()
    items["soliton_tensor_residual"] = verify_soliton_tensor(p, g, s.h, xi)
    items["config"] = snap.config
    items["code_version"] = __version__
    text = format_report("analysis report", items)
    _write(outp / "analysis.txt", text)
    for name in ("ricci_scalar", "sectional_x", "euler_integrand"):
        _write_field_csv(outp / f"{name}.csv", g, getattr(cd, name).values, name, cfg_text)
    sys.stdout.write(text)
    return EXIT_OK


def _parse_sweep(text: str):
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError as exc:
        raise ConfigurationError(f"--sweep expects lo:hi:count, got {text!r}") from exc


def cmd_entropy(p: DelzantPolytope, out: str, force: bool = False, sweep: Optional[str] = None, config: Optional[dict] = None) -> int:
    xi = moment_alpha(p, force=force)
    res = entropy_nu(p, xi)
    items = {
        "surface": p.name,
        "xi": list(xi.components),
        "Z1": res.Z,
        "nu": res.nu,
        "theta": res.theta,
        "theta_e2": res.theta_e2,
    }
    if p.name == "dP2" and p.anticanonical:
        items["nu_closed_form"] = nu_closed_dp2(xi.alpha)
    items["config"] = config or {}
    items["code_version"] = __version__
    text = format_report("entropy report", items)
    outp = Path(out)
    _write(outp / "entropy.txt", text)
    if sweep:
        rows = beta_sweep(p, xi, _parse_sweep(sweep))
        lines = [f"# surface: {p.name}", f"# code_version: {__version__}", "beta,Z,S"]
        lines += [f"{b!r},{z!r},{s!r}" for b, z, s in rows.tolist()]
        _write(outp / "beta_sweep.csv", "\n".join(lines) + "\n")
    sys.stdout.write(text)
    return EXIT_OK


# -- argument handling ------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="toricsoliton", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("flow", help="run the flow from the canonical metric or a snapshot")
    f.add_argument("--surface", choices=BUILTIN_SURFACES)
    f.add_argument("--polytope", dest="polytope_file", help="JSON polygon file")
    f.add_argument("-N", type=int)
    f.add_argument("--tol", type=float)
    f.add_argument("--kappa", type=float)
    f.add_argument("--max-steps", dest="max_steps", type=int)
    f.add_argument("--scheme", choices=("explicit", "implicit"))
    f.add_argument("--snapshot-every", dest="snapshot_every", type=int)
    f.add_argument("--snapshot-dir", dest="snapshot_dir")
    f.add_argument("--out")
    f.add_argument("--threads", type=int)
    f.add_argument("--force", action="store_true", default=None, help="allow polygons with offsets != 1")
    f.add_argument("--config", help="JSON job config; its values override flags")
    f.add_argument("--resume", help="snapshot to continue from")

    a = sub.add_parser("analyze", help="quartic fit, curvature fields and soliton checks of a snapshot")
    a.add_argument("snapshot")
    a.add_argument("--out", default="analysis")
    a.add_argument("--threads", type=int, default=1)

    e = sub.add_parser("entropy", help="moment-condition soliton vector and Perelman entropy")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--surface", choices=BUILTIN_SURFACES)
    src.add_argument("--polytope", dest="polytope_file")
    src.add_argument("--snapshot")
    e.add_argument("--force", action="store_true")
    e.add_argument("--sweep", help="beta sweep lo:hi:count written to beta_sweep.csv")
    e.add_argument("--out", default="entropy")
    return ap


_FLOW_KEYS = ("surface", "polytope_file", "N", "tol", "kappa", "max_steps", "scheme", "snapshot_every",
              "snapshot_dir", "out", "threads", "force")


def flow_config(args, base: Optional[dict] = None) -> JobConfig:
    """Defaults, then ``base`` (a resumed snapshot's config), then flags, then the config file."""
    merged = asdict(JobConfig())
    merged.update(base or {})
    merged.update({k: getattr(args, k) for k in _FLOW_KEYS if getattr(args, k) is not None})
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
        try:
            merged.update(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    return JobConfig.from_dict(merged).validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out) if getattr(args, "out", None) else None
    try:
        if args.command == "flow":
            base = snap_io.load(args.resume).config if args.resume else None
            cfg = flow_config(args, base)
            out = Path(cfg.out)
            with threadpool_limits(limits=cfg.threads):
                return cmd_flow(cfg, resume=args.resume)
        if args.command == "analyze":
            with threadpool_limits(limits=args.threads):
                return cmd_analyze(args.snapshot, args.out)
        if args.surface:
            p = builtin_surface(args.surface)
        elif args.polytope_file:
            p = load_polytope(args.polytope_file)
        else:
            p = snap_io.load(args.snapshot).polytope
        return cmd_entropy(p, args.out, force=args.force, sweep=args.sweep, config={"source": args.surface or args.polytope_file or args.snapshot})
    except SnapshotFormatError as exc:
        return _error(out, "format", str(exc), EXIT_CONFIG)
    except ConfigurationError as exc:
        return _error(out, "config", str(exc), EXIT_CONFIG)
    except BlowUpError as exc:
        return _error(out, "blowup", str(exc), EXIT_BLOWUP)


if __name__ == "__main__":
    sys.exit(main())
