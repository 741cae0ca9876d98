"""Command-line entry point: ``illum-wave <subcommand> --config PATH``.

Exit codes: 0 pass, 1 usage or configuration error, 2 mathematical or
geometric failure (failed certificate, low residual order, failed audit).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _accel
from .errors import AuditRefused, ConfigError, IllumWaveError, StencilError, UncertifiedScene

log = logging.getLogger("illumwave")

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
DEFAULT_STEPS = (0.1, 0.05, 0.025, 0.0125)
DEFAULT_POINTS = ((1.6, 0.3, 0.7), (-0.4, 1.8, 0.5), (0.9, -1.2, -1.4))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _canonical_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def scene_hash(scene) -> str:
    d = scene.to_dict()
    path = d["obstacle"].get("path")
    if path and Path(path).exists():
        d["obstacle"]["sha256"] = sha256_file(path)
    return _canonical_hash(d)


@dataclass
class RunManifest:
    command: str
    config_hash: str
    scene_hash: str | None
    tool_version: str
    started: str
    finished: str = ""
    exit_code: int = 0
    threads: int = 1
    backend: str = "numpy"
    outputs: dict = field(default_factory=dict)

    def add(self, path: Path) -> None:
        self.outputs[path.name] = {"path": str(path), "sha256": sha256_file(path)}

    def write(self, out: Path) -> Path:
        self.finished = _now()
        p = out / "manifest.json"
        p.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return p


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _manifest(args, cfg_hash, scn_hash) -> RunManifest:
    return RunManifest(
        command=args.command,
        config_hash=cfg_hash,
        scene_hash=scn_hash,
        tool_version=__version__,
        started=_now(),
        threads=args.threads_in_effect,
        backend=_accel.backend(),
    )


# ------------------------------------------------------------ subcommands


def cmd_geometry_check(args) -> int:
    from .geometry.scene import certify, load_json, parse_scene

    raw = load_json(args.config)
    scene = parse_scene(raw, Path(args.config).parent)
    overrides = {} if args.seed is None else {"seed": args.seed}
    cert = certify(scene, **overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = _manifest(args, _canonical_hash(raw), scene_hash(scene))
    man.add(_write_json(out / "certificate.json", cert.to_dict()))
    code = EXIT_OK if cert.passed else EXIT_FAIL
    man.exit_code = code
    man.write(out)
    print(f"certificate: {cert.verdict}  eta0={cert.eta0:.6g}  cond8_margin={cert.cond8_margin:.6g}  a0={cert.a0:.6g}")
    for r in cert.reasons:
        print(f"  {r}")
    return code


def cmd_verify_identity(args) -> int:
    from .geometry.scene import load_json, parse_body, parse_obstacle
    from .multiplier import fitted_order, manufactured, residual_table

    raw = load_json(args.config)
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    if "solution" not in raw:
        raise ConfigError("config: missing key 'solution'")
    try:
        sol = manufactured(raw["solution"], raw.get("params", ()))
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from exc
    body = parse_body(raw.get("body", {"kind": "sphere", "radius": 1.0}))
    obstacle = parse_obstacle(raw["obstacle"], Path(args.config).parent) if "obstacle" in raw else None
    points = np.asarray(raw.get("points", DEFAULT_POINTS), float)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ConfigError("config.points: expected a list of 3-vectors")
    steps = [float(v) for v in raw.get("steps", DEFAULT_STEPS)]
    if len(steps) < 2 or any(s <= 0 for s in steps):
        raise ConfigError("config.steps: need at least two positive step sizes")
    M = float(raw.get("M", body.rho2M + 1.0))
    t = float(raw.get("t", 0.3))
    rows = residual_table(sol, body, points, t, steps, M, obstacle)
    order = fitted_order(rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    p = out / "residuals.csv"
    lines = ["h,residual,order"]
    for h, res, o in rows:
        lines.append(f"{h!r},{res!r},{'nan' if math.isnan(o) else repr(o)}")
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    zero = all(r[1] == 0 for r in rows)
    code = EXIT_OK if zero or order >= 1.5 else EXIT_FAIL
    man = _manifest(args, _canonical_hash(raw), None)
    man.add(p)
    man.exit_code = code
    man.write(out)
    print(f"{sol.name}: fitted order {order:.4g}" + (" (all residuals zero)" if zero else ""))
    return code


def cmd_simulate(args) -> int:
    from .geometry.scene import load_json
    from .solver.simulate import SolverConfig, run_simulation, scene_certificate

    raw = load_json(args.config)
    cfg = SolverConfig.from_dict(raw, Path(args.config).parent)
    if args.seed is not None:
        cfg.scene.sampling["seed"] = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = _manifest(args, cfg.digest(), scene_hash(cfg.scene))
    cert = scene_certificate(cfg)
    if cert is not None:
        man.add(_write_json(out / "certificate.json", cert.to_dict()))
        if not cert.passed:
            man.exit_code = EXIT_FAIL
            man.write(out)
            raise UncertifiedScene("scene is not certified: " + "; ".join(cert.reasons))
    ck_dir = out / "checkpoints" if cfg.checkpoints else None
    series = run_simulation(cfg, certificate=cert, checkpoint_dir=ck_dir)
    for p in series.write(out).values():
        man.add(p)
    if ck_dir is not None:
        for p in sorted(ck_dir.glob("*.bin")):
            man.add(p)
    code = EXIT_FAIL if series.meta.get("aborted") else EXIT_OK
    man.exit_code = code
    man.write(out)
    if code:
        print(f"run aborted: {series.meta['aborted']}", file=sys.stderr)
    else:
        print(f"simulated {len(series)} records to t = {series.t[-1]:g}; E = {series['E'][-1]:.6g}")
    return code


def cmd_audit(args) -> int:
    from .analysis import fit_stability, functionals_csv, inequality_audit, linear_compare, run_audit
    from .geometry.scene import load_json
    from .series import DecaySeries
    from .solver.simulate import SolverConfig

    path = Path(args.config)
    if path.is_dir():
        raw = {"run": str(path)}
        base = path.parent
    else:
        raw = load_json(path)
        base = path.parent
    if not isinstance(raw, dict) or "run" not in raw:
        raise ConfigError("config: missing key 'run'")

    def _dir(key):
        p = Path(raw[key])
        p = p if p.is_absolute() else base / p
        if not (p / "run.csv").exists():
            raise ConfigError(f"config.{key}: no run.csv in {p}")
        return p

    series = DecaySeries.read(_dir("run"))
    beta = raw.get("beta")
    report = run_audit(series, beta=beta)
    doc = report.to_dict()
    ok = report.passed
    if "refined_run" in raw and report.prop is not None:
        fine = inequality_audit(DecaySeries.read(_dir("refined_run")), beta=beta)
        stab = fit_stability(report.prop, fine)
        doc["fit_stability"] = stab
        doc["refined_gronwall"] = fine.gronwall.verdict
        ok = ok and stab["pass"] and fine.gronwall.passed
    if "linear_compare" in raw:
        lc = raw["linear_compare"]
        sim = Path(lc["config"])
        sim = sim if sim.is_absolute() else base / sim
        ck = Path(lc["checkpoint"])
        ck = ck if ck.is_absolute() else base / ck
        cfg = SolverConfig.from_dict(load_json(sim), sim.parent)
        cmp = linear_compare(ck, cfg)
        doc["linear_compare"] = {"t": cmp.t.tolist(), "E0": cmp["E0"].tolist(), "E": cmp["E"].tolist()}
    doc["verdict"] = "PASS" if ok else "FAIL"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = _manifest(args, _canonical_hash(raw), None)
    man.add(_write_json(out / "audit.json", doc))
    p = out / "functionals.csv"
    p.write_text(functionals_csv(series), encoding="utf-8", newline="\n")
    man.add(p)
    code = EXIT_OK if ok else EXIT_FAIL
    man.exit_code = code
    man.write(out)
    if report.refused:
        print(f"audit refused: {report.refused}", file=sys.stderr)
    for name, e in report.entries.items():
        print(f"{name}: {e.verdict} (min margin {e.min_margin:.4g})")
    return code


# ------------------------------------------------------------------- main


COMMANDS = {
    "geometry-check": cmd_geometry_check,
    "verify-identity": cmd_verify_identity,
    "simulate": cmd_simulate,
    "audit": cmd_audit,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="illum-wave", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("geometry-check", "certify that the body illuminates the obstacle"),
        ("verify-identity", "finite-difference check of the multiplier identity"),
        ("simulate", "evolve a bump and record decay diagnostics"),
        ("audit", "audit the decay inequalities on a recorded run"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON config (audit also accepts a run directory)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=None, help="kernel threads (default: ILLUM_WAVE_THREADS)")
        p.add_argument("--seed", type=int, default=None, help="surface sampling seed")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.threads_in_effect = _accel.set_threads(args.threads)
        return COMMANDS[args.command](args)
    except (UncertifiedScene, AuditRefused) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ConfigError, StencilError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except IllumWaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
