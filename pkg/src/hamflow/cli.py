"""Command-line front end.

Commands: verify-example (golden checks of the built-in arctan rotation
family), analyze (loop / certify / scan driven by a TOML config), scan
(shortcut for analyze in scan mode) and selftest (seeded randomized
property suite).  Reports are JSON written atomically; plot data files are
plain two-or-three-column text.
"""

import argparse
import datetime
import json
import math
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .errors import CertificateUnavailable, ConfigError, HamflowError
from .families import (PiecewiseTorusPath, family_from_config,
                       normalized_config, wrap_angles)
from .flow import SampledSolution, StepControl, residual
from .spectral_flow import HomoclinicPath, sfl_crossing
from .subspaces import ShootingOptions
from .torus_scan import (ScanOptions, certify, chern_vector, gap_profile,
                         scan_degeneracy)

SCHEMA_VERSION = 1


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_report(out_dir: str, payload: dict) -> str:
    payload = dict(payload)
    payload["schema_version"] = SCHEMA_VERSION
    payload["generated_at"] = datetime.datetime.now(
        datetime.timezone.utc).isoformat()
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "report.json")
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _print_check(name: str, ok: bool, detail: str = "") -> None:
    tag = "PASS" if ok else "FAIL"
    line = f"[{tag}] {name}"
    if detail:
        line += f": {detail}"
    print(line)


def _require_keys(table: dict, allowed: set, where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _positive(value, name):
    if not (isinstance(value, (int, float)) and value > 0):
        raise ConfigError(f"{name} must be a positive number")
    return value


def load_run_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    _require_keys(raw, {"family", "analysis", "tolerances", "run"}, "config")
    if "family" not in raw:
        raise ConfigError("config needs a [family] table")
    analysis = raw.get("analysis", {})
    _require_keys(analysis, {"mode", "grid", "waypoints", "resolution", "samples"},
                  "analysis")
    mode = analysis.get("mode", "loop")
    if mode not in ("loop", "certify", "scan"):
        raise ConfigError("analysis.mode must be 'loop', 'certify' or 'scan'")
    tolerances = raw.get("tolerances", {})
    _require_keys(tolerances, {"gap", "scan"}, "tolerances")
    run = raw.get("run", {})
    _require_keys(run, {"out_dir", "workers", "seed", "horizon", "horizon_max",
                        "step"}, "run")

    cfg = {
        "family": raw["family"],
        "mode": mode,
        "grid": int(_positive(analysis.get("grid", 64), "analysis.grid")),
        "resolution": int(_positive(analysis.get("resolution", 32),
                                    "analysis.resolution")),
        "samples": int(_positive(analysis.get("samples", 256), "analysis.samples")),
        "waypoints": analysis.get("waypoints"),
        "gap_tol": float(_positive(tolerances.get("gap", 1e-5), "tolerances.gap")),
        "scan_tol": float(_positive(tolerances.get("scan", 1e-4), "tolerances.scan")),
        "out_dir": str(run.get("out_dir", "hamflow-out")),
        "workers": int(_positive(run.get("workers", 1), "run.workers")),
        "seed": int(run.get("seed", 0)),
        "horizon": float(_positive(run.get("horizon", 40.0), "run.horizon")),
        "horizon_max": float(_positive(run.get("horizon_max", 320.0),
                                       "run.horizon_max")),
        "step": float(_positive(run.get("step", 1.0 / 64.0), "run.step")),
    }
    if cfg["mode"] == "loop" and cfg["waypoints"] is None:
        raise ConfigError("loop analysis needs analysis.waypoints")
    if run.get("seed", 0) is not None and int(run.get("seed", 0)) < 0:
        raise ConfigError("run.seed must be nonnegative")
    return cfg


def _shooting_options(cfg: dict) -> ShootingOptions:
    return ShootingOptions(horizon=cfg["horizon"], horizon_max=cfg["horizon_max"],
                           step=StepControl(h=cfg["step"]))


def _workers(cfg: dict) -> int:
    env = os.environ.get("HAMFLOW_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError("HAMFLOW_WORKERS must be an integer") from exc
    return cfg["workers"]


# ---------------------------------------------------------------------------
# verify-example


def _closed_form_kernel_solution(times: np.ndarray) -> np.ndarray:
    w = np.sqrt(times * times + 1.0) * np.exp(-times * np.arctan(times))
    out = np.zeros((times.size, 2))
    out[:, 0] = w
    return out


def _crossing_form_oracle(horizon: float) -> float:
    """Quadrature reference for the crossing form at the kernel normalization."""
    from scipy.integrate import quad
    f = lambda t: np.arctan(t) * (t * t + 1.0) * np.exp(-2.0 * t * np.arctan(t))
    w = lambda t: (t * t + 1.0) * np.exp(-2.0 * t * np.arctan(t))
    iq = quad(f, 0.0, min(horizon, 80.0), limit=400, epsabs=1e-14, epsrel=1e-13)[0]
    mass = quad(w, -horizon, 0.0, limit=400)[0] + quad(w, 0.0, horizon, limit=400)[0]
    return -iq / mass


def cmd_verify_example(k: int, out_dir: str, family_kind: str = "example",
                       opts: ShootingOptions | None = None) -> int:
    """Golden checks for the built-in families; exit 0 iff all pass."""
    from .families import compact_control_family, example_family

    if k < 1:
        raise ConfigError("--k must be at least 1")
    opts = opts or ShootingOptions()
    checks = []

    def add(name, ok, detail=""):
        checks.append({"name": name, "pass": bool(ok), "detail": detail})
        _print_check(name, ok, detail)

    if family_kind == "example":
        fam = example_family(k)

        times = np.arange(-10.0, 10.0 + 1e-12, 1e-3)
        sol = SampledSolution(times=times, values=_closed_form_kernel_solution(times))
        res = residual(fam, np.zeros(k), sol)
        add("explicit-solution-residual", res <= 1e-5, f"residual {res:.3e}")

        chern = chern_vector(fam, opts=opts)
        loop1 = sfl_crossing(HomoclinicPath(
            fam, _first_loop(fam, chern), opts))
        add("crossing-count", len(loop1.crossings) == 1,
            f"{len(loop1.crossings)} crossing(s) on the first coordinate loop")
        if loop1.crossings:
            c = loop1.crossings[0]
            add("crossing-location", abs(c.position) <= 1e-6,
                f"Theta_1 = {c.position:.3e}")
            gamma = float(c.form[0, 0])
            add("crossing-form-sign",
                c.kernel_dim == 1 and gamma < 0.0 and c.regular
                and c.signature == -1,
                f"form {gamma:.6f}, signature {c.signature}")
            horizon = c.kernel.trajectories[0].times[-1]
            oracle = _crossing_form_oracle(horizon)
            rel = abs(gamma - oracle) / abs(oracle)
            add("crossing-form-magnitude", rel <= 1e-3,
                f"form {gamma:.6f} vs quadrature {oracle:.6f} (rel {rel:.2e})")
        add("loop-spectral-flow", loop1.value == -1, f"sfl {loop1.value}")
        add("chern-vector", chern.components == (-1,) * k,
            f"{chern.components}")
        cert_detail = ""
        try:
            cert = certify(fam, opts=opts)
            sum_angle = wrap_angles(np.asarray(cert.invertible_point).sum())
            cert_ok = cert.nonzero_component >= 1 and \
                abs(abs(float(sum_angle)) - math.pi) <= 1e-6
            cert_detail = f"invertible point {cert.invertible_point}"
        except CertificateUnavailable as exc:
            cert, cert_ok = None, False
            cert_detail = str(exc)
        add("certificate", cert_ok, cert_detail)

        scan_payload = None
        if k == 2:
            report = scan_degeneracy(fam, 32, scan_opts=ScanOptions(
                include_invariant=False))
            dim_ok = report.dimension_estimate is not None and \
                0.85 <= report.dimension_estimate <= 1.15
            add("scan-dimension", dim_ok,
                f"estimate {report.dimension_estimate}")
            within = _cells_near_antidiagonal(report)
            add("scan-cell-geometry", within,
                "flagged cells within one cell of the degenerate set")
            scan_payload = report.to_json_dict()
    else:
        fam = compact_control_family(k)
        chern = chern_vector(fam, opts=opts)
        loop1 = sfl_crossing(HomoclinicPath(fam, _first_loop(fam, chern), opts))
        add("no-crossings", len(loop1.crossings) == 0,
            f"{len(loop1.crossings)} crossing(s)")
        add("chern-vector-zero", chern.components == (0,) * k,
            f"{chern.components}")
        try:
            certify(fam, opts=opts)
            add("certificate-unavailable", False, "certificate unexpectedly exists")
        except CertificateUnavailable as exc:
            add("certificate-unavailable", True, str(exc))

    all_pass = all(c["pass"] for c in checks)
    payload = {
        "command": "verify-example",
        "family": fam.name,
        "k": k,
        "checks": checks,
        "all_pass": all_pass,
    }
    if family_kind == "example":
        payload["sfl"] = loop1.value
        payload["chern"] = list(chern.components)
        if k == 2 and scan_payload is not None:
            payload["scan"] = scan_payload
    path = _write_report(out_dir, payload)
    print(f"report: {path}")
    if not all_pass:
        first = next(c["name"] for c in checks if not c["pass"])
        print(f"first failing check: {first}", file=sys.stderr)
        return 1
    return 0


def _first_loop(fam, chern):
    from .families import CoordinateLoop
    return CoordinateLoop(fam.k, 0, np.asarray(chern.base),
                          start=chern.loop_starts[0])


def _cells_near_antidiagonal(report) -> bool:
    """All flagged cells lie within one cell width of {sum(Theta) = 0 mod 2pi}."""
    for res, flagged in report.cells_by_resolution.items():
        w = TWO_PI_OVER(res)
        for idx in flagged:
            angles = -math.pi + (np.asarray(idx, dtype=float) + 0.5) * w
            dist = abs(float(wrap_angles(angles.sum()))) / math.sqrt(len(idx))
            if dist > w * (1.0 + 1e-9):
                return False
    return True


def TWO_PI_OVER(res: int) -> float:
    return 2.0 * math.pi / res


# ---------------------------------------------------------------------------
# analyze


def _analyze_loop(fam, cfg, opts, out_dir):
    path = PiecewiseTorusPath(cfg["waypoints"])
    hpath = HomoclinicPath(fam, path, opts)
    result = sfl_crossing(hpath, grid=cfg["grid"], tol=cfg["gap_tol"])
    ss, gaps = gap_profile(fam, path, samples=cfg["samples"],
                           scan_opts=ScanOptions(workers=_workers(cfg)))
    os.makedirs(out_dir, exist_ok=True)
    lines = ["# s gap"] + [f"{s:.12e} {g:.12e}" for s, g in zip(ss, gaps)]
    _atomic_write(os.path.join(out_dir, "gap_profile.dat"), "\n".join(lines) + "\n")
    return {
        "mode": "loop",
        "sfl": result.value,
        "crossings": [
            {"position": c.position, "torus_point": list(c.torus_point or ()),
             "kernel_dim": c.kernel_dim, "signature": c.signature,
             "regular": c.regular}
            for c in result.crossings
        ],
        "diagnostics": result.diagnostics,
    }


def _analyze_certify(fam, cfg, opts, out_dir):
    try:
        cert = certify(fam, opts=opts, grid=cfg["grid"], gap_tol=cfg["gap_tol"])
        return {
            "mode": "certify",
            "certificate": {
                "invertible_point": list(cert.invertible_point),
                "nonzero_component": cert.nonzero_component,
                "chern": list(cert.chern.components),
                "conclusion": cert.conclusion,
            },
        }
    except CertificateUnavailable as exc:
        return {"mode": "certify", "certificate": None,
                "failed_hypothesis": exc.hypothesis, "detail": exc.detail}


def _analyze_scan(fam, cfg, opts, out_dir):
    report = scan_degeneracy(
        fam, cfg["resolution"], tol=cfg["scan_tol"],
        scan_opts=ScanOptions(workers=_workers(cfg)), opts=opts)
    os.makedirs(out_dir, exist_ok=True)
    rows = ["# " + ", ".join([f"i{a + 1}" for a in range(fam.k)]
                             + [f"theta{a + 1}" for a in range(fam.k)]
                             + ["kernel_dim", "gap"])]
    for cell in report.degenerate_cells:
        rows.append(",".join(
            [str(v) for v in cell["index"]]
            + [f"{v:.12e}" for v in cell["angles"]]
            + [str(cell["kernel_dim"]), f"{cell['gap']:.12e}"]))
    _atomic_write(os.path.join(out_dir, "degeneracy.csv"), "\n".join(rows) + "\n")
    if fam.k == 2 and report.gap_grid is not None:
        res = report.resolution
        w = TWO_PI_OVER(res)
        lines = ["# theta1 theta2 gap"]
        for i in range(res):
            for j in range(res):
                t1 = -math.pi + (i + 0.5) * w
                t2 = -math.pi + (j + 0.5) * w
                lines.append(f"{t1:.12e} {t2:.12e} {report.gap_grid[i, j]:.12e}")
            lines.append("")
        _atomic_write(os.path.join(out_dir, "degeneracy_grid.dat"),
                      "\n".join(lines) + "\n")
    return {"mode": "scan", "scan": report.to_json_dict()}


def cmd_analyze(config_path: str, out_override: str | None = None,
                force_mode: str | None = None) -> int:
    cfg = load_run_config(config_path)
    if force_mode:
        cfg["mode"] = force_mode
    fam = family_from_config(cfg["family"])
    opts = _shooting_options(cfg)
    out_dir = out_override or cfg["out_dir"]
    dispatch = {"loop": _analyze_loop, "certify": _analyze_certify,
                "scan": _analyze_scan}
    payload = dispatch[cfg["mode"]](fam, cfg, opts, out_dir)
    payload["command"] = "analyze"
    payload["family"] = fam.name
    payload["family_config"] = normalized_config(cfg["family"])
    payload["seed"] = cfg["seed"]
    path = _write_report(out_dir, payload)
    print(f"report: {path}")
    return 0


# ---------------------------------------------------------------------------
# selftest


def cmd_selftest(seed: int = 0) -> int:
    """Seeded randomized smoke checks of the spectral flow engines."""
    from .linalg import complexify_eig_check
    from .spectral_flow import MatrixPath, sfl_eigcount

    rng = np.random.default_rng(seed)
    failures = []

    for i in range(10):
        m = rng.integers(3, 7)
        b = rng.normal(size=(m, m))
        b = 0.5 * (b + b.T)
        c = rng.normal(size=(m, m))
        c = 0.5 * (c + c.T) + (m + 1.0) * np.eye(m)
        path = MatrixPath(lambda s, b=b, c=c: b + s * c, -1.0, 1.0)
        flow_count = sfl_eigcount(path).value
        neg_a = int(np.sum(np.linalg.eigvalsh(b - c) < 0))
        neg_b = int(np.sum(np.linalg.eigvalsh(b + c) < 0))
        if flow_count != neg_a - neg_b:
            failures.append(f"morse-endpoint case {i}")

    for i in range(10):
        m = rng.integers(2, 6)
        q = rng.normal(size=(m, m))
        if not complexify_eig_check(0.5 * (q + q.T)):
            failures.append(f"complexify case {i}")

    for name in failures:
        _print_check(name, False)
    _print_check("selftest", not failures,
                 f"{len(failures)} failure(s)" if failures else "all checks passed")
    return 1 if failures else 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hamflow",
        description="Spectral flow and homoclinic bifurcation invariants on tori")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify-example",
                              help="run the golden checks of the built-in family")
    p_verify.add_argument("--k", type=int, required=True)
    p_verify.add_argument("--out", type=str, required=True)
    p_verify.add_argument("--family", type=str, default="example",
                          choices=("example", "compact-control"))

    p_analyze = sub.add_parser("analyze", help="run an analysis from a config file")
    p_analyze.add_argument("--config", type=str, required=True)
    p_analyze.add_argument("--out", type=str, default=None)

    p_scan = sub.add_parser("scan", help="degeneracy scan from a config file")
    p_scan.add_argument("--config", type=str, required=True)
    p_scan.add_argument("--out", type=str, default=None)

    p_self = sub.add_parser("selftest", help="seeded randomized property checks")
    p_self.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify-example":
            return cmd_verify_example(args.k, args.out, args.family)
        if args.command == "analyze":
            return cmd_analyze(args.config, args.out)
        if args.command == "scan":
            return cmd_analyze(args.config, args.out, force_mode="scan")
        if args.command == "selftest":
            return cmd_selftest(args.seed)
        parser.error(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except HamflowError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
