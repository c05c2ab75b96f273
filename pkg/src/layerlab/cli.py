"""Command-line front end.

Exit codes: 0 all requested checks pass, 1 a check or solve failed,
2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__, corner2d, layer1d, verify
from .config import CHECKS, RunConfig, load_config
from .errors import ConfigError, LayerlabError
from .expansion import ExpansionWorkspace
from .geometry import MINUS, SIDES, SectorGeometry
from .problem import validate_assumptions
from .report import build_report, residual_plot, summary_table, version_string, write_json, write_manifest

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def threads() -> int:
    """Worker cap from ``LAYERLAB_THREADS`` (default: CPU count, at most 8)."""
    raw = os.environ.get("LAYERLAB_THREADS")
    if raw is None:
        return min(8, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"LAYERLAB_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("LAYERLAB_THREADS must be >= 1")
    return n


def _csv_list(text: str | None, cast=float):
    if text is None:
        return None
    try:
        return [cast(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse list {text!r}") from None


def _overrides(args) -> dict:
    return {
        "fixture": args.fixture,
        "problem": args.problem,
        "omega": args.omega,
        "eps_list": _csv_list(args.eps),
        "p_list": _csv_list(args.p_list),
        "output": args.output,
        "seed": args.seed,
        "n_points": args.n_points,
        "layer1d.n": args.layer_n,
        "corner2d.n": args.corner_n,
    }


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _suffix(side: str) -> str:
    return "_minus" if side == MINUS else ""


# ---------------------------------------------------------------------------
# commands


def cmd_check_assumptions(cfg: RunConfig) -> int:
    prob = cfg.build_problem()
    rep = validate_assumptions(prob, SectorGeometry(prob.omega))
    out = _outdir(cfg)
    write_json(out / "assumptions.json", {"version": version_string(), "config": cfg.to_dict(), "report": rep.to_dict()})
    for k, v in sorted(rep.passed.items()):
        print(f"{k:18s} {'pass' if v else 'FAIL'}")
    return EXIT_OK if rep.all_passed else EXIT_FAIL


def _assumptions_gate(cfg: RunConfig, prob, force: bool) -> int | None:
    rep = validate_assumptions(prob, SectorGeometry(prob.omega))
    if rep.all_passed or force:
        return None
    failed = sorted(k for k, v in rep.passed.items() if not v)
    print(f"assumptions failed: {', '.join(failed)} (use --force to proceed)", file=sys.stderr)
    return EXIT_FAIL


def cmd_solve(cfg: RunConfig, target: str, p: float = 0.0, force: bool = False) -> int:
    prob = cfg.build_problem()
    gate = _assumptions_gate(cfg, prob, force)
    if gate is not None:
        return gate
    out = _outdir(cfg)
    ws = ExpansionWorkspace(prob, cfg.settings())
    files, meta = [], {"p": p, "grid1d": {"Xi": ws.grid1d.Xi, "n": ws.grid1d.n, "h": ws.grid1d.h}}
    ok = True
    if target in ("layers", "all"):
        for side in SIDES:
            sfx = _suffix(side)
            try:
                v0 = layer1d.solve_v0(prob, ws.geom, side, 0.0, p, ws.grid1d, p_max=ws.p_max)
            except LayerlabError as exc:
                raise LayerlabError(f"layer v0 ({side}, p={p}) failed: {exc}") from None
            path = out / f"v0{sfx}.csv"
            layer1d.export_csv(v0, path)
            files.append(path)
            if p == 0.0:
                v1 = layer1d.solve_v1(prob, ws.geom, side, 0.0, ws.grid1d, v0)
                layer1d.export_csv(v1, out / f"v1{sfx}.csv")
                files.append(out / f"v1{sfx}.csv")
            dp = layer1d.sensitivity(prob, ws.geom, side, 0.0, p, v0, "dp")
            layer1d.export_csv(dp, out / f"dv0_dp{sfx}.csv")
            files.append(out / f"dv0_dp{sfx}.csv")
    if target in ("corner", "all"):
        g = ws.sector
        meta["sector"] = {"n": g.n, "R": g.R, "h": g.h, "omega": g.omega}
        try:
            c = ws.corner(p)
        except LayerlabError as exc:
            raise LayerlabError(f"corner z0 (p={p}) failed: {exc}") from None
        vp = ws.vertex(p)
        fields = {"z0": c["z0"], "q0": corner2d.assemble_q0(c["z0"], vp)}
        if p == 0.0:
            fields["q1"] = c["q1"]
        for name, fld in fields.items():
            corner2d.export_binary(fld, out / f"{name}.bin")
            corner2d.export_csv(fld, out / f"{name}.csv")
            files += [out / f"{name}.bin", out / f"{name}.csv"]
        claims = corner2d.check_corner_claims(prob, {p: fields}, {p: vp})
        rec = claims["per_p"][p]
        bound = 10.0 * g.h**2
        sandwich_ok = rec["sandwich_worst"] <= bound and rec["upper_violations"] == 0
        ok &= sandwich_ok
        summary = {**rec, "sandwich_bound": bound, "passed": sandwich_ok}
        write_json(out / "corner_check.json", {"version": version_string(), "summary": summary})
        files.append(out / "corner_check.json")
        print(f"corner sandwich worst {rec['sandwich_worst']:.3e} (bound {bound:.3e}), "
              f"upper violations {rec['upper_violations']}: {'pass' if sandwich_ok else 'FAIL'}")
    write_manifest(out, files, cfg.to_dict(), meta)
    return EXIT_OK if ok else EXIT_FAIL


def _sweep_records(sweep: verify.ResidualSweep) -> dict:
    def rec(kind: str, values: list, fit: dict, zero_tol: float) -> verify.LemmaCheckRecord:
        details = {"eps_list": sweep.eps_list, "interior": sweep.interior, "boundary": sweep.boundary, "fit": fit}
        if max(values) <= zero_tol or fit.get("identically_satisfied"):
            return verify.LemmaCheckRecord(kind, "identically satisfied", float(max(values)), zero_tol, True,
                                           details=details, status="identically satisfied")
        slope = fit["slope"]
        return verify.LemmaCheckRecord(kind, "log-log slope in [1.7, 2.3]", abs(slope - 2.0), 0.3,
                                       bool(abs(slope - 2.0) <= 0.3), constants={"slope": slope}, details=details)

    return {
        "residual": rec("Fuas-interior", sweep.interior, sweep.interior_fit, verify.ZERO_TOL),
        "boundary": rec("Fuas-boundary", sweep.boundary, sweep.boundary_fit, 1e-10),
    }


def run_checks(cfg: RunConfig, which, ws: ExpansionWorkspace | None = None) -> dict:
    """Run the requested checks in a fixed order; returns ``{name: LemmaCheckRecord}``."""
    prob = cfg.build_problem()
    ws = ws or ExpansionWorkspace(prob, cfg.settings())
    out = {}
    if "residual" in which or "boundary" in which:
        recs = _sweep_records(verify.sweep_residual(ws, cfg.eps_list, cfg.n_points, cfg.seed))
        out.update({k: v for k, v in recs.items() if k in which})
    if "vt0v0" in which:
        out["vt0v0"] = verify.check_vt0_minus_v0(ws, cfg.identity_eps, cfg.p_list)
    if "Qid" in which:
        out["Qid"] = verify.check_Q_identity(ws, cfg.identity_eps, cfg.p_list)
    if "monotone" in which:
        eps = [e for e in cfg.eps_list if e <= 0.05 and cfg.K * e**2 <= ws.p_max]
        out["monotone"] = verify.check_ordering(ws, eps, cfg.K, cfg.n_points, cfg.seed)
    sign = None
    if "sign" in which or "reference" in which:
        sign = verify.check_sign(ws, cfg.sign_eps, cfg.sign_K, cfg.n_points, cfg.seed)
        sign.details["layer_sum"] = verify.check_layer_sum_bound(ws, cfg.sign_eps, cfg.n_points, cfg.seed).to_dict()
        if "sign" in which:
            out["sign"] = sign
    if "decay" in which:
        out["decay"] = verify.check_decay(ws)
    if "reference" in which:
        K = sign.constants["K"]
        if K is None:
            out["reference"] = verify.LemmaCheckRecord("reference", "needs a K from the sign check", float("nan"),
                                                       0.99, False, status="skipped: no K")
        else:
            ref_settings = dataclasses.replace(cfg.settings(), radius=cfg.reference.box_radius)
            ws_ref = ExpansionWorkspace(prob, ref_settings)
            out["reference"] = verify.check_reference(ws_ref, K, cfg.reference.eps_list, cfg.reference.sandwich_eps,
                                                      cfg.reference.N)
    return out


def cmd_verify(cfg: RunConfig, which, force: bool = False) -> int:
    prob = cfg.build_problem()
    gate = _assumptions_gate(cfg, prob, force)
    if gate is not None:
        return gate
    which = [w for w in CHECKS if w in which]
    try:
        recs = run_checks(cfg, which)
    except LayerlabError as exc:
        print(f"verify failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    checks = {k: r.to_dict() for k, r in recs.items()}
    all_passed = all(r.passed for r in recs.values())
    out = _outdir(cfg)
    payload = {"version": version_string(), "fixture": prob.name, "config": cfg.to_dict(), "checks": checks,
               "all_passed": all_passed}
    write_json(out / "verify.json", payload)
    print(summary_table(checks), end="")
    return EXIT_OK if all_passed else EXIT_FAIL


def cmd_report(cfg: RunConfig) -> int:
    path = build_report(Path(cfg.output))
    if path is None:
        print("nothing to report", file=sys.stderr)
        return EXIT_FAIL
    print(path)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, fixtures) -> int:
    """Interior/boundary residual sweep over several fixtures, one pool task per fixture."""
    out = _outdir(cfg)

    def one(name):
        sub = dataclasses.replace(cfg, fixture=name, problem=None).validate()
        ws = ExpansionWorkspace(sub.build_problem(), sub.settings())
        return name, verify.sweep_residual(ws, cfg.eps_list, cfg.n_points, cfg.seed)

    with ThreadPoolExecutor(max_workers=min(threads(), len(fixtures))) as pool:
        results = list(pool.map(one, fixtures))
    rows, fits, ok = [], {}, True
    for name, sw in results:
        recs = _sweep_records(sw)
        fits[name] = {k: r.to_dict() for k, r in recs.items()}
        ok &= all(r.passed for r in recs.values())
        for e, i, b in zip(sw.eps_list, sw.interior, sw.boundary):
            rows.append({"fixture": name, "eps": e, "interior": i, "boundary": b})
        residual_plot(out, name, sw.eps_list, sw.interior, sw.boundary)
    lines = ["fixture,eps,interior,boundary"] + [f"{r['fixture']},{r['eps']!r},{r['interior']!r},{r['boundary']!r}"
                                                 for r in rows]
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    write_json(out / "sweep.json", {"version": version_string(), "config": cfg.to_dict(), "rows": rows, "fits": fits})
    for name in fixtures:
        for k, r in fits[name].items():
            print(f"{name:9s} {k:9s} {r['status']}")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--fixture", help="built-in fixture: MP-LIN, MP-CUBIC or MP-VAR")
    common.add_argument("--problem", help="custom problem as module:callable")
    common.add_argument("--omega", type=float, help="opening angle (radians)")
    common.add_argument("--eps", help="comma-separated eps values")
    common.add_argument("--p-list", dest="p_list", help="comma-separated p values")
    common.add_argument("--output", "-o", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--n-points", dest="n_points", type=int)
    common.add_argument("--layer-n", dest="layer_n", type=int, help="1-D grid nodes")
    common.add_argument("--corner-n", dest="corner_n", type=int, help="2-D grid nodes per direction")
    common.add_argument("--force", action="store_true", help="proceed when assumptions fail")

    ap = argparse.ArgumentParser(prog="layerlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"layerlab {version_string()}")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("check-assumptions", parents=[common], help="measure A1-A4 margins")
    s = sub.add_parser("solve", parents=[common], help="solve layer profiles and/or the corner field")
    s.add_argument("--target", choices=("layers", "corner", "all"), default="all")
    s.add_argument("--p", type=float, default=0.0, help="perturbation parameter")
    v = sub.add_parser("verify", parents=[common], help="run lemma checks")
    v.add_argument("--which", help=f"comma-separated subset of {','.join(CHECKS)} (default: config checks)")
    v.add_argument("--p-rule", dest="p_rule", help="only 'K*eps^2'")
    v.add_argument("--K", type=float, help="multiplier of the p = K eps^2 rule")
    sub.add_parser("report", parents=[common], help="aggregate outputs into report.md and plot scripts")
    w = sub.add_parser("sweep", parents=[common], help="residual sweep over several fixtures")
    w.add_argument("--fixtures", default="MP-LIN,MP-CUBIC,MP-VAR")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        ov = _overrides(args)
        if args.command == "verify":
            ov.update(p_rule=args.p_rule, K=args.K)
        cfg = load_config(args.config, ov)
        threads()
        if args.command == "check-assumptions":
            return cmd_check_assumptions(cfg)
        if args.command == "solve":
            return cmd_solve(cfg, args.target, args.p, args.force)
        if args.command == "verify":
            which = _csv_list(args.which, str) if args.which else list(cfg.checks)
            bad = [w for w in which if w not in CHECKS]
            if bad:
                raise ConfigError(f"unknown checks {bad}; choose from {list(CHECKS)}")
            return cmd_verify(cfg, which, args.force)
        if args.command == "report":
            return cmd_report(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg, _csv_list(args.fixtures, str))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LayerlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
