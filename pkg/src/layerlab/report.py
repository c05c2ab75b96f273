"""Deterministic artifact writing: JSON, manifests, Markdown summaries and
gnuplot scripts."""

from __future__ import annotations

import hashlib
import json
import subprocess
from pathlib import Path

from . import __version__
from .verify import _jsonable


def version_string() -> str:
    """Package version plus the source checkout's ``git describe``, when available."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "-C", str(here), "describe", "--always", "--tags"],
            capture_output=True, text=True, timeout=5, check=True,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        out = ""
    return f"{__version__}+g{out}" if out else __version__


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(outdir: Path, files, config: dict, meta: dict | None = None) -> Path:
    """``manifest.json`` listing every artifact with its size and sha256."""
    outdir = Path(outdir)
    entries = {}
    for f in sorted(Path(f) for f in files):
        entries[str(f.relative_to(outdir))] = {"sha256": sha256_file(f), "bytes": f.stat().st_size}
    return write_json(outdir / "manifest.json",
                      {"version": version_string(), "config": config, "files": entries, "meta": meta or {}})


# ---------------------------------------------------------------------------
# summaries


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def summary_table(checks: dict) -> str:
    """Markdown table with one row per check of a ``verify.json`` payload."""
    lines = ["| check | lemma | status | worst | tolerance |", "|---|---|---|---|---|"]
    for name in sorted(checks):
        rec = checks[name]
        lines.append(
            f"| {name} | {rec.get('lemma', '-')} | {rec.get('status', '-')} | "
            f"{_fmt(rec.get('worst'))} | {_fmt(rec.get('tolerance'))} |"
        )
    return "\n".join(lines) + "\n"


RESIDUAL_GP = """set terminal pngcairo size 800,600
set output '{stem}.png'
set logscale xy
set xlabel 'eps'
set ylabel 'max residual'
set key left top
ref(x) = {c:.17g} * x**2
plot '{data}' using 1:2 with linespoints title 'interior', \\
     '{data}' using 1:3 with linespoints title 'boundary', \\
     ref(x) with lines dt 2 title 'eps^2'
"""

LAYERS_GP = """set terminal pngcairo size 800,600
set output 'layers.png'
set datafile separator ','
set xlabel 'xi'
set ylabel 'profile'
set xrange [0:20]
plot {plots}
"""


def residual_plot(outdir: Path, fixture: str, eps, interior, boundary) -> list[Path]:
    """``plots/residual_<fixture>.{dat,gp}`` for a log-log residual plot."""
    plots = Path(outdir) / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    stem = f"residual_{fixture}"
    dat = plots / f"{stem}.dat"
    rows = ["# eps interior boundary"]
    rows += [f"{e:.17g} {i:.17g} {b:.17g}" for e, i, b in zip(eps, interior, boundary)]
    dat.write_text("\n".join(rows) + "\n")
    gp = plots / f"{stem}.gp"
    scale = max(max(interior), max(boundary), 1e-300) / max(eps) ** 2
    gp.write_text(RESIDUAL_GP.format(stem=stem, data=dat.name, c=scale))
    return [dat, gp]


def layers_plot(outdir: Path, csv_names) -> Path:
    """``plots/layers.gp`` drawing the exported profile CSVs (paths relative to ``plots/``)."""
    plots = Path(outdir) / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    parts = [f"'../{n}' every ::1 using 1:2 with lines title '{Path(n).stem}'" for n in sorted(csv_names)]
    gp = plots / "layers.gp"
    gp.write_text(LAYERS_GP.format(plots=", \\\n     ".join(parts)))
    return gp


def build_report(outdir: Path) -> Path | None:
    """Aggregate the JSON outputs of ``outdir`` into ``report.md``; ``None`` if there is nothing to report."""
    outdir = Path(outdir)
    sources = {name: outdir / f"{name}.json" for name in ("assumptions", "verify", "manifest", "sweep", "corner_check")}
    found = {k: json.loads(p.read_text()) for k, p in sources.items() if p.is_file()}
    if not found:
        return None
    parts = ["# layerlab report", ""]
    cfg = None
    for k in ("verify", "manifest", "assumptions", "sweep"):
        if k in found and "config" in found[k]:
            cfg = found[k]["config"]
            parts += [f"version: `{found[k].get('version', version_string())}`", ""]
            break
    if "assumptions" in found:
        a = found["assumptions"]["report"]
        parts += ["## Assumptions", "", "| assumption | passed |", "|---|---|"]
        parts += [f"| {k} | {_fmt(v)} |" for k, v in sorted(a["passed"].items())]
        parts.append("")
    if "verify" in found:
        v = found["verify"]
        parts += ["## Checks", "", summary_table(v["checks"]), f"all passed: {_fmt(v['all_passed'])}", ""]
        sweep = v["checks"].get("residual") or v["checks"].get("boundary")
        if sweep and "details" in sweep:
            d = sweep["details"]
            if {"eps_list", "interior", "boundary"} <= set(d):
                residual_plot(outdir, v.get("fixture", "run"), d["eps_list"], d["interior"], d["boundary"])
    if "sweep" in found:
        parts += ["## Sweep", "", "| fixture | eps | interior | boundary |", "|---|---|---|---|"]
        for r in found["sweep"]["rows"]:
            parts.append(f"| {r['fixture']} | {_fmt(r['eps'])} | {_fmt(r['interior'])} | {_fmt(r['boundary'])} |")
        parts.append("")
    if "corner_check" in found:
        parts += ["## Corner field", "", "```", json.dumps(found["corner_check"]["summary"], indent=1, sort_keys=True),
                  "```", ""]
    if "manifest" in found:
        parts += ["## Artifacts", "", "| file | sha256 |", "|---|---|"]
        parts += [f"| {k} | `{e['sha256'][:16]}` |" for k, e in sorted(found["manifest"]["files"].items())]
        parts.append("")
    csvs = sorted(p.name for p in outdir.glob("*.csv") if p.name.startswith(("v0", "v1", "dv0")))
    if csvs:
        layers_plot(outdir, csvs)
    gps = sorted(str(p.relative_to(outdir)) for p in (outdir / "plots").glob("*.gp")) if (outdir / "plots").is_dir() else []
    if gps:
        parts += ["## Plot scripts", ""] + [f"- `{g}`" for g in gps] + [""]
    if cfg is not None:
        parts += ["## Configuration", "", "```json", json.dumps(cfg, indent=2, sort_keys=True), "```", ""]
    path = outdir / "report.md"
    path.write_text("\n".join(parts))
    return path
