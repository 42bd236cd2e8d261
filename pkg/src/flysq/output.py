"""Write scenario results to disk: spectra CSV, summary JSON, gnuplot script, PNG figures."""

from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import RunConfig, config_to_dict

CSV_HEADER = "freq_hz,v_min,v_max,v_min_db,angle_rad"
SWEEP_HEADER = "label,param,value,ch2,v_min,v_min_db"
_SWEEP_KEYS = ("detuning_hz", "power_w", "angle_rad")


def _num(x: float) -> str:
    # repr-style shortest round-trip form; independent of the locale
    x = float(x)
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return repr(x)


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def prepare_output_dir(path) -> Path:
    """Create ``path`` and make sure it is writable; raises OSError otherwise."""
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    probe = p / ".flysq-write-test"
    with open(probe, "w") as fh:
        fh.write("")
    probe.unlink()
    return p


def spectrum_csv(spec) -> str:
    lines = [CSV_HEADER]
    db = 10.0 * np.log10(spec.v_min)
    for row in zip(spec.frequencies, spec.v_min, spec.v_max, db, spec.angle_min):
        lines.append(",".join(_num(v) for v in row))
    return "\n".join(lines) + "\n"


def _sweep_param(r) -> Optional[str]:
    for k in _SWEEP_KEYS:
        if k in r.summary:
            return k
    return None


def spectrum_files(results) -> dict:
    """File stem -> NoiseSpectrum for every non-sweep result."""
    runs = [r for r in results if _sweep_param(r) is None]
    multi = len(runs) > 1
    out = {}
    for r in runs:
        for cid, spec in r.spectra.items():
            key = f"{r.label}-{cid}" if multi else cid
            out["spectrum_" + _safe(key)] = spec
    return out


def sweep_csv(results) -> dict:
    """Scenario name -> CSV text for sweep results."""
    tables: dict = {}
    for r in results:
        k = _sweep_param(r)
        if k is None:
            continue
        row = ",".join([r.label, k, _num(r.summary[k]), str(int(r.summary.get("ch2", 0))),
                        _num(r.summary["v_min"]), _num(r.summary["v_min_db"])])
        tables.setdefault(r.scenario, [SWEEP_HEADER]).append(row)
    return {s: "\n".join(rows) + "\n" for s, rows in tables.items()}


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def gnuplot_script(stems: Sequence[str], sweeps: Sequence[str]) -> str:
    lines = [
        "# noise relative to shot noise; run with: gnuplot plot.gp",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,600",
        "set ylabel 'minimum quadrature noise (dB re shot noise)'",
        "set grid",
    ]
    if stems:
        lines += [
            "set output 'spectra_gp.png'",
            "set logscale x",
            "set xlabel 'frequency (Hz)'",
            "plot " + ", \\\n     ".join(
                [f"'{s}.csv' using 1:4 with lines title '{s[9:]}'" for s in stems]
                + ["0 with lines dashtype 2 lc rgb 'black' title 'shot noise'"]
            ),
            "unset logscale x",
        ]
    for s in sweeps:
        lines += [
            f"set output 'sweep_{s}_gp.png'",
            f"set xlabel '{s}'",
            f"plot 'sweep_{s}.csv' using 3:($4==0?$6:1/0) with linespoints title 'without ch2', \\",
            f"     'sweep_{s}.csv' using 3:($4==1?$6:1/0) with linespoints title 'with ch2', \\",
            "     0 with lines dashtype 2 lc rgb 'black' title 'shot noise'",
        ]
    return "\n".join(lines) + "\n"


def render_figures(results, outdir: Path) -> list:
    """Matplotlib versions of the gnuplot figures; returns written paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    meta = {"Software": None}
    stems = spectrum_files(results)
    if stems:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for stem, spec in stems.items():
            ax.semilogx(spec.frequencies, 10 * np.log10(spec.v_min), label=stem[9:])
        ax.axhline(0.0, color="k", ls="--", lw=0.8, label="shot noise")
        ax.set_xlabel("frequency (Hz)")
        ax.set_ylabel("min. quadrature noise (dB)")
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        p = outdir / "spectra.png"
        fig.savefig(p, dpi=120, metadata=meta)
        plt.close(fig)
        written.append(p)

    by_scn: dict = {}
    for r in results:
        k = _sweep_param(r)
        if k is not None:
            by_scn.setdefault((r.scenario, k), []).append(r)
    for (scn, k), rs in by_scn.items():
        fig, ax = plt.subplots(figsize=(7, 4.5))
        scale, unit = {"detuning_hz": (1e-6, "MHz"), "power_w": (1e3, "mW"), "angle_rad": (180 / math.pi, "deg")}[k]
        for flag, lab in ((False, "without ch2"), (True, "with ch2")):
            pts = [(r.summary[k] * scale, r.summary["v_min_db"]) for r in rs if bool(r.summary.get("ch2")) == flag]
            if pts:
                x, y = zip(*pts)
                ax.plot(x, y, marker=".", label=lab)
        ax.axhline(0.0, color="k", ls="--", lw=0.8)
        ax.set_xlabel(f"{k.rsplit('_', 1)[0]} ({unit})")
        ax.set_ylabel("min. quadrature noise at 40 kHz (dB)")
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        p = outdir / f"sweep_{scn}.png"
        fig.savefig(p, dpi=120, metadata=meta)
        plt.close(fig)
        written.append(p)
    return written


def summarize(results) -> list:
    return [
        {"scenario": r.scenario, "label": r.label, "observed": r.observed, "ref_freq_hz": r.ref_freq,
         **_plain(r.summary)}
        for r in results
    ]


def emit_results(
    results,
    outdir,
    *,
    config: Optional[RunConfig] = None,
    extra: Optional[dict] = None,
    figures: bool = True,
) -> list:
    """Write CSV/JSON/gnuplot (and PNG) outputs for ``results``; returns written paths.

    Raises OSError if ``outdir`` cannot be written; the caller still holds the results.
    """
    out = prepare_output_dir(outdir)
    written = []

    def put(name: str, text: str):
        p = out / name
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        written.append(p)

    stems = spectrum_files(results)
    for stem, spec in stems.items():
        put(stem + ".csv", spectrum_csv(spec))
    sweeps = sweep_csv(results)
    for scn, text in sweeps.items():
        put(f"sweep_{scn}.csv", text)

    summary = {"version": __version__, "results": summarize(results)}
    if config is not None:
        summary["config"] = _plain(config_to_dict(config))
        summary["optics"] = _plain(config.resolved_optics().as_dict())
    if extra:
        summary.update(_plain(extra))
    put("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    put("plot.gp", gnuplot_script(list(stems), list(sweeps)))
    if figures:
        written += render_figures(results, out)
    return written
