"""Command-line entry point.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import warnings
from typing import Optional, Sequence

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigError, DomainError, FlysqError, NumericalError, ParameterError
from .parallel import worker_count

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    from .scenarios import SCENARIOS

    p = _Parser(prog="flysq", description="Spatially multiplexed squeezed-light simulator.")
    p.add_argument("--version", action="version", version=f"flysq {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("-c", "--config", required=True, help="run configuration (TOML)")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("-o", "--output", default=None, help="output directory (default: config 'output')")
        sp.add_argument("--no-figures", action="store_true", help="skip the matplotlib PNGs")

    sp = sub.add_parser("run", help="run a reference scenario",
                        description="scenarios: " + ", ".join(sorted(SCENARIOS)))
    sp.add_argument("scenario")
    common(sp)
    sp = sub.add_parser("calibrate", help="fit free constants to a targets file")
    sp.add_argument("-t", "--targets", required=True, help="calibration targets (TOML)")
    common(sp)
    sp = sub.add_parser("spectrum", help="noise spectrum of one configured channel")
    sp.add_argument("--channel", required=True)
    common(sp)
    sp = sub.add_parser("crosscheck", help="Monte Carlo check of the analytic spin-noise PSD")
    sp.add_argument("--trajectories", type=int, default=200)
    common(sp)
    return p


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"--seed must be >= 0, got {args.seed}")
        changes["seed"] = args.seed
    if args.output is not None:
        changes["output"] = args.output
    cfg = dataclasses.replace(cfg, **changes)
    if cfg.calibrate:
        from .calibration import reference_calibration_set, calibrate

        res = calibrate(reference_calibration_set(), cfg.cell, cfg.atom, cfg.resolved_optics(),
                        mean_speed=cfg.mean_speed, shared_depumping=cfg.shared_depumping)
        cfg = dataclasses.replace(cfg, optics=res.optics, atom=res.atom, calibrate=False)
    return cfg


def _print_rows(results, out=None):
    out = out or sys.stdout
    print("scenario,label,observed,v_min_db", file=out)
    for r in results:
        print(f"{r.scenario},{r.label},{r.observed},{r.v_min_db:.6f}", file=out)


def _cmd_run(args) -> int:
    from .output import emit_results, prepare_output_dir
    from .scenarios import run_scenario, SCENARIOS

    if args.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {args.scenario!r}; valid names: {', '.join(sorted(SCENARIOS))}")
    cfg = _load(args)
    prepare_output_dir(cfg.output)
    results = run_scenario(args.scenario, cfg)
    _print_rows(results)
    emit_results(results, cfg.output, config=cfg, figures=not args.no_figures)
    return EXIT_OK


def _cmd_spectrum(args) -> int:
    from .output import emit_results, prepare_output_dir
    from .scenarios import _run

    cfg = _load(args)
    cfg.channel(args.channel)  # validates the id
    prepare_output_dir(cfg.output)
    res = _run(cfg, "spectrum", args.channel, [c for c in cfg.channels], args.channel)
    res.spectra = {args.channel: res.spectra[args.channel]} if args.channel in res.spectra else {}
    if not res.spectra:
        raise ConfigError(f"channel {args.channel!r} carries no light; nothing to detect")
    _print_rows([res])
    emit_results([res], cfg.output, config=cfg, figures=not args.no_figures)
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    from .calibration import calibrate, load_targets
    from .output import emit_results, prepare_output_dir

    cfg = _load(args)
    cset = load_targets(args.targets)
    prepare_output_dir(cfg.output)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = calibrate(cset, cfg.cell, cfg.atom, cfg.resolved_optics(),
                        mean_speed=cfg.mean_speed, shared_depumping=cfg.shared_depumping)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print("target,model_db,residual_db")
    for name, pred in res.predictions.items():
        print(f"{name},{pred:.6f},{res.residuals[name]:.6f}")
    print(f"# rms_db={res.rms_db:.6f} iterations={res.iterations} converged={res.converged}")
    for k, v in res.values.items():
        print(f"# {k}={v!r}")
    cfg = dataclasses.replace(cfg, optics=res.optics, atom=res.atom)
    emit_results([], cfg.output, config=cfg, extra={"calibration": res.as_dict()}, figures=False)
    return EXIT_OK


def _cmd_crosscheck(args) -> int:
    from .output import emit_results, prepare_output_dir
    from .scenarios import mc_crosscheck

    if args.trajectories < 2:
        raise ConfigError(f"--trajectories must be >= 2, got {args.trajectories}")
    cfg = _load(args)
    prepare_output_dir(cfg.output)
    rep = mc_crosscheck(cfg, cfg.seed, n_trajectories=args.trajectories)
    print("freq_hz,region,analytic,estimate,stderr,z")
    for j, f in enumerate(rep.freqs):
        for i, reg in enumerate(rep.regions):
            print(f"{f!r},{reg},{rep.analytic[i, j]!r},{rep.estimate[i, j]!r},{rep.stderr[i, j]!r},{rep.z[i, j]:.3f}")
    print(f"# max_abs_z={rep.max_abs_z:.3f} passed={rep.passed()} runtime_s={rep.runtime_s:.1f}")
    emit_results([], cfg.output, config=cfg, extra={"crosscheck": rep.as_dict()}, figures=False)
    return EXIT_OK if rep.passed() else EXIT_NUMERIC


_COMMANDS = {"run": _cmd_run, "spectrum": _cmd_spectrum, "calibrate": _cmd_calibrate, "crosscheck": _cmd_crosscheck}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        worker_count()  # validate FLYSQ_THREADS early
        return _COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"flysq: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ParameterError, DomainError) as exc:
        print(f"flysq: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"flysq: cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FlysqError as exc:
        print(f"flysq: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
