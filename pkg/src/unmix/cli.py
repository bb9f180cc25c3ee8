"""Command-line entry point: ``unmix {mix,separate,eval,repro}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import PRESETS, SeparationConfig
from .metrics import evaluate, write_report
from .pipeline import separate_batch, separate_dynamic, write_diagnostics
from .signal_io import MixingFilters, TimeSeries, convolve_mix, default_filters, read_wav, write_wav
from .synth import case_sources

log = logging.getLogger("unmix")

# Published reference values for the recorded cases. They come from recordings
# that are not distributed, so they cannot be reproduced here.
REFERENCE_RHO = {  # (case, ref) -> (mixture, dynamic, batch, sources)
    (2, "A"): (0.6240, 0.0503, 0.0673, 0.0201),
    (2, "B"): (0.6240, 0.0182, 0.0600, 0.0201),
    (3, "A"): (0.4613, 0.0351, 0.0378, 0.0243),
    (3, "B"): (0.4613, 0.0267, 0.0677, 0.0243),
}
REFERENCE_RATIOS = {  # (case, mode, ref) -> (ratio_1, ratio_2)
    (2, "dynamic", "A"): (4.5899, 0.1086),
    (2, "dynamic", "B"): (5.3083, 0.0494),
    (2, "batch", "A"): (15.0912, 0.0760),
    (2, "batch", "B"): (6.2227, 0.0636),
    (3, "dynamic", "A"): (4.5096, 0.2852),
    (3, "dynamic", "B"): (5.8411, 0.2799),
    (3, "batch", "A"): (1.4632, 0.1665),
    (3, "batch", "B"): (25.8122, 0.1719),
}

_PARAM_FLAGS = (
    ("--T", "T", int), ("--overlap", "overlap", float), ("--nT", "nT", int),
    ("--dnT", "dnT", int), ("--DnT", "DnT", int), ("--K0", "K0", int),
    ("--K1", "K1", int), ("--K2", "K2", int), ("--beta", "beta", float),
    ("--q", "q", int), ("--batch-nT", "batch_nT", int), ("--omega-lo", "omega_lo", int),
    ("--omega-hi", "omega_hi", int), ("--seed", "seed", int),
)


class CliError(Exception):
    pass


def _add_params(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("separation parameters (default: preset values)")
    g.add_argument("--preset", choices=sorted(PRESETS), default="case2")
    for flag, dest, typ in _PARAM_FLAGS:
        g.add_argument(flag, dest=dest, type=typ, default=None)
    g.add_argument("--ref", dest="reference", choices=["A", "B"], default=None,
                   help="reference bin: A = best-separated bin, B = fixed bin")
    g.add_argument("--lag-agg", dest="lag_agg", choices=["max", "sum"], default=None)


def config_from_args(args) -> SeparationConfig:
    overrides = {dest: getattr(args, dest) for _, dest, _ in _PARAM_FLAGS}
    overrides["reference"] = args.reference
    overrides["lag_agg"] = args.lag_agg
    try:
        return PRESETS[args.preset].with_overrides(**overrides)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid parameters: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unmix", description="Blind separation of two-channel convolutive mixtures.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mix", help="convolve sources with mixing filters")
    p.add_argument("sources", nargs="+", help="one 2-channel WAV or two mono WAVs")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--filters", help="mixing filter JSON (default: built-in demo filters)")
    p.add_argument("--noise-snr", type=float, default=None, help="additive noise SNR in dB")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--float32", action="store_true")

    p = sub.add_parser("separate", help="separate a 2-channel mixture")
    p.add_argument("input")
    p.add_argument("outputs", nargs="+", help="one 2-channel WAV or one mono WAV per output")
    p.add_argument("--mode", choices=["dynamic", "batch"], default="dynamic")
    p.add_argument("--diagnostics", help="write per-update diagnostics (JSON lines)")
    p.add_argument("--filters-out", help="write the final demixing filters (JSON)")
    p.add_argument("--float32", action="store_true")
    _add_params(p)

    p = sub.add_parser("eval", help="correlation report for separated outputs")
    p.add_argument("--separated", nargs="+", required=True)
    p.add_argument("--mixtures", required=True)
    p.add_argument("--sources", nargs="+", default=None)
    p.add_argument("--K2", type=int, default=20)
    p.add_argument("-o", "--output", required=True, help="report CSV (a JSON twin and PNG figures are written beside it)")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("repro", help="run the synthetic case end to end and print a summary")
    p.add_argument("--case", type=int, choices=[2, 3], default=2)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--duration", type=float, default=6.0)
    p.add_argument("--out-dir", help="write WAVs, reports and figures here")
    p.add_argument("--no-figures", action="store_true")
    return parser


def _read_pair(paths) -> TimeSeries:
    """Two channels from one 2-channel file or two mono files."""
    series = [read_wav(p) for p in paths]
    if len(series) == 1:
        s = series[0]
    else:
        rates = {x.sample_rate for x in series}
        if len(rates) > 1:
            raise CliError(f"sample rates differ: {sorted(rates)}")
        L = min(len(x) for x in series)
        s = TimeSeries(np.vstack([x.channels[:, :L] for x in series]), series[0].sample_rate)
    if s.n_channels != 2:
        raise CliError(f"need 2 channels, got {s.n_channels}")
    return s


def _check_outputs(paths) -> None:
    for p in paths:
        parent = Path(p).resolve().parent
        if not parent.is_dir():
            raise CliError(f"output directory does not exist: {parent}")


def _fit_full_scale(series: TimeSeries, peak: float = 0.99) -> TimeSeries:
    """Uniform gain so separated outputs (arbitrary overall scale) do not clip."""
    top = float(np.max(np.abs(series.channels))) if len(series) else 0.0
    if top <= peak:
        return series
    log.info("scaling output by %.4g to avoid clipping", peak / top)
    return TimeSeries(series.channels * (peak / top), series.sample_rate)


def _write_pair(paths, series: TimeSeries, float32=False) -> None:
    series = _fit_full_scale(series)
    if len(paths) == 1:
        write_wav(paths[0], series, float32=float32)
    elif len(paths) == series.n_channels:
        for p, ch in zip(paths, series.channels):
            write_wav(p, TimeSeries(ch[None, :], series.sample_rate), float32=float32)
    else:
        raise CliError(f"give 1 or {series.n_channels} output paths, got {len(paths)}")


def cmd_mix(args) -> None:
    _check_outputs([args.output])
    sources = _read_pair(args.sources)
    filters = MixingFilters.load(args.filters) if args.filters else default_filters()
    mixed = convolve_mix(sources, filters, noise_snr_db=args.noise_snr, seed=args.seed)
    write_wav(args.output, mixed, float32=args.float32)


def cmd_separate(args) -> None:
    cfg = config_from_args(args)
    if len(args.outputs) not in (1, 2):
        raise CliError(f"give 1 or 2 output paths, got {len(args.outputs)}")
    extra = [p for p in (args.diagnostics, args.filters_out) if p]
    _check_outputs(list(args.outputs) + extra)
    mix = read_wav(args.input)
    if mix.n_channels != 2:
        raise CliError(f"need 2 channels, got {mix.n_channels}")
    run = separate_dynamic if args.mode == "dynamic" else separate_batch
    result = run(mix, cfg)
    _write_pair(args.outputs, result.output, args.float32)
    if args.diagnostics:
        write_diagnostics(result.diagnostics, args.diagnostics)
    if args.filters_out:
        result.bank.save(args.filters_out)


def cmd_eval(args) -> None:
    _check_outputs([args.output])
    separated = _read_pair(args.separated)
    mixtures = _read_pair([args.mixtures])
    sources = _read_pair(args.sources) if args.sources else None
    report = evaluate(separated, mixtures, sources, K2=args.K2)
    csv_path, _ = write_report(report, args.output)
    if not args.no_figures:
        from .plotting import report_figures

        report_figures(csv_path.with_suffix(""), mixtures, separated, sources=sources)
    print(format_report(report))


def format_report(report) -> str:
    line = f"rho_bar mixtures {report.rho_bar_mixtures:.4f}  separated {report.rho_bar_separated:.4f}"
    if report.rho_bar_sources is not None:
        line += f"  sources {report.rho_bar_sources:.4f}"
    if report.ratios:
        line += f"  ratios {report.ratios[0]:.4f} / {report.ratios[1]:.4f}"
    return line


def repro(case: int, seed: int, duration: float = 6.0, out_dir=None, figures=True) -> dict:
    """Synthetic analogue of a published case, both modes and both reference choices."""
    sources = case_sources(case, seed, duration)
    mix = convolve_mix(sources, default_filters())
    base = PRESETS[f"case{case}"]
    out_dir = Path(out_dir) if out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_wav(out_dir / "sources.wav", sources)
        write_wav(out_dir / "mixture.wav", mix)
    results = {}
    for ref in ("A", "B"):
        cfg = base.with_overrides(reference=ref)
        for mode, run in (("dynamic", separate_dynamic), ("batch", separate_batch)):
            res = run(mix, cfg)
            report = evaluate(res.output, mix, sources, K2=cfg.K2,
                              metadata={"case": case, "seed": seed, "mode": mode, "reference": ref})
            results[(mode, ref)] = report
            if out_dir:
                stem = out_dir / f"{mode}_{ref}"
                write_wav(stem.with_suffix(".wav"), _fit_full_scale(res.output))
                write_report(report, stem.with_suffix(".csv"))
                write_diagnostics(res.diagnostics, stem.with_suffix(".jsonl"))
                if figures:
                    from .plotting import report_figures

                    report_figures(stem, mix, res.output, res.bank, sources)
    return results


def format_repro(case: int, seed: int, results: dict) -> str:
    lines = [
        f"case ({case}) synthetic analogue, seed {seed}",
        "[PAPER] columns are published values from recordings that are not distributed; "
        "they are references only and not reproducible without the original data.",
        "",
        "correlation coefficient rho_bar",
        f"{'ref':<4}{'mixture':>9}{'dynamic':>9}{'batch':>9}{'sources':>9}   "
        f"{'[PAPER] mix':>11}{'dyn':>8}{'bat':>8}{'src':>8}",
    ]
    for ref in ("A", "B"):
        d, b = results[("dynamic", ref)], results[("batch", ref)]
        pm, pd, pb, ps = REFERENCE_RHO[(case, ref)]
        lines.append(f"{ref:<4}{d.rho_bar_mixtures:9.4f}{d.rho_bar_separated:9.4f}{b.rho_bar_separated:9.4f}"
                     f"{d.rho_bar_sources:9.4f}   {pm:11.4f}{pd:8.4f}{pb:8.4f}{ps:8.4f}")
    lines += ["", "matched-channel ratios rho(x,s1)/rho(x,s2)",
              f"{'mode':<9}{'ref':<4}{'ratio_1':>9}{'ratio_2':>9}   {'[PAPER] r1':>10}{'r2':>8}"]
    for mode in ("dynamic", "batch"):
        for ref in ("A", "B"):
            r = results[(mode, ref)].ratios
            p1, p2 = REFERENCE_RATIOS[(case, mode, ref)]
            lines.append(f"{mode:<9}{ref:<4}{r[0]:9.4f}{r[1]:9.4f}   {p1:10.4f}{p2:8.4f}")
    return "\n".join(lines)


def cmd_repro(args) -> None:
    results = repro(args.case, args.seed, args.duration, args.out_dir, not args.no_figures)
    print(format_repro(args.case, args.seed, results))


COMMANDS = {"mix": cmd_mix, "separate": cmd_separate, "eval": cmd_eval, "repro": cmd_repro}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (CliError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"unmix {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
