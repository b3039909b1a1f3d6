"""Command-line interface.

Every ExperimentConfig field is also a flag (``dz_um`` -> ``--dz-um``);
flags override values from ``--config``. Exit codes: 0 success, 2 invalid
configuration or input, 3 numeric or aliasing failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import typing
from pathlib import Path

from .config import ExperimentConfig
from .errors import ConfigError, NumericError

log = logging.getLogger("tiephase")


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _optional(kind):
    def parse(text):
        return None if text.lower() in ("none", "null") else kind(text)

    return parse


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON configuration file")
    hints = typing.get_type_hints(ExperimentConfig)
    group = p.add_argument_group("configuration overrides")
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        hint = str(hints[f.name])
        if f.name in ("dz_um", "misalignment_um"):
            group.add_argument(flag, dest=f.name, type=float, nargs="+", default=None)
        elif f.name == "filter_d":
            group.add_argument(flag, dest=f.name, type=int, nargs="+", default=None)
        elif f.name == "modes":
            group.add_argument(flag, dest=f.name, nargs="+", default=None)
        elif "bool" in hint:
            group.add_argument(flag, dest=f.name, type=_bool, default=None, metavar="BOOL")
        elif "int" in hint:
            group.add_argument(flag, dest=f.name, type=int, default=None)
        elif "float" in hint:
            kind = _optional(float) if "None" in hint else float
            group.add_argument(flag, dest=f.name, type=kind, default=None)
        else:
            group.add_argument(flag, dest=f.name, default=None)


def config_from_args(args) -> ExperimentConfig:
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(ExperimentConfig)
                 if getattr(args, f.name, None) is not None}
    if args.config is not None:
        return ExperimentConfig.load(args.config, overrides)
    return ExperimentConfig.from_dict(overrides)


# ----------------------------------------------------------------------
def cmd_sweep(args):
    from .experiment import run_experiment

    cfg = config_from_args(args)
    report = run_experiment(cfg)
    print(f"wrote {len(report.files)} files to {report.out_dir}")
    for r in report.summary:
        print(f"dz={r['dz_um']:g} mode={r['mode']} d={r['d']} pearson={r['pearson_mean']:.4f} "
              f"step={r['step_mean']:.4f}")


def cmd_calibrate(args):
    from .experiment import calibrate

    cfg = config_from_args(args)
    rec = calibrate(cfg, args.n_frames)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "calibration.json"
    path.write_text(json.dumps(rec.to_dict(), indent=2, sort_keys=True))
    print(json.dumps(rec.to_dict(), indent=2, sort_keys=True))


def cmd_simulate(args):
    from .experiment import Simulation, dz_key, frame_seed
    from .io import write_twin_bundle
    from .photons import sample_twin_frames

    cfg = config_from_args(args)
    sim = Simulation(cfg)
    out = Path(cfg.out_dir)
    written = []
    for dz in cfg.dz_um:
        ip, im = sim.defocus_pair(dz)
        for f in range(cfg.frames):
            fs = frame_seed(cfg.seed, f)
            for plane, mean in ((0, ip), (1, im)):
                key = (fs, dz_key(dz), plane)
                twin = sample_twin_frames(mean, sim.in_focus, sim.src, sim.grid, key)
                name = f"dz{dz:g}_{'plus' if plane == 0 else 'minus'}_f{f:04d}"
                write_twin_bundle(out / name, twin, sim.src,
                                  extra={"dz_um": dz, "plane": "plus" if plane == 0 else "minus"})
                written.append(name)
    print(f"wrote {len(written)} twin-frame bundles to {out}")


def cmd_reconstruct(args):
    from .experiment import recenter
    from .io import read_map, write_map
    from .optics import Grid
    from .photons import IntensityFrame, averaging_filter
    from .tie import QuantumCorrection, TieOptions, axial_derivative, quantum_subtract, solve_tie

    plus = read_map(args.plus)
    minus = read_map(args.minus)
    if plus.shape != minus.shape:
        raise ConfigError("plus and minus frames differ in shape")
    grid = Grid(plus.shape[1], plus.shape[0], args.pitch_um, args.wavelength_um)
    fp = averaging_filter(IntensityFrame(grid, plus), args.d)
    fm = averaging_filter(IntensityFrame(grid, minus), args.d)
    if args.idler_plus or args.idler_minus:
        if not (args.idler_plus and args.idler_minus and args.idler_mean):
            raise ConfigError("quantum reconstruction needs --idler-plus, --idler-minus and --idler-mean")
        corr = QuantumCorrection(args.k)
        mean = averaging_filter(IntensityFrame(grid, read_map(args.idler_mean)), args.d).counts
        fp = quantum_subtract(fp, averaging_filter(IntensityFrame(grid, read_map(args.idler_plus)), args.d),
                              mean, corr)
        fm = quantum_subtract(fm, averaging_filter(IntensityFrame(grid, read_map(args.idler_minus)), args.d),
                              mean, corr)
    if args.in_focus:
        i0 = averaging_filter(IntensityFrame(grid, read_map(args.in_focus)), args.d).counts
    else:
        i0 = 0.5 * (fp.counts.mean() + fm.counts.mean())
    opts = TieOptions(dz=args.dz_um, k_wave=grid.k, regularization_eps=args.eps, illum_mean=i0,
                      mirror=args.mirror)
    phi = recenter(solve_tie(axial_derivative(fp, fm, args.dz_um), opts), args.d)
    write_map(args.output, phi.values)
    print(f"wrote {args.output}")


def cmd_sample(args):
    from .io import write_map
    from .samples import make_sample

    cfg = config_from_args(args)
    phase = make_sample(cfg.sample_kind, cfg.step_rad, cfg.grid(), cfg.sample_path)
    write_map(args.output, phase.values)
    print(f"wrote {args.output}")


def cmd_plot(args):
    from .experiment import read_table
    from .plotting import render_figures

    run = Path(args.run_dir)
    summary_path = run / "summary.csv"
    if not summary_path.exists():
        raise ConfigError(f"no summary.csv in {run}")
    paths = render_figures(read_table(summary_path), run / "figures", nominal_step=args.nominal)
    for p in paths:
        print(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tiephase", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="full experiment: calibrate, sweep dz/modes/filters, report")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="object-free calibration of the subtraction gain")
    _add_config_flags(p)
    p.add_argument("--n-frames", type=int, default=None, help="defaults to calibration_frames")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="emit twin-frame bundles for each dz and frame")
    _add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sample", help="write a sample phase map")
    _add_config_flags(p)
    p.add_argument("-o", "--output", type=Path, required=True, help=".pgm or .csv")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("reconstruct", help="recover a phase map from a defocus pair")
    p.add_argument("--plus", type=Path, required=True, help="frame at +dz (.csv or .pgm)")
    p.add_argument("--minus", type=Path, required=True, help="frame at -dz")
    p.add_argument("--dz-um", type=float, required=True)
    p.add_argument("--pitch-um", type=float, default=5.0)
    p.add_argument("--wavelength-um", type=float, default=0.81)
    p.add_argument("--in-focus", type=Path, help="in-focus intensity map; default: frame mean")
    p.add_argument("--idler-plus", type=Path, help="aligned idler frame at +dz")
    p.add_argument("--idler-minus", type=Path, help="aligned idler frame at -dz")
    p.add_argument("--idler-mean", type=Path, help="mean aligned idler map")
    p.add_argument("--k", type=float, default=0.0, help="subtraction gain")
    p.add_argument("--d", type=int, default=1, help="averaging filter size")
    p.add_argument("--eps", type=float, default=0.0, help="Tikhonov regularization")
    p.add_argument("--mirror", action="store_true", help="even-symmetric extension")
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("plot", help="render figures from a run directory's summary.csv")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--nominal", type=float, default=None, help="nominal phase step for reference")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
