"""Command-line interface.

Every command prints its fully resolved configuration (``# key = value``
lines, derived seeds included) before doing any work.
"""

import argparse
from dataclasses import replace
import math
import sys

import numpy as np

from . import fileio
from .detection import build_dictionary, classify_and_localize, report_to_csv, score_success
from .errors import CpofError, FormatError
from .filtering import CirculantOperator, make_pof
from .harness.config import ConfigError, ExperimentConfig, format_config, load_config
from .harness.experiment import curve_to_csv, derive_seed, run_curve
from .sensing import (
    SensingOperator,
    add_noise,
    measure,
    measure_differential_binary,
    noise_sigma,
    select_rows,
)
from .selftest import run_selftest
from .solver import Auto, LassoProblem, SolverOptions, reconstruct_scene, solve_lasso
from .xforms import BasisKind, transform_2d

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_RESUMED = 2

_DEFAULTS = SolverOptions()


def _emit(pairs) -> None:
    for key, value in pairs:
        print(f"# {key} = {value}")
    sys.stdout.flush()


def _basis(text):
    try:
        return BasisKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _load_pof(path) -> CirculantOperator:
    return CirculantOperator(fileio.read_plane(path))


def _solver_options(args) -> SolverOptions:
    return SolverOptions(max_iter=args.max_iter, sigma_tol=args.sigma_tol, tol=args.tol)


# -- commands -----------------------------------------------------------------

def cmd_transform(args) -> int:
    _emit([("command", "transform"), ("input", args.input), ("basis", args.basis.value),
           ("direction", args.direction), ("out", args.out)])
    img = fileio.image_io(args.input, "load")
    fileio.write_plane(args.out, transform_2d(img, args.basis, args.direction))
    return EXIT_OK


def cmd_make_pof(args) -> int:
    ref = fileio.image_io(args.reference, "load", require_power_of_two=False)
    side = args.side if args.side is not None else ref.shape[0]
    _emit([("command", "make-pof"), ("reference", args.reference), ("side", side),
           ("zero_tol", args.zero_tol), ("out", args.out)])
    pof = make_pof(ref, args.zero_tol, shape=(side, side))
    fileio.write_plane(args.out, pof.transfer)
    return EXIT_OK


def cmd_measure(args) -> int:
    scene = fileio.image_io(args.scene, "load")
    n = scene.size
    m = max(1, min(n, int(round(n / args.rho))))
    noise_seed = derive_seed(args.seed, 2)
    _emit([("command", "measure"), ("scene", args.scene), ("basis", args.basis.value),
           ("mode", args.mode), ("rho", args.rho), ("n", n), ("m", m), ("seed", args.seed),
           ("noise_seed", noise_seed), ("snr_db", args.snr_db),
           ("binary_differential", args.binary_differential), ("out", args.out)])
    sel = select_rows(args.basis, n, m, args.seed)
    if args.binary_differential:
        if args.mode == "ppc":
            raise CpofError("binary differential patterns cannot measure a whitened scene")
        meas = measure_differential_binary(scene, sel)
        meas = replace(meas, samples=meas.samples / math.sqrt(n))
    else:
        meas = measure(scene, sel, whitened=(args.mode == "ppc"))
    if math.isfinite(args.snr_db):
        meas = add_noise(meas, args.snr_db, noise_seed)
    fileio.write_measurement(args.out, meas)
    return EXIT_OK


def cmd_solve(args) -> int:
    meas = fileio.read_measurement(args.measurement)
    pof = _load_pof(args.pof) if args.pof else None
    if args.tau is not None:
        tau, how = args.tau, "fixed"
    elif args.sigma is not None:
        tau, how = Auto(args.sigma), "given"
    elif math.isfinite(meas.snr_db):
        # the AC power of noisy samples is signal plus noise; keep the noise share
        ratio = 10.0 ** (-meas.snr_db / 10.0)
        sigma = noise_sigma(meas.samples, 0.0) * math.sqrt(ratio / (1.0 + ratio))
        tau, how = Auto(math.sqrt(meas.m) * sigma), "noise level"
    else:
        tau, how = Auto(0.0), "noiseless"
    _emit([("command", "solve"), ("measurement", args.measurement), ("pof", args.pof or "identity"),
           ("tau", tau if not isinstance(tau, Auto) else "auto"),
           ("sigma", tau.sigma if isinstance(tau, Auto) else "n/a"), ("sigma_source", how),
           ("max_iter", args.max_iter), ("sigma_tol", args.sigma_tol), ("tol", args.tol),
           ("out", args.out)])
    op = SensingOperator(meas.selection, pof)
    res = solve_lasso(LassoProblem(op, meas.samples, tau), _solver_options(args))
    fileio.write_result(args.out, res)
    print(f"iterations={res.iterations} newton_steps={res.newton_steps} "
          f"residual={res.residual_norm!r} tau={res.tau_used!r} converged={str(res.converged).lower()}")
    return EXIT_OK


def _label_pairs(items, what):
    out = {}
    for item in items:
        if "=" not in item:
            raise CpofError(f"{what} must be LABEL=PATH, got {item!r}")
        label, path = item.split("=", 1)
        out[label] = path
    return out


def _truth(items):
    truth = []
    for item in items:
        parts = item.split(",")
        if len(parts) != 3:
            raise CpofError(f"--truth must be LABEL,ROW,COL, got {item!r}")
        truth.append((parts[0], int(parts[1]), int(parts[2])))
    return truth


def cmd_detect(args) -> int:
    planes = _label_pairs(args.plane, "--plane")
    refs = _label_pairs(args.reference, "--reference")
    if set(planes) != set(refs):
        raise CpofError("every --plane label needs a matching --reference")
    _emit([("command", "detect")] + [(f"plane.{k}", v) for k, v in planes.items()]
          + [(f"reference.{k}", v) for k, v in refs.items()]
          + [("count", args.count if args.count else "unknown"), ("radius", args.radius),
             ("exclusion_radius", args.exclusion_radius if args.exclusion_radius is not None else "auto"),
             ("min_score_ratio", args.min_score_ratio), ("out", args.out or "stdout")])
    loaded = []
    for label, path in planes.items():
        if path.endswith(".pcsp"):
            loaded.append((label, fileio.read_plane(path)))
        else:
            loaded.append((label, fileio.read_result(path).s_hat))
    shape = loaded[0][1].shape
    dictionary = build_dictionary({k: fileio.image_io(v, "load", require_power_of_two=False)
                                   for k, v in refs.items()}, shape)
    report = classify_and_localize(loaded, dictionary, args.count or None, args.exclusion_radius,
                                   args.min_score_ratio)
    if args.truth:
        ok = score_success(report, _truth(args.truth), args.radius, shape)
        print(f"success={str(ok).lower()}")
    text = report_to_csv(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    _emit([("command", "reconstruct"), ("mode", "direct" if args.direct else "conjugate"),
           ("result", args.result or "n/a"), ("pof", args.pof or "n/a"),
           ("measurement", args.direct or "n/a"),
           ("sigma", args.sigma if args.sigma is not None else 0.0), ("out", args.out)])
    if args.direct:
        meas = fileio.read_measurement(args.direct)
        est = reconstruct_scene(None, mode="direct", measurement=meas,
                                sigma=args.sigma or 0.0, opts=_solver_options(args))
    else:
        if not args.result or not args.pof:
            raise CpofError("conjugate reconstruction needs --result and --pof")
        est = reconstruct_scene(fileio.read_result(args.result), _load_pof(args.pof), "conjugate")
    if args.out.lower().endswith(".pgm"):
        fileio.image_io(args.out, "store", np.real(est))
    else:
        fileio.write_plane(args.out, est)
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        config = load_config(args.config) if args.config else ExperimentConfig()
        config = config.with_overrides(
            trials_per_point=args.trials, workers=args.workers, base_seed=args.seed,
            rho_grid=tuple(args.rho) if args.rho else None, basis=args.basis, mode=args.mode,
            snr_db=args.snr_db, tau=args.tau, sigma=args.sigma, radius=args.radius,
            binary_differential=True if args.binary_differential else None)
    except ConfigError as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = args.out or "curve.csv"
    journal = out + ".journal"
    print("# command = experiment")
    for line in format_config(config).splitlines():
        print(f"# {line}")
    _emit([("out", out), ("journal", journal)])

    def progress(rec):
        if args.verbose:
            print(f"rho={rec.rho!r} trial={rec.trial} success={str(rec.success).lower()}", flush=True)

    run = run_curve(config, out=out, journal=journal, progress=progress)
    sys.stdout.write(curve_to_csv(config, run.points))
    if run.resumed:
        print(f"# resumed a partial run; {run.computed} trials computed now", file=sys.stderr)
        return EXIT_RESUMED
    return EXIT_OK


def cmd_selftest(args) -> int:
    _emit([("command", "selftest"), ("seed", args.seed), ("inject_fault", args.inject_fault)])
    return EXIT_OK if run_selftest(args.seed, args.inject_fault) else EXIT_ERROR


# -- parser -------------------------------------------------------------------

def _solver_flags(p):
    p.add_argument("--max-iter", type=int, default=_DEFAULTS.max_iter,
                   help="SPG iteration budget (default: %(default)s)")
    p.add_argument("--sigma-tol", type=float, default=_DEFAULTS.sigma_tol,
                   help="Pareto root tolerance relative to ||y|| (default: %(default)s)")
    p.add_argument("--tol", type=float, default=_DEFAULTS.tol,
                   help="relative residual-change tolerance (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="cpof", description="Compressive phase-only filter correlation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", formatter_class=fmt, help="2D basis transform of an image or plane")
    p.add_argument("input")
    p.add_argument("--basis", type=_basis, default=BasisKind.WALSH_HADAMARD, help="wh, noiselet or dft")
    p.add_argument("--direction", choices=["forward", "adjoint"], default="forward")
    p.add_argument("--out", required=True, help="output PCSP file")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("make-pof", formatter_class=fmt, help="matched phase-only filter of a reference")
    p.add_argument("reference")
    p.add_argument("--side", type=int, default=None, help="filter side (default: reference side)")
    p.add_argument("--zero-tol", type=float, default=1e-12)
    p.add_argument("--out", required=True, help="output PCSP file holding the transfer function")
    p.set_defaults(func=cmd_make_pof)

    p = sub.add_parser("measure", formatter_class=fmt, help="compressive measurement of a scene")
    p.add_argument("scene")
    p.add_argument("--basis", type=_basis, default=BasisKind.WALSH_HADAMARD, help="wh, noiselet or dft")
    p.add_argument("--mode", choices=["pof", "ppc"], default="pof")
    p.add_argument("--rho", type=float, default=16.0, help="compression ratio n/m")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snr-db", type=float, default=math.inf)
    p.add_argument("--binary-differential", action="store_true",
                   help="simulate complementary binary WH patterns")
    p.add_argument("--out", required=True, help="output PCSM file")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("solve", formatter_class=fmt, help="recover a correlation plane")
    p.add_argument("measurement")
    p.add_argument("--pof", default=None, help="PCSP transfer function (default: identity)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--tau", type=float, default=None, help="fixed l1 radius")
    g.add_argument("--sigma", type=float, default=None,
                   help="target residual norm (default: noise level, 0 when noiseless)")
    _solver_flags(p)
    p.add_argument("--out", required=True, help="output PCSR file")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("detect", formatter_class=fmt, help="classify and localize peaks")
    p.add_argument("--plane", action="append", required=True, metavar="LABEL=PATH",
                   help="recovered plane (PCSR or PCSP) per label")
    p.add_argument("--reference", action="append", required=True, metavar="LABEL=PATH",
                   help="reference image per label")
    p.add_argument("--count", type=int, default=1, help="known object count; 0 for unknown")
    p.add_argument("--truth", action="append", default=[], metavar="LABEL,ROW,COL")
    p.add_argument("--radius", type=float, default=5.0, help="localization tolerance in pixels")
    p.add_argument("--exclusion-radius", type=float, default=None,
                   help="suppression radius (default: largest reference dimension)")
    p.add_argument("--min-score-ratio", type=float, default=0.5)
    p.add_argument("--out", default=None, help="CSV report (default: stdout)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("reconstruct", formatter_class=fmt, help="scene estimate")
    p.add_argument("--result", default=None, help="PCSR result for conjugate reconstruction")
    p.add_argument("--pof", default=None, help="PCSP transfer function used for sensing")
    p.add_argument("--direct", default=None, metavar="PCSM",
                   help="solve with pixel sparsity on this measurement instead")
    p.add_argument("--sigma", type=float, default=None)
    _solver_flags(p)
    p.add_argument("--out", required=True, help="PGM (real part, scaled) or PCSP")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("experiment", formatter_class=fmt, help="detection-probability curve")
    p.add_argument("config", nargs="?", default=None, help="key = value config file")
    p.add_argument("--trials", type=int, default=None, help="trials per grid point")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="base seed")
    p.add_argument("--rho", type=float, action="append", default=None,
                   help="grid value (repeatable)")
    p.add_argument("--basis", type=_basis, default=None)
    p.add_argument("--mode", choices=["pof", "ppc"], default=None)
    p.add_argument("--snr-db", type=float, default=None)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--tau", type=float, default=None)
    g.add_argument("--sigma", type=float, default=None)
    p.add_argument("--radius", type=float, default=None, help="localization tolerance (config default 5)")
    p.add_argument("--binary-differential", action="store_true")
    p.add_argument("--out", default=None, help="curve CSV (default: curve.csv)")
    p.add_argument("--verbose", action="store_true", help="one line per finished trial")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("selftest", formatter_class=fmt, help="fast invariant checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="store_true",
                   help="halve the POF modulus so the unitarity check must fail")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CpofError, FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
