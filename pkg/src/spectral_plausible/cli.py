"""Command-line interface.

Exit codes: 0 on success, 2 for invalid input or configuration, 1 for
unexpected internal errors. Failures print one ``error: code=... type=...
message=...`` line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .experiment import ALL_VARIANTS, ExperimentGrid, run_experiment
from .metrics import DEFAULT_WORST_K, WhitePoint, evaluate_cubes
from .plausible import Recentering, build_null_model
from .regression import RegressorSpec, TrainConfig, default_recentering, predict_spectrum, train
from .spectral import HyperCube, RgbImage, form_rgb, form_rgb_image

logger = logging.getLogger("spectral_plausible")


class UsageError(ValueError):
    """Bad command-line input; maps to exit code 2."""


def _float_list(text: str) -> tuple:
    try:
        vals = tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _int_list(text: str) -> tuple:
    text = str(text).strip()
    if text in ("", "none"):
        return ()
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _white_point(text: str):
    if str(text).strip() == "auto":
        return "auto"
    try:
        return WhitePoint.parse(str(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _bool(text) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _existing(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"file not found: {p}")
    return p


# argument parsing -------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--sensitivities", help="CSV wavelength_nm,s1,s2,s3 (default: bundled CIE 1964)")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def _metric_opts() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--white-point", type=_white_point, default="auto",
                   help="'auto' or X,Y,Z")
    p.add_argument("--worst-k", type=int, default=DEFAULT_WORST_K)
    return p


def _train_opts() -> argparse.ArgumentParser:
    d = TrainConfig()
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--kind", choices=("mlp", "linear"), default="mlp")
    p.add_argument("--hidden", type=_int_list, default=(64, 64), help="e.g. 64,64")
    p.add_argument("--output-activation", choices=("relu", "identity"), default="relu")
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--lr-decay", type=float, default=d.lr_decay)
    p.add_argument("--loss", choices=("mae", "mse"), default=d.loss)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default=d.optimizer)
    p.add_argument("--beta", type=float, default=d.beta)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectral-plausible",
        description="Physically plausible spectral reconstruction from RGB.")
    sub = parser.add_subparsers(dest="command", required=True)
    common, metric, trainp = _common(), _metric_opts(), _train_opts()

    p = sub.add_parser("synth", parents=[common], help="generate synthetic hyperspectral cubes")
    d = dataio.SynthConfig()
    p.add_argument("--num-images", type=int, default=d.num_images)
    p.add_argument("--height", type=int, default=d.height)
    p.add_argument("--width", type=int, default=d.width)
    p.add_argument("--latent-dim", type=int, default=d.latent_dim)
    p.add_argument("--noise-level", type=float, default=d.noise_level)
    p.add_argument("--floor", type=float, default=d.floor)
    p.add_argument("--intensity-spread", type=float, default=d.intensity_spread)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("simulate", parents=[common], help="integrate cubes to RGB images")
    p.add_argument("cubes", nargs="+")
    p.add_argument("--exposure", type=float, default=1.0)
    p.add_argument("--ppm", action="store_true", help="also write a PPM preview")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("basis", parents=[common], help="build and save the null-space model")
    p.add_argument("--out", help="output path (default OUT_DIR/null_model.hsnm)")
    p.set_defaults(func=cmd_basis)

    p = sub.add_parser("train", parents=[common, trainp], help="train a regressor on cubes")
    p.add_argument("cubes", nargs="+")
    p.add_argument("--mode", choices=("direct", "plausible"), default="plausible")
    p.add_argument("--augment", type=_bool, default=False)
    p.add_argument("--recentering", type=_float_list, help="OFFSET,DIVISOR (default per --augment)")
    p.add_argument("--out", help="output path (default OUT_DIR/model.hsmd)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", parents=[common], help="recover a cube from an RGB image")
    p.add_argument("rgb")
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="output path (default OUT_DIR/<rgb stem>.hspc)")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", parents=[common, metric], help="score a reconstruction")
    p.add_argument("gt")
    p.add_argument("rec")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", parents=[common, metric, trainp],
                       help="train the four model variants and score them across exposures")
    p.add_argument("cubes", nargs="*", help="dataset cubes (default: generate synthetic data)")
    p.add_argument("--exposures", type=_float_list, default=(1.0, 0.5, 2.0))
    p.add_argument("--models", default="all",
                   help="comma list of direct, direct+aug, plausible, plausible+aug")
    p.set_defaults(func=cmd_experiment)
    return parser


def read_run_config(path) -> dict:
    """Parse a ``key=value`` file (``#`` comments, blank lines allowed)."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config", "func")}
    cfg = read_run_config(_existing(args.config))
    unknown = sorted(set(cfg) - set(actions))
    if unknown:
        raise UsageError(f"unknown config keys for '{args.command}': {', '.join(unknown)}")
    defaults = {}
    for key, text in cfg.items():
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            defaults[key] = _bool(text)
        elif act.nargs in ("+", "*"):
            defaults[key] = text.split()
        else:
            conv = act.type or str
            try:
                defaults[key] = conv(text)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key}: {exc}") from None
    sub.set_defaults(**defaults)
    args = parser.parse_args(argv)
    return args


# commands ---------------------------------------------------------------------

def _sensitivities(args):
    if args.sensitivities:
        return dataio.read_sensitivities(_existing(args.sensitivities))
    return dataio.load_cie1964()


def _out_dir(args) -> Path:
    p = Path(args.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_synth(args):
    cfg = dataio.SynthConfig(
        num_images=args.num_images, height=args.height, width=args.width,
        latent_dim=args.latent_dim, noise_level=args.noise_level, floor=args.floor,
        seed=args.seed, intensity_spread=args.intensity_spread)
    out = _out_dir(args)
    for i, cube in enumerate(dataio.generate_synthetic(cfg)):
        path = out / f"image_{i:03d}.hspc"
        dataio.write_cube(path, cube)
        print(path)


def cmd_simulate(args):
    paths = [_existing(p) for p in args.cubes]
    s = _sensitivities(args)
    out = _out_dir(args)
    for path in paths:
        cube = dataio.read_cube(path)
        img = form_rgb_image(cube, s)
        if args.exposure != 1.0:
            img = RgbImage(img.data * args.exposure)
        target = out / (path.stem + ".hsrg")
        dataio.write_rgb_image(target, img)
        if args.ppm:
            dataio.write_ppm(out / (path.stem + ".ppm"), img)
        print(target)


def cmd_basis(args):
    s = _sensitivities(args)
    model = build_null_model(s)
    target = Path(args.out) if args.out else _out_dir(args) / "null_model.hsnm"
    target.parent.mkdir(parents=True, exist_ok=True)
    dataio.write_null_model(target, model)
    for key, value in model.residuals().items():
        print(f"{key}={value:.3e}")
    print(f"path={target}")


def _train_config(args, augment: bool) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                       learning_rate=args.learning_rate, lr_decay=args.lr_decay,
                       augment=augment, beta=args.beta, loss=args.loss, seed=args.seed,
                       optimizer=args.optimizer)


def cmd_train(args):
    paths = [_existing(p) for p in args.cubes]
    s = _sensitivities(args)
    if args.recentering is not None:
        if len(args.recentering) != 2:
            raise UsageError("--recentering takes OFFSET,DIVISOR")
        rc = Recentering(*args.recentering)
    else:
        rc = default_recentering(args.augment)
    spec = RegressorSpec(mode=args.mode, kind=args.kind, hidden_layers=args.hidden,
                         output_activation=args.output_activation,
                         recentering=rc if args.mode == "plausible" else None, seed=args.seed)
    cfg = _train_config(args, args.augment)
    cubes = [dataio.read_cube(p) for p in paths]
    for c in cubes:
        if c.grid != s.grid:
            raise UsageError(f"cube grid {c.grid} does not match sensitivities {s.grid}")
    spectra = np.concatenate([c.pixels() for c in cubes])
    model = train(spec, cfg, form_rgb(spectra, s), spectra, build_null_model(s))
    target = Path(args.out) if args.out else _out_dir(args) / "model.hsmd"
    target.parent.mkdir(parents=True, exist_ok=True)
    dataio.write_model(target, model)
    print(f"final_loss={model.final_loss!r}")
    print(f"out_of_range_fraction={model.out_of_range_fraction!r}")
    print(f"path={target}")


def cmd_reconstruct(args):
    model = dataio.read_model(_existing(args.model))
    img = dataio.read_rgb_image(_existing(args.rgb))
    s = _sensitivities(args)
    null_model = build_null_model(s)
    if model.fingerprint and model.fingerprint != s.fingerprint():
        raise UsageError("model was trained with different sensitivities than "
                         f"{args.sensitivities or 'the bundled CIE 1964 set'}")
    spectra = predict_spectrum(model, img.data, null_model)
    cube = HyperCube(s.grid, spectra)
    resim = form_rgb(spectra, s)
    scale = max(1.0, float(np.max(np.abs(img.data))))
    residual = float(np.max(np.abs(resim - img.data))) / scale
    target = Path(args.out) if args.out else _out_dir(args) / (Path(args.rgb).stem + ".hspc")
    target.parent.mkdir(parents=True, exist_ok=True)
    dataio.write_cube(target, cube)
    print(f"mode={model.spec.mode}")
    print(f"reintegration_residual={residual:.3e}")
    print(f"path={target}")


def cmd_evaluate(args):
    gt = dataio.read_cube(_existing(args.gt))
    rec = dataio.read_cube(_existing(args.rec))
    s = _sensitivities(args)
    report = evaluate_cubes(gt, rec, s, args.white_point, args.worst_k)
    sys.stdout.write(report.to_text())


def _variants(text: str):
    if text == "all":
        return ALL_VARIANTS
    lookup = {v.name: v for v in ALL_VARIANTS}
    try:
        return tuple(lookup[t.strip()] for t in text.split(","))
    except KeyError as exc:
        raise UsageError(f"unknown model {exc.args[0]!r}; choose from {', '.join(lookup)}") from None


def cmd_experiment(args):
    s = _sensitivities(args)
    if args.cubes:
        cubes = [dataio.read_cube(_existing(p)) for p in args.cubes]
    else:
        cubes = dataio.generate_synthetic(dataio.SynthConfig(seed=args.seed), s.grid)
    try:
        grid = ExperimentGrid(_variants(args.models), tuple(args.exposures))
        result = run_experiment(cubes, s, grid, hidden_layers=args.hidden,
                                train_cfg=_train_config(args, False), wp=args.white_point,
                                worst_k=args.worst_k, seed=args.seed, kind=args.kind,
                                output_activation=args.output_activation)
    except ValueError as exc:
        if "split" in str(exc):
            raise UsageError(str(exc)) from None
        raise
    out = _out_dir(args)
    result.write(out)
    for name, rep in result.reports.items():
        cells = " ".join(f"xi={xi:g}:mrae={r.mean_mrae:.4f},de={r.mean_de:.4f}"
                         for xi, r in sorted(rep.per_exposure.items()))
        print(f"{name}: {cells}")
    (out / "run.json").write_text(json.dumps({
        "seed": args.seed, "rng": "numpy.PCG64", "beta": args.beta,
        "exposures": list(args.exposures), "splits": [list(x) for x in result.splits],
    }, indent=2))
    print(f"reports={out}")


# entry point ------------------------------------------------------------------

def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    except (UsageError, OSError, ValueError) as exc:
        _report(exc, 2)
        return 2
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (ValueError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        _report(exc, 2)
        return 2
    except Exception as exc:  # noqa: BLE001 - exit-code contract
        _report(exc, 1)
        return 1
    return 0


def _report(exc: BaseException, code: int):
    msg = str(exc).replace("\n", " ")
    print(f"error: code={code} type={type(exc).__name__} message={json.dumps(msg)}",
          file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
