"""Command-line entry point.

Verbs::

    sxl moran --input g.grd --levels 3 --out s.grd
    sxl datagen toy --count 1000 --size 32 --seed 0 --out data/
    sxl gan train --arch vanilla --aux mres-mat --weighting uw --cycles 2 --seed 7 --out runs/gan
    sxl gan eval --checkpoint runs/gan/checkpoints/selected.ckpt --data data/ --out runs/gan-eval
    sxl interp fit --aux mat --weighting uw --runs 10 --out runs/cnn
    sxl interp run --method ok --input low.grd --out pred.grd
    sxl interp eval --methods bicubic,idw,ok,uk,cnn,cnn-mat --out runs/interp
    sxl eval mmd --x real/ --y fake/
    sxl eval rmse --truth hi.grd --pred pred.grd

Exit status is 0 on success, 1 for invalid input and 2 when a run fails.
Settings resolve as command-line flags, then ``--config`` key=value lines,
then built-in defaults; the seed falls back to ``$SXL_SEED``.
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .grid import GridStack, as_grid, split_dataset
from .io import FormatError, load_checkpoint, read_grid, read_single, save_checkpoint, write_grid
from .moran import MoranConfig, multires_moran

log = logging.getLogger("sxl")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
MANIFEST = "manifest.txt"


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """Argument parser that reports usage problems with exit status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# helpers -----------------------------------------------------------------

def _seed_default():
    raw = os.environ.get("SXL_SEED")
    if raw is None:
        return 0
    try:
        return _seed(raw)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"SXL_SEED: {exc}") from None


def _seed(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed {value} is not an unsigned 64-bit integer")
    return value


def _positive(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def read_config(path):
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def echo_config(args, out_dir):
    keys = sorted(k for k in vars(args) if k not in ("func", "config", "verbose"))
    lines = [f"{k}={getattr(args, k)}" for k in keys]
    (out_dir / "config.echo").write_text("\n".join(lines) + "\n")


def prepare_out(args):
    out = Path(args.out)
    for sub in ("checkpoints", "grids"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    echo_config(args, out)
    return out


class Metrics:
    """Append JSON-lines records to ``metrics.jsonl`` (the file is truncated on open)."""

    def __init__(self, out_dir):
        self.path = Path(out_dir) / "metrics.jsonl"
        self.path.write_text("")

    def __call__(self, record):
        with open(self.path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_tile_dir(path):
    """Load tiles and ids listed in a ``datagen`` manifest."""
    root = Path(path)
    manifest = root / MANIFEST
    if not manifest.is_file():
        raise UsageError(f"{root}: no {MANIFEST} found")
    ids, tiles = [], []
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        tid, name = line.split("\t")
        ids.append(tid)
        tiles.append(read_single(root / name))
    if not tiles:
        raise UsageError(f"{manifest}: empty manifest")
    return np.stack(tiles), ids


def load_tiles(args):
    """Tiles from ``--data`` or a freshly generated toy set of ``--count`` tiles."""
    if args.data:
        return read_tile_dir(args.data)
    from .datagen import toy_dataset
    return toy_dataset(args.count, args.seed, size=args.size)


def read_samples(path):
    """Either a tile directory with a manifest, a single grid, or a multi-channel grid of samples."""
    p = Path(path)
    if p.is_dir():
        return read_tile_dir(p)[0]
    return read_grid(p).channels


def _check_files(*paths):
    for p in paths:
        if p is not None and not Path(p).exists():
            raise UsageError(f"no such file: {p}")


def write_tiles(tiles, ids, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for k, (tile, tid) in enumerate(zip(tiles, ids)):
        name = f"tile_{k:05d}.grd"
        write_grid(GridStack(as_grid(tile)[None]), out_dir / name)
        lines.append(f"{tid}\t{name}")
    (out_dir / MANIFEST).write_text("\n".join(lines) + "\n")


# verbs -------------------------------------------------------------------

def cmd_moran(args):
    _check_files(args.input)
    cfg = MoranConfig(levels=args.levels, pool_factor=2)
    grid = read_single(args.input)
    cfg.check_shape(*grid.shape)
    write_grid(multires_moran(grid, cfg), args.out)


def cmd_datagen_toy(args):
    from .datagen import toy_dataset
    tiles, ids = toy_dataset(args.count, args.seed, size=args.size)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    echo_config(args, out)
    write_tiles(tiles, ids, out)


def _gan_config(args):
    from .gan import TrainConfig
    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
                       aux_mode=args.aux.replace("-", "_"), levels=args.levels,
                       weighting=args.weighting, arch=args.arch, latent_dim=args.latent_dim,
                       width=args.width)


def cmd_gan_train(args):
    from .gan import GanData, save_generator, select_generator, train_cycles
    from .metrics import median_heuristic_bandwidth
    cfg = _gan_config(args)
    _check_files(args.data)
    tiles, ids = load_tiles(args)
    split = split_dataset(ids, args.seed)
    data = GanData(*split.select(tiles, ids))
    out = prepare_out(args)
    metrics = Metrics(out)
    bandwidth = median_heuristic_bandwidth(data.val)
    results = train_cycles(data, cfg, args.cycles, bandwidth, args.parallel_cycles, metrics)
    for res in results:
        save_generator(out / "checkpoints" / f"cycle_{res.cycle:03d}.ckpt", res, cfg, data.size)
    chosen, test_mmd = select_generator(results, data.test, cfg, bandwidth)
    save_generator(out / "checkpoints" / "selected.ckpt", chosen, cfg, data.size)
    metrics({"selected_cycle": chosen.cycle, "validation_mmd": chosen.validation_mmd,
             "test_mmd": test_mmd, "bandwidth": bandwidth})
    print(f"selected cycle {chosen.cycle}: validation MMD {chosen.validation_mmd:.6g}, "
          f"test MMD {test_mmd:.6g}")


def cmd_gan_eval(args):
    from .gan import EVAL_STREAM, generate, load_generator_checkpoint
    from .metrics import MmdConfig, median_heuristic_bandwidth, mmd2
    _check_files(args.checkpoint, args.data)
    gen, cfg, size, scaler, _ = load_generator_checkpoint(args.checkpoint)
    tiles, ids = load_tiles(args)
    _, val, test = split_dataset(ids, args.seed).select(tiles, ids)
    if test.shape[1:] != (size, size):
        raise UsageError(f"checkpoint generates {size}x{size} tiles, data has {test.shape[1:]}")
    out = prepare_out(args)
    samples = generate(gen, cfg, size, len(test), [args.seed, EVAL_STREAM + 1], scaler)
    # same frozen bandwidth as training: median distance among validation tiles
    bandwidth = median_heuristic_bandwidth(val)
    score = mmd2(samples, test, MmdConfig(bandwidth=bandwidth))
    write_tiles(samples, [f"sample:{k}:0" for k in range(len(samples))], out / "grids")
    Metrics(out)({"test_mmd": score, "bandwidth": bandwidth, "n": len(test)})
    print(repr(score))


def _interp_data(args):
    from .interp.cnn import InterpData
    _check_files(args.data)
    tiles, ids = load_tiles(args)
    if tiles.shape[1] % 2 or tiles.shape[2] % 2:
        raise UsageError(f"tiles must have even sides for 2x interpolation, got {tiles.shape[1:]}")
    return InterpData.from_tiles(*split_dataset(ids, args.seed).select(tiles, ids))


def _cnn_state(result):
    state = dict(result.best_state)
    state["meta.aux"] = np.array([1.0 if result.aux == "mat" else 0.0])
    return state


def _cnn_records(data, args, aux, metrics, ckpt_dir):
    from .interp.cnn import train_interp_run
    label = "cnn" if aux == "none" else f"cnn+mat-{args.weighting}"
    rows = []
    for seed in range(args.runs):
        res = train_interp_run(data, aux, args.weighting, seed=seed, epochs=args.epochs,
                               batch_size=args.batch_size, width=args.width)
        if ckpt_dir is not None:
            name = f"{label.replace(':', '_')}_run{seed:02d}.ckpt"
            save_checkpoint(ckpt_dir / name, _cnn_state(res), step=res.best_epoch)
        row = {"method": label, "seed": seed, "rmse_no_selection": res.rmse_no_selection,
               "rmse_selected": res.rmse_selected}
        metrics(row)
        rows.append(row)
    return rows


def cmd_interp_fit(args):
    from .multitask import TaskWeighting
    TaskWeighting.parse(args.weighting, 2)
    data = _interp_data(args)
    out = prepare_out(args)
    rows = _cnn_records(data, args, args.aux, Metrics(out), out / "checkpoints")
    _print_table(rows)


def cmd_interp_run(args):
    from .interp.baselines import interpolate_grid
    _check_files(args.input, args.checkpoint)
    if args.method == "cnn" and args.checkpoint is None:
        raise UsageError("--method cnn needs --checkpoint")
    low = read_single(args.input)
    if args.method == "cnn":
        from .interp.cnn import load_model
        state, _ = load_checkpoint(args.checkpoint)
        aux = bool(state.pop("meta.aux", np.zeros(1))[0])
        pred = load_model(state, aux=aux).predict(low[None])[0]
    else:
        pred = interpolate_grid(low, args.method)
    write_grid(GridStack(pred[None]), args.out)


def cmd_interp_eval(args):
    from .interp.baselines import METHODS, interpolate_grid
    from .metrics import rmse
    from .multitask import TaskWeighting
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS + ("cnn", "cnn-mat")]
    if unknown:
        raise UsageError(f"unknown methods {unknown}; choose from {METHODS + ('cnn', 'cnn-mat')}")
    TaskWeighting.parse(args.weighting, 2)
    data = _interp_data(args)
    out = prepare_out(args)
    metrics = Metrics(out)
    rows = []
    for method in methods:
        if method in METHODS:
            pred = np.stack([interpolate_grid(low, method) for low in data.x_test])
            score = rmse(data.y_test, pred)
            row = {"method": method, "seed": int(args.seed), "rmse_no_selection": score,
                   "rmse_selected": score}
            metrics(row)
            rows.append(row)
        else:
            rows += _cnn_records(data, args, "none" if method == "cnn" else "mat", metrics, None)
    _print_table(rows)


def _print_table(rows):
    by_method = {}
    for row in rows:
        by_method.setdefault(row["method"], []).append(row)
    print(f"{'method':<16} {'runs':>4} {'rmse (final)':>14} {'rmse (selected)':>16}")
    for method, group in by_method.items():
        final = np.mean([r["rmse_no_selection"] for r in group])
        best = np.mean([r["rmse_selected"] for r in group])
        print(f"{method:<16} {len(group):>4} {final:>14.6f} {best:>16.6f}")


def cmd_eval_mmd(args):
    from .metrics import MmdConfig, mmd2
    _check_files(args.x, args.y)
    bw = "median-heuristic" if args.bandwidth is None else args.bandwidth
    print(repr(mmd2(read_samples(args.x), read_samples(args.y), MmdConfig(bandwidth=bw))))


def cmd_eval_rmse(args):
    from .metrics import rmse
    _check_files(args.truth, args.pred)
    print(repr(rmse(read_grid(args.truth).channels, read_grid(args.pred).channels)))


# parser ------------------------------------------------------------------

def _common(seed_default):
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=_seed, default=seed_default, help="global seed (default: $SXL_SEED or 0)")
    p.add_argument("--config", help="file of key=value defaults")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _data_args(p):
    p.add_argument("--data", help="tile directory written by 'datagen toy'")
    p.add_argument("--count", type=_positive, default=1000, help="toy tiles to generate when --data is absent")
    p.add_argument("--size", type=_positive, default=32, help="toy tile side")


def build_parser(seed_default=0):
    common = _common(seed_default)
    parser = Parser(prog="sxl", description="Local Moran's I auxiliary tasks for spatial learning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbs = parser.add_subparsers(dest="verb", metavar="VERB", required=True)

    p = verbs.add_parser("moran", parents=[common], help="multi-resolution local Moran's I of a grid")
    p.add_argument("--input", required=True)
    p.add_argument("--levels", type=_positive, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_moran)

    dg = verbs.add_parser("datagen", help="synthetic data").add_subparsers(
        dest="what", metavar="KIND", required=True)
    p = dg.add_parser("toy", parents=[common], help="peak/dip toy tiles")
    p.add_argument("--count", type=_positive, default=1000)
    p.add_argument("--size", type=_positive, default=32)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_datagen_toy)

    gan = verbs.add_parser("gan", help="GAN training and evaluation").add_subparsers(
        dest="action", metavar="ACTION", required=True)
    p = gan.add_parser("train", parents=[common], help="train cycles and select a generator")
    _data_args(p)
    p.add_argument("--arch", choices=("vanilla", "dcgan", "edgan"), default="vanilla")
    p.add_argument("--aux", choices=("none", "mat", "mres-mat"), default="none")
    p.add_argument("--levels", type=_positive, default=3)
    p.add_argument("--weighting", default="uw", help="'uw' or 'lambda:<value>'")
    p.add_argument("--cycles", type=_positive, default=10)
    p.add_argument("--epochs", type=_positive, default=40)
    p.add_argument("--batch-size", type=_positive, default=32)
    p.add_argument("--latent-dim", type=_positive, default=100)
    p.add_argument("--width", type=_positive, default=8)
    p.add_argument("--parallel-cycles", type=_positive, default=1, help="worker processes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gan_train)

    p = gan.add_parser("eval", parents=[common], help="test MMD of a saved generator")
    _data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gan_eval)

    interp = verbs.add_parser("interp", help="2x spatial interpolation").add_subparsers(
        dest="action", metavar="ACTION", required=True)
    for name, func, helptext in (("fit", cmd_interp_fit, "train CNN regressors"),
                                 ("eval", cmd_interp_eval, "compare methods on the test split")):
        p = interp.add_parser(name, parents=[common], help=helptext)
        _data_args(p)
        if name == "fit":
            p.add_argument("--aux", choices=("none", "mat"), default="none")
        else:
            p.add_argument("--methods", default="bicubic,idw,ok,uk,cnn,cnn-mat")
        p.add_argument("--weighting", default="uw")
        p.add_argument("--runs", type=_positive, default=10)
        p.add_argument("--epochs", type=_positive, default=8)
        p.add_argument("--batch-size", type=_positive, default=8)
        p.add_argument("--width", type=_positive, default=8)
        p.add_argument("--out", required=True)
        p.set_defaults(func=func, size=64)

    p = interp.add_parser("run", parents=[common], help="interpolate one grid")
    p.add_argument("--method", choices=("bicubic", "idw", "ok", "uk", "cnn"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_interp_run)

    ev = verbs.add_parser("eval", help="metrics").add_subparsers(dest="metric", metavar="METRIC", required=True)
    p = ev.add_parser("mmd", parents=[common], help="squared MMD between two sample sets")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--bandwidth", type=float)
    p.set_defaults(func=cmd_eval_mmd)
    p = ev.add_parser("rmse", parents=[common], help="RMSE between two grids")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    p.set_defaults(func=cmd_eval_rmse)
    return parser


def _leaf_parser(parser, argv):
    """The subparser that handles ``argv``, found by walking the verb chain."""
    node = parser
    for token in argv:
        sub = next((a for a in node._actions if isinstance(a, argparse._SubParsersAction)), None)
        if sub is None:
            break
        if token in sub.choices:
            node = sub.choices[token]
    return node


def parse_args(argv):
    parser = build_parser(_seed_default())
    args = parser.parse_args(argv)
    if args.config:
        leaf = _leaf_parser(parser, argv)
        values = read_config(args.config)
        known = {a.dest for a in leaf._actions}
        unknown = sorted(set(values) - known)
        if unknown:
            raise UsageError(f"{args.config}: unknown keys {unknown}")
        # string defaults pass through each option's type converter; flags still win
        leaf.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"sxl: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:
        # argparse exits on --help, --version and bad arguments
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    from .gan import TrainingDiverged as GanDiverged
    from .interp.baselines import SingularKrigingError
    from .interp.cnn import TrainingDiverged as CnnDiverged
    try:
        args.func(args)
    except (GanDiverged, CnnDiverged, SingularKrigingError, OSError, RuntimeError) as exc:
        # checked first: a singular kriging system is also a ValueError
        print(f"sxl: failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (UsageError, FormatError, ValueError) as exc:
        print(f"sxl: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
