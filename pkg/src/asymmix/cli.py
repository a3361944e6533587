"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numerical failure.
``ASYMMIX_MAX_WORKERS`` caps the worker pool used by ``bench`` and
``segment``.
"""

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import KMeansModel, fit_minibatch_kmeans
from .exceptions import (
    ContractViolation,
    ImageReadError,
    ModelLoadError,
    UnsupportedDepthError,
)
from .harness import METHODS, Method, format_report, repeated_runs
from .imageops import flatten, load_image, load_mask, save_image, save_mask
from .metrics import dice, wilcoxon_signed_rank
from .mixture import DEFAULT_K, DEFAULT_M, fit_em
from .persistence import (
    KMEANS_MAGIC,
    load_checkpoint,
    load_kmeans,
    persist_checkpoint,
    persist_kmeans,
    persist_model,
    read_model_file,
)
from .segmentation import parse_policy, render_overlay, segment, select_foreground

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3
WORKERS_ENV = "ASYMMIX_MAX_WORKERS"
IMAGE_SUFFIXES = (".png", ".ppm")
MASK_SUFFIX = "_mask"
OVERLAY_SUFFIX = "_overlay"


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with exit code 1."""

    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"\n{self.prog}: error: {message}\n")


def _formatter(prog):
    return argparse.ArgumentDefaultsHelpFormatter(prog, max_help_position=32)


# --------------------------------------------------------------------------
# helpers


def max_workers(requested=None):
    """Worker count: the request (default: CPU count) capped by the environment."""
    n = (os.cpu_count() or 1) if requested is None else int(requested)
    cap = os.environ.get(WORKERS_ENV)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise UsageError(f"{WORKERS_ENV} must be an integer, got {cap!r}") from None
    return max(1, n)


def _is_image(path):
    return path.suffix.lower() in IMAGE_SUFFIXES


def _is_aux(path):
    return path.stem.endswith((MASK_SUFFIX, OVERLAY_SUFFIX))


def expand_inputs(paths):
    """Files as given; directories contribute their images in sorted order."""
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out += sorted(q for q in p.iterdir() if _is_image(q) and not _is_aux(q))
        elif p.exists():
            out.append(p)
        else:
            raise ImageReadError(f"no such file or directory: {p}")
    if not out:
        raise UsageError("no input images found")
    return out


def mask_path_for(image_path, directory=None):
    image_path = Path(image_path)
    base = Path(directory) if directory else image_path.parent
    return base / f"{image_path.stem}{MASK_SUFFIX}.png"


def load_source(model_path=None, checkpoint_path=None):
    """Fitted mixture, k-means model or network from a file."""
    if checkpoint_path:
        from .toynet import net_from_arrays

        _, arrays = load_checkpoint(Path(checkpoint_path).read_bytes())
        return net_from_arrays(arrays)
    data = Path(model_path).read_bytes()
    if data.startswith(KMEANS_MAGIC.encode()):
        centroids = load_kmeans(data)
        return KMeansModel(centroids, np.zeros(centroids.shape[0], dtype=np.int64))
    return read_model_file(model_path)


def _write(path, data):
    path = Path(path)
    if path.parent != Path("."):
        path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(path, mode) as fh:
        fh.write(data)


# --------------------------------------------------------------------------
# subcommands


def cmd_fit(args):
    paths = expand_inputs(args.input)
    X = np.concatenate([flatten(load_image(p)) for p in paths])
    if args.method == "mkmeans":
        km = fit_minibatch_kmeans(X, args.k, batch_size=args.batch_size, iters=args.iters,
                                  seed=args.seed)
        _write(args.out, persist_kmeans(km.centroids))
        print(f"fitted mkmeans K={args.k} on {X.shape[0]} pixels -> {args.out}")
        return EXIT_OK
    M = args.m if args.method == "amm" else 1
    model, trace = fit_em(X, args.k, M, max_iters=args.max_iters, rel_tol=args.tol,
                          seed=args.seed, init=args.init, restarts=args.restarts)
    if not np.isfinite(trace.loglik[-1]):
        raise NumericalFailure("log-likelihood is not finite")
    _write(args.out, persist_model(model))
    print(f"fitted {args.method} K={args.k} M={M} on {X.shape[0]} pixels in {trace.n_iter} "
          f"iterations (converged={trace.converged}) log-likelihood={trace.loglik[-1]:.6f} "
          f"-> {args.out}")
    return EXIT_OK


def cmd_train(args):
    from .toynet import TrainConfig, net_arrays, train_loop

    images = [load_image(p) for p in expand_inputs(args.input)]
    config = TrainConfig(lr=args.lr, gamma=args.gamma, beta=args.beta, steps=args.steps,
                         seed=args.seed, K=args.k, M=args.m, augment=args.augment)
    result = train_loop(images, config)
    if result.trace and not np.isfinite(result.trace[-1].total):
        raise NumericalFailure("training loss is not finite")
    _write(args.out, persist_checkpoint(result.model, net_arrays(result.net)))
    if args.trace:
        _write(args.trace, result.trace_csv())
    best = f"step {result.best_step}" if result.trace else "initial weights"
    print(f"trained {args.steps} steps; kept {best} -> {args.out}")
    return EXIT_OK


def _segment_one(job):
    image_path, source, policy, gt_path, out_dir, overlay = job
    image = load_image(image_path)
    labels, zmap = segment(image, source)
    gt = load_mask(gt_path) if gt_path else None
    from .toynet import ToyNet

    fg = select_foreground(labels, zmap if isinstance(source, ToyNet) else source, policy,
                           image=image, reference=gt)
    stem = Path(image_path).stem
    save_mask(Path(out_dir) / f"{stem}{MASK_SUFFIX}.png", fg.mask)
    line = f"{Path(image_path).name} cluster={fg.index}"
    if gt is not None:
        if gt.shape != fg.mask.shape:
            raise ContractViolation(f"{gt_path}: mask shape {gt.shape} != image {fg.mask.shape}")
        if overlay:
            save_image(Path(out_dir) / f"{stem}{OVERLAY_SUFFIX}.png", render_overlay(fg.mask, gt))
        line += f" dice={dice(fg.mask, gt).score:.6f}"
    return line


def cmd_segment(args):
    if bool(args.model) == bool(args.checkpoint):
        raise UsageError("give exactly one of --model or --checkpoint")
    policy = parse_policy(args.policy)
    paths = expand_inputs(args.input)
    gts = [None] * len(paths)
    if args.gt:
        gt = Path(args.gt)
        gts = [mask_path_for(p, gt) for p in paths] if gt.is_dir() else [gt] * len(paths)
        if not gt.is_dir() and len(paths) > 1:
            raise UsageError("a single --gt file needs a single input image")
    if policy[0] == "best-dice" and not args.gt:
        raise UsageError("--policy best-dice needs --gt")
    if args.overlay and not args.gt:
        raise UsageError("--overlay needs --gt")
    source = load_source(args.model, args.checkpoint)
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    jobs = [(p, source, policy, g, args.out_dir, args.overlay) for p, g in zip(paths, gts)]
    for line in _map(_segment_one, jobs, args.workers):
        print(line)
    return EXIT_OK


def _dice_dir(pred_dir, gt_dir):
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise ImageReadError(f"not a directory: {d}")
    names = sorted(p.name for p in pred_dir.iterdir() if _is_image(p))
    pairs = [(n, gt_dir / n) for n in names if (gt_dir / n).exists()]
    if not pairs:
        raise UsageError(f"no mask names shared by {pred_dir} and {gt_dir}")
    return {n: dice(load_mask(pred_dir / n), load_mask(g)).score for n, g in pairs}


def read_report_rows(path):
    """Per-image Dice rows ``{(method, image): [dice per round]}`` of a report CSV."""
    rows = {}
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec:
                break
            if rec[0] == "method":
                continue
            rows.setdefault((rec[0], rec[2]), []).append(float(rec[3]))
    return rows


def cmd_eval(args):
    scores = _dice_dir(args.pred_dir, args.gt_dir)
    lines = ["method,round,image,dice,seconds"]
    lines += [f"{args.method},0,{n},{s:.17g}," for n, s in scores.items()]
    values = np.array(list(scores.values()))
    p = ""
    if args.pairs_with:
        other = {}
        for (_, image), v in read_report_rows(args.pairs_with).items():
            other[image] = float(np.mean(v))
        shared = [n for n in scores if n in other]
        if not shared:
            raise UsageError(f"{args.pairs_with} shares no images with {args.pred_dir}")
        res = wilcoxon_signed_rank([scores[n] for n in shared], [other[n] for n in shared])
        p = f"{res.p_value:.17g}"
        print(f"wilcoxon W+={res.statistic:g} n={res.n_effective} p={res.p_value:.6g} "
              f"({res.method})")
    lines += ["", "method,dice_best,dice_mean,dice_std,p_vs_reference",
              f"{args.method},{values.mean():.17g},{values.mean():.17g},0,{p}"]
    _write(args.out, "\n".join(lines) + "\n")
    print(f"{len(scores)} images, mean dice {values.mean():.6f} -> {args.out}")
    return EXIT_OK


def load_dataset(directory):
    """``(image, mask)`` pairs from ``name.png`` + ``name_mask.png`` files."""
    paths = expand_inputs([directory])
    data, names = [], []
    for p in paths:
        m = mask_path_for(p)
        if not m.exists():
            raise ImageReadError(f"missing ground-truth mask {m}")
        data.append((load_image(p), load_mask(m)))
        names.append(p.name)
    return data, names


def _bench_one(job):
    method, dataset, seeds, names = job
    return repeated_runs(method, dataset, rounds=len(seeds), seeds=seeds, image_names=names)


def cmd_bench(args):
    from .synth import gen_synthetic_cells

    rng = np.random.default_rng(args.seed)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    if args.reference and args.reference not in methods:
        raise UsageError(f"reference {args.reference!r} is not among --methods")
    if args.data_dir:
        dataset, names = load_dataset(args.data_dir)
    else:
        seeds = rng.integers(0, 2**31 - 1, size=args.synth_count)
        dataset = [gen_synthetic_cells(args.width, args.height, args.cells, seed=int(s))
                   for s in seeds]
        names = [f"synth_{i:03d}" for i in range(args.synth_count)]
    round_seeds = [int(s) for s in rng.integers(0, 2**31 - 1, size=args.rounds)]
    jobs = [(Method(m, K=args.k, M=args.m, damm_steps=args.steps), dataset, round_seeds, names)
            for m in methods]
    reports = list(_map(_bench_one, jobs, args.workers))
    _write(args.out, format_report(reports, reference=args.reference))
    for rep in reports:
        print(f"{rep.method}: best {rep.dice_best:.4f} mean {rep.dice_mean:.4f} "
              f"+- {rep.dice_std:.4f}")
    return EXIT_OK


def cmd_synth(args):
    from .synth import gen_synthetic_cells

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    lines = ["path,seed,cell_count"]
    for i in range(args.count):
        seed = int(rng.integers(0, 2**31 - 1))
        image, mask = gen_synthetic_cells(args.width, args.height, args.cells, seed=seed)
        name = f"synth_{i:03d}.png"
        save_image(out / name, image)
        save_mask(out / f"synth_{i:03d}{MASK_SUFFIX}.png", mask)
        lines.append(f"{name},{seed},{args.cells}")
    _write(out / "manifest.csv", "\n".join(lines) + "\n")
    print(f"wrote {args.count} image/mask pairs to {out}")
    return EXIT_OK


def cmd_gradcheck(args):
    from .toynet import gradient_check

    res = gradient_check(seed=args.seed, n_weights=args.weights, step=args.step,
                         size=args.size, K=args.k, M=args.m)
    print(f"max relative error {res.max_rel_error:.3e} over {res.n_checked} weights "
          f"({res.n_skipped} skipped at kinks); worst {res.worst[0]}[{res.worst[1]}]")
    if not res.max_rel_error < args.tolerance:
        raise NumericalFailure(f"gradient check failed: {res.max_rel_error:.3e} >= "
                               f"{args.tolerance:g}")
    return EXIT_OK


def _map(fn, jobs, workers):
    n = min(max_workers(workers), len(jobs))
    if n <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, jobs))


# --------------------------------------------------------------------------
# parser


def build_parser():
    parser = _Parser(prog="asymmix", formatter_class=_formatter,
                     description="Hierarchical Gaussian mixtures for pixel clustering "
                                 "and cell segmentation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    def add(name, help_text):
        return sub.add_parser(name, help=help_text, description=help_text,
                              formatter_class=_formatter)

    def sizes(p):
        p.add_argument("--k", type=int, default=DEFAULT_K, help="number of clusters")
        p.add_argument("--m", type=int, default=DEFAULT_M, help="Gaussians per cluster")
        p.add_argument("--seed", type=int, default=0, help="random seed")

    p = add("fit", "fit a mixture or k-means model to the pixels of some images")
    p.add_argument("--input", nargs="+", required=True, help="image files or directories")
    sizes(p)
    p.add_argument("--method", choices=("amm", "gmm", "mkmeans"), default="amm",
                   help="model family")
    p.add_argument("--init", choices=("split", "kmeans++"), default="split",
                   help="EM initialisation")
    p.add_argument("--restarts", type=int, default=5,
                   help="pilot fits tried by the split initialisation")
    p.add_argument("--max-iters", type=int, default=200, help="EM iteration cap")
    p.add_argument("--tol", type=float, default=1e-6, help="relative log-likelihood tolerance")
    p.add_argument("--batch-size", type=int, default=1024, help="mini-batch size (mkmeans)")
    p.add_argument("--iters", type=int, default=100, help="mini-batch iterations (mkmeans)")
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_fit)

    p = add("train", "train the posterior network with the hybrid loss")
    p.add_argument("--input", nargs="+", required=True, help="image files or directories")
    sizes(p)
    p.add_argument("--beta", type=float, default=0.5, help="consistency loss weight")
    p.add_argument("--lr", type=float, default=1e-4, help="initial learning rate")
    p.add_argument("--gamma", type=float, default=0.97, help="learning-rate decay per epoch")
    p.add_argument("--steps", type=int, default=100, help="training steps")
    p.add_argument("--augment", action="store_true", help="random hue/saturation/brightness jitter")
    p.add_argument("--out", required=True, help="checkpoint file to write")
    p.add_argument("--trace", default=None, help="CSV file for the loss trace")
    p.set_defaults(func=cmd_train)

    p = add("segment", "segment images with a fitted model or trained network")
    p.add_argument("--input", nargs="+", required=True, help="image files or directories")
    p.add_argument("--model", default=None, help="mixture or k-means model file")
    p.add_argument("--checkpoint", default=None, help="network checkpoint file")
    p.add_argument("--policy", default="darkest-mean",
                   help="foreground rule: darkest-mean, index:k or best-dice")
    p.add_argument("--gt", default=None, help="ground-truth mask file or directory")
    p.add_argument("--overlay", action="store_true", help="also write TP/FP/FN overlays")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.add_argument("--workers", type=int, default=1, help=f"worker processes (capped by {WORKERS_ENV})")
    p.set_defaults(func=cmd_segment)

    p = add("eval", "score predicted masks against ground truth")
    p.add_argument("--pred-dir", required=True, help="directory of predicted masks")
    p.add_argument("--gt-dir", required=True, help="directory of ground-truth masks, same names")
    p.add_argument("--method", default="pred", help="method name written to the report")
    p.add_argument("--pairs-with", default=None, help="another report CSV to test against")
    p.add_argument("--out", default="report.csv", help="report file to write")
    p.set_defaults(func=cmd_eval)

    p = add("bench", "repeated-run comparison of clustering methods")
    sizes(p)
    p.add_argument("--methods", default="amm,gmm,mkmeans",
                   help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--reference", default="gmm", help="method the others are tested against")
    p.add_argument("--rounds", type=int, default=10, help="repeated runs per method")
    p.add_argument("--data-dir", default=None,
                   help="directory of name.png + name_mask.png pairs; synthetic data if unset")
    p.add_argument("--synth-count", type=int, default=4, help="synthetic images when no data dir")
    p.add_argument("--width", type=int, default=64, help="synthetic image width")
    p.add_argument("--height", type=int, default=64, help="synthetic image height")
    p.add_argument("--cells", type=int, default=12, help="cells per synthetic image")
    p.add_argument("--steps", type=int, default=100, help="training steps for damm")
    p.add_argument("--out", default="bench.csv", help="report file to write")
    p.add_argument("--workers", type=int, default=1, help=f"worker processes (capped by {WORKERS_ENV})")
    p.set_defaults(func=cmd_bench)

    p = add("synth", "write synthetic cell images with masks")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--count", type=int, default=4, help="number of images")
    p.add_argument("--width", type=int, default=64, help="image width")
    p.add_argument("--height", type=int, default=64, help="image height")
    p.add_argument("--cells", type=int, default=12, help="cells per image")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.set_defaults(func=cmd_synth)

    p = add("gradcheck", "compare network gradients with finite differences")
    sizes(p)
    p.add_argument("--weights", type=int, default=100, help="weights to check")
    p.add_argument("--step", type=float, default=1e-4, help="central-difference step")
    p.add_argument("--size", type=int, default=8, help="test image side length")
    p.add_argument("--tolerance", type=float, default=1e-4, help="largest accepted relative error")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ContractViolation) as exc:
        print(f"asymmix {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ImageReadError, UnsupportedDepthError, ModelLoadError) as exc:
        print(f"asymmix {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalFailure, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"asymmix {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
