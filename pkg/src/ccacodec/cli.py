"""``ccacodec`` command line.

Failures print one line ``error: <kind>: <message>`` to stderr and exit 1;
usage errors exit 2.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys

from . import evaluate as ev
from .checkpoint import load_checkpoint, model_checksum, save_checkpoint
from .codec.container import parse_container, serialize_container
from .imageio import list_images, read_ppm, write_ppm
from .losses import LAMBDAS
from .pipeline import compress, decompress

log = logging.getLogger("ccacodec")


def _images(paths: list[str]) -> tuple[list[str], list]:
    files: list[str] = []
    for p in paths:
        files.extend(list_images(p) if os.path.isdir(p) else [p])
    if not files:
        raise ev.EvaluationError("no images found")
    return [os.path.basename(f) for f in files], [read_ppm(f) for f in files]


def _out(path: str | None):
    if path:
        return open(path, "w", encoding="utf-8", newline="")
    return contextlib.nullcontext(sys.stdout)


def cmd_train(args) -> int:
    from .train import load_config, load_dataset, train

    cfg = load_config(args.config)
    if args.steps is not None:
        cfg.steps = args.steps
        cfg.lr_drop_step = int(round(0.9 * cfg.steps))
    if args.output:
        cfg.checkpoint_path = args.output
    sampler = load_dataset(cfg.data_dir, cfg.crop_size, cfg.seed)

    def progress(step, rep, _model):
        if step % args.log_every == 0 or step == cfg.steps - 1:
            log.info("step %d total %.4f rate_y %.4f rate_z %.4f mse %.3f cca %.5f aux %.4f",
                     step, rep.total, rep.rate_y, rep.rate_z, rep.distortion, rep.cca, rep.aux)

    model, _ = train(cfg, sampler, callback=progress)
    checksum = save_checkpoint(model, cfg.checkpoint_path)
    print(f"{cfg.checkpoint_path} {checksum:016x}")
    return 0


def cmd_compress(args) -> int:
    model = load_checkpoint(args.model)
    img = read_ppm(args.input)
    container, report = compress(model, img, lambda_index=args.lambda_index)
    blob = serialize_container(container)
    with open(args.output, "wb") as f:
        f.write(blob)
    rate = ev.bpp_measure(container)
    print(f"bytes={len(blob)} bpp={rate.bpp:.6f} payload_bpp={rate.payload_bpp:.6f} "
          f"saturated={report.saturated}")
    return 0


def cmd_decompress(args) -> int:
    model = load_checkpoint(args.model)
    with open(args.input, "rb") as f:
        container = parse_container(f.read())
    img, _ = decompress(model, container)
    write_ppm(args.output, img)
    if args.reference:
        print(f"psnr={ev.psnr(read_ppm(args.reference), img):.4f}")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.model)
    names, images = _images(args.images)
    results = ev.evaluate_images(model, images, names)
    with _out(args.output) as f:
        ev.write_eval_csv(results, f)
    return 0


def cmd_bdrate(args) -> int:
    with open(args.anchor, encoding="utf-8") as f:
        anchor = ev.read_rd_csv(f)
    with open(args.test, encoding="utf-8") as f:
        test = ev.read_rd_csv(f)
    print(f"{ev.bd_rate(anchor, test, min_points=args.min_points):.2f}%")
    return 0


def cmd_infodist(args) -> int:
    model = load_checkpoint(args.model)
    _, images = _images(args.images)
    dist = ev.info_distribution(model, images)
    with _out(args.output) as f:
        ev.write_info_csv(dist, f)
    return 0


def _checkpoint_map(items: list[str]) -> dict[float, str]:
    out = {}
    for item in items:
        lam, sep, path = item.partition("=")
        if not sep:
            raise ValueError(f"expected LAMBDA=PATH, got {item!r}")
        out[float(lam)] = path
    return out


def cmd_rdsweep(args) -> int:
    checkpoints = _checkpoint_map(args.checkpoint)
    lambdas = [float(v) for v in args.lambdas.split(",")] if args.lambdas else None
    _, images = _images(args.images)
    points = ev.rd_sweep(checkpoints, images, lambdas)
    with _out(args.output) as f:
        ev.write_rd_csv(points, f)
    return 0


def cmd_checksum(args) -> int:
    print(f"{model_checksum(load_checkpoint(args.model)):016x}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccacodec", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="train a model from a key = value config file")
    s.add_argument("--config", required=True)
    s.add_argument("--steps", type=int, help="override the configured step count")
    s.add_argument("--output", help="override the configured checkpoint path")
    s.add_argument("--log-every", type=int, default=100)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("compress", help="encode a PPM image into a .cca bitstream")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--lambda-index", type=int, default=0,
                   help=f"index into {list(LAMBDAS)} recorded in the header")
    s.set_defaults(func=cmd_compress)

    s = sub.add_parser("decompress", help="decode a .cca bitstream into a PPM image")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--reference", help="original image; prints the PSNR")
    s.set_defaults(func=cmd_decompress)

    s = sub.add_parser("eval", help="per-image bpp and PSNR as CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--images", nargs="+", required=True, help="PPM files or directories")
    s.add_argument("--output")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bdrate", help="BD-rate of a test RD csv against an anchor")
    s.add_argument("--anchor", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--min-points", type=int, default=4)
    s.set_defaults(func=cmd_bdrate)

    s = sub.add_parser("infodist", help="share of coded bits per component as CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--images", nargs="+", required=True)
    s.add_argument("--output")
    s.set_defaults(func=cmd_infodist)

    s = sub.add_parser("rdsweep", help="RD curve over one checkpoint per lambda")
    s.add_argument("--checkpoint", action="append", required=True, metavar="LAMBDA=PATH")
    s.add_argument("--lambdas", help="comma-separated lambdas that must all be present")
    s.add_argument("--images", nargs="+", required=True)
    s.add_argument("--output")
    s.set_defaults(func=cmd_rdsweep)

    s = sub.add_parser("checksum", help="print a checkpoint's model checksum")
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_checksum)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, ArithmeticError) as exc:
        kind = type(exc).__name__
        msg = str(exc).replace("\n", " ")
        print(f"error: {kind}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
