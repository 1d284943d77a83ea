"""Command line entry point: ``thermoface <command> [--config PATH] [--out DIR]``.

Exit codes: 0 on success, 2 when an input or output file is the problem,
3 when a computation goes numerically wrong.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .enhance import enhance, enhance_stages
from .formats import IMAGE_SUFFIXES, read_image, write_image
from .image import Image
from .pipeline import DATA, ConfigError, PipelineConfig, load_config, reconstruct
from .posmap import WeightMask, export_obj
from .quality import QualityError, fit_default_models, load_model, save_model, score
from .regressor import (
    CheckpointError,
    Network,
    NonFiniteLossError,
    read_checkpoint,
    synthetic_dataset,
    train,
    write_checkpoint,
)

log = logging.getLogger("thermoface")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
DEMO_INPUT = DATA / "corpus" / "face1.pgm"
QUALITY_COLUMNS = [
    "file", "niqe_original", "niqe_processed", "brisque_original", "brisque_processed",
    "niqe_improved", "brisque_improved", "error",
]
STAGE_NAMES = (
    "a_input", "b_white_balance", "c_clahe", "d_laplacian_weight",
    "e_local_contrast_weight", "f_saliency_weight", "g_exposedness_weight", "h_output",
)


class InputError(Exception):
    """A user-facing failure that maps to exit code 2."""


def worker_count() -> int:
    raw = os.environ.get("THERMOFACE_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"THERMOFACE_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise InputError(f"THERMOFACE_THREADS must be a positive integer, got {raw!r}")
    return n


def run_pool(fn, items: list) -> list:
    """``fn`` over ``items`` on a bounded pool; results come back in input order."""
    if not items:
        return []
    with ThreadPoolExecutor(max_workers=min(worker_count(), len(items))) as pool:
        return list(pool.map(fn, items))


def collect_images(inputs: list[Path]) -> tuple[list[Path], list[tuple[Path, str]]]:
    """Sorted image files under ``inputs``; missing paths are reported, other files skipped."""
    found: list[Path] = []
    failed: list[tuple[Path, str]] = []
    for p in inputs:
        if p.is_dir():
            candidates = sorted(c for c in p.iterdir() if c.is_file())
        elif p.is_file():
            candidates = [p]
        else:
            failed.append((p, "no such file or directory"))
            continue
        for c in candidates:
            if c.suffix.lower() in IMAGE_SUFFIXES:
                found.append(c)
            else:
                log.warning("skipping %s: not a pgm, ppm or png file", c)
    return sorted(set(found)), failed


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _attempt(fn, item):
    try:
        return fn(item), None
    except NonFiniteLossError:
        raise
    except (OSError, ValueError) as exc:
        return None, str(exc)


def _report_failures(failures: list[tuple[Path, str]]) -> None:
    if failures:
        print(f"{len(failures)} failed:", file=sys.stderr)
        for path, msg in failures:
            print(f"  {path}: {msg}", file=sys.stderr)


def _gray_if_flat(img: Image) -> Image:
    # A replicated grayscale input stays grayscale on disk.
    if img.channels == 3 and np.array_equal(img.data[0], img.data[1]) and np.array_equal(img.data[0], img.data[2]):
        return Image(img.data[:1])
    return img


# -- enhance -----------------------------------------------------------------


def cmd_enhance(args, cfg: PipelineConfig) -> int:
    files, failures = collect_images([Path(p) for p in args.inputs])
    out = _out_dir(args)

    def work(path: Path) -> Path:
        src = read_image(path)
        refined = enhance(src, cfg.enhance)
        dest = out / f"{path.stem}_refined{path.suffix.lower()}"
        write_image(dest, refined)
        if args.strip:
            pair = np.concatenate([np.broadcast_to(src.data, refined.data.shape), refined.data], axis=2)
            write_image(out / f"{path.stem}_strip.png", Image(pair))
        return dest

    results = run_pool(lambda p: _attempt(work, p), files)
    done = 0
    for path, (dest, err) in zip(files, results):
        if err is None:
            done += 1
            log.info("wrote %s", dest)
        else:
            failures.append((path, err))
    print(f"{done} processed, {len(failures)} failed", flush=True)
    _report_failures(failures)
    return EXIT_INPUT if failures else EXIT_OK


# -- quality -----------------------------------------------------------------


def _pairs(args) -> list[tuple[Path, Path | None]]:
    pairs: list[tuple[Path, Path | None]] = [(Path(a), Path(b)) for a, b in args.pair or []]
    files, missing = collect_images([Path(p) for p in args.inputs])
    pairs += [(p, None) for p, _ in missing]
    for f in files:
        if f.stem.endswith("_refined"):
            continue
        where = Path(args.processed_dir) if args.processed_dir else f.parent
        pairs.append((f, where / f"{f.stem}_refined{f.suffix}"))
    return sorted(pairs, key=lambda p: str(p[0]))


def quality_row(original: Path, processed: Path | None, niqe, brisque) -> dict:
    row = dict.fromkeys(QUALITY_COLUMNS, "")
    row["file"] = str(original)
    try:
        if processed is None:
            raise FileNotFoundError(f"original image missing: {original}")
        if not processed.is_file():
            raise FileNotFoundError(f"processed image missing: {processed}")
        a, b = read_image(original), read_image(processed)
        scores = {
            "niqe_original": score(a, niqe), "niqe_processed": score(b, niqe),
            "brisque_original": score(a, brisque), "brisque_processed": score(b, brisque),
        }
    except (OSError, ValueError) as exc:
        row["error"] = str(exc)
        return row
    row.update({k: f"{v:.6f}" for k, v in scores.items()})
    for m in ("niqe", "brisque"):
        row[f"{m}_improved"] = str(scores[f"{m}_processed"] < scores[f"{m}_original"]).lower()
    return row


def write_quality_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=QUALITY_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def cmd_quality(args, cfg: PipelineConfig) -> int:
    out = _out_dir(args)
    if args.fit:
        corpus, bad = collect_images([Path(args.fit)])
        if bad or not corpus:
            raise InputError(f"no pristine images found in {args.fit}")
        niqe, brisque = fit_default_models([read_image(p) for p in corpus])
        save_model(out / "niqe.tqm", niqe)
        save_model(out / "brisque.tqm", brisque)
        print(f"fitted models on {len(corpus)} images")
    else:
        cfg.check_paths("niqe_model", "brisque_model")
        niqe, brisque = load_model(cfg.niqe_model), load_model(cfg.brisque_model)
    pairs = _pairs(args)
    rows = run_pool(lambda p: quality_row(p[0], p[1], niqe, brisque), pairs)
    text = write_quality_csv(rows)
    (out / "quality.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_INPUT if any(r["error"] for r in rows) else EXIT_OK


# -- reconstruct ---------------------------------------------------------------


def _load_network(cfg: PipelineConfig) -> Network:
    path = Path(cfg.checkpoint)
    if not path.is_file():
        raise InputError(f"checkpoint not found: {path}")
    try:
        return read_checkpoint(path)
    except CheckpointError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _load_mask(cfg: PipelineConfig) -> WeightMask | None:
    if cfg.mask is None:
        return None
    if not Path(cfg.mask).is_file():
        raise InputError(f"mask not found: {cfg.mask}")
    raw = read_image(cfg.mask)
    return WeightMask(np.rint(raw.data[0] * 255.0))


def yaw_label(yaw: float) -> str:
    return f"{yaw + 0.0:+g}"


def write_reconstruction(img: Image, name: str, out: Path, net: Network, cfg: PipelineConfig) -> list[Path]:
    """Mesh, pose renders and depth map for one image; returns the written paths."""
    rec = reconstruct(img, net, _load_mask(cfg), cfg.poses, cfg.mask_threshold, cfg.render_mode)
    ext = cfg.output_format
    written = [out / f"{name}.obj"]
    written[0].write_bytes(export_obj(rec.mesh))
    for yaw, im in rec.renders.items():
        if ext == "pgm":
            im = Image(im.data.mean(axis=0, keepdims=True))
        elif ext == "ppm" and im.channels == 1:
            im = Image(np.repeat(im.data, 3, axis=0))
        p = out / f"{name}_yaw{yaw_label(yaw)}.{ext}"
        write_image(p, im)
        written.append(p)
    depth = rec.depth if ext != "ppm" else Image(np.repeat(rec.depth.data, 3, axis=0))
    p = out / f"{name}_depth.{ext}"
    write_image(p, depth)
    written.append(p)
    return written


def cmd_reconstruct(args, cfg: PipelineConfig) -> int:
    if args.checkpoint:
        cfg = replace(cfg, checkpoint=Path(args.checkpoint))
    if args.poses is not None:
        cfg = replace(cfg, poses=tuple(args.poses))
    net = _load_network(cfg)
    _load_mask(cfg)
    files, failures = collect_images([Path(p) for p in args.inputs])
    out = _out_dir(args)
    results = run_pool(lambda p: _attempt(lambda q: write_reconstruction(read_image(q), q.stem, out, net, cfg), p), files)
    done = 0
    for path, (_, err) in zip(files, results):
        if err is None:
            done += 1
        else:
            failures.append((path, err))
    print(f"{done} reconstructed, {len(failures)} failed", flush=True)
    _report_failures(failures)
    return EXIT_INPUT if failures else EXIT_OK


# -- train ---------------------------------------------------------------------


def cmd_train(args, cfg: PipelineConfig) -> int:
    job = cfg.train
    opt = job.optimizer
    if args.iterations is not None or args.seed is not None:
        try:
            opt = replace(
                opt,
                iterations=opt.iterations if args.iterations is None else args.iterations,
                seed=opt.seed if args.seed is None else args.seed,
            )
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    out = _out_dir(args)
    data = synthetic_dataset(job.samples, job.network.input_size, seed=job.data_seed)
    net = Network.initialize(job.network, seed=opt.seed)
    result = train(net, data, opt)
    write_checkpoint(out / "checkpoint.tprn", result.network)
    lines = ["iteration,loss"] + [f"{i},{v:.9g}" for i, v in enumerate(result.losses)]
    (out / "losses.csv").write_text("\n".join(lines) + "\n")
    print(f"final/initial loss ratio: {result.reduction:.6f}")
    return EXIT_OK


# -- demo ----------------------------------------------------------------------


def _unit_max(w: np.ndarray) -> Image:
    peak = float(w.max())
    return Image((w / peak if peak > 0 else w)[None])


def stage_images(img: Image, cfg: PipelineConfig) -> list[Image]:
    """The eight stages a..h: input, the two fusion inputs, the four weight
    maps of the equalised input scaled to unit peak, and the output."""
    st = enhance_stages(img, cfg.enhance)
    maps = [_unit_max(w.data) for w in st.weights[1]]
    return [st.source, _gray_if_flat(st.balanced), _gray_if_flat(st.equalized), *maps, st.output]


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_demo(args, cfg: PipelineConfig) -> int:
    src = Path(args.input) if args.input else DEMO_INPUT
    if not src.is_file():
        raise InputError(f"demo input not found: {src}")
    img = read_image(src)
    net = _load_network(cfg)
    out = _out_dir(args)
    written = []
    # Stage images mix gray and colour, so they are always PNG.
    for label, stage in zip(STAGE_NAMES, stage_images(img, cfg)):
        p = out / f"stage_{label}.png"
        write_image(p, stage)
        written.append(p)
    refined = read_image(written[-1])
    written += write_reconstruction(refined, src.stem, out, net, cfg)
    manifest = out / "manifest.txt"
    manifest.write_text("".join(f"{sha256(p)}  {p.name}\n" for p in written))
    print(f"wrote {len(written)} files and {manifest.name} to {out}")
    return EXIT_OK


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key=value config file")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="thermoface", description="Thermal face refinement, scoring and 3-D reconstruction.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enhance", parents=[common], help="refine images by multi-scale fusion")
    p.add_argument("inputs", nargs="+", help="image files or directories")
    p.add_argument("--strip", action="store_true", help="also write original|refined strips")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("quality", parents=[common], help="score original/refined pairs (CSV)")
    p.add_argument("inputs", nargs="*", help="originals; X.ext pairs with X_refined.ext")
    p.add_argument("--pair", nargs=2, action="append", metavar=("ORIGINAL", "PROCESSED"))
    p.add_argument("--processed-dir", help="look for X_refined.ext here instead of next to X.ext")
    p.add_argument("--fit", metavar="DIR", help="refit both pristine models from the images in DIR")
    p.set_defaults(func=cmd_quality)

    p = sub.add_parser("reconstruct", parents=[common], help="mesh, pose renders and depth map")
    p.add_argument("inputs", nargs="+", help="image files or directories")
    p.add_argument("--checkpoint", help="network checkpoint (default: bundled desk model)")
    p.add_argument("--poses", type=float, nargs="+", metavar="YAW", help="yaw angles in degrees")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("train", parents=[common], help="train the desk-scale network on synthetic faces")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("demo", parents=[common], help="full stage-by-stage run on one image")
    p.add_argument("input", nargs="?", help="image (default: a bundled corpus face)")
    p.set_defaults(func=cmd_demo)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    np.seterr(all="ignore")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, ConfigError, CheckpointError, QualityError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
