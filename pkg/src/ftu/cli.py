"""``ftu`` command line: prepare, pseudo-label, infer, evaluate, folds.

Exit codes: 0 success, 2 config or schema error, 3 data error,
4 predictor-protocol error.
"""

import argparse
import contextlib
import csv
import logging
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import core
from .color import match_to_pool
from .config import load_config
from .core import (
    ConfigError,
    DataError,
    FormatError,
    PredictorError,
    SampleMeta,
    SeededRng,
)
from .evaluation import FoldAssignment, dice, organ_report, report_csv, stratified_kfold
from .infer import Member, predict_image, pseudo_label
from .post import post_config_from_dict, postprocess
from .predictors import build_reference
from .protocol import SubprocessPredictor
from .scale import effective_scale, prepare_sample, resize_image, resize_mask_to, scale_config_from_dict

log = logging.getLogger("ftu")

MANIFEST_COLUMNS = ("id", "source", "organ", "pixel_size", "width", "height", "image_path", "mask")
REQUIRED_COLUMNS = MANIFEST_COLUMNS[:-1]
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp"}


class SchemaError(ConfigError):
    """Input manifest does not follow the expected columns/values."""


# --- manifest helpers ----------------------------------------------------


def read_manifest(path, require_mask=False):
    """Parse a manifest CSV into ``(meta, row)`` pairs."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        columns = reader.fieldnames or []
        needed = REQUIRED_COLUMNS + (("mask",) if require_mask else ())
        missing = [c for c in needed if c not in columns]
        if missing and columns:
            raise SchemaError(f"{path.name}: missing column(s) {', '.join(missing)}")
        if not columns:
            return []
        entries = []
        for lineno, row in enumerate(reader, start=2):
            try:
                meta = SampleMeta(
                    id=row["id"],
                    source=row["source"],
                    organ=row["organ"],
                    pixel_size=float(row["pixel_size"]),
                    width=int(row["width"]),
                    height=int(row["height"]),
                )
            except (ValueError, TypeError) as exc:
                raise SchemaError(f"{path.name} line {lineno}: {exc}") from None
            entries.append((meta, row))
    ids = [m.id for m, _ in entries]
    if len(set(ids)) != len(ids):
        raise SchemaError(f"{path.name}: duplicate ids")
    return entries


def load_mask_field(field, base, width, height):
    """A manifest ``mask`` value is either a PNG path or inline RLE."""
    field = (field or "").strip()
    candidate = base / field if field else None
    if candidate is not None and Path(field).suffix.lower() in IMAGE_SUFFIXES:
        if not candidate.is_file():
            raise DataError(f"mask file not found: {candidate}")
        mask = core.read_mask_png(candidate)
        if mask.shape != (height, width):
            raise DataError(f"{candidate}: mask is {mask.shape[1]}x{mask.shape[0]}, expected {width}x{height}")
        return mask
    return core.rle_decode(core.rle_from_string(field), width, height)


def load_image(meta, row, base):
    path = base / row["image_path"]
    if not path.is_file():
        raise DataError(f"{meta.id}: image not found: {path}")
    image = core.read_image(path)
    if image.shape[:2] != (meta.height, meta.width):
        raise DataError(
            f"{meta.id}: image is {image.shape[1]}x{image.shape[0]}, manifest says {meta.width}x{meta.height}"
        )
    return image


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


@contextlib.contextmanager
def staged_output(output_dir):
    """Yield a scratch directory whose contents are moved into
    ``output_dir`` only if the block finishes without error."""
    output_dir = Path(output_dir)
    output_dir.parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=".ftu-", dir=output_dir.parent))
    try:
        yield scratch
        output_dir.mkdir(parents=True, exist_ok=True)
        for item in sorted(scratch.rglob("*")):
            if item.is_file():
                dest = output_dir / item.relative_to(scratch)
                dest.parent.mkdir(parents=True, exist_ok=True)
                shutil.move(str(item), dest)
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def build_members(cfg):
    members = []
    for entry in cfg["inference"]["members"]:
        if "reference" in entry:
            predictor = build_reference(entry["reference"], entry.get("params"))
        else:
            command = [sys.executable if c == "{python}" else c for c in entry["command"]]
            predictor = SubprocessPredictor(command, name=entry["name"])
        members.append(Member(entry["name"], predictor, float(entry.get("weight", 1.0))))
    if not members:
        raise ConfigError("inference.members must list at least one ensemble member")
    return members


def _close_members(members):
    for m in members:
        close = getattr(m.predictor, "close", None)
        if close:
            close()


# --- commands ------------------------------------------------------------


def cmd_prepare(cfg, input_dir, output_dir, threads=1):
    input_dir = Path(input_dir)
    entries = read_manifest(input_dir / cfg["io"]["manifest"], require_mask=True)
    scale_cfg = scale_config_from_dict(cfg["scale"])
    color = cfg["color"]
    refs = []
    if color["reference_dir"]:
        ref_dir = Path(color["reference_dir"])
        if not ref_dir.is_absolute():
            ref_dir = input_dir / ref_dir
        if not ref_dir.is_dir():
            raise DataError(f"reference_dir not found: {ref_dir}")
        refs = sorted(p for p in ref_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    loaders = [lambda p=p: core.read_image(p) for p in refs]
    root = SeededRng(cfg["seed"]).split("prepare")

    with staged_output(output_dir) as out:
        (out / "images").mkdir()
        (out / "masks").mkdir()

        def work(entry):
            meta, row = entry
            image = load_image(meta, row, input_dir)
            mask = load_mask_field(row.get("mask"), input_dir, meta.width, meta.height)
            factor = effective_scale(meta.organ, meta.source, scale_cfg)
            image, mask = prepare_sample(image, mask, meta, scale_cfg)
            core.write_image(image, out / "images" / f"{meta.id}.png")
            core.write_mask_png(mask, out / "masks" / f"{meta.id}.png")
            matched_path, ref_name = "", ""
            if loaders:
                try:
                    matched, pick = match_to_pool(image, loaders, color["match_probability"], root.split(meta.id))
                except DataError as exc:
                    raise DataError(f"{meta.id}: {exc}") from None
                if pick is not None:
                    matched_path = f"images/{meta.id}_matched.png"
                    ref_name = refs[pick].name
                    core.write_image(matched, out / matched_path)
            return [
                meta.id, meta.source, meta.organ, repr(meta.pixel_size * factor),
                image.shape[1], image.shape[0], f"images/{meta.id}.png", f"masks/{meta.id}.png",
                repr(factor), matched_path, ref_name,
            ]

        rows = _map(work, entries, threads)
        write_csv(
            out / cfg["io"]["manifest"],
            list(MANIFEST_COLUMNS) + ["scale_factor", "matched_image_path", "reference_id"],
            rows,
        )
    log.info("prepared %d samples into %s", len(rows), output_dir)
    return rows


def _predict_entry(entry, base, cfg, members, scale_cfg):
    meta, row = entry
    image = load_image(meta, row, base)
    factor = effective_scale(meta.organ, meta.source, scale_cfg)
    scaled = resize_image(image, factor)
    inf = cfg["inference"]
    prob = predict_image(scaled, members, inf["window"], inf["overlap"], inf["tta"])
    return meta, image, factor, prob


def cmd_infer(cfg, input_dir, output_dir, threads=1):
    input_dir = Path(input_dir)
    entries = read_manifest(input_dir / cfg["io"]["manifest"])
    scale_cfg = scale_config_from_dict(cfg["scale"])
    post_cfg = post_config_from_dict(cfg["post"])
    members = build_members(cfg)
    try:
        with staged_output(output_dir) as out:
            (out / "masks").mkdir()
            write_prob = cfg["io"]["write_probmaps"]
            if write_prob:
                (out / "probmaps").mkdir()

            def work(entry):
                meta, image, factor, prob = _predict_entry(entry, input_dir, cfg, members, scale_cfg)
                mask = postprocess(prob, meta.organ, post_cfg)
                mask = resize_mask_to(mask, meta.height, meta.width)
                core.write_mask_png(mask, out / "masks" / f"{meta.id}.png")
                prob_path = ""
                if write_prob:
                    prob_path = f"probmaps/{meta.id}.pmap"
                    core.write_probmap(prob, out / prob_path)
                runs = core.rle_encode(mask)
                return (
                    [meta.id, core.rle_to_string(runs)],
                    [meta.id, meta.organ, meta.width, meta.height, repr(factor), f"masks/{meta.id}.png", prob_path],
                )

            results = _map(work, entries, threads)
            write_csv(out / "submission.csv", ["id", "rle"], [r[0] for r in results])
            write_csv(
                out / "predictions.csv",
                ["id", "organ", "width", "height", "scale_factor", "mask_path", "probmap_path"],
                [r[1] for r in results],
            )
    finally:
        _close_members(members)
    log.info("inferred %d images into %s", len(results), output_dir)
    return results


def cmd_pseudo_label(cfg, input_dir, output_dir, threads=1, round_index=1):
    input_dir = Path(input_dir)
    entries = read_manifest(input_dir / cfg["io"]["manifest"])
    scale_cfg = scale_config_from_dict(cfg["scale"])
    post_cfg = post_config_from_dict(cfg["post"])
    members = build_members(cfg)
    inf = cfg["inference"]
    try:
        with staged_output(output_dir) as out:
            (out / "masks").mkdir()

            def work(entry):
                meta, row = entry
                image = load_image(meta, row, input_dir)
                factor = effective_scale(meta.organ, meta.source, scale_cfg)

                def predict_fn(img):
                    return predict_image(resize_image(img, factor), members, inf["window"], inf["overlap"], inf["tta"])

                (label,) = pseudo_label([(image, meta)], predict_fn, post_cfg, round_index)
                mask = resize_mask_to(label.mask, meta.height, meta.width)
                core.write_mask_png(mask, out / "masks" / f"{meta.id}.png")
                return [
                    meta.id, meta.source, meta.organ, repr(meta.pixel_size), meta.width, meta.height,
                    str((input_dir / row["image_path"]).resolve()), core.rle_to_string(core.rle_encode(mask)),
                    int(not mask.any()), round_index,
                ]

            rows = _map(work, entries, threads)
            write_csv(out / "pseudo_manifest.csv", list(MANIFEST_COLUMNS) + ["empty", "round"], rows)
    finally:
        _close_members(members)
    return rows


def read_submission(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"predictions file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"id", "rle"} <= set(reader.fieldnames):
            raise SchemaError(f"{path.name}: expected columns id, rle")
        return {row["id"]: core.rle_from_string(row["rle"] or "") for row in reader}


def cmd_evaluate(cfg, predictions, truths, output, folds=None):
    preds = read_submission(predictions)
    truths = Path(truths)
    entries = read_manifest(truths, require_mask=True)
    truth_ids = {m.id for m, _ in entries}
    missing = sorted(truth_ids - set(preds))
    extra = sorted(set(preds) - truth_ids)
    if missing or extra:
        raise DataError(
            "id mismatch: missing predictions for [" + ", ".join(missing)
            + "]; predictions without truth [" + ", ".join(extra) + "]"
        )
    scored = []
    for meta, row in entries:
        truth = load_mask_field(row["mask"], truths.parent, meta.width, meta.height)
        pred = core.rle_decode(preds[meta.id], meta.width, meta.height)
        scored.append((meta, dice(pred, truth)))
    output = Path(output)
    rows = organ_report([(m.organ, d) for m, d in scored])
    fold_text = None
    if folds is not None:
        assignment = FoldAssignment.from_csv(Path(folds).read_text(encoding="utf-8"))
        unknown = sorted(m.id for m, _ in scored if m.id not in assignment.folds)
        if unknown:
            raise DataError("ids without a fold: " + ", ".join(unknown))
        by_fold = [(str(assignment.folds[m.id]), d) for m, d in scored]
        fold_rows = []
        for f in sorted({k for k, _ in by_fold}, key=int):
            vals = [d for k, d in by_fold if k == f]
            fold_rows.append((f, len(vals), float(np.mean(vals))))
        fold_text = report_csv(fold_rows, first_column="fold")
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(report_csv(rows), encoding="utf-8")
    if fold_text is not None:
        output.with_name(output.stem + "_by_fold.csv").write_text(fold_text, encoding="utf-8")
    return rows


def cmd_folds(cfg, manifest, output):
    entries = read_manifest(manifest)
    assignment = stratified_kfold([m for m, _ in entries], cfg["eval"]["folds"], cfg["seed"])
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(assignment.to_csv(), encoding="utf-8")
    return assignment


# --- entry point ---------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="ftu", description="Functional tissue unit segmentation pipeline.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline JSON config (defaults are built in)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="rescale and colour-match a labelled dataset")
    p.add_argument("--input", required=True, help="directory holding the manifest")
    p.add_argument("--output", required=True)

    p = sub.add_parser("pseudo-label", parents=[common], help="label an image pool with the ensemble")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--round", type=int, default=1, dest="round_index")

    p = sub.add_parser("infer", parents=[common], help="predict masks and write a submission")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="per-organ mean Dice report")
    p.add_argument("--predictions", required=True, help="submission CSV (id,rle)")
    p.add_argument("--truths", required=True, help="manifest CSV with ground-truth masks")
    p.add_argument("--output", required=True, help="report CSV path")
    p.add_argument("--folds", help="folds CSV for a per-fold breakdown")

    p = sub.add_parser("folds", parents=[common], help="organ-stratified k-fold assignment")
    p.add_argument("--manifest", required=True)
    p.add_argument("--output", required=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config, {"seed": args.seed} if args.seed is not None else None)
        if args.command == "prepare":
            cmd_prepare(cfg, args.input, args.output, args.threads)
        elif args.command == "pseudo-label":
            cmd_pseudo_label(cfg, args.input, args.output, args.threads, args.round_index)
        elif args.command == "infer":
            cmd_infer(cfg, args.input, args.output, args.threads)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.predictions, args.truths, args.output, args.folds)
        elif args.command == "folds":
            cmd_folds(cfg, args.manifest, args.output)
    except PredictorError as exc:
        print(f"ftu: predictor error: {exc}", file=sys.stderr)
        return 4
    except ConfigError as exc:
        print(f"ftu: {exc}", file=sys.stderr)
        return 2
    except (DataError, FormatError, OSError) as exc:
        print(f"ftu: data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
