"""Batch command-line front end.

Subcommands: corrupt, augment, equalize, metrics, stats, eval, prcurve.
Every output is a pure function of (input files, flags, seed); parallelism
via --jobs never changes bytes.  Exit codes: 0 success, 1 validation error,
2 IO error.  Diagnostics go to stderr, data to files or stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import annotations as ann_io
from . import augment as aug
from . import corrupt as cor
from . import evaluation as ev
from . import metrics as met
from .imgcore import (
    ImageFormatError,
    Region,
    RngStream,
    ValidationError,
    load_image,
    save_png,
)
from .svgplot import emit_pr_plot

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are validation errors, exit 1
        raise ValidationError(message)


def _list_images(src: Path) -> list[Path]:
    if not src.is_dir():
        raise ValidationError(f"source directory does not exist: {src}")
    paths = sorted(
        p for p in src.iterdir() if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES
    )
    if not paths:
        raise ValidationError(f"no PNG/JPEG images found in {src}")
    stems = [p.stem for p in paths]
    if len(set(stems)) != len(stems):
        raise ValidationError(f"duplicate image stems in {src}; outputs would collide")
    return paths


def _run_indexed(fn, count: int, jobs: int) -> list:
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, range(count)))
    return [fn(i) for i in range(count)]


def _write_run_manifest(out_dir: Path, subcommand: str, params: dict) -> None:
    # Echo the output-determining values only; execution details like worker
    # count and output location cannot affect bytes and are omitted.
    doc = {"subcommand": subcommand, "params": params}
    path = out_dir / "run_manifest.json"
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _load_config_table(path: str, subcommand: str, known: set[str]) -> dict:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"invalid TOML config {path}: {exc}") from exc
    table = doc.get(subcommand, {})
    if not isinstance(table, dict):
        raise ValidationError(f"config table [{subcommand}] must be a table")
    unknown = set(table) - known
    if unknown:
        raise ValidationError(
            f"unknown config keys in [{subcommand}]: {', '.join(sorted(unknown))}"
        )
    return table


def _merge_params(ns: argparse.Namespace, defaults: dict) -> dict:
    provided = {
        k: v for k, v in vars(ns).items() if k not in ("func", "subcommand", "config")
    }
    merged = dict(defaults)
    config = getattr(ns, "config", None)
    if config:
        merged.update(_load_config_table(config, ns.subcommand, set(defaults)))
    merged.update(provided)
    return merged


def _require(params: dict, *names: str) -> None:
    missing = [n for n in names if params.get(n) is None]
    if missing:
        raise ValidationError(f"missing required parameter(s): {', '.join(missing)}")


def _choice(params: dict, name: str, choices: tuple[str, ...]) -> str:
    value = params.get(name)
    if value not in choices:
        raise ValidationError(f"{name} must be one of {choices}, got {value!r}")
    return value


# ---------------------------------------------------------------- corrupt

_CORRUPT_DEFAULTS = {
    "src": None, "out": None, "count": None, "seed": 0, "jobs": 1,
    "k_min": 2, "k_max": 8, "photon_scale_min": 0.05, "photon_scale_max": 1.0,
    "patch_side": 256,
    "input": None, "op": None, "k": None, "photon_scale": None,
}


def _cmd_corrupt(params: dict) -> int:
    if params["input"] is not None and params["src"] is not None:
        raise ValidationError("use either --in (single image) or --src (dataset), not both")
    if params["input"] is not None:
        _require(params, "out")
        op = _choice(params, "op", ("posterize", "noise", "both"))
        img = load_image(params["input"])
        if op in ("posterize", "both"):
            _require(params, "k")
            img = cor.posterize(img, int(params["k"]))
        if op in ("noise", "both"):
            _require(params, "photon_scale")
            img = cor.shot_noise(
                img, float(params["photon_scale"]), RngStream(int(params["seed"]))
            )
        save_png(img, params["out"])
        return 0

    _require(params, "src", "out", "count")
    cfg = cor.CorruptionConfig(
        k_min=int(params["k_min"]),
        k_max=int(params["k_max"]),
        photon_scale_min=float(params["photon_scale_min"]),
        photon_scale_max=float(params["photon_scale_max"]),
        patch_side=int(params["patch_side"]),
    )
    out = Path(params["out"])
    records = cor.generate_restoration_dataset(
        params["src"], cfg, out, int(params["count"]), int(params["seed"]),
        jobs=int(params["jobs"]),
    )
    _write_run_manifest(out, "corrupt", {
        "src": str(params["src"]), "count": int(params["count"]),
        "seed": int(params["seed"]), "k_min": cfg.k_min, "k_max": cfg.k_max,
        "photon_scale_min": cfg.photon_scale_min,
        "photon_scale_max": cfg.photon_scale_max, "patch_side": cfg.patch_side,
    })
    print(f"wrote {len(records)} pairs to {out}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------- augment

_AUGMENT_DEFAULTS = {
    "src": None, "out": None, "input": None, "op": None, "seed": 0, "jobs": 1,
    "alpha_limit": 0.3, "delta_limit": 0.3, "patch_frac_min": 0.04, "patch_frac_max": 0.20,
    "block": 16, "prob": 0.5, "ann": None, "region": None,
}


def _region_from_bbox(bbox, width: int, height: int) -> Region | None:
    x = max(0, min(int(round(bbox[0])), width - 1))
    y = max(0, min(int(round(bbox[1])), height - 1))
    w = min(int(round(bbox[2])), width - x)
    h = min(int(round(bbox[3])), height - y)
    if w < 1 or h < 1:
        return None
    return Region(x, y, w, h)


def _parse_region_flag(text: str) -> tuple[float, float, float, float]:
    parts = text.split(",")
    if len(parts) != 4:
        raise ValidationError(f"--region must be x,y,w,h, got {text!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError as exc:
        raise ValidationError(f"--region must be numeric x,y,w,h, got {text!r}") from exc


def _cmd_augment(params: dict) -> int:
    op = _choice(params, "op", ("light", "shuffle"))
    light_cfg = aug.LightAugConfig(
        alpha_limit=float(params["alpha_limit"]),
        delta_limit=float(params["delta_limit"]),
        patch_frac_min=float(params["patch_frac_min"]),
        patch_frac_max=float(params["patch_frac_max"]),
    )
    shuffle_cfg = aug.ShuffleConfig(block=int(params["block"]), prob=float(params["prob"]))
    seed = int(params["seed"])

    regions_by_name: dict[str, list] = {}
    if op == "shuffle" and params["ann"] is not None:
        annset = ann_io.load_annotations(params["ann"])
        boxes_by_image = {}
        for inst in annset.instances:
            boxes_by_image.setdefault(inst.image_id, []).append(inst.bbox)
        for im in annset.images:
            regions_by_name[im.file_name] = boxes_by_image.get(im.id, [])

    def transform(img, stream, raw_boxes):
        if op == "light":
            return aug.patch_light_augment(img, light_cfg, stream)
        regions = []
        for bbox in raw_boxes:
            region = _region_from_bbox(bbox, img.width, img.height)
            if region is not None:
                regions.append(region)
        return aug.block_shuffle(img, regions, shuffle_cfg, stream)

    if params["input"] is not None and params["src"] is not None:
        raise ValidationError("use either --in (single image) or --src (batch), not both")
    if params["input"] is not None:
        _require(params, "out")
        raw_boxes = [_parse_region_flag(r) for r in (params["region"] or [])]
        img = load_image(params["input"])
        save_png(transform(img, RngStream(seed, 0), raw_boxes), params["out"])
        return 0

    _require(params, "src", "out")
    paths = _list_images(Path(params["src"]))
    out = Path(params["out"])
    out.mkdir(parents=True, exist_ok=True)

    def process(i: int):
        path = paths[i]
        img = load_image(path)
        raw_boxes = regions_by_name.get(path.name, []) if op == "shuffle" else []
        result = transform(img, RngStream(seed, stream_id=i), raw_boxes)
        save_png(result, out / (path.stem + ".png"))

    _run_indexed(process, len(paths), int(params["jobs"]))
    manifest = {
        "src": str(params["src"]), "op": op, "seed": seed,
        "alpha_limit": light_cfg.alpha_limit, "delta_limit": light_cfg.delta_limit,
        "patch_frac_min": light_cfg.patch_frac_min, "patch_frac_max": light_cfg.patch_frac_max,
        "block": shuffle_cfg.block, "prob": shuffle_cfg.prob,
        "ann": str(params["ann"]) if params["ann"] else None,
    }
    _write_run_manifest(out, "augment", manifest)
    print(f"augmented {len(paths)} images to {out}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------- equalize

_EQUALIZE_DEFAULTS = {"src": None, "out": None, "input": None, "jobs": 1}


def _cmd_equalize(params: dict) -> int:
    if params["input"] is not None and params["src"] is not None:
        raise ValidationError("use either --in (single image) or --src (batch), not both")
    if params["input"] is not None:
        _require(params, "out")
        save_png(aug.histogram_equalize(load_image(params["input"])), params["out"])
        return 0
    _require(params, "src", "out")
    paths = _list_images(Path(params["src"]))
    out = Path(params["out"])
    out.mkdir(parents=True, exist_ok=True)

    def process(i: int):
        path = paths[i]
        save_png(aug.histogram_equalize(load_image(path)), out / (path.stem + ".png"))

    _run_indexed(process, len(paths), int(params["jobs"]))
    _write_run_manifest(out, "equalize", {"src": str(params["src"])})
    print(f"equalized {len(paths)} images to {out}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------- metrics

_METRICS_DEFAULTS = {
    "a": None, "b": None, "window": 11, "sigma": 1.5, "k1": 0.01, "k2": 0.03,
    "lambda1": 1.0, "lambda2": 1.0,
}


def _cmd_metrics(params: dict) -> int:
    _require(params, "a", "b")
    ssim_cfg = met.SSIMConfig(
        window=int(params["window"]), sigma=float(params["sigma"]),
        k1=float(params["k1"]), k2=float(params["k2"]),
    )
    weights = met.LossWeights(
        lambda1=float(params["lambda1"]), lambda2=float(params["lambda2"])
    )
    a_path, b_path = Path(params["a"]), Path(params["b"])
    if a_path.is_dir() != b_path.is_dir():
        raise ValidationError("--a and --b must both be files or both be directories")
    if a_path.is_dir():
        names_a = {p.name for p in _list_images(a_path)}
        names_b = {p.name for p in _list_images(b_path)}
        common = sorted(names_a & names_b)
        if not common:
            raise ValidationError("no common image file names between --a and --b")
        pairs = [(name, a_path / name, b_path / name) for name in common]
    else:
        pairs = [(a_path.name, a_path, b_path)]

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["pair", "mse", "ssim", "restoration_loss"])
    for name, pa, pb in pairs:
        img_a, img_b = load_image(pa), load_image(pb)
        m = met.mse(img_a, img_b)
        s = met.ssim(img_a, img_b, ssim_cfg)
        loss = met.restoration_loss(img_a, img_b, weights, None, ssim_cfg)
        writer.writerow([name, repr(m), repr(s), repr(loss)])
    return 0


# ---------------------------------------------------------------- stats

_STATS_DEFAULTS = {"ann": None, "attr_key": None}


def _cmd_stats(params: dict) -> int:
    _require(params, "ann")
    mapping = None
    if params["attr_key"]:
        mapping = {}
        for item in params["attr_key"]:
            if "=" not in item:
                raise ValidationError(f"--attr-key must be canonical=file_key, got {item!r}")
            canonical, file_key = item.split("=", 1)
            mapping[canonical] = file_key
    annset = ann_io.load_annotations(params["ann"], attribute_keys=mapping)
    if annset.clipped:
        print(f"note: clipped {annset.clipped} out-of-bounds boxes", file=sys.stderr)
    stats = ann_io.dataset_stats(annset)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["metric", "value"])
    writer.writerow(["images", stats.images])
    writer.writerow(["instances", stats.instances])
    for name in ann_io.CLASSES:
        writer.writerow([name, stats.per_class[name]])
    for flag in ("extreme", "truncated", "occluded"):
        value = getattr(stats, flag)
        if value is not None:
            writer.writerow([flag, value])
    return 0


# ---------------------------------------------------------------- eval

_EVAL_DEFAULTS = {
    "dets": None, "ann": None, "extreme": "all", "exclude_truncated": False,
    "exclude_occluded": False, "extreme_analysis": False, "attribution_iou": 0.1,
    "out": None, "csv": None,
}

_EXTREME_CHOICES = {"all": None, "only": True, "non": False}


def _cmd_eval(params: dict) -> int:
    _require(params, "dets", "ann")
    if params["extreme"] not in _EXTREME_CHOICES:
        raise ValidationError(f"--extreme must be one of all/only/non, got {params['extreme']!r}")
    annset = ann_io.load_annotations(params["ann"])
    if annset.clipped:
        print(f"note: clipped {annset.clipped} out-of-bounds boxes", file=sys.stderr)
    dets = ann_io.load_detections(params["dets"], categories=annset.categories)
    options = ev.EvalOptions(
        include_extreme=_EXTREME_CHOICES[params["extreme"]],
        exclude_truncated=bool(params["exclude_truncated"]),
        exclude_occluded=bool(params["exclude_occluded"]),
    )
    report = ev.evaluate(dets, annset, options)
    if params["extreme_analysis"]:
        analysis_set = ann_io.filter_instances(
            annset,
            include_extreme=options.include_extreme,
            exclude_truncated=options.exclude_truncated,
            exclude_occluded=options.exclude_occluded,
        ) if options.active else annset
        condition = {}
        for t in ev.CURVE_THRESHOLDS:
            curves = ev.conditional_eval(
                dets, analysis_set, iou_threshold=t,
                attribution_iou=float(params["attribution_iou"]),
            )
            for name, curve in curves.items():
                condition[f"{name}@{t:.2f}"] = curve
        report.condition_curves = condition

    doc = ev.report_to_dict(report)
    doc["options"] = {
        "extreme": params["extreme"],
        "exclude_truncated": options.exclude_truncated,
        "exclude_occluded": options.exclude_occluded,
        "extreme_analysis": bool(params["extreme_analysis"]),
        "attribution_iou": float(params["attribution_iou"]),
    }
    text = json.dumps(doc, indent=2) + "\n"
    if params["out"]:
        Path(params["out"]).write_text(text, encoding="utf-8")
        print(f"wrote report to {params['out']}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    if params["csv"]:
        all_curves = dict(report.curves)
        if report.condition_curves:
            all_curves.update(report.condition_curves)
        with open(params["csv"], "w", encoding="utf-8") as fh:
            ev.write_curves_csv(all_curves, fh)
        print(f"wrote curve CSV to {params['csv']}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------- prcurve

_PRCURVE_DEFAULTS = {"report": None, "out": None, "curves": None}


def _cmd_prcurve(params: dict) -> int:
    _require(params, "report", "out")
    try:
        doc = json.loads(Path(params["report"]).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed report JSON: {exc}") from exc
    curves = {
        name: ev.curve_from_dict(c) for name, c in doc.get("curves", {}).items()
    }
    for name, c in doc.get("condition_curves", {}).items():
        curves[name] = ev.curve_from_dict(c)
    if params["curves"]:
        wanted = [n.strip() for n in params["curves"].split(",") if n.strip()]
        unknown = [n for n in wanted if n not in curves]
        if unknown:
            raise ValidationError(f"unknown curve name(s): {', '.join(unknown)}")
        curves = {n: curves[n] for n in wanted}
    emit_pr_plot(curves, params["out"])
    print(f"wrote plot to {params['out']}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------- wiring

def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="optional TOML config; flags take precedence")


def build_parser() -> _Parser:
    parser = _Parser(prog="lowlight", description=__doc__)
    subs = parser.add_subparsers(dest="subcommand", required=True)
    sup = argparse.SUPPRESS

    p = subs.add_parser("corrupt", help="restoration pairs or single-image corruption")
    _add_common(p)
    p.add_argument("--src", default=sup)
    p.add_argument("--out", default=sup)
    p.add_argument("--count", type=int, default=sup)
    p.add_argument("--seed", type=int, default=sup)
    p.add_argument("--jobs", type=int, default=sup)
    p.add_argument("--k-min", dest="k_min", type=int, default=sup)
    p.add_argument("--k-max", dest="k_max", type=int, default=sup)
    p.add_argument("--photon-scale-min", dest="photon_scale_min", type=float, default=sup)
    p.add_argument("--photon-scale-max", dest="photon_scale_max", type=float, default=sup)
    p.add_argument("--patch-side", dest="patch_side", type=int, default=sup)
    p.add_argument("--in", dest="input", default=sup)
    p.add_argument("--op", choices=("posterize", "noise", "both"), default=sup)
    p.add_argument("--k", type=int, default=sup)
    p.add_argument("--photon-scale", dest="photon_scale", type=float, default=sup)
    p.set_defaults(func=(_cmd_corrupt, _CORRUPT_DEFAULTS))

    p = subs.add_parser("augment", help="patch-light or block-shuffle augmentation")
    _add_common(p)
    p.add_argument("--src", default=sup)
    p.add_argument("--out", default=sup)
    p.add_argument("--in", dest="input", default=sup)
    p.add_argument("--op", choices=("light", "shuffle"), default=sup)
    p.add_argument("--seed", type=int, default=sup)
    p.add_argument("--jobs", type=int, default=sup)
    p.add_argument("--alpha-limit", dest="alpha_limit", type=float, default=sup)
    p.add_argument("--delta-limit", dest="delta_limit", type=float, default=sup)
    p.add_argument("--patch-frac-min", dest="patch_frac_min", type=float, default=sup)
    p.add_argument("--patch-frac-max", dest="patch_frac_max", type=float, default=sup)
    p.add_argument("--block", type=int, default=sup)
    p.add_argument("--prob", type=float, default=sup)
    p.add_argument("--ann", default=sup, help="annotation file supplying shuffle regions")
    p.add_argument("--region", action="append", default=sup, help="x,y,w,h (repeatable)")
    p.set_defaults(func=(_cmd_augment, _AUGMENT_DEFAULTS))

    p = subs.add_parser("equalize", help="histogram equalization")
    _add_common(p)
    p.add_argument("--src", default=sup)
    p.add_argument("--out", default=sup)
    p.add_argument("--in", dest="input", default=sup)
    p.add_argument("--jobs", type=int, default=sup)
    p.set_defaults(func=(_cmd_equalize, _EQUALIZE_DEFAULTS))

    p = subs.add_parser("metrics", help="restoration metrics as CSV on stdout")
    _add_common(p)
    p.add_argument("--a", default=sup)
    p.add_argument("--b", default=sup)
    p.add_argument("--window", type=int, default=sup)
    p.add_argument("--sigma", type=float, default=sup)
    p.add_argument("--k1", type=float, default=sup)
    p.add_argument("--k2", type=float, default=sup)
    p.add_argument("--lambda1", type=float, default=sup)
    p.add_argument("--lambda2", type=float, default=sup)
    p.set_defaults(func=(_cmd_metrics, _METRICS_DEFAULTS))

    p = subs.add_parser("stats", help="annotation counts as CSV on stdout")
    _add_common(p)
    p.add_argument("--ann", default=sup)
    p.add_argument("--attr-key", dest="attr_key", action="append", default=sup,
                   help="canonical=file_key attribute mapping (repeatable)")
    p.set_defaults(func=(_cmd_stats, _STATS_DEFAULTS))

    p = subs.add_parser("eval", help="AP/PR evaluation report")
    _add_common(p)
    p.add_argument("--dets", default=sup)
    p.add_argument("--ann", default=sup)
    p.add_argument("--extreme", choices=tuple(_EXTREME_CHOICES), default=sup)
    p.add_argument("--exclude-truncated", dest="exclude_truncated",
                   action="store_true", default=sup)
    p.add_argument("--exclude-occluded", dest="exclude_occluded",
                   action="store_true", default=sup)
    p.add_argument("--extreme-analysis", dest="extreme_analysis",
                   action="store_true", default=sup)
    p.add_argument("--attribution-iou", dest="attribution_iou", type=float, default=sup)
    p.add_argument("--out", default=sup)
    p.add_argument("--csv", default=sup)
    p.set_defaults(func=(_cmd_eval, _EVAL_DEFAULTS))

    p = subs.add_parser("prcurve", help="render PR curves from a report as SVG")
    _add_common(p)
    p.add_argument("--report", default=sup)
    p.add_argument("--out", default=sup)
    p.add_argument("--curves", default=sup, help="comma-separated curve names to plot")
    p.set_defaults(func=(_cmd_prcurve, _PRCURVE_DEFAULTS))
    return parser


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        handler, defaults = ns.func
        params = _merge_params(ns, defaults)
        return handler(params)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ImageFormatError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
