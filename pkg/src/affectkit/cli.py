"""Command-line entry point: ``affectkit <command> [options]``.

Exit status is 0 on success, 1 on a domain error (bad annotation, missing
prediction, ...) and 2 on a usage error.  Data goes to stdout or files;
diagnostics and the one-line run summary go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import annotations as ann
from . import metrics
from .harness.experiment import EmptySubset, run_comparison, run_preset
from .harness.presets import PRESETS, get_preset
from .harness.synthetic import SyntheticConfig, generate_synthetic
from .mtl.config import Plateau

log = logging.getLogger("affectkit")


class CliError(Exception):
    pass


def _emit(args, text: str, payload) -> None:
    if args.format == "json":
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    else:
        sys.stdout.write(text)


def _summary(msg: str) -> None:
    print(msg, file=sys.stderr)


def _out_dir(args) -> Path | None:
    if args.out_dir is None:
        return None
    path = Path(args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _split_name(directory: str) -> str:
    name = Path(directory).resolve().name.lower()
    for suffix in ("_set", "-set", " set"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return name or "annotation"


def _manifest(args) -> ann.Manifest:
    return ann.build_manifest(args.annotations, args.task, getattr(args, "images", None), args.pattern)


# ---------------------------------------------------------------------------
# commands


def validate_directory(annotation_dir, task, image_dir=None, pattern=ann.DEFAULT_PATTERN) -> dict:
    task = ann.TaskKind.parse(task)
    files = ann.annotation_files(annotation_dir)
    rows = []
    for path in files:
        row = {"file": path.name, "records": 0, "valid": 0, "invalid": 0, "dropped": 0, "error": None}
        try:
            records = ann.parse_annotation_file(path, task)
        except ann.AnnotationError as exc:
            row["error"] = str(exc)
        else:
            if image_dir is not None:
                records, row["dropped"] = ann.bind_images(records, image_dir, pattern)
            row["records"] = len(records)
            row["valid"] = sum(r.valid for r in records)
            row["invalid"] = row["records"] - row["valid"]
        rows.append(row)
    totals = {k: sum(r[k] for r in rows) for k in ("records", "valid", "invalid", "dropped")}
    return {
        "task": task.value,
        "files": rows,
        "totals": totals,
        "errors": sum(r["error"] is not None for r in rows),
    }


def _validate_text(result: dict) -> str:
    width = max([len("file")] + [len(r["file"]) for r in result["files"]])
    lines = [f"{'file':<{width}} {'records':>8} {'valid':>8} {'invalid':>8} {'dropped':>8}  status"]
    for r in result["files"]:
        status = "ok" if r["error"] is None else f"ERROR {r['error']}"
        lines.append(f"{r['file']:<{width}} {r['records']:>8} {r['valid']:>8} {r['invalid']:>8} "
                     f"{r['dropped']:>8}  {status}")
    t = result["totals"]
    lines.append(f"{'total':<{width}} {t['records']:>8} {t['valid']:>8} {t['invalid']:>8} {t['dropped']:>8}")
    return "\n".join(lines) + "\n"


def cmd_validate(args) -> int:
    result = validate_directory(args.annotations, args.task, args.images, args.pattern)
    _emit(args, _validate_text(result), result)
    t = result["totals"]
    _summary(f"validate: {len(result['files'])} files, {t['records']} records "
             f"({t['valid']} valid, {t['invalid']} disregarded, {t['dropped']} dropped), "
             f"{result['errors']} errors")
    if result["errors"]:
        first = next(r for r in result["files"] if r["error"] is not None)
        print(f"error: {first['error']}", file=sys.stderr)
        return 1
    return 0


def cmd_stats(args) -> int:
    m = _manifest(args)
    stats = ann.dataset_stats(m, split=args.split or _split_name(args.annotations))
    _emit(args, stats.to_text(), stats.to_dict())
    out = _out_dir(args)
    if out is not None:
        (out / "stats.json").write_text(stats.to_json())
        (out / "stats.txt").write_text(stats.to_text())
        if args.figures:
            from .plotting import plot_distribution

            plot_distribution(stats, out / "distribution.png")
    _summary(f"stats: {stats.total} frames, {stats.valid} valid")
    return 0


def cmd_sample(args) -> int:
    m = ann.filter_valid(_manifest(args))
    rec = ann.sample_record(m, args.seed)
    payload = {
        "video_id": rec.video_id,
        "frame": rec.frame_index,
        "image": rec.image_name,
        "image_path": rec.image_path,
        "labels": dict(zip(ann.label_columns(m.tasks), ann.label_fields(rec.label))),
    }
    _emit(args, ann.describe_record(rec), payload)
    _summary(f"sample: drew {rec.video_id} frame {rec.frame_index} of {len(m)} valid records (seed {args.seed})")
    return 0


def cmd_manifest(args) -> int:
    m = _manifest(args)
    if args.valid_only:
        m = ann.filter_valid(m)
    text = ann.manifest_to_csv(m)
    out = _out_dir(args)
    if out is not None:
        (out / "manifest.csv").write_text(text)
    else:
        sys.stdout.write(text)
    _summary(f"manifest: {len(m)} records ({m.n_valid} valid)")
    return 0


def cmd_evaluate(args) -> int:
    gt = ann.build_manifest(args.annotations, args.task)
    report = metrics.evaluate_predictions(args.predictions, gt, args.task)
    _emit(args, report.to_text(), report.to_dict())
    out = _out_dir(args)
    if out is not None:
        (out / "report.json").write_text(report.to_json())
        (out / "report.txt").write_text(report.to_text())
    _summary(f"evaluate: {report.task.value} challenge score {report.challenge_score:.4f} "
             f"over {report.n_scored} frames")
    return 0


def load_run_config(path: str | Path, seed: int) -> tuple[SyntheticConfig, dict]:
    """Read a synthetic-data JSON config.

    Top-level keys are :class:`SyntheticConfig` fields; an optional ``train``
    object overrides preset training settings (epochs, batch_size, ...).
    """
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise CliError(f"{path}: config must be a JSON object")
    train = dict(raw.pop("train", None) or {})
    raw.setdefault("seed", seed)
    try:
        syn = SyntheticConfig.from_dict(raw)
    except TypeError as exc:
        raise CliError(f"{path}: {exc}") from None
    if train.get("scheduler") is not None:
        train["scheduler"] = Plateau(**train["scheduler"])
    for key in ("loss_weights", "adam_betas", "expr_class_weights", "au_pos_weights"):
        if train.get(key) is not None:
            train[key] = tuple(train[key])
    train["seed"] = seed
    return syn, train


def _training_overrides(args, base: dict) -> dict:
    overrides = dict(base)
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    return overrides


def cmd_train(args) -> int:
    syn, train_over = load_run_config(args.synthetic, args.seed)
    preset = get_preset(args.preset).with_train(**_training_overrides(args, train_over))
    train, val = generate_synthetic(syn)
    out = Path(args.out_dir or "runs")
    result = run_preset(preset, train, val, args.subset, out, args.figures, verbose=args.verbose)
    text = "".join(f"[{t.value}]\n{r.to_text()}\n" for t, r in result.reports.items())
    _emit(args, text, result.report_dict())
    scores = ", ".join(f"{t.value} {r.challenge_score:.4f}" for t, r in result.reports.items())
    _summary(f"train: {preset.name} {preset.train.epochs} epochs on {result.n_train} samples; {scores}; "
             f"outputs in {out / preset.name}")
    return 0


def cmd_compare(args) -> int:
    syn, train_over = load_run_config(args.synthetic, args.seed)
    names = [p.strip() for p in args.presets.split(",") if p.strip()]
    report = run_comparison(names, syn, args.out_dir or "runs", args.subset, args.figures, args.jobs,
                            _training_overrides(args, train_over))
    _emit(args, report.to_text(), report.to_dict())
    best = ", ".join(f"{t} {p}" for t, p in report.best.items() if p)
    _summary(f"compare: {len(names)} presets; best per task: {best}; outputs in {args.out_dir or 'runs'}")
    return 0


def cmd_synth(args) -> int:
    syn, _ = load_run_config(args.synthetic, args.seed)
    train, val = generate_synthetic(syn)
    out = _out_dir(args) or Path(".")
    train.to_csv(out / "train.csv")
    val.to_csv(out / "val.csv")
    _summary(f"synth: wrote {len(train)} train and {len(val)} val samples to {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42, help="random seed (default 42)")
    common.add_argument("--out-dir", default=None, help="directory for output files")
    common.add_argument("--format", choices=("text", "json"), default="text", help="stdout format")
    common.add_argument("--no-figures", dest="figures", action="store_false",
                        help="skip the PNG figures written next to CSV/JSON outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="affectkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def annotated(name, help_, images=True):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--task", required=True, choices=[t.value for t in ann.TaskKind])
        p.add_argument("--annotations", required=True, help="directory of annotation files")
        if images:
            p.add_argument("--images", default=None, help="image directory; frames without an image are dropped")
        p.add_argument("--pattern", default=ann.DEFAULT_PATTERN,
                       help="image path pattern under --images (default %(default)s)")
        return p

    p = annotated("validate", "parse every annotation file and report per-file counts")
    p.set_defaults(func=cmd_validate)

    p = annotated("stats", "label distribution of an annotation directory")
    p.add_argument("--split", default=None, help="split name for the report (default: from the directory name)")
    p.set_defaults(func=cmd_stats)

    p = annotated("sample", "print one randomly drawn valid frame")
    p.set_defaults(func=cmd_sample)

    p = annotated("manifest", "export the frame manifest as CSV")
    p.add_argument("--valid-only", action="store_true", help="drop disregarded frames")
    p.set_defaults(func=cmd_manifest)

    p = annotated("evaluate", "score a prediction CSV against annotations", images=False)
    p.add_argument("--predictions", required=True, help="CSV: video_id,frame,<payload>")
    p.set_defaults(func=cmd_evaluate)

    def synthetic(name, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--synthetic", required=True, help="synthetic data config (JSON)")
        p.add_argument("--subset", type=float, default=1.0, help="fraction of train/val used (default 1)")
        p.add_argument("--epochs", type=int, default=None, help="override the preset epoch count")
        return p

    p = synthetic("train", "train one preset on synthetic data")
    p.add_argument("--preset", required=True, choices=list(PRESETS))
    p.set_defaults(func=cmd_train)

    p = synthetic("compare", "train several presets and compare their challenge scores")
    p.add_argument("--out", dest="out_dir", default=argparse.SUPPRESS, help="alias of --out-dir")
    p.add_argument("--presets", default=",".join(PRESETS), help="comma-separated presets (default: all)")
    p.add_argument("--jobs", type=int, default=1, help="presets trained in parallel (default 1)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", parents=[common], help="export a synthetic dataset as CSV")
    p.add_argument("--synthetic", required=True, help="synthetic data config (JSON)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ann.AnnotationError, metrics.MetricsError, EmptySubset, CliError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, NotADirectoryError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
