"""Per-frame annotation parsing and frame manifests.

Three text formats are supported, one file per video, one line per frame
after a header line:

* VA   -- ``valence,arousal`` pairs in [-1, 1]; ``-5`` marks a disregarded frame.
* EXPR -- a single class id in 0..7; ``-1`` marks a disregarded frame.
* AU   -- twelve comma separated activations in {0, 1}; any ``-1`` marks
  a disregarded frame.

Frame indices are 1-based: the first line after the header is frame 1.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO, Union

import numpy as np

EXPR_CLASSES = (
    "Neutral",
    "Anger",
    "Disgust",
    "Fear",
    "Happiness",
    "Sadness",
    "Surprise",
    "Other",
)

AU_NAMES = (
    "AU1", "AU2", "AU4", "AU6", "AU7", "AU10",
    "AU12", "AU15", "AU23", "AU24", "AU25", "AU26",
)

AU_ACTIONS = {
    "AU1": "inner brow raiser",
    "AU2": "outer brow raiser",
    "AU4": "brow lowerer",
    "AU6": "cheek raiser",
    "AU7": "lid tightener",
    "AU10": "upper lip raiser",
    "AU12": "lip corner puller",
    "AU15": "lip corner depressor",
    "AU23": "lip tightener",
    "AU24": "lip pressor",
    "AU25": "lips part",
    "AU26": "jaw drop",
}

VA_SENTINEL = -5.0
EXPR_SENTINEL = -1
AU_SENTINEL = -1

# image path relative to the image directory
DEFAULT_PATTERN = "{video}/{frame:05}.jpg"


class TaskKind(str, enum.Enum):
    VA = "va"
    EXPR = "expr"
    AU = "au"

    @classmethod
    def parse(cls, value: "str | TaskKind") -> "TaskKind":
        if isinstance(value, TaskKind):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown task {value!r} (expected va, expr or au)") from None


# ---------------------------------------------------------------------------
# errors


class AnnotationError(ValueError):
    """Base class for annotation problems; carries an optional file and line."""

    reason = "annotation error"

    def __init__(self, detail: str = "", line_no: int | None = None, path: str | None = None):
        self.detail = detail
        self.line_no = line_no
        self.path = path
        super().__init__(str(self))

    def in_file(self, path: str) -> "AnnotationError":
        self.path = path
        self.args = (str(self),)
        return self

    def __str__(self) -> str:
        where = ""
        if self.path is not None:
            where = self.path
        if self.line_no is not None:
            where = f"{where}:{self.line_no}" if where else f"line {self.line_no}"
        msg = self.reason if not self.detail else f"{self.reason}: {self.detail}"
        return f"{where}: {msg}" if where else msg


class MissingHeader(AnnotationError):
    reason = "missing header"


class MalformedRow(AnnotationError):
    reason = "malformed row"


class OutOfRange(AnnotationError):
    reason = "value out of range"


class WrongArity(AnnotationError):
    reason = "wrong number of fields"


class EmptyDirectory(AnnotationError):
    reason = "no annotation files"


class EmptyManifest(AnnotationError):
    reason = "manifest is empty"


# ---------------------------------------------------------------------------
# labels


@dataclass(frozen=True)
class VaLabel:
    valence: float
    arousal: float

    @property
    def is_sentinel(self) -> bool:
        return self.valence == VA_SENTINEL or self.arousal == VA_SENTINEL

    @property
    def is_valid(self) -> bool:
        return -1.0 <= self.valence <= 1.0 and -1.0 <= self.arousal <= 1.0


@dataclass(frozen=True)
class ExprLabel:
    class_id: int

    @property
    def is_sentinel(self) -> bool:
        return self.class_id == EXPR_SENTINEL

    @property
    def is_valid(self) -> bool:
        return 0 <= self.class_id < len(EXPR_CLASSES)

    @property
    def name(self) -> str | None:
        return EXPR_CLASSES[self.class_id] if self.is_valid else None


@dataclass(frozen=True)
class AuLabel:
    activations: tuple[int, ...]

    def __post_init__(self):
        if len(self.activations) != len(AU_NAMES):
            raise ValueError(f"expected {len(AU_NAMES)} activations, got {len(self.activations)}")

    @property
    def is_sentinel(self) -> bool:
        return AU_SENTINEL in self.activations

    @property
    def is_valid(self) -> bool:
        return all(a in (0, 1) for a in self.activations)

    @property
    def active(self) -> tuple[str, ...]:
        return tuple(name for name, a in zip(AU_NAMES, self.activations) if a == 1)


@dataclass(frozen=True)
class MultiLabel:
    """The three co-registered labels of one frame."""

    va: VaLabel
    expr: ExprLabel
    au: AuLabel

    @property
    def is_valid(self) -> bool:
        return self.va.is_valid and self.expr.is_valid and self.au.is_valid


Label = Union[VaLabel, ExprLabel, AuLabel, MultiLabel]


@dataclass(frozen=True)
class FrameRecord:
    video_id: str
    frame_index: int
    label: Label
    valid: bool
    image_path: str | None = None

    @property
    def key(self) -> tuple[str, int]:
        return (self.video_id, self.frame_index)

    @property
    def image_name(self) -> str:
        """Bound image file name, or the default-pattern name when unbound."""
        if self.image_path is not None:
            return Path(self.image_path).name
        return Path(DEFAULT_PATTERN.format(video=self.video_id, frame=self.frame_index)).name


@dataclass(frozen=True)
class Manifest:
    """Canonically ordered frame records for one task, or for all three.

    ``tasks`` holds a single :class:`TaskKind` for a single-task manifest and
    all three for a joined multi-task manifest.
    """

    tasks: tuple[TaskKind, ...]
    records: tuple[FrameRecord, ...]
    source: str | None = field(default=None, compare=False)

    @property
    def is_multi(self) -> bool:
        return len(self.tasks) > 1

    @property
    def task(self) -> TaskKind:
        if self.is_multi:
            raise ValueError("multi-task manifest has no single task")
        return self.tasks[0]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def n_valid(self) -> int:
        return sum(r.valid for r in self.records)

    @property
    def n_invalid(self) -> int:
        return len(self.records) - self.n_valid

    def keys(self) -> list[tuple[str, int]]:
        return [r.key for r in self.records]


def _canonical(records: Iterable[FrameRecord]) -> tuple[FrameRecord, ...]:
    ordered = sorted(records, key=lambda r: r.key)
    for prev, cur in zip(ordered, ordered[1:]):
        if prev.key == cur.key:
            raise ValueError(f"duplicate frame {cur.video_id}/{cur.frame_index}")
    return tuple(ordered)


def make_manifest(tasks, records: Iterable[FrameRecord], source: str | None = None) -> Manifest:
    if isinstance(tasks, (str, TaskKind)):
        tasks = (TaskKind.parse(tasks),)
    return Manifest(tuple(tasks), _canonical(records), source)


# ---------------------------------------------------------------------------
# parsing


def _lines(text: str) -> list[str]:
    if text.startswith("﻿"):
        text = text[1:]
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    return lines


def _fields(line: str) -> list[str]:
    return [f.strip() for f in line.split(",")]


def _is_numeric_row(line: str) -> bool:
    fields = _fields(line)
    try:
        for f in fields:
            float(f)
    except ValueError:
        return False
    return True


def _split_header(text: str) -> tuple[str, list[str]]:
    lines = _lines(text)
    if not lines or not lines[0].strip():
        raise MissingHeader("file is empty" if not lines else "first line is blank", line_no=1)
    return lines[0], lines[1:]


def _parse_int(field_: str, line_no: int) -> int:
    try:
        return int(field_)
    except ValueError:
        raise MalformedRow(f"{field_!r} is not an integer", line_no=line_no) from None


def parse_va_file(text: str, video_id: str) -> list[FrameRecord]:
    header, rows = _split_header(text)
    if [f.lower() for f in _fields(header)] != ["valence", "arousal"]:
        raise MissingHeader("expected 'valence,arousal'", line_no=1)
    out = []
    for i, line in enumerate(rows, start=1):
        line_no = i + 1
        fields = _fields(line)
        if len(fields) != 2:
            raise MalformedRow(f"expected 2 numeric fields, got {len(fields)}", line_no=line_no)
        values = []
        for f in fields:
            try:
                x = float(f)
            except ValueError:
                raise MalformedRow(f"{f!r} is not a number", line_no=line_no) from None
            if not math.isfinite(x):
                raise MalformedRow(f"{f!r} is not a finite number", line_no=line_no)
            if x != VA_SENTINEL and not -1.0 <= x <= 1.0:
                raise OutOfRange(f"{f} not in [-1, 1] and not -5", line_no=line_no)
            values.append(x)
        label = VaLabel(values[0], values[1])
        out.append(FrameRecord(video_id, i, label, label.is_valid))
    return out


def parse_expr_file(text: str, video_id: str) -> list[FrameRecord]:
    header, rows = _split_header(text)
    if _is_numeric_row(header):
        raise MissingHeader("expected a category header line", line_no=1)
    out = []
    for i, line in enumerate(rows, start=1):
        line_no = i + 1
        fields = _fields(line)
        if len(fields) != 1:
            raise MalformedRow(f"expected 1 integer field, got {len(fields)}", line_no=line_no)
        class_id = _parse_int(fields[0], line_no)
        if class_id != EXPR_SENTINEL and not 0 <= class_id < len(EXPR_CLASSES):
            raise OutOfRange(f"{class_id} not in -1..7", line_no=line_no)
        label = ExprLabel(class_id)
        out.append(FrameRecord(video_id, i, label, label.is_valid))
    return out


def parse_au_file(text: str, video_id: str) -> list[FrameRecord]:
    header, rows = _split_header(text)
    if _is_numeric_row(header):
        raise MissingHeader("expected an AU header line", line_no=1)
    out = []
    for i, line in enumerate(rows, start=1):
        line_no = i + 1
        fields = _fields(line)
        if len(fields) != len(AU_NAMES):
            raise WrongArity(f"expected {len(AU_NAMES)} fields, got {len(fields)}", line_no=line_no)
        acts = tuple(_parse_int(f, line_no) for f in fields)
        for a in acts:
            if a not in (-1, 0, 1):
                raise OutOfRange(f"{a} not in {{-1, 0, 1}}", line_no=line_no)
        label = AuLabel(acts)
        out.append(FrameRecord(video_id, i, label, label.is_valid))
    return out


PARSERS = {
    TaskKind.VA: parse_va_file,
    TaskKind.EXPR: parse_expr_file,
    TaskKind.AU: parse_au_file,
}


def parse_annotation(text: str, video_id: str, task) -> list[FrameRecord]:
    return PARSERS[TaskKind.parse(task)](text, video_id)


# ---------------------------------------------------------------------------
# canonical text


def _fmt_float(x: float) -> str:
    if x == int(x):
        return str(int(x))
    return repr(float(x))


def header_line(task) -> str:
    task = TaskKind.parse(task)
    if task is TaskKind.VA:
        return "valence,arousal"
    if task is TaskKind.EXPR:
        return ",".join(EXPR_CLASSES)
    return ",".join(AU_NAMES)


def label_fields(label: Label) -> list[str]:
    if isinstance(label, VaLabel):
        return [_fmt_float(label.valence), _fmt_float(label.arousal)]
    if isinstance(label, ExprLabel):
        return [str(label.class_id)]
    if isinstance(label, AuLabel):
        return [str(a) for a in label.activations]
    return label_fields(label.va) + label_fields(label.expr) + label_fields(label.au)


def format_annotation(records: Sequence[FrameRecord], task) -> str:
    """Render records of one video back into the annotation text format.

    Records must cover frames 1..n contiguously, as parsed files do.
    """
    lines = [header_line(task)]
    for expected, rec in enumerate(records, start=1):
        if rec.frame_index != expected:
            raise ValueError(f"frame {rec.frame_index} breaks the contiguous 1..n sequence")
        lines.append(",".join(label_fields(rec.label)))
    return "\n".join(lines) + "\n"


def write_annotation_dir(manifest: Manifest, directory: str | Path, suffix: str = ".txt") -> list[Path]:
    """Write one canonical annotation file per video of a single-task manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    by_video: dict[str, list[FrameRecord]] = {}
    for rec in manifest.records:
        by_video.setdefault(rec.video_id, []).append(rec)
    paths = []
    for video_id, recs in by_video.items():
        path = directory / f"{video_id}{suffix}"
        path.write_text(format_annotation(recs, manifest.task), encoding="utf-8")
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# manifests


def image_path_for(video_id: str, frame_index: int, image_dir: str | Path, pattern: str = DEFAULT_PATTERN) -> str:
    return str(Path(image_dir) / pattern.format(video=video_id, frame=frame_index))


def annotation_files(annotation_dir: str | Path) -> list[Path]:
    annotation_dir = Path(annotation_dir)
    if not annotation_dir.is_dir():
        raise FileNotFoundError(f"annotation directory not found: {annotation_dir}")
    return sorted(p for p in annotation_dir.iterdir() if p.is_file() and not p.name.startswith("."))


def parse_annotation_file(path: str | Path, task) -> list[FrameRecord]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        return parse_annotation(text, path.stem, task)
    except AnnotationError as exc:
        raise exc.in_file(path.name)


def bind_images(records: Iterable[FrameRecord], image_dir: str | Path, pattern: str = DEFAULT_PATTERN) -> tuple[list[FrameRecord], int]:
    """Attach image paths; drop records whose image file does not exist.

    Returns the kept records and the number dropped.
    """
    kept, dropped = [], 0
    for rec in records:
        path = image_path_for(rec.video_id, rec.frame_index, image_dir, pattern)
        if Path(path).is_file():
            kept.append(FrameRecord(rec.video_id, rec.frame_index, rec.label, rec.valid, path))
        else:
            dropped += 1
    return kept, dropped


def build_manifest(
    annotation_dir: str | Path,
    task,
    image_dir: str | Path | None = None,
    pattern: str = DEFAULT_PATTERN,
) -> Manifest:
    task = TaskKind.parse(task)
    files = annotation_files(annotation_dir)
    if not files:
        raise EmptyDirectory(str(annotation_dir))
    records: list[FrameRecord] = []
    for path in files:
        records.extend(parse_annotation_file(path, task))
    if image_dir is not None:
        records, _ = bind_images(records, image_dir, pattern)
    return make_manifest(task, records, source=str(annotation_dir))


def filter_valid(m: Manifest) -> Manifest:
    return Manifest(m.tasks, tuple(r for r in m.records if r.valid), m.source)


def join_multitask(m_va: Manifest, m_expr: Manifest, m_au: Manifest) -> Manifest:
    """Frames present and valid in all three task manifests."""
    tables = []
    for m, task in ((m_va, TaskKind.VA), (m_expr, TaskKind.EXPR), (m_au, TaskKind.AU)):
        if m.tasks != (task,):
            raise ValueError(f"expected a {task.value} manifest, got {[t.value for t in m.tasks]}")
        tables.append({r.key: r for r in m.records if r.valid})
    va, expr, au = tables
    common = va.keys() & expr.keys() & au.keys()
    records = []
    for key in common:
        parts = (va[key], expr[key], au[key])
        image = next((r.image_path for r in parts if r.image_path is not None), None)
        label = MultiLabel(va[key].label, expr[key].label, au[key].label)
        records.append(FrameRecord(key[0], key[1], label, True, image))
    return make_manifest((TaskKind.VA, TaskKind.EXPR, TaskKind.AU), records)


# ---------------------------------------------------------------------------
# manifest CSV


def label_columns(tasks: Sequence[TaskKind]) -> list[str]:
    cols: list[str] = []
    for task in tasks:
        if task is TaskKind.VA:
            cols += ["valence", "arousal"]
        elif task is TaskKind.EXPR:
            cols += ["expr"]
        else:
            cols += list(AU_NAMES)
    return cols


def write_manifest_csv(m: Manifest, fh: TextIO) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["video_id", "frame", "valid"] + label_columns(m.tasks))
    for rec in m.records:
        writer.writerow([rec.video_id, rec.frame_index, int(rec.valid)] + label_fields(rec.label))


def manifest_to_csv(m: Manifest) -> str:
    buf = io.StringIO()
    write_manifest_csv(m, buf)
    return buf.getvalue()


def _label_from_row(task: TaskKind, values: list[str]) -> tuple[Label, list[str]]:
    if task is TaskKind.VA:
        return VaLabel(float(values[0]), float(values[1])), values[2:]
    if task is TaskKind.EXPR:
        return ExprLabel(int(values[0])), values[1:]
    n = len(AU_NAMES)
    return AuLabel(tuple(int(v) for v in values[:n])), values[n:]


def manifest_from_csv(text: str) -> Manifest:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise MissingHeader("empty manifest CSV", line_no=1)
    header = rows[0]
    for tasks in ((TaskKind.VA,), (TaskKind.EXPR,), (TaskKind.AU,), (TaskKind.VA, TaskKind.EXPR, TaskKind.AU)):
        if header == ["video_id", "frame", "valid"] + label_columns(tasks):
            break
    else:
        raise MissingHeader(f"unrecognised manifest columns {header}", line_no=1)
    records = []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise MalformedRow(f"expected {len(header)} fields, got {len(row)}", line_no=line_no)
        try:
            rest = row[3:]
            labels = []
            for task in tasks:
                label, rest = _label_from_row(task, rest)
                labels.append(label)
            label = labels[0] if len(labels) == 1 else MultiLabel(*labels)
            records.append(FrameRecord(row[0], int(row[1]), label, bool(int(row[2]))))
        except ValueError as exc:
            raise MalformedRow(str(exc), line_no=line_no) from None
    return make_manifest(tasks, records)


# ---------------------------------------------------------------------------
# statistics and sampling


@dataclass(frozen=True)
class StatsReport:
    tasks: tuple[TaskKind, ...]
    split: str
    total: int
    valid: int
    invalid: int
    class_counts: dict[str, int] | None = None
    au_positive_counts: dict[str, int] | None = None
    au_positive_rates: dict[str, float] | None = None
    valence: dict[str, float | None] | None = None
    arousal: dict[str, float | None] | None = None

    def to_dict(self) -> dict:
        return {
            "tasks": [t.value for t in self.tasks],
            "split": self.split,
            "total": self.total,
            "valid": self.valid,
            "invalid": self.invalid,
            "class_counts": self.class_counts,
            "au_positive_counts": self.au_positive_counts,
            "au_positive_rates": self.au_positive_rates,
            "valence": self.valence,
            "arousal": self.arousal,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        lines = [
            f"Total number of images in {self.split} set: {self.valid}",
            f"Annotated frames: {self.total} (valid {self.valid}, disregarded {self.invalid})",
        ]
        if self.class_counts is not None:
            lines += ["", f"{'Emotion':<10} {'Count':>10} {'Share':>8}"]
            denom = max(self.valid, 1)
            for name, n in self.class_counts.items():
                lines.append(f"{name:<10} {n:>10} {n / denom:>8.4f}")
        if self.au_positive_counts is not None:
            lines += ["", f"Number of Action Units: {len(AU_NAMES)}",
                      f"{'AU':<6} {'Action':<22} {'Positive':>10} {'Rate':>8}"]
            for name in AU_NAMES:
                lines.append(
                    f"{name:<6} {AU_ACTIONS[name]:<22} {self.au_positive_counts[name]:>10} "
                    f"{self.au_positive_rates[name]:>8.4f}"
                )
        for dim, summary in (("Valence", self.valence), ("Arousal", self.arousal)):
            if summary is not None and summary["mean"] is not None:
                lines.append(
                    f"{dim}: min {summary['min']:.4f}, mean {summary['mean']:.4f}, max {summary['max']:.4f}"
                )
        return "\n".join(lines) + "\n"


def _summary(values: list[float]) -> dict[str, float | None]:
    if not values:
        return {"min": None, "mean": None, "max": None}
    arr = np.asarray(values, dtype=np.float64)
    return {"min": float(arr.min()), "mean": float(arr.mean()), "max": float(arr.max())}


def _task_labels(rec: FrameRecord, task: TaskKind):
    label = rec.label
    if isinstance(label, MultiLabel):
        return {TaskKind.VA: label.va, TaskKind.EXPR: label.expr, TaskKind.AU: label.au}[task]
    return label


def dataset_stats(m: Manifest, split: str = "train") -> StatsReport:
    valid = [r for r in m.records if r.valid]
    kwargs: dict = {}
    if TaskKind.EXPR in m.tasks:
        counts = dict.fromkeys(EXPR_CLASSES, 0)
        for r in valid:
            counts[EXPR_CLASSES[_task_labels(r, TaskKind.EXPR).class_id]] += 1
        kwargs["class_counts"] = counts
    if TaskKind.AU in m.tasks:
        pos = dict.fromkeys(AU_NAMES, 0)
        for r in valid:
            for name, a in zip(AU_NAMES, _task_labels(r, TaskKind.AU).activations):
                pos[name] += a
        kwargs["au_positive_counts"] = pos
        kwargs["au_positive_rates"] = {k: (v / len(valid) if valid else 0.0) for k, v in pos.items()}
    if TaskKind.VA in m.tasks:
        labels = [_task_labels(r, TaskKind.VA) for r in valid]
        kwargs["valence"] = _summary([lab.valence for lab in labels])
        kwargs["arousal"] = _summary([lab.arousal for lab in labels])
    return StatsReport(m.tasks, split, len(m), len(valid), len(m) - len(valid), **kwargs)


def describe_record(rec: FrameRecord) -> str:
    lines = [
        f"Video: {rec.video_id}",
        f"Frame: {rec.frame_index}",
        f"Image: {rec.image_name}",
        f"Valid: {rec.valid}",
    ]
    parts = [rec.label.va, rec.label.expr, rec.label.au] if isinstance(rec.label, MultiLabel) else [rec.label]
    for label in parts:
        if isinstance(label, VaLabel):
            lines.append(f"Valence: {label.valence}, Arousal: {label.arousal}")
        elif isinstance(label, ExprLabel):
            lines.append(f"Expression: {label.class_id} ({label.name or 'disregarded'})")
        else:
            active = ", ".join(label.active) or "none"
            lines.append(f"AUs: {','.join(map(str, label.activations))} (active: {active})")
    return "\n".join(lines) + "\n"


def sample_record(m: Manifest, seed: int, out: TextIO | None = None) -> FrameRecord:
    """Uniformly draw one record with a seeded generator.

    When ``out`` is given the record description is written to it.
    """
    if not m.records:
        raise EmptyManifest()
    rng = np.random.default_rng(seed)
    rec = m.records[int(rng.integers(len(m.records)))]
    if out is not None:
        out.write(describe_record(rec))
    return rec
