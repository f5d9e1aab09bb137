"""Scanpath CSV reading and writing.

File layout (UTF-8, LF line endings)::

    # format=gazefuse-scanpath/1 screen_w=1920 screen_h=1080
    subject_id,stimulus_id,category,label,idx,x,y,duration_ms,onset_ms
    S000,people_group_03,people_group,1,0,812.4,402.19,231,0

The ``#`` metadata line is optional; when present it declares the screen
bounds used to reject out-of-range rows. ``onset_ms`` is optional too; files
with only the first eight columns are accepted and get back-to-back onsets
(cumulative durations). Coordinates are screen pixels.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from gazefuse.errors import ParseError
from gazefuse.gaze.types import Fixation, ScanPath, StimulusCategory

FORMAT_TAG = "gazefuse-scanpath/1"
BASE_COLUMNS = ["subject_id", "stimulus_id", "category", "label", "idx", "x", "y", "duration_ms"]
COLUMNS = BASE_COLUMNS + ["onset_ms"]


@dataclass
class ParsedScanpaths:
    scanpaths: list[ScanPath]
    warnings: list[str] = field(default_factory=list)
    screen: tuple[float, float] = (1920.0, 1080.0)


def _fmt(value: float) -> str:
    value = float(value)
    return str(int(value)) if value.is_integer() and abs(value) < 1e15 else repr(value)


def _parse_meta(line: str) -> dict[str, str]:
    meta = {}
    for token in line.lstrip("#").split():
        if "=" in token:
            key, value = token.split("=", 1)
            meta[key] = value
    return meta


def _float(text: str, column: str, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"column {column}: {text!r} is not a number", lineno) from None
    if not math.isfinite(value):
        raise ParseError(f"column {column}: non-finite value {text!r}", lineno)
    return value


def parse_text(text: str, screen_w: float | None = None, screen_h: float | None = None) -> ParsedScanpaths:
    lines = text.split("\n")
    meta: dict[str, str] = {}
    start = 0
    while start < len(lines) and lines[start].startswith("#"):
        meta.update(_parse_meta(lines[start]))
        start += 1
    if "format" in meta and meta["format"] != FORMAT_TAG:
        raise ParseError(f"unsupported format {meta['format']!r}", 1)
    width = float(screen_w if screen_w is not None else meta.get("screen_w", 1920))
    height = float(screen_h if screen_h is not None else meta.get("screen_h", 1080))
    body = [ln for ln in lines[start:]]
    if not any(ln.strip() for ln in body):
        return ParsedScanpaths([], [], (width, height))

    reader = csv.reader(io.StringIO("\n".join(body)))
    header = next(reader)
    header_line = start + 1
    if header != BASE_COLUMNS and header != COLUMNS:
        raise ParseError(f"unexpected header {header}; expected {','.join(COLUMNS)}", header_line)
    has_onset = len(header) == len(COLUMNS)

    groups: dict[tuple[str, str], dict] = {}
    warnings: list[str] = []
    for offset, row in enumerate(reader, start=1):
        lineno = header_line + offset
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        sid, stim, cat_text, label_text, idx_text = row[:5]
        try:
            category = StimulusCategory(cat_text)
        except ValueError:
            raise ParseError(f"unknown category {cat_text!r}", lineno) from None
        if label_text not in ("0", "1"):
            raise ParseError(f"label must be 0 or 1, got {label_text!r}", lineno)
        try:
            idx = int(idx_text)
        except ValueError:
            raise ParseError(f"idx {idx_text!r} is not an integer", lineno) from None
        if idx < 0:
            raise ParseError("idx must be nonnegative", lineno)
        x = _float(row[5], "x", lineno)
        y = _float(row[6], "y", lineno)
        duration = _float(row[7], "duration_ms", lineno)
        if duration <= 0:
            raise ParseError("duration_ms must be positive", lineno)
        onset = _float(row[8], "onset_ms", lineno) if has_onset else None

        group = groups.setdefault((sid, stim), {"category": category, "label": int(label_text), "rows": {}})
        if group["category"] != category or group["label"] != int(label_text):
            raise ParseError(f"{sid}/{stim}: category or label changes within one scanpath", lineno)
        if idx in group["rows"]:
            raise ParseError(f"{sid}/{stim}: duplicate idx {idx}", lineno)
        if not (0.0 <= x <= width and 0.0 <= y <= height):
            warnings.append(f"line {lineno}: {sid}/{stim} idx {idx} at ({x}, {y}) is outside the {width:g}x{height:g} screen; row dropped")
            continue
        group["rows"][idx] = (x, y, duration, onset)

    scanpaths = []
    for (sid, stim), group in groups.items():
        fixations = []
        clock = 0.0
        for idx in sorted(group["rows"]):
            x, y, duration, onset = group["rows"][idx]
            if onset is None:
                onset = clock
            clock = onset + duration
            fixations.append(Fixation(x, y, duration, onset))
        try:
            scanpaths.append(ScanPath(sid, stim, group["category"], tuple(fixations), group["label"]))
        except ValueError as exc:
            raise ParseError(str(exc)) from None
    return ParsedScanpaths(scanpaths, warnings, (width, height))


def parse_scanpaths(path: str | Path, screen_w: float | None = None, screen_h: float | None = None) -> ParsedScanpaths:
    """Read a scanpath CSV into one :class:`ScanPath` per (subject, stimulus)."""
    return parse_text(Path(path).read_text(encoding="utf-8"), screen_w, screen_h)


def format_scanpaths(scanpaths: Iterable[ScanPath], screen_w: float = 1920, screen_h: float = 1080) -> str:
    out = [f"# format={FORMAT_TAG} screen_w={_fmt(screen_w)} screen_h={_fmt(screen_h)}", ",".join(COLUMNS)]
    for sp in scanpaths:
        for idx, f in enumerate(sp.fixations):
            out.append(
                ",".join(
                    [sp.subject_id, sp.stimulus_id, sp.category.value, str(sp.label), str(idx),
                     _fmt(f.x), _fmt(f.y), _fmt(f.duration), _fmt(f.onset)]
                )
            )
    return "\n".join(out) + "\n"


def write_scanpaths(path: str | Path, scanpaths: Iterable[ScanPath], screen_w: float = 1920, screen_h: float = 1080) -> None:
    Path(path).write_bytes(format_scanpaths(scanpaths, screen_w, screen_h).encode("utf-8"))
