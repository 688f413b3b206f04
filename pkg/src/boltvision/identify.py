"""Lookup-table enrollment and nearest-match identification.

Templates store the oriented bounding-box dimensions of known bolts in
pixels.  A query is matched by Euclidean distance in (major, minor)
space; threading type only breaks exact dimensional ties, since two
catalog entries practically never share both dimensions.  Matching
stays in pixel space throughout: converting to millimeters first and
rounding would merge neighboring sizes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import CsvFormatError, EnrollmentError, ParameterError
from .imagecore import BinaryImage
from .pipeline import (
    BoltFeatures,
    PipelineConfig,
    ThreadingType,
    classify_threading,
    measure_axes,
    orient,
    remove_head,
)

log = logging.getLogger(__name__)

# Two templates closer than this in both dimensions are at risk of
# being confused by perspective shortening across the work area.
COLLISION_FRAC = 0.014

_TABLE_HEADER = "name,width_px,height_px,threading"


@dataclass(frozen=True)
class TemplateEntry:
    """One enrolled bolt: its name and oriented dimensions in pixels."""

    name: str
    width_px: float
    height_px: float
    threading: ThreadingType

    def __post_init__(self) -> None:
        if not self.name:
            raise ParameterError("template name must be nonempty")
        if not 0.0 < self.width_px <= self.height_px:
            raise ParameterError(
                f"template '{self.name}' needs height_px >= width_px > 0, "
                f"got {self.width_px} x {self.height_px}"
            )


@dataclass(frozen=True)
class LookupTable:
    """Immutable ordered template table plus the mm conversion factor."""

    px_per_mm: float
    entries: tuple[TemplateEntry, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.px_per_mm > 0.0:
            raise ParameterError(f"px_per_mm must be > 0, got {self.px_per_mm}")
        if not self.entries:
            raise ParameterError("lookup table needs at least one entry")
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            dup = sorted(n for n in set(names) if names.count(n) > 1)[0]
            raise ParameterError(f"duplicate template name '{dup}'")


@dataclass(frozen=True)
class MatchResult:
    """Outcome of one identification.

    ``name`` is None when the nearest template is too far away to
    trust.  ``dims_mm`` carries the measured (major, minor) of the
    query converted through the table's factor; ``threading_agreed``
    records whether the measured threading matches the chosen entry.
    """

    name: str | None
    distance_px: float
    dims_mm: tuple[float, float]
    threading_agreed: bool


def px_to_mm(v: float, table: LookupTable) -> float:
    return v / table.px_per_mm


def nearest_match(
    features: BoltFeatures,
    table: LookupTable,
    *,
    reject_frac: float = 0.1,
) -> MatchResult:
    """Match measured features against the table by Euclidean distance.

    Distance is computed over raw pixel dimensions.  Entries tied on
    distance are narrowed to those agreeing with the measured
    threading; the lowest table index wins any remaining tie.  When the
    winning distance exceeds ``reject_frac`` of the query's major axis
    the part is reported as unknown (name None).  Pass ``math.inf`` to
    always return the nearest name.
    """
    if not reject_frac > 0.0:
        raise ParameterError(f"reject_frac must be > 0, got {reject_frac}")
    if not table.entries:
        raise ParameterError("cannot match against an empty table")

    dists = [
        math.hypot(features.major_px - e.height_px, features.minor_px - e.width_px)
        for e in table.entries
    ]
    best = min(dists)
    tied = [i for i, d in enumerate(dists) if d <= best + 1e-9]
    agreeing = [i for i in tied if table.entries[i].threading is features.threading]
    idx = (agreeing or tied)[0]

    chosen = table.entries[idx]
    dims_mm = (px_to_mm(features.major_px, table), px_to_mm(features.minor_px, table))
    name: str | None = chosen.name
    if dists[idx] > reject_frac * features.major_px:
        name = None
    return MatchResult(
        name=name,
        distance_px=dists[idx],
        dims_mm=dims_mm,
        threading_agreed=chosen.threading is features.threading,
    )


def enroll(
    samples: Sequence[tuple[str, BinaryImage]],
    cfg: PipelineConfig | None = None,
    *,
    px_per_mm: float = 12.42,
) -> LookupTable:
    """Measure one image per name and build a lookup table.

    Each sample runs the orientation, axis, head-removal, and threading
    stages; pitch is not needed for identification.  A failure on any
    sample aborts enrollment with an error naming it.  Pairs of
    templates closer than 1.4% in both dimensions are logged as
    collisions but still accepted.
    """
    if cfg is None:
        cfg = PipelineConfig()
    if not px_per_mm > 0.0:
        raise ParameterError(f"px_per_mm must be > 0, got {px_per_mm}")
    if not samples:
        raise ParameterError("enroll needs at least one sample")

    entries: list[TemplateEntry] = []
    seen: set[str] = set()
    for name, img in samples:
        if name in seen:
            raise EnrollmentError(name, "duplicate sample name")
        seen.add(name)
        try:
            bolt = orient(img)
            major, minor = measure_axes(bolt)
            cut = remove_head(bolt, cfg.thresh, d=minor, head_frac=cfg.head_frac)
            threading = classify_threading(
                cut.body,
                minor,
                perim_ratio=cfg.perim_ratio,
                fill_frac=cfg.fill_frac,
            )
            entries.append(
                TemplateEntry(
                    name=name, width_px=minor, height_px=major, threading=threading
                )
            )
        except EnrollmentError:
            raise
        except Exception as exc:
            raise EnrollmentError(name, str(exc)) from exc

    for i, a in enumerate(entries):
        for b in entries[i + 1 :]:
            dh = abs(a.height_px - b.height_px) / max(a.height_px, b.height_px)
            dw = abs(a.width_px - b.width_px) / max(a.width_px, b.width_px)
            if dh < COLLISION_FRAC and dw < COLLISION_FRAC:
                log.warning(
                    "templates '%s' and '%s' differ by under %.1f%% in both "
                    "dimensions and may be confused",
                    a.name,
                    b.name,
                    100.0 * COLLISION_FRAC,
                )

    return LookupTable(px_per_mm=px_per_mm, entries=tuple(entries))


def save_table(table: LookupTable) -> bytes:
    """Encode a table as CSV (UTF-8, LF line endings)."""
    lines = [f"# px_per_mm={table.px_per_mm!r}", _TABLE_HEADER]
    for e in table.entries:
        lines.append(
            f"{e.name},{e.width_px!r},{e.height_px!r},{e.threading.value}"
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_table(data: bytes) -> LookupTable:
    """Parse the CSV produced by save_table.

    The leading ``# px_per_mm=<value>`` comment is optional; without it
    the factor defaults to 12.42.  Errors carry the 1-based line number
    of the offending line.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CsvFormatError("table file is not valid UTF-8", 1) from exc

    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    lineno = 1
    px_per_mm = 12.42
    if lines and lines[0].startswith("#"):
        body = lines[0][1:].strip()
        if not body.startswith("px_per_mm="):
            raise CsvFormatError("unrecognized comment, expected px_per_mm=<value>", 1)
        try:
            px_per_mm = float(body[len("px_per_mm=") :])
        except ValueError as exc:
            raise CsvFormatError("px_per_mm is not numeric", 1) from exc
        if not px_per_mm > 0.0:
            raise CsvFormatError(f"px_per_mm must be > 0, got {px_per_mm}", 1)
        lines = lines[1:]
        lineno = 2

    if not lines:
        raise CsvFormatError("missing header line", lineno)
    if lines[0] != _TABLE_HEADER:
        raise CsvFormatError(f"expected header '{_TABLE_HEADER}'", lineno)

    entries: list[TemplateEntry] = []
    seen: set[str] = set()
    for offset, raw in enumerate(lines[1:], start=lineno + 1):
        if raw == "":
            raise CsvFormatError("blank line inside table", offset)
        fields = raw.split(",")
        if len(fields) != 4:
            raise CsvFormatError(f"expected 4 fields, got {len(fields)}", offset)
        name, w_s, h_s, t_s = fields
        if name in seen:
            raise CsvFormatError(f"duplicate template name '{name}'", offset)
        seen.add(name)
        try:
            width = float(w_s)
            height = float(h_s)
        except ValueError as exc:
            raise CsvFormatError("non-numeric dimension", offset) from exc
        try:
            threading = ThreadingType(t_s)
        except ValueError as exc:
            raise CsvFormatError(f"threading must be FT or HT, got '{t_s}'", offset) from exc
        try:
            entries.append(
                TemplateEntry(
                    name=name, width_px=width, height_px=height, threading=threading
                )
            )
        except ParameterError as exc:
            raise CsvFormatError(str(exc), offset) from exc

    if not entries:
        raise CsvFormatError("table has no entries", lineno)
    return LookupTable(px_per_mm=px_per_mm, entries=tuple(entries))
