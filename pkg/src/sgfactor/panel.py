"""Observed panels: ingestion, transforms, outlier adjustment, group metadata.

A panel is an n x p real matrix, rows in strictly increasing time order.
Group structures partition the p series into contiguous blocks, one
partition per factor.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, PanelFormatError, PanelParseError


@dataclass(frozen=True)
class TimeSeriesPanel:
    """Immutable n x p panel of finite values, one column per series."""

    values: np.ndarray
    series_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise PanelFormatError(f"panel values must be 2-d, got ndim={v.ndim}")
        n, p = v.shape
        if n < 2:
            raise PanelFormatError(f"panel needs at least 2 rows, got {n}")
        if p < 1:
            raise PanelFormatError("panel needs at least 1 series")
        if not np.all(np.isfinite(v)):
            raise PanelFormatError("panel contains non-finite values")
        ids = tuple(str(s) for s in self.series_ids)
        if len(ids) != p:
            raise PanelFormatError(
                f"{len(ids)} series ids for {p} columns"
            )
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "series_ids", ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_values(cls, values: np.ndarray, series_ids: Sequence[str] | None = None) -> "TimeSeriesPanel":
        values = np.asarray(values, dtype=float)
        if series_ids is None:
            series_ids = default_series_ids(values.shape[1] if values.ndim == 2 else 0)
        return cls(values=values, series_ids=tuple(series_ids))


def default_series_ids(p: int) -> tuple[str, ...]:
    return tuple(f"V{j + 1}" for j in range(p))


class TransformCode(str, Enum):
    """Per-series stationarity transform."""

    NONE = "none"
    LOG = "log"
    DIFF = "diff"
    LOG_DIFF = "log-diff"
    SECOND_DIFF = "second-diff"
    LOG_SECOND_DIFF = "log-second-diff"

    @property
    def takes_log(self) -> bool:
        return self in (TransformCode.LOG, TransformCode.LOG_DIFF, TransformCode.LOG_SECOND_DIFF)

    @property
    def diff_order(self) -> int:
        if self in (TransformCode.DIFF, TransformCode.LOG_DIFF):
            return 1
        if self in (TransformCode.SECOND_DIFF, TransformCode.LOG_SECOND_DIFF):
            return 2
        return 0


@dataclass(frozen=True)
class GroupStructure:
    """Per-factor partitions of the series index set into contiguous blocks.

    Blocks are stored as 0-based half-open ``(start, stop)`` ranges so that
    malformed user input (overlaps, gaps) is representable and can be
    reported by :func:`validate_groups`.
    """

    per_factor: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def r(self) -> int:
        return len(self.per_factor)

    def counts(self) -> tuple[int, ...]:
        """Number of blocks J_i per factor."""
        return tuple(len(blocks) for blocks in self.per_factor)

    def sizes(self, i: int) -> tuple[int, ...]:
        """Block sizes d_{i j'} for factor ``i`` (0-based)."""
        return tuple(stop - start for start, stop in self.per_factor[i])

    def block_indices(self, i: int) -> list[np.ndarray]:
        return [np.arange(start, stop) for start, stop in self.per_factor[i]]

    @classmethod
    def from_sizes(cls, sizes_per_factor: Sequence[Sequence[int]]) -> "GroupStructure":
        factors = []
        for sizes in sizes_per_factor:
            blocks, start = [], 0
            for d in sizes:
                blocks.append((start, start + int(d)))
                start += int(d)
            factors.append(tuple(blocks))
        return cls(per_factor=tuple(factors))

    @classmethod
    def shared(cls, sizes: Sequence[int], r: int) -> "GroupStructure":
        """The same block-size partition for all ``r`` factors."""
        return cls.from_sizes([list(sizes)] * r)


def load_panel(path: str | Path, has_header: bool = True) -> TimeSeriesPanel:
    """Read a CSV panel: optional header row, one row per time point."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [row for row in rows if row]  # tolerate trailing blank lines
    if not rows:
        raise PanelFormatError(f"{path}: empty file")
    if has_header:
        ids: tuple[str, ...] | None = tuple(c.strip() for c in rows[0])
        body = rows[1:]
    else:
        ids = None
        body = rows
    if not body:
        raise PanelFormatError(f"{path}: no data rows")
    width = len(body[0])
    values = np.empty((len(body), width), dtype=float)
    for i, row in enumerate(body):
        if len(row) != width:
            raise PanelFormatError(
                f"{path}: row {i + 1} has {len(row)} fields, expected {width}"
            )
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise PanelParseError(
                    f"{path}: non-numeric value {cell!r} at row {i + 1}, column {j + 1}"
                ) from None
    if ids is None:
        ids = default_series_ids(width)
    elif len(ids) != width:
        raise PanelFormatError(
            f"{path}: header has {len(ids)} labels for {width} columns"
        )
    return TimeSeriesPanel(values=values, series_ids=ids)


def save_panel(panel: TimeSeriesPanel, path: str | Path) -> None:
    """Write a panel as CSV with a header row; floats use shortest round-trip form."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(panel.series_ids) + "\n")
        for row in panel.values:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def apply_transforms(
    panel: TimeSeriesPanel, codes: Sequence[TransformCode | str]
) -> TimeSeriesPanel:
    """Apply per-series log/difference codes; rows are truncated at the head
    by the maximum differencing order so all series stay aligned."""
    codes = [TransformCode(c) for c in codes]
    if len(codes) != panel.p:
        raise ValueError(f"{len(codes)} transform codes for {panel.p} series")
    max_order = max(c.diff_order for c in codes)
    out = np.empty((panel.n - max_order, panel.p), dtype=float)
    for j, code in enumerate(codes):
        x = panel.values[:, j]
        if code.takes_log:
            if np.any(x <= 0):
                raise DomainError(
                    f"series {panel.series_ids[j]!r}: log transform requires strictly positive values"
                )
            x = np.log(x)
        for _ in range(code.diff_order):
            x = np.diff(x)
        out[:, j] = x[max_order - code.diff_order :] if max_order > code.diff_order else x
    return TimeSeriesPanel(values=out, series_ids=panel.series_ids)


def adjust_outliers(panel: TimeSeriesPanel) -> TimeSeriesPanel:
    """Replace observations deviating from the series median by more than
    6 x IQR with the median of the five preceding (already adjusted) values.

    Median and IQR come from the full original series (type-7 quantiles);
    the first five observations are never replaced.
    """
    if panel.n < 6:
        raise ValueError(f"outlier adjustment needs n >= 6, got n={panel.n}")
    out = panel.values.copy()
    for j in range(panel.p):
        x = panel.values[:, j]
        med = float(np.median(x))
        q25, q75 = np.percentile(x, [25.0, 75.0])
        cutoff = 6.0 * float(q75 - q25)
        col = out[:, j]
        for t in range(5, panel.n):
            if abs(x[t] - med) > cutoff:
                col[t] = float(np.median(col[t - 5 : t]))
    return TimeSeriesPanel(values=out, series_ids=panel.series_ids)


def validate_groups(groups: GroupStructure, p: int, r: int) -> list[str]:
    """Check partition invariants; returns human-readable violations (empty = valid)."""
    violations: list[str] = []
    if groups.r != r:
        violations.append(f"expected {r} factors, structure has {groups.r}")
    for i, blocks in enumerate(groups.per_factor):
        if not blocks:
            violations.append(f"factor {i + 1}: no blocks")
            continue
        covered = 0
        prev_stop = 0
        for k, (start, stop) in enumerate(blocks):
            if stop - start < 1:
                violations.append(f"factor {i + 1}, block {k + 1}: empty block")
            if start < prev_stop:
                violations.append(
                    f"factor {i + 1}, block {k + 1}: overlaps previous block"
                )
            elif start > prev_stop:
                violations.append(
                    f"factor {i + 1}, block {k + 1}: gap before block (series {prev_stop + 1}..{start})"
                )
            covered += max(0, stop - start)
            prev_stop = max(prev_stop, stop)
        if prev_stop != p or covered != p:
            violations.append(
                f"factor {i + 1}: blocks cover {covered} of {p} series"
            )
    return violations


def load_groups(path: str | Path, r: int | None = None) -> GroupStructure:
    """Read the group JSON format: 1-based inclusive ``blocks`` ranges per
    factor; a single entry flagged ``"shared": true`` applies to all factors."""
    with Path(path).open("r", encoding="utf-8") as fh:
        doc = json.load(fh)
    factors = doc["factors"]
    if len(factors) == 1 and factors[0].get("shared", False):
        if r is None:
            raise ValueError("shared group structure requires the factor count r")
        factors = factors * r
    per_factor = []
    for entry in factors:
        blocks = tuple((int(lo) - 1, int(hi)) for lo, hi in entry["blocks"])
        per_factor.append(blocks)
    return GroupStructure(per_factor=tuple(per_factor))


def save_groups(groups: GroupStructure, path: str | Path) -> None:
    doc = {
        "factors": [
            {"blocks": [[start + 1, stop] for start, stop in blocks]}
            for blocks in groups.per_factor
        ]
    }
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_transform_codes(path: str | Path) -> list[TransformCode]:
    """Read a JSON array of transform code strings, parallel to the columns."""
    with Path(path).open("r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return [TransformCode(c) for c in doc]
