"""CSV readers and writers for the SPI, AOI and feature tables.

Floats are written in plain positional notation using the shortest
representation that round-trips, so a written file reloads bit-exactly.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domain import (
    FEATURE_NAMES,
    KEY_FIELDS,
    TARGET_FIELDS,
    FeatureRow,
    PasteDeposit,
    PlacementRecord,
)
from .errors import SchemaError, UnknownSpec

SPI_COLUMNS = (
    "board_id", "component_id", "pad_index", "offset_x_um", "offset_y_um",
    "angle_deg", "volume_pct",
)
AOI_COLUMNS = (
    "board_id", "component_id", "spec_name", "setting_id",
    "designed_offset_x_um", "designed_offset_y_um", "designed_angle_deg",
    "place_pressure_gf", "tested_offset_x_um", "tested_offset_y_um",
    "tested_angle_deg",
)
FEATURE_COLUMNS = KEY_FIELDS + FEATURE_NAMES + TARGET_FIELDS


def fmt(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if isinstance(value, str):
        return value
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"refusing to write non-finite value {value!r}")
    if value == 0.0:
        return "0"  # also normalises -0.0
    return np.format_float_positional(value, unique=True, trim="-")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _open_table(path, required: Sequence[str]):
    """Yield (line_number, row dict); an empty file yields nothing."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing required column(s) {missing}", line=1, column=missing[0])
        for row in reader:
            if None in row or any(row[c] is None for c in required):
                raise SchemaError(f"{path}: wrong number of fields", line=reader.line_num)
            yield reader.line_num, row


def _num(row, col, line, path) -> float:
    raw = row[col]
    try:
        value = float(raw)
    except ValueError:
        raise SchemaError(f"{path}: {raw!r} is not a number", line=line, column=col) from None
    if not math.isfinite(value):
        raise SchemaError(f"{path}: non-finite value {raw!r}", line=line, column=col)
    return value


def _int(row, col, line, path) -> int:
    raw = row[col]
    try:
        return int(raw)
    except ValueError:
        raise SchemaError(f"{path}: {raw!r} is not an integer", line=line, column=col) from None


def _text(row, col, line, path) -> str:
    raw = row[col]
    if raw == "":
        raise SchemaError(f"{path}: empty identifier", line=line, column=col)
    return raw


def read_spi(path) -> list[PasteDeposit]:
    out = []
    for line, row in _open_table(path, SPI_COLUMNS):
        pad = _int(row, "pad_index", line, path)
        if pad not in (1, 2):
            raise SchemaError(f"{path}: pad_index must be 1 or 2, got {pad}", line=line, column="pad_index")
        volume = _num(row, "volume_pct", line, path)
        if volume <= 0:
            raise SchemaError(f"{path}: volume_pct must be > 0", line=line, column="volume_pct")
        out.append(
            PasteDeposit(
                board_id=_text(row, "board_id", line, path),
                component_id=_text(row, "component_id", line, path),
                pad_index=pad,
                offset_x=_num(row, "offset_x_um", line, path),
                offset_y=_num(row, "offset_y_um", line, path),
                angle=_num(row, "angle_deg", line, path),
                volume_pct=volume,
            )
        )
    return out


def read_aoi(path, specs=None) -> list[PlacementRecord]:
    """Read placements; with ``specs`` given, unknown spec names raise UnknownSpec."""
    out = []
    for line, row in _open_table(path, AOI_COLUMNS):
        spec_name = _text(row, "spec_name", line, path)
        if specs is not None and spec_name not in specs:
            raise UnknownSpec(f"{path}: line {line}: unknown spec_name {spec_name!r}")
        setting = _int(row, "setting_id", line, path)
        if not 1 <= setting <= 33:
            raise SchemaError(f"{path}: setting_id {setting} outside [1, 33]", line=line, column="setting_id")
        pressure = _num(row, "place_pressure_gf", line, path)
        if pressure < 0:
            raise SchemaError(f"{path}: negative place pressure", line=line, column="place_pressure_gf")
        out.append(
            PlacementRecord(
                board_id=_text(row, "board_id", line, path),
                component_id=_text(row, "component_id", line, path),
                spec_name=spec_name,
                setting_id=setting,
                designed_offset_x=_num(row, "designed_offset_x_um", line, path),
                designed_offset_y=_num(row, "designed_offset_y_um", line, path),
                designed_angle=_num(row, "designed_angle_deg", line, path),
                place_pressure=pressure,
                tested_offset_x=_num(row, "tested_offset_x_um", line, path),
                tested_offset_y=_num(row, "tested_offset_y_um", line, path),
                tested_angle=_num(row, "tested_angle_deg", line, path),
            )
        )
    return out


def read_features(path, require_targets=True) -> list[FeatureRow]:
    required = KEY_FIELDS + FEATURE_NAMES + (TARGET_FIELDS if require_targets else ())
    out = []
    for line, row in _open_table(path, required):
        values = {c: _num(row, c, line, path) for c in FEATURE_NAMES}
        for c in TARGET_FIELDS:
            values[c] = _num(row, c, line, path) if row.get(c) not in (None, "") else math.nan
        out.append(
            FeatureRow(
                board_id=_text(row, "board_id", line, path),
                component_id=_text(row, "component_id", line, path),
                setting_id=_int(row, "setting_id", line, path),
                spec_name=_text(row, "spec_name", line, path),
                **values,
            )
        )
    return out


def read_header(path) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        first = next(csv.reader(fh), None)
    return list(first) if first else []


def write_spi(path, deposits: Iterable[PasteDeposit]) -> None:
    write_csv(
        path,
        SPI_COLUMNS,
        ((d.board_id, d.component_id, d.pad_index, d.offset_x, d.offset_y, d.angle, d.volume_pct)
         for d in deposits),
    )


def write_aoi(path, placements: Iterable[PlacementRecord]) -> None:
    write_csv(
        path,
        AOI_COLUMNS,
        ((p.board_id, p.component_id, p.spec_name, p.setting_id, p.designed_offset_x,
          p.designed_offset_y, p.designed_angle, p.place_pressure, p.tested_offset_x,
          p.tested_offset_y, p.tested_angle) for p in placements),
    )


def write_features(path, rows: Iterable[FeatureRow]) -> None:
    write_csv(path, FEATURE_COLUMNS, ([getattr(r, c) for c in FEATURE_COLUMNS] for r in rows))
