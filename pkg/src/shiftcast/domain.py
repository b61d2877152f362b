"""Assembly-line records, the SPI/AOI join and the ratio features.

Units follow the inspection machines: offsets in micrometers, angles in
degrees (counterclockwise positive for both SPI and AOI), paste volume in
percent of the ideal deposit volume, place pressure in gram-force.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicatePad,
    MissingDeposit,
    MixedSpec,
    NonFiniteInput,
    NonPositiveDimension,
    UnknownSpec,
)

FEATURE_NAMES = ("x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9")
TARGET_FIELDS = ("y_x", "y_y", "y_ang")
KEY_FIELDS = ("board_id", "component_id", "setting_id", "spec_name")

# Long target names used in reports, keyed to the FeatureRow attribute.
TARGETS = {
    "shift_x_ratio": "y_x",
    "shift_y_ratio": "y_y",
    "shift_angle_deg": "y_ang",
}
TARGET_ALIASES = {
    "x": "shift_x_ratio",
    "y": "shift_y_ratio",
    "angle": "shift_angle_deg",
    "ang": "shift_angle_deg",
    "y_x": "shift_x_ratio",
    "y_y": "shift_y_ratio",
    "y_ang": "shift_angle_deg",
}


def resolve_target(name: str) -> str:
    """Map a short or long target name to its canonical long name."""
    key = name.strip().lower()
    if key in TARGETS:
        return key
    try:
        return TARGET_ALIASES[key]
    except KeyError:
        raise ValueError(
            f"unknown target {name!r}; expected one of {sorted(TARGETS)} or {sorted(TARGET_ALIASES)}"
        ) from None


@dataclass(frozen=True)
class ComponentSpec:
    name: str
    kind: str
    length: float
    width: float

    def __post_init__(self):
        if self.kind not in ("resistor", "capacitor"):
            raise ValueError(f"kind must be resistor or capacitor, got {self.kind!r}")
        if not (self.width > 0 and self.length > 0):
            raise NonPositiveDimension(f"{self.name}: dimensions must be positive")
        if self.length < self.width:
            raise ValueError(f"{self.name}: length {self.length} < width {self.width}")


BUILTIN_SPECS = {
    s.name: s
    for s in (
        ComponentSpec("R01005", "resistor", 400.0, 200.0),
        ComponentSpec("R0201", "resistor", 600.0, 300.0),
        ComponentSpec("R0402", "resistor", 1000.0, 500.0),
        ComponentSpec("C01005", "capacitor", 400.0, 200.0),
        ComponentSpec("C0201", "capacitor", 600.0, 300.0),
        ComponentSpec("C0402", "capacitor", 1000.0, 500.0),
    )
}


@dataclass(frozen=True)
class PasteDeposit:
    board_id: str
    component_id: str
    pad_index: int
    offset_x: float
    offset_y: float
    angle: float
    volume_pct: float

    @property
    def key(self):
        return (self.board_id, self.component_id)


@dataclass(frozen=True)
class PlacementRecord:
    board_id: str
    component_id: str
    spec_name: str
    setting_id: int
    designed_offset_x: float
    designed_offset_y: float
    designed_angle: float
    place_pressure: float
    tested_offset_x: float
    tested_offset_y: float
    tested_angle: float

    @property
    def key(self):
        return (self.board_id, self.component_id)


@dataclass(frozen=True)
class FeatureRow:
    board_id: str
    component_id: str
    setting_id: int
    spec_name: str
    x1: float
    x2: float
    x3: float
    x4: float
    x5: float
    x6: float
    x7: float
    x8: float
    x9: float
    y_x: float
    y_y: float
    y_ang: float

    @property
    def features(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in FEATURE_NAMES)

    def target(self, name: str) -> float:
        return getattr(self, TARGETS[resolve_target(name)])


@dataclass(frozen=True)
class DirectionStats:
    avg: float
    std: float
    min: float
    max: float


@dataclass(frozen=True)
class ShiftSummary:
    setting_id: int
    count: int
    x: DirectionStats
    y: DirectionStats
    angle: DirectionStats


@dataclass
class JoinDiagnostics:
    """Records left over by :func:`join_spi_aoi`.

    ``orphan_placements`` holds ``(board_id, component_id, reason)``;
    ``orphan_deposits`` holds ``(board_id, component_id, pad_index)``.
    """

    orphan_placements: list = field(default_factory=list)
    orphan_deposits: list = field(default_factory=list)

    @property
    def clean(self):
        return not self.orphan_placements and not self.orphan_deposits


def pair_deposits(deposits: Sequence[PasteDeposit]) -> tuple[PasteDeposit, PasteDeposit]:
    deposits = list(deposits)
    if len(deposits) != 2:
        raise MissingDeposit(f"expected 2 paste deposits, got {len(deposits)}")
    a, b = deposits
    if a.key != b.key:
        raise ValueError(f"deposits belong to different components: {a.key} vs {b.key}")
    if a.pad_index == b.pad_index:
        raise DuplicatePad(f"{a.key}: both deposits claim pad {a.pad_index}")
    for d in (a, b):
        if d.pad_index not in (1, 2):
            raise ValueError(f"{d.key}: pad_index must be 1 or 2, got {d.pad_index}")
    return (a, b) if a.pad_index == 1 else (b, a)


def _check_finite(values: Iterable[float], what: str):
    for v in values:
        if not math.isfinite(v):
            raise NonFiniteInput(f"non-finite value in {what}: {v!r}")


def featurize(
    pair: tuple[PasteDeposit, PasteDeposit],
    placement: PlacementRecord,
    spec: ComponentSpec,
) -> FeatureRow:
    """Turn one component's SPI pair and AOI record into ratio features.

    The paste-pair center is the mean of the two deposit offsets and the
    pair angle is the mean deposit angle. The volume difference is pad 1
    minus pad 2.
    """
    if not (spec.length > 0 and spec.width > 0):
        raise NonPositiveDimension(f"{spec.name}: dimensions must be positive")
    p1, p2 = pair
    _check_finite(
        (p1.offset_x, p1.offset_y, p1.angle, p1.volume_pct,
         p2.offset_x, p2.offset_y, p2.angle, p2.volume_pct),
        f"deposits of {placement.component_id}",
    )
    _check_finite(
        (placement.designed_offset_x, placement.designed_offset_y, placement.designed_angle,
         placement.place_pressure, placement.tested_offset_x, placement.tested_offset_y,
         placement.tested_angle),
        f"placement {placement.component_id}",
    )
    length, width = spec.length, spec.width
    x6 = placement.designed_offset_x / length
    x7 = placement.designed_offset_y / width
    return FeatureRow(
        board_id=placement.board_id,
        component_id=placement.component_id,
        setting_id=placement.setting_id,
        spec_name=placement.spec_name,
        x1=(p1.offset_x + p2.offset_x) / 2 / length,
        x2=(p1.offset_y + p2.offset_y) / 2 / width,
        x3=(p1.angle + p2.angle) / 2,
        x4=(p1.volume_pct + p2.volume_pct) / 2 / 100,
        x5=(p1.volume_pct - p2.volume_pct) / 100,
        x6=x6,
        x7=x7,
        x8=placement.designed_angle,
        x9=placement.place_pressure,
        y_x=placement.tested_offset_x / length - x6,
        y_y=placement.tested_offset_y / width - x7,
        y_ang=placement.tested_angle - placement.designed_angle,
    )


def join_spi_aoi(
    deposits: Iterable[PasteDeposit],
    placements: Iterable[PlacementRecord],
    specs: Mapping[str, ComponentSpec] = BUILTIN_SPECS,
) -> tuple[list[FeatureRow], JoinDiagnostics]:
    """Join SPI deposits to AOI placements on (board_id, component_id).

    Placements without a valid deposit pair and deposits without a
    placement are reported in the diagnostics, never silently dropped.
    Raises UnknownSpec if a placement names a spec missing from ``specs``.
    """
    by_key = defaultdict(list)
    for d in deposits:
        by_key[d.key].append(d)

    diag = JoinDiagnostics()
    rows = []
    seen = set()
    for p in sorted(placements, key=lambda r: r.key):
        try:
            spec = specs[p.spec_name]
        except KeyError:
            raise UnknownSpec(f"unknown spec_name {p.spec_name!r} for {p.key}") from None
        seen.add(p.key)
        group = by_key.get(p.key, [])
        try:
            pair = pair_deposits(group)
        except (MissingDeposit, DuplicatePad, ValueError) as exc:
            diag.orphan_placements.append((p.board_id, p.component_id, str(exc)))
            continue
        rows.append(featurize(pair, p, spec))

    for key in sorted(by_key):
        if key not in seen:
            for d in sorted(by_key[key], key=lambda d: d.pad_index):
                diag.orphan_deposits.append((d.board_id, d.component_id, d.pad_index))
    return rows, diag


def _stats(values: Sequence[float]) -> DirectionStats:
    n = len(values)
    lo, hi = min(values), max(values)
    avg = math.fsum(values) / n
    # fsum/n can land one ulp outside [lo, hi] for constant samples
    avg = min(max(avg, lo), hi)
    if n > 1:
        var = math.fsum((v - avg) ** 2 for v in values) / (n - 1)
        std = math.sqrt(var)
    else:
        std = 0.0
    return DirectionStats(avg=avg, std=std, min=lo, max=hi)


def shift_summary(rows: Sequence[FeatureRow], spec: ComponentSpec) -> list[ShiftSummary]:
    """Per-setting shift statistics in physical units (um, um, degrees)."""
    groups = defaultdict(list)
    for r in rows:
        if r.spec_name != spec.name:
            raise MixedSpec(f"row {r.component_id} has spec {r.spec_name!r}, expected {spec.name!r}")
        groups[r.setting_id].append(r)
    out = []
    for sid in sorted(groups):
        g = groups[sid]
        out.append(
            ShiftSummary(
                setting_id=sid,
                count=len(g),
                x=_stats([r.y_x * spec.length for r in g]),
                y=_stats([r.y_y * spec.width for r in g]),
                angle=_stats([r.y_ang for r in g]),
            )
        )
    return out


def filter_spec(rows: Iterable[FeatureRow], spec_name: str | None) -> list[FeatureRow]:
    if spec_name is None or spec_name == "all":
        return list(rows)
    return [r for r in rows if r.spec_name == spec_name]


def feature_matrix(rows: Sequence[FeatureRow]) -> np.ndarray:
    return np.array([r.features for r in rows], dtype=float).reshape(len(rows), len(FEATURE_NAMES))


def target_vector(rows: Sequence[FeatureRow], target: str) -> np.ndarray:
    attr = TARGETS[resolve_target(target)]
    return np.array([getattr(r, attr) for r in rows], dtype=float)
