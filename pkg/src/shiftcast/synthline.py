"""Synthetic SPI/AOI data with the 33-setting DOE layout.

The real line data is not available, so this module fabricates it:
33 settings x component types x replications, SPI actuals scattered
around the designed paste values, and component shifts drawn from a
configurable ground-truth function plus noise.

Only settings 1-5 and 33 are known designed values (capacitor 0402);
settings 6-32 are synthetic, drawn by a Latin-hypercube sampler with a
fixed seed over the ranges and discrete levels the known rows span.
The ground-truth function is a test fixture, not a physical model; its
noise is scaled so per-setting spreads look like measured 0402
statistics (about 10 um in X, 20 um in Y, 0.5 deg in angle).
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .domain import (
    BUILTIN_SPECS,
    FEATURE_NAMES,
    ComponentSpec,
    FeatureRow,
    PasteDeposit,
    PlacementRecord,
    featurize,
)
from .errors import ConfigError

# Designed values are for C0402 (1000 x 500 um); other sizes scale with their dimensions.
BASE_LENGTH = 1000.0
BASE_WIDTH = 500.0
DESIGN_SEED = 20_190_033

ANGLE_LEVELS = (-6.92, 0.0, 6.91, 6.92)
VOLUME_LEVELS = (80.0, 120.0)
VOLUME_DIFF_LEVELS = (-40.0, 0.0)
PRESSURE_LEVELS = (0.0, 150.0)


@dataclass(frozen=True)
class DoeSetting:
    setting_id: int
    paste_offset_x: float
    paste_offset_y: float
    paste_angle: float
    avg_volume_pct: float
    diff_volume_pct: float
    part_offset_x: float
    part_offset_y: float
    part_angle: float
    place_pressure: float
    synthetic: bool = False

    def design_features(self) -> tuple[float, ...]:
        """Ratio features of the designed (unperturbed) values."""
        return (
            self.paste_offset_x / BASE_LENGTH,
            self.paste_offset_y / BASE_WIDTH,
            self.paste_angle,
            self.avg_volume_pct / 100,
            self.diff_volume_pct / 100,
            self.part_offset_x / BASE_LENGTH,
            self.part_offset_y / BASE_WIDTH,
            self.part_angle,
            self.place_pressure,
        )


KNOWN_SETTINGS = (
    DoeSetting(1, 76.84, 71.12, -6.92, 80.0, 0.0, 235.37, 0.0, -6.92, 150.0),
    DoeSetting(2, 76.84, 71.12, 6.92, 120.0, -40.0, 158.43, 0.0, 0.0, 0.0),
    DoeSetting(3, 76.84, 71.12, 6.92, 120.0, 0.0, 76.85, 71.12, 0.0, 150.0),
    DoeSetting(4, 65.92, 129.56, -6.92, 80.0, -40.0, 81.49, 0.0, 0.0, 150.0),
    DoeSetting(5, 175.0, 84.0, 6.92, 120.0, -40.0, 253.96, 94.36, 0.0, 0.0),
    DoeSetting(33, 141.76, 220.23, 6.91, 120.0, 0.0, 170.73, 111.81, 0.0, 150.0),
)


def _span(attr):
    values = [getattr(s, attr) for s in KNOWN_SETTINGS]
    return min(values), max(values)


def builtin_design() -> list[DoeSetting]:
    """The 33 DOE settings: six known rows plus 27 Latin-hypercube rows."""
    known = {s.setting_id: s for s in KNOWN_SETTINGS}
    missing = [sid for sid in range(1, 34) if sid not in known]
    sampler = qmc.LatinHypercube(d=9, seed=DESIGN_SEED)
    u = sampler.random(len(missing))

    def level(col, levels):
        return [levels[min(int(v * len(levels)), len(levels) - 1)] for v in u[:, col]]

    def scale(col, attr):
        lo, hi = _span(attr)
        return [round(lo + v * (hi - lo), 2) for v in u[:, col]]

    cols = {
        "paste_offset_x": scale(0, "paste_offset_x"),
        "paste_offset_y": scale(1, "paste_offset_y"),
        "paste_angle": level(2, ANGLE_LEVELS),
        "avg_volume_pct": level(3, VOLUME_LEVELS),
        "diff_volume_pct": level(4, VOLUME_DIFF_LEVELS),
        "part_offset_x": scale(5, "part_offset_x"),
        "part_offset_y": scale(6, "part_offset_y"),
        "part_angle": level(7, ANGLE_LEVELS),
        "place_pressure": level(8, PRESSURE_LEVELS),
    }
    for k, sid in enumerate(missing):
        known[sid] = DoeSetting(sid, **{name: vals[k] for name, vals in cols.items()}, synthetic=True)
    return [known[sid] for sid in range(1, 34)]


@dataclass(frozen=True)
class TargetCoefficients:
    """g(x) = intercept + linear.x [+ x5*x6*inter_56 + x5*x7*inter_57 + kappa*tanh(4*x1)]."""

    intercept: float
    linear: tuple[float, ...]
    inter_56: float = 0.0
    inter_57: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if len(self.linear) != len(FEATURE_NAMES):
            raise ConfigError("need one linear coefficient per feature")
        object.__setattr__(self, "linear", tuple(float(a) for a in self.linear))

    def scaled(self, factor: float) -> "TargetCoefficients":
        return replace(
            self,
            linear=tuple(a * factor for a in self.linear),
            inter_56=self.inter_56 * factor,
            inter_57=self.inter_57 * factor,
            kappa=self.kappa * factor,
        )


@dataclass(frozen=True)
class GroundTruth:
    x: TargetCoefficients
    y: TargetCoefficients
    angle: TargetCoefficients

    def targets(self):
        return (self.x, self.y, self.angle)


def _eval(mode: str, coef: TargetCoefficients, x: Sequence[float]) -> float:
    value = coef.intercept + float(np.dot(coef.linear, x))
    if mode == "nonlinear":
        x1, x5, x6, x7 = x[0], x[4], x[5], x[6]
        value += coef.inter_56 * x5 * x6 + coef.inter_57 * x5 * x7 + coef.kappa * float(np.tanh(4.0 * x1))
    return value


def ground_truth(mode: str, coefficients: GroundTruth, x: Sequence[float]) -> tuple[float, float, float]:
    """Noise-free (y_x, y_y, y_ang) for predictor vector ``x`` (x1..x9)."""
    if mode not in ("linear", "nonlinear"):
        raise ConfigError(f"mode must be 'linear' or 'nonlinear', got {mode!r}")
    x = tuple(float(v) for v in x)
    return tuple(_eval(mode, c, x) for c in coefficients.targets())


# Shape of the default response surface. Intercepts are filled in by
# _calibrate so the noise-free response at design setting 1 equals the
# measured setting-1 means for 0402: +6.8 um, -12.4 um, +2.7 deg.
_SHAPE = GroundTruth(
    x=TargetCoefficients(
        0.0, (0.08, 0.0, 0.0005, 0.01, 0.02, -0.08, 0.0, 0.0004, 0.00003),
        inter_56=0.5, inter_57=0.0, kappa=0.01,
    ),
    y=TargetCoefficients(
        0.0, (0.0, 0.06, 0.001, -0.02, 0.03, 0.0, -0.12, 0.001, -0.00005),
        inter_56=0.0, inter_57=1.5, kappa=0.02,
    ),
    angle=TargetCoefficients(
        0.0, (2.0, -1.0, 0.15, 0.5, 1.0, -2.0, 1.0, -0.2, 0.003),
        inter_56=3.0, inter_57=3.0, kappa=1.0,
    ),
)
SETTING1_MEANS = (6.8 / BASE_LENGTH, -12.4 / BASE_WIDTH, 2.7)


def _calibrate(mode: str, shape: GroundTruth) -> GroundTruth:
    x = KNOWN_SETTINGS[0].design_features()
    parts = []
    for coef, target in zip(shape.targets(), SETTING1_MEANS):
        raw = _eval(mode, replace(coef, intercept=0.0), x)
        parts.append(replace(coef, intercept=target - raw))
    return GroundTruth(*parts)


def default_coefficients(mode: str = "nonlinear") -> GroundTruth:
    if mode not in ("linear", "nonlinear"):
        raise ConfigError(f"mode must be 'linear' or 'nonlinear', got {mode!r}")
    return _calibrate(mode, _SHAPE)


@dataclass(frozen=True)
class NoiseStd:
    x: float = 0.0095  # ratio of length
    y: float = 0.036  # ratio of width
    angle: float = 0.45  # degrees


@dataclass(frozen=True)
class SpiNoiseStd:
    offset_um: float = 5.0
    angle_deg: float = 0.3
    volume_pct: float = 3.0


@dataclass(frozen=True)
class GeneratorConfig:
    mode: str = "nonlinear"
    noise_std: NoiseStd = field(default_factory=NoiseStd)
    spi_noise_std: SpiNoiseStd = field(default_factory=SpiNoiseStd)
    replications: int = 20
    seed: int = 0
    coefficients: GroundTruth | None = None

    def __post_init__(self):
        if self.mode not in ("linear", "nonlinear"):
            raise ConfigError(f"mode must be 'linear' or 'nonlinear', got {self.mode!r}")
        if int(self.replications) < 1:
            raise ConfigError("replications must be >= 1")
        if int(self.seed) < 0:
            raise ConfigError("seed must be non-negative")
        for name, v in list(asdict(self.noise_std).items()) + list(asdict(self.spi_noise_std).items()):
            if not v >= 0:
                raise ConfigError(f"noise std {name} must be >= 0, got {v!r}")

    @classmethod
    def noiseless(cls, mode="linear", **kw):
        return cls(mode=mode, noise_std=NoiseStd(0.0, 0.0, 0.0), spi_noise_std=SpiNoiseStd(0.0, 0.0, 0.0), **kw)

    def resolved_coefficients(self) -> GroundTruth:
        return self.coefficients if self.coefficients is not None else default_coefficients(self.mode)


@dataclass
class GeneratedData:
    deposits: list[PasteDeposit]
    placements: list[PlacementRecord]
    truth: list[FeatureRow]
    noise_free: list[tuple[float, float, float]]


def _spec_stream(seed: int, spec_name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(spec_name.encode())]))


def generate(
    config: GeneratorConfig = GeneratorConfig(),
    design: Sequence[DoeSetting] | None = None,
    specs: Sequence[ComponentSpec] | None = None,
) -> GeneratedData:
    """Fabricate SPI deposits, AOI placements and the matching truth rows.

    Rows come out ordered by (board, setting, replication); every component
    type has its own board and its own random substream derived from
    ``config.seed`` and the type name.
    """
    design = builtin_design() if design is None else list(design)
    specs = list(BUILTIN_SPECS.values()) if specs is None else list(specs)
    coef = config.resolved_coefficients()
    spi, noise = config.spi_noise_std, config.noise_std

    out = GeneratedData([], [], [], [])
    for spec in specs:
        rng = _spec_stream(config.seed, spec.name)
        sx, sy = spec.length / BASE_LENGTH, spec.width / BASE_WIDTH
        board = f"BRD-{spec.name}"
        for s in design:
            paste_x, paste_y = s.paste_offset_x * sx, s.paste_offset_y * sy
            part_x, part_y = s.part_offset_x * sx, s.part_offset_y * sy
            for rep in range(1, config.replications + 1):
                comp = f"{spec.name}-S{s.setting_id:02d}-R{rep:02d}"
                # fixed draw count per component keeps streams aligned across noise settings
                d = rng.standard_normal(11)
                cx = paste_x + spi.offset_um * d[0]
                cy = paste_y + spi.offset_um * d[1]
                ca = s.paste_angle + spi.angle_deg * d[2]
                v1 = s.avg_volume_pct + s.diff_volume_pct / 2 + spi.volume_pct * d[3]
                v2 = s.avg_volume_pct - s.diff_volume_pct / 2 + spi.volume_pct * d[4]
                # deposits sit asymmetrically about the pair center
                hx, hy, ha = 0.5 * spi.offset_um * d[5], 0.5 * spi.offset_um * d[6], 0.5 * spi.angle_deg * d[7]
                pads = (
                    PasteDeposit(board, comp, 1, cx + hx, cy + hy, ca + ha, v1),
                    PasteDeposit(board, comp, 2, cx - hx, cy - hy, ca - ha, v2),
                )
                designed = PlacementRecord(
                    board, comp, spec.name, s.setting_id, part_x, part_y, s.part_angle,
                    s.place_pressure, part_x, part_y, s.part_angle,
                )
                x = featurize(pads, designed, spec).features
                g = ground_truth(config.mode, coef, x)
                shift = (
                    g[0] + noise.x * d[8],
                    g[1] + noise.y * d[9],
                    g[2] + noise.angle * d[10],
                )
                placement = replace(
                    designed,
                    tested_offset_x=part_x + shift[0] * spec.length,
                    tested_offset_y=part_y + shift[1] * spec.width,
                    tested_angle=s.part_angle + shift[2],
                )
                row = featurize(pads, placement, spec)
                out.deposits.extend(pads)
                out.placements.append(placement)
                out.truth.append(row)
                out.noise_free.append(g)
    return out


def manifest(config: GeneratorConfig, design: Sequence[DoeSetting], counts: dict) -> dict:
    coef = config.resolved_coefficients()
    return {
        "generator": "shiftcast.synthline",
        "mode": config.mode,
        "seed": config.seed,
        "replications": config.replications,
        "noise_std": asdict(config.noise_std),
        "spi_noise_std": asdict(config.spi_noise_std),
        "ground_truth": {
            name: asdict(c) for name, c in zip(("shift_x_ratio", "shift_y_ratio", "shift_angle_deg"), coef.targets())
        },
        "calibration": {
            "setting1_means": list(SETTING1_MEANS),
            "design_seed": DESIGN_SEED,
            "base_dimensions_um": [BASE_LENGTH, BASE_WIDTH],
        },
        "design": [asdict(s) for s in design],
        "counts": counts,
    }
