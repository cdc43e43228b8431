"""Circumplex model of affect over normalized valence-arousal coordinates.

Both axes live in [0, 1] with the neutral point at (0.5, 0.5). Angles are
measured counterclockwise from the positive-valence axis, so 90 degrees is
maximal arousal at neutral valence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Final, Iterable, Sequence

VA_EPSILON: Final[float] = 1e-9
NEUTRAL_EPSILON: Final[float] = 0.05
LOW_BAND_UPPER: Final[float] = 0.35
HIGH_BAND_LOWER: Final[float] = 0.65

FAMILIES: Final[tuple[str, ...]] = (
    "positive-activated",
    "positive-deactivated",
    "negative-activated",
    "negative-deactivated",
    "neutral",
)
BANDS: Final[tuple[str, ...]] = ("low", "medium", "high")

# Russell's layout; only distress is annotated explicitly in the source figure.
DEFAULT_OCTANTS: Final[tuple[tuple[float, str], ...]] = (
    (0.0, "pleasure"),
    (45.0, "excitement"),
    (90.0, "arousal/alert"),
    (135.0, "distress"),
    (180.0, "misery"),
    (225.0, "depression/sadness"),
    (270.0, "sleepiness"),
    (315.0, "contentment"),
)


@dataclass(frozen=True, eq=False)
class VAPair:
    """A normalized (valence, arousal) coordinate.

    Equality is component-wise within ``VA_EPSILON``; instances are therefore
    unhashable.
    """

    valence: float
    arousal: float

    def __post_init__(self) -> None:
        for name in ("valence", "arousal"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError(f"{name} must be a real number, got {value!r}")
            if not 0.0 <= value <= 1.0:  # also rejects NaN
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
            object.__setattr__(self, name, float(value))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VAPair):
            return NotImplemented
        return (
            abs(self.valence - other.valence) <= VA_EPSILON
            and abs(self.arousal - other.arousal) <= VA_EPSILON
        )

    __hash__ = None  # type: ignore[assignment]

    def to_dict(self) -> dict[str, float]:
        return {"valence": self.valence, "arousal": self.arousal}

    @classmethod
    def from_dict(cls, data: dict) -> VAPair:
        return cls(data["valence"], data["arousal"])


@dataclass(frozen=True)
class CircumplexGeometry:
    center: VAPair = field(default_factory=lambda: VAPair(0.5, 0.5))
    radius: float = 0.5

    def __post_init__(self) -> None:
        if not (self.radius > 0) or math.isinf(self.radius):
            raise ValueError(f"radius must be a positive finite number, got {self.radius!r}")
        c = self.center
        for axis, value in (("valence", c.valence), ("arousal", c.arousal)):
            if value - self.radius < -VA_EPSILON or value + self.radius > 1.0 + VA_EPSILON:
                raise ValueError(
                    f"circle of radius {self.radius} around {axis}={value} leaves [0, 1]"
                )

    def to_dict(self) -> dict:
        return {"center": self.center.to_dict(), "radius": self.radius}

    @classmethod
    def from_dict(cls, data: dict) -> CircumplexGeometry:
        return cls(VAPair.from_dict(data["center"]), float(data["radius"]))


DEFAULT_GEOMETRY: Final[CircumplexGeometry] = CircumplexGeometry()


@dataclass(frozen=True)
class OctantTable:
    entries: tuple[tuple[float, str], ...] = DEFAULT_OCTANTS

    def __post_init__(self) -> None:
        entries = tuple((float(a), str(label)) for a, label in self.entries)
        if len(entries) != 8:
            raise ValueError(f"octant table needs 8 entries, got {len(entries)}")
        centers = sorted(a for a, _ in entries)
        if centers != [45.0 * k for k in range(8)]:
            raise ValueError(f"octant centers must be 0, 45, ..., 315; got {centers}")
        labels = [label for _, label in entries]
        if len(set(labels)) != 8 or "neutral" in labels:
            raise ValueError("octant labels must be unique and may not be 'neutral'")
        object.__setattr__(self, "entries", tuple(sorted(entries)))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for _, label in self.entries)

    def label_for(self, angle_deg: float) -> str:
        """Label of the nearest center; exact boundaries go to the clockwise neighbour."""
        best: tuple[float, float, str] | None = None
        for center, label in self.entries:
            diff = (angle_deg - center) % 360.0
            dist = min(diff, 360.0 - diff)
            # a tie sits at +22.5 from the clockwise neighbour; prefer that side
            side = 0.0 if diff <= 180.0 else 1.0
            key = (round(dist, 9), side, label)
            if best is None or key[:2] < best[:2]:
                best = key
        assert best is not None
        return best[2]


DEFAULT_OCTANT_TABLE: Final[OctantTable] = OctantTable()


@dataclass(frozen=True)
class InferredState:
    angle_deg: float
    extremity: float
    valence_band: str
    arousal_band: str
    intensity_label: str
    octant_label: str
    family: str

    def to_dict(self) -> dict:
        return {
            "angle_deg": self.angle_deg,
            "extremity": self.extremity,
            "valence_band": self.valence_band,
            "arousal_band": self.arousal_band,
            "intensity_label": self.intensity_label,
            "octant_label": self.octant_label,
            "family": self.family,
        }


def point_at(angle_deg: float, geometry: CircumplexGeometry = DEFAULT_GEOMETRY) -> VAPair:
    """The point on the circumplex rim at ``angle_deg``."""
    theta = math.radians(angle_deg)
    c = geometry.center
    v = c.valence + geometry.radius * math.cos(theta)
    a = c.arousal + geometry.radius * math.sin(theta)
    return VAPair(min(1.0, max(0.0, v)), min(1.0, max(0.0, a)))


def prototypical_va_pairs(
    count: int, geometry: CircumplexGeometry = DEFAULT_GEOMETRY
) -> list[VAPair]:
    """``count`` rim points evenly spaced from 0 degrees, counterclockwise."""
    if isinstance(count, bool) or not isinstance(count, int) or count < 1:
        raise ValueError(f"count must be a positive integer, got {count!r}")
    step = 360.0 / count
    return [point_at(k * step, geometry) for k in range(count)]


def polar_of(
    va: VAPair, geometry: CircumplexGeometry = DEFAULT_GEOMETRY
) -> tuple[float, float]:
    """Return ``(angle_deg in [0, 360), extremity in [0, 1])``."""
    dv = va.valence - geometry.center.valence
    da = va.arousal - geometry.center.arousal
    distance = math.hypot(dv, da)
    if distance == 0.0:
        return 0.0, 0.0
    angle = math.degrees(math.atan2(da, dv)) % 360.0
    if angle >= 360.0:
        angle = 0.0
    return angle, min(1.0, distance / geometry.radius)


def band_of(value: float) -> str:
    if value < LOW_BAND_UPPER:
        return "low"
    if value > HIGH_BAND_LOWER:
        return "high"
    return "medium"


def _family(dv: float, da: float, extremity: float) -> str:
    if extremity < NEUTRAL_EPSILON:
        return "neutral"
    # on-axis points (offset within VA_EPSILON) count as positive / activated
    polarity = "negative" if dv < -VA_EPSILON else "positive"
    activation = "deactivated" if da < -VA_EPSILON else "activated"
    return f"{polarity}-{activation}"


def infer_state(
    va: VAPair,
    geometry: CircumplexGeometry = DEFAULT_GEOMETRY,
    table: OctantTable = DEFAULT_OCTANT_TABLE,
) -> InferredState:
    angle, extremity = polar_of(va, geometry)
    arousal_band = band_of(va.arousal)
    family = _family(
        va.valence - geometry.center.valence, va.arousal - geometry.center.arousal, extremity
    )
    return InferredState(
        angle_deg=angle,
        extremity=extremity,
        valence_band=band_of(va.valence),
        arousal_band=arousal_band,
        intensity_label=arousal_band,
        octant_label="neutral" if family == "neutral" else table.label_for(angle),
        family=family,
    )


def aggregate_group(
    vas: Sequence[VAPair], weights: Iterable[float] | None = None
) -> VAPair:
    """Component-wise (weighted) mean of a group's coordinates."""
    vas = list(vas)
    if not vas:
        raise ValueError("cannot aggregate an empty group")
    if weights is None:
        ws = [1.0] * len(vas)
    else:
        ws = [float(w) for w in weights]
        if len(ws) != len(vas):
            raise ValueError(f"{len(ws)} weights for {len(vas)} pairs")
        if any(w < 0 or math.isnan(w) for w in ws):
            raise ValueError("weights must be nonnegative")
    total = math.fsum(ws)
    if total <= 0:
        raise ValueError("weights must have a positive sum")
    v = math.fsum(w * p.valence for w, p in zip(ws, vas)) / total
    a = math.fsum(w * p.arousal for w, p in zip(ws, vas)) / total
    return VAPair(min(1.0, max(0.0, v)), min(1.0, max(0.0, a)))
