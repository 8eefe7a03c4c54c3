"""NHL rink geometry in feet.

Origin is the left-bottom corner as seen from the broadcast camera (camera at
the bottom of the frame). ``w`` runs along the rink length, ``h`` along the
width.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

RINK_LENGTH = 200.0  # [ft]
RINK_WIDTH = 85.0  # [ft]

BLUE_LINES = (75.0, 125.0)  # [ft]
CENTER_LINE = 100.0  # [ft]
GOAL_LINES = (11.0, 189.0)  # [ft]

_H_THIRDS = (28.34, 56.67)


@dataclass(frozen=True)
class RinkPoint:
    w: float
    h: float

    def __post_init__(self):
        w, h = float(self.w), float(self.h)
        if not (0.0 <= w <= RINK_LENGTH) or not (0.0 <= h <= RINK_WIDTH):
            raise ValueError(f"RinkPoint out of bounds: w={w!r}, h={h!r}")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "h", h)

    def as_tuple(self) -> Tuple[float, float]:
        return (self.w, self.h)

    def distance(self, other: "RinkPoint") -> float:
        return ((self.w - other.w) ** 2 + (self.h - other.h) ** 2) ** 0.5


@dataclass(frozen=True)
class Rect:
    """Half-open cell ``[w0, w1) x [h0, h1)``; closed on edges at the rink boundary."""

    w0: float
    w1: float
    h0: float
    h1: float

    @property
    def area(self) -> float:
        return (self.w1 - self.w0) * (self.h1 - self.h0)

    def contains(self, w: float, h: float) -> bool:
        in_w = self.w0 <= w < self.w1 or (w == self.w1 == RINK_LENGTH)
        in_h = self.h0 <= h < self.h1 or (h == self.h1 == RINK_WIDTH)
        return in_w and in_h


@dataclass(frozen=True)
class ZonePartition:
    name: str
    bands: Tuple[Rect, ...]
    labels: Tuple[str, ...]

    def __len__(self):
        return len(self.bands)

    def index_of(self, label: str) -> int:
        return self.labels.index(label)


def _grid(w_edges, h_edges):
    cells = []
    for i in range(len(w_edges) - 1):
        for j in range(len(h_edges) - 1):
            cells.append(Rect(w_edges[i], w_edges[i + 1], h_edges[j], h_edges[j + 1]))
    return tuple(cells)


W_BANDS = (0.0, BLUE_LINES[0], BLUE_LINES[1], RINK_LENGTH)

FIVE_ZONE = ZonePartition(
    name="five_zone",
    bands=(
        Rect(0.0, BLUE_LINES[0], 0.0, RINK_WIDTH / 2),
        Rect(0.0, BLUE_LINES[0], RINK_WIDTH / 2, RINK_WIDTH),
        Rect(BLUE_LINES[0], BLUE_LINES[1], 0.0, RINK_WIDTH),
        Rect(BLUE_LINES[1], RINK_LENGTH, 0.0, RINK_WIDTH / 2),
        Rect(BLUE_LINES[1], RINK_LENGTH, RINK_WIDTH / 2, RINK_WIDTH),
    ),
    labels=("defensive_lower", "defensive_upper", "neutral", "offensive_lower", "offensive_upper"),
)

# column-major over w-bands: index = 3 * w_band + h_band
NINE_ZONE = ZonePartition(
    name="nine_zone",
    bands=_grid(W_BANDS, (0.0,) + _H_THIRDS + (RINK_WIDTH,)),
    labels=tuple(
        f"{wb}_{hb}"
        for wb in ("defensive", "neutral", "offensive")
        for hb in ("lower", "middle", "upper")
    ),
)

PARTITIONS = {p.name: p for p in (FIVE_ZONE, NINE_ZONE)}


def get_partition(name: str) -> ZonePartition:
    try:
        return PARTITIONS[name]
    except KeyError:
        raise ValueError(f"unknown partition {name!r}; expected one of {sorted(PARTITIONS)}") from None


def zone_of(p: RinkPoint, partition: ZonePartition) -> int:
    """Index of the cell containing ``p``; boundary points go to the lower-index cell."""
    for i, cell in enumerate(partition.bands):
        if cell.contains(p.w, p.h):
            return i
    raise AssertionError(f"partition {partition.name} does not cover {p}")


def faceoff_spots() -> List[RinkPoint]:
    """The nine faceoff dots: center ice, four end-zone and four neutral-zone dots."""
    spots = [RinkPoint(CENTER_LINE, RINK_WIDTH / 2)]
    for w in (31.0, 169.0, 80.0, 120.0):
        for h in (20.5, 64.5):
            spots.append(RinkPoint(w, h))
    return spots


def in_offensive_or_defensive(w: float) -> bool:
    return w < BLUE_LINES[0] or w >= BLUE_LINES[1]


def in_neutral(w: float) -> bool:
    return BLUE_LINES[0] <= w < BLUE_LINES[1]
