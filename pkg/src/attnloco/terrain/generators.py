"""Procedural terrain tiles with ten difficulty levels.

Every family is parameterised by ``(easy, hard)`` pairs that are linearly
interpolated over levels 0..9. The defaults below are tunable configuration;
only the rough-terrain amplitude cap (8 cm), the small-stone minimum width
(12 cm) and the narrow-beam minimum width (15 cm) are fixed requirements.

Tiles are square, ``tile_size`` metres across, with a flat steppable spawn
platform in the middle. Void cells (between stones, beams, in gaps) carry
``support=False`` and the sentinel height :data:`VOID_HEIGHT`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from .field import VOID_HEIGHT, HeightField

NUM_LEVELS = 10

FAMILIES = (
    "flat",
    "stairs",
    "pits",
    "rough",
    "pallets",
    "gaps",
    "grid_stones",
    "beams",
    "pentagon_stones",
    "rough_hills",
    "rings",
    "grid_stones_small",
    "narrow_beams",
    "single_column_stones",
    "narrow_pallets",
    "consecutive_gaps",
    "narrow_stairs",
)

BASE_TERRAINS = {
    "quadruped": ("stairs", "pits", "rough", "pallets", "gaps", "grid_stones"),
    "biped": ("stairs", "pits", "rough", "pallets", "gaps", "grid_stones", "beams"),
}
FINE_TUNING_TERRAINS = {
    "quadruped": ("pentagon_stones", "rough_hills", "rings", "beams", "grid_stones_small", "narrow_beams"),
    "biped": ("pentagon_stones", "single_column_stones", "narrow_pallets", "consecutive_gaps", "narrow_stairs"),
}

ROUGH_AMPLITUDE_CAP = 0.08
SMALL_STONE_MIN_WIDTH = 0.12
NARROW_BEAM_MIN_WIDTH = 0.15
MIN_FEATURE_WIDTH = 0.10
EXIT_RIM = 0.3  # m of solid ground along every tile edge; desk-scale choice
BORDER_MARGIN = 1.0  # m of flat ground around the stitched terrain; desk-scale choice

# family -> parameter -> (level 0, level 9)
DEFAULT_RAMPS: dict[str, dict[str, tuple[float, float]]] = {
    "flat": {},
    "stairs": {"step_height": (0.05, 0.20), "step_width": (0.30, 0.30)},
    "pits": {"depth": (0.05, 0.30), "ring_width": (1.0, 1.0)},
    "rough": {"amplitude": (0.02, 0.08)},
    "pallets": {"gap": (0.10, 0.40), "pallet_width": (0.40, 0.30), "height_range": (0.0, 0.10)},
    "gaps": {"gap_width": (0.10, 0.60)},
    "grid_stones": {"stone_size": (0.50, 0.20), "spacing": (0.05, 0.30), "height_range": (0.0, 0.10)},
    "beams": {"beam_width": (0.50, 0.25), "num_beams": (12, 6)},
    "pentagon_stones": {"radius": (0.30, 0.13), "spacing": (0.10, 0.30), "height_range": (0.0, 0.08)},
    "rough_hills": {"slope": (0.0, 0.40), "amplitude": (0.02, 0.05)},
    "rings": {"step_height": (0.05, 0.20), "ring_width": (0.60, 0.40)},
    "grid_stones_small": {"stone_size": (0.30, 0.12), "spacing": (0.10, 0.25), "height_range": (0.0, 0.05)},
    "narrow_beams": {"beam_width": (0.30, 0.15), "num_beams": (8, 8)},
    "single_column_stones": {
        "stone_length": (0.50, 0.25),
        "column_width": (0.60, 0.30),
        "spacing": (0.10, 0.35),
        "height_range": (0.0, 0.15),
    },
    "narrow_pallets": {"gap": (0.10, 0.30), "pallet_width": (0.25, 0.12), "height_range": (0.0, 0.08)},
    "consecutive_gaps": {"gap_width": (0.10, 0.40), "ground_width": (0.80, 0.50)},
    "narrow_stairs": {"step_height": (0.05, 0.15), "step_width": (0.30, 0.30), "corridor_width": (1.0, 0.5)},
}

# The parameter that makes a family harder, and whether harder means larger (+1) or smaller (-1).
GOVERNING_PARAMETER = {
    "stairs": ("step_height", +1),
    "pits": ("depth", +1),
    "rough": ("amplitude", +1),
    "pallets": ("gap", +1),
    "gaps": ("gap_width", +1),
    "grid_stones": ("spacing", +1),
    "beams": ("beam_width", -1),
    "pentagon_stones": ("spacing", +1),
    "rough_hills": ("slope", +1),
    "rings": ("step_height", +1),
    "grid_stones_small": ("spacing", +1),
    "narrow_beams": ("beam_width", -1),
    "single_column_stones": ("spacing", +1),
    "narrow_pallets": ("gap", +1),
    "consecutive_gaps": ("gap_width", +1),
    "narrow_stairs": ("step_height", +1),
}


@dataclass(frozen=True)
class TerrainSpec:
    family: str
    level: int
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown terrain family {self.family!r}")
        if not 0 <= int(self.level) < NUM_LEVELS:
            raise ConfigurationError(f"terrain level must be in [0, {NUM_LEVELS - 1}], got {self.level}")


def terrain_families(robot: str, stage: int) -> tuple[str, ...]:
    """Stage 1 uses the base set; stage 2 adds the fine-tuning set."""
    if robot not in BASE_TERRAINS:
        raise ConfigurationError(f"unknown robot profile {robot!r}")
    if stage == 1:
        return BASE_TERRAINS[robot]
    if stage == 2:
        return BASE_TERRAINS[robot] + FINE_TUNING_TERRAINS[robot]
    raise ConfigurationError(f"stage must be 1 or 2, got {stage}")


def merge_ramps(overrides: dict | None) -> dict:
    ramps = {fam: dict(params) for fam, params in DEFAULT_RAMPS.items()}
    for fam, params in (overrides or {}).items():
        if fam not in ramps:
            raise ConfigurationError(f"terrain ramp for unknown family {fam!r}")
        for key, pair in params.items():
            if key not in ramps[fam]:
                raise ConfigurationError(f"unknown ramp parameter {fam}.{key}")
            easy, hard = (float(v) for v in pair)
            ramps[fam][key] = (easy, hard)
    _validate_ramps(ramps)
    return ramps


def _validate_ramps(ramps: dict) -> None:
    for fam, params in ramps.items():
        for key, (easy, hard) in params.items():
            if easy < 0 or hard < 0:
                raise ConfigurationError(f"{fam}.{key} must be nonnegative")
    for fam, (key, sign) in GOVERNING_PARAMETER.items():
        easy, hard = ramps[fam][key]
        if sign * (hard - easy) < 0:
            raise ConfigurationError(f"{fam}.{key} must get {'larger' if sign > 0 else 'smaller'} from easy to hard")
    if max(ramps["rough"]["amplitude"]) > ROUGH_AMPLITUDE_CAP + 1e-12:
        raise ConfigurationError(f"rough amplitude may not exceed {ROUGH_AMPLITUDE_CAP} m")
    if min(ramps["grid_stones_small"]["stone_size"]) < SMALL_STONE_MIN_WIDTH - 1e-12:
        raise ConfigurationError(f"grid_stones_small stones must be at least {SMALL_STONE_MIN_WIDTH} m wide")
    if min(ramps["narrow_beams"]["beam_width"]) < NARROW_BEAM_MIN_WIDTH - 1e-12:
        raise ConfigurationError(f"narrow beams must be at least {NARROW_BEAM_MIN_WIDTH} m wide")
    widths = {
        "grid_stones": "stone_size", "grid_stones_small": "stone_size", "beams": "beam_width",
        "narrow_beams": "beam_width", "pallets": "pallet_width", "narrow_pallets": "pallet_width",
        "single_column_stones": "stone_length", "stairs": "step_width", "narrow_stairs": "step_width",
    }
    for fam, key in widths.items():
        if min(ramps[fam][key]) < MIN_FEATURE_WIDTH - 1e-12:
            raise ConfigurationError(f"{fam}.{key} must be at least {MIN_FEATURE_WIDTH} m (map resolution)")
    if min(ramps["pentagon_stones"]["radius"]) * 2 * math.cos(math.pi / 5) < MIN_FEATURE_WIDTH:
        raise ConfigurationError("pentagon stones narrower than the map resolution")


def level_params(family: str, level: int, ramps: dict | None = None) -> dict[str, float]:
    ramps = ramps or DEFAULT_RAMPS
    t = level / (NUM_LEVELS - 1)
    return {k: easy + t * (hard - easy) for k, (easy, hard) in ramps[family].items()}


class _Tile:
    """Cell-centre coordinates of a tile, relative to its centre."""

    def __init__(self, size: float, resolution: float, platform: float):
        self.n = int(round(size / resolution))
        self.res = resolution
        self.size = self.n * resolution
        c = (np.arange(self.n) + 0.5) * resolution - self.size / 2.0
        self.X, self.Y = np.meshgrid(c, c, indexing="ij")
        self.cheb = np.maximum(np.abs(self.X), np.abs(self.Y))
        self.radius = np.hypot(self.X, self.Y)
        self.platform = platform
        self.on_platform = self.cheb <= platform

    def cells(self, length: float) -> int:
        """Cells needed to cover ``length`` (never fewer than the length)."""
        return max(1, int(math.ceil(length / self.res - 1e-9)))


def _flat(p, rng, t):
    return np.zeros((t.n, t.n)), np.ones((t.n, t.n), bool)


def _bands(dist, start: float, width: float, t) -> np.ndarray:
    """Band index of each cell; a partial band at the tile edge merges into the last full one."""
    last = max(1.0, math.floor((t.size / 2.0 - start) / width + 1e-9))
    return np.minimum(np.ceil(np.maximum(dist - start, 0.0) / width), last)


def _stairs(p, rng, t):
    sign = 1.0 if rng.random() < 0.5 else -1.0
    steps = _bands(t.cheb, t.platform, p["step_width"], t)
    h = sign * p["step_height"] * steps
    return h, np.ones_like(h, bool)


def _stairs_along_x(p, rng, t):
    """A staircase corridor along x with void on both sides."""
    sign = 1.0 if rng.random() < 0.5 else -1.0
    steps = _bands(np.abs(t.X), t.platform, p["step_width"], t)
    h = sign * p["step_height"] * steps
    half = t.cells(p["corridor_width"]) * t.res / 2.0
    support = (np.abs(t.Y) <= half) | t.on_platform
    return h, support


def _pits(p, rng, t):
    ring = _bands(t.cheb, t.platform, p["ring_width"], t)
    h = np.where(ring % 2 == 1, -p["depth"], 0.0)
    return h, np.ones_like(h, bool)


def _rough(p, rng, t, block: int = 2):
    nb = -(-t.n // block)
    noise = rng.uniform(-p["amplitude"], p["amplitude"], size=(nb, nb))
    h = np.kron(noise, np.ones((block, block)))[: t.n, : t.n]
    h[t.on_platform] = 0.0
    return h, np.ones_like(h, bool)


def _rough_hills(p, rng, t):
    sign = 1.0 if rng.random() < 0.5 else -1.0
    h, _ = _rough({"amplitude": p["amplitude"]}, rng, t)
    h = h + sign * p["slope"] * np.maximum(t.cheb - t.platform, 0.0)
    h[t.on_platform] = 0.0
    return h, np.ones_like(h, bool)


def _pallets(p, rng, t):
    """Bars spanning y, separated along x by voids of random width in [gap/2, gap]."""
    n = t.n
    h = np.full((n, n), VOID_HEIGHT)
    support = np.zeros((n, n), bool)
    centre = n // 2
    plat = t.cells(t.platform)
    rows = slice(centre - plat, centre + plat)
    h[rows, :] = 0.0
    support[rows, :] = True
    width = t.cells(p["pallet_width"])
    for direction in (1, -1):
        edge = centre + plat if direction > 0 else centre - plat
        while True:
            gap = t.cells(rng.uniform(0.5 * p["gap"], p["gap"])) if p["gap"] > 0 else 0
            start = edge + direction * gap
            lo, hi = (start, start + width) if direction > 0 else (start - width, start)
            if lo < 0 or hi > n:
                break
            level = rng.uniform(-p["height_range"], p["height_range"])
            h[lo:hi, :] = level
            support[lo:hi, :] = True
            edge = hi if direction > 0 else lo
    return h, support


def _gap_rings(t, start: float, gap: float, ground: float | None):
    """Void where the Chebyshev distance falls inside one (or repeated) gap bands."""
    d = t.cheb - start
    if ground is None:
        void = (d > 0) & (d <= gap)
    else:
        # a gap band only exists if the ground band after it fits inside the tile
        period = gap + ground
        complete = start + (np.floor(d / period) + 1.0) * period <= t.size / 2.0 + 1e-9
        void = (d > 0) & (np.mod(d, period) <= gap) & complete
    h = np.where(void, VOID_HEIGHT, 0.0)
    return h, ~void


def _gaps(p, rng, t):
    return _gap_rings(t, t.platform + 0.5, t.cells(p["gap_width"]) * t.res, None)


def _consecutive_gaps(p, rng, t):
    return _gap_rings(t, t.platform + 0.3, t.cells(p["gap_width"]) * t.res, t.cells(p["ground_width"]) * t.res)


def _with_exit_rim(h, support, t, rim: float = EXIT_RIM):
    """Fill void cells near the tile edge so the border can be crossed.

    Without it, sparse layouts end in a void strip at the edge. Void rim cells
    grow outward from their supported neighbours and copy their height, so the
    fill only widens existing features and never creates a new sliver.
    """
    n = t.n
    i, j = np.nonzero((t.cheb >= t.size / 2.0 - rim) & ~support)
    hf, sf = h.reshape(-1), support.reshape(-1)
    # neighbour flat indices in a fixed priority order, -1 off the grid
    nbrs = [np.where(ok, (i + di) * n + (j + dj), -1) for di, dj, ok in (
        (-1, 0, i > 0), (1, 0, i < n - 1), (0, -1, j > 0), (0, 1, j < n - 1))]
    todo = i * n + j
    while todo.size:
        src = np.full(todo.size, -1)
        for nb in nbrs:
            pick = (src < 0) & (nb >= 0) & sf[np.maximum(nb, 0)]
            src[pick] = nb[pick]
        got = src >= 0
        if not got.any():
            hf[todo] = 0.0
            sf[todo] = True
            break
        hf[todo[got]] = hf[src[got]]
        sf[todo[got]] = True
        todo = todo[~got]
        nbrs = [nb[~got] for nb in nbrs]
    return h, support


def _with_platform(h, support, t):
    h[t.on_platform] = 0.0
    support[t.on_platform] = True
    return h, support


def _grid_stones(p, rng, t):
    """Square stones on a jittered grid; stone widths are whole cells, never below the nominal size.

    Stones touching the start platform are kept whole at platform height.
    """
    n = t.n
    h = np.full((n, n), VOID_HEIGHT)
    support = np.zeros((n, n), bool)
    sc = t.cells(p["stone_size"])
    gc = max(1, int(round(p["spacing"] / t.res)))
    pitch = sc + gc
    jitter = gc // 2
    offset = (n // 2) % pitch
    starts = np.arange(offset - pitch, n, pitch)
    a, b = np.meshgrid(starts, starts, indexing="ij")
    i0 = a.ravel() + rng.integers(-jitter, jitter + 1, a.size)
    j0 = b.ravel() + rng.integers(-jitter, jitter + 1, a.size)
    heights = rng.uniform(-p["height_range"], p["height_range"], a.size)
    for i, j, z in zip(i0, j0, heights):
        if i < 0 or j < 0 or i + sc > n or j + sc > n:
            continue
        if t.on_platform[i:i + sc, j:j + sc].any():
            z = 0.0  # fused into the start platform rather than clipped or dropped
        h[i:i + sc, j:j + sc] = z
        support[i:i + sc, j:j + sc] = True
    return _with_platform(h, support, t)


def _single_column_stones(p, rng, t):
    n = t.n
    h = np.full((n, n), VOID_HEIGHT)
    support = np.zeros((n, n), bool)
    sl = t.cells(p["stone_length"])
    gc = max(1, int(round(p["spacing"] / t.res)))
    wc = t.cells(p["column_width"])
    j0 = n // 2 - wc // 2
    centre = n // 2
    plat = t.cells(t.platform)
    for direction in (1, -1):
        edge = centre + plat if direction > 0 else centre - plat
        while True:
            start = edge + direction * gc
            lo, hi = (start, start + sl) if direction > 0 else (start - sl, start)
            if lo < 0 or hi > n:
                break
            h[lo:hi, j0:j0 + wc] = rng.uniform(-p["height_range"], p["height_range"])
            support[lo:hi, j0:j0 + wc] = True
            edge = hi if direction > 0 else lo
    return _with_platform(h, support, t)


def _beams(p, rng, t):
    """Beams radiating from the centre. A cell is support if it touches a beam (conservative raster)."""
    count = int(round(p["num_beams"]))
    phase = rng.uniform(0, 2 * np.pi / count)
    slack = t.res * math.sqrt(0.5)
    support = np.zeros((t.n, t.n), bool)
    for k in range(count):
        ang = phase + 2 * np.pi * k / count
        ux, uy = math.cos(ang), math.sin(ang)
        along = t.X * ux + t.Y * uy
        across = np.abs(-t.X * uy + t.Y * ux)
        support |= (along >= 0) & (across <= p["beam_width"] / 2.0 + slack)
    h = np.where(support, 0.0, VOID_HEIGHT)
    return _with_platform(h, support, t)


def _pentagon_stones(p, rng, t):
    n = t.n
    R = p["radius"]
    gap = p["spacing"]
    pitch = 2 * R + gap
    slack = t.res * math.sqrt(0.5)
    h = np.full((n, n), VOID_HEIGHT)
    support = np.zeros((n, n), bool)
    half = t.size / 2.0
    centres = np.arange(-half + R, half - R + 1e-9, pitch)
    jitter = gap / 2.0
    edge_offset = R * math.cos(math.pi / 5)  # apothem
    for cx in centres:
        for cy in centres:
            x0 = cx + rng.uniform(-jitter, jitter)
            y0 = cy + rng.uniform(-jitter, jitter)
            if abs(x0) + R > half or abs(y0) + R > half:
                continue
            rot = rng.uniform(0, 2 * np.pi)
            height = rng.uniform(-p["height_range"], p["height_range"])
            # only the cells within reach of the stone
            lo = np.clip(np.floor((np.array([x0, y0]) - R - slack + half) / t.res).astype(int), 0, n)
            hi = np.clip(np.ceil((np.array([x0, y0]) + R + slack + half) / t.res).astype(int) + 1, 0, n)
            win = (slice(lo[0], hi[0]), slice(lo[1], hi[1]))
            dx, dy = t.X[win] - x0, t.Y[win] - y0
            inside = np.ones(dx.shape, bool)
            for e in range(5):
                normal = rot + (2 * e + 1) * np.pi / 5
                inside &= dx * math.cos(normal) + dy * math.sin(normal) <= edge_offset + slack
            if (inside & t.on_platform[win]).any():
                height = 0.0  # fused into the start platform
            h[win][inside] = height
            support[win] |= inside
    return _with_platform(h, support, t)


def _rings(p, rng, t):
    k = _bands(t.radius, t.platform, p["ring_width"], t)
    h = np.where(k % 2 == 1, p["step_height"], 0.0)
    return h, np.ones_like(h, bool)


def _narrow_pallets(p, rng, t):
    return _pallets(p, rng, t)


_GENERATORS = {
    "flat": _flat,
    "stairs": _stairs,
    "pits": _pits,
    "rough": _rough,
    "pallets": _pallets,
    "gaps": _gaps,
    "grid_stones": _grid_stones,
    "beams": _beams,
    "pentagon_stones": _pentagon_stones,
    "rough_hills": _rough_hills,
    "rings": _rings,
    "grid_stones_small": _grid_stones,
    "narrow_beams": _beams,
    "single_column_stones": _single_column_stones,
    "narrow_pallets": _narrow_pallets,
    "consecutive_gaps": _consecutive_gaps,
    "narrow_stairs": _stairs_along_x,
}


def generate(
    spec: TerrainSpec,
    ramps: dict | None = None,
    tile_size: float = 8.0,
    resolution: float = 0.05,
    platform: float = 0.5,
    origin: tuple[float, float] = (0.0, 0.0),
) -> HeightField:
    """Generate one tile. Identical arguments give bitwise-identical fields."""
    if spec.family not in _GENERATORS:
        raise ConfigurationError(f"unknown terrain family {spec.family!r}")
    ramps = ramps or DEFAULT_RAMPS
    params = level_params(spec.family, spec.level, ramps)
    rng = np.random.default_rng([int(spec.seed), FAMILIES.index(spec.family), int(spec.level)])
    tile = _Tile(tile_size, resolution, platform)
    h, support = _GENERATORS[spec.family](params, rng, tile)
    h, support = _with_exit_rim(h, support, tile)
    h = np.where(support, h, VOID_HEIGHT)
    x0, y0 = origin
    return HeightField(
        resolution=resolution,
        heights=h,
        support=support,
        origin=(x0, y0),
        border=(x0, y0, x0 + tile.size, y0 + tile.size),
    )


def build_terrain(
    families: tuple[str, ...],
    seed: int,
    ramps: dict | None = None,
    tile_size: float = 8.0,
    resolution: float = 0.05,
    levels: range = range(NUM_LEVELS),
    margin: float = BORDER_MARGIN,
) -> HeightField:
    """Stitch one tile per (family, level) into a single field.

    Row ``r`` of tiles holds family ``families[r]``; column ``c`` holds level
    ``levels[c]``. ``field.tiles[(family, level)]`` is that tile's border.
    A flat margin surrounds the tiles so robots can walk out of edge tiles;
    ``field.border`` covers the tiles only.
    """
    levels = list(levels)
    tiles = {}
    rows = []
    for r, fam in enumerate(families):
        row = []
        for c, lvl in enumerate(levels):
            f = generate(TerrainSpec(fam, lvl, seed), ramps, tile_size, resolution, origin=(r * tile_size, c * tile_size))
            tiles[(fam, lvl)] = f.border
            row.append(f)
        rows.append(row)
    pad = int(round(margin / resolution))
    heights = np.pad(np.block([[f.heights for f in row] for row in rows]), pad, constant_values=0.0)
    support = np.pad(np.block([[f.support for f in row] for row in rows]), pad, constant_values=True)
    size = rows[0][0].length * resolution
    field = HeightField(
        resolution=resolution,
        heights=heights,
        support=support,
        origin=(-pad * resolution, -pad * resolution),
        border=(0.0, 0.0, len(families) * size, len(levels) * size),
    )
    field.tiles = tiles
    return field
