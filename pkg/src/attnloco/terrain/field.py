"""2.5-D height fields, map-scan sampling and the text grid file format."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError

# Void cells sit this far below the tile base height.
VOID_DEPTH = 1.0
VOID_HEIGHT = -VOID_DEPTH

FILE_MAGIC = "attnloco-heightfield 1"


@dataclass
class HeightField:
    """Regular grid of heights.

    Cell ``(i, j)`` covers ``[x0 + i*res, x0 + (i+1)*res) x [y0 + j*res, y0 + (j+1)*res)``
    where ``(x0, y0) = origin``. Axis 0 runs along world x (length), axis 1
    along world y (width). ``border`` is ``(xmin, ymin, xmax, ymax)`` of the
    terrain tile.
    """

    resolution: float
    heights: np.ndarray
    support: np.ndarray
    origin: tuple[float, float] = (0.0, 0.0)
    border: tuple[float, float, float, float] | None = None
    tiles: dict = field(default_factory=dict)

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=np.float64)
        self.support = np.asarray(self.support, dtype=bool)
        if self.heights.shape != self.support.shape or self.heights.ndim != 2:
            raise ConfigurationError(f"heights {self.heights.shape} and support {self.support.shape} must be equal 2-D grids")
        if self.resolution <= 0:
            raise ConfigurationError(f"resolution must be positive, got {self.resolution}")
        if self.border is None:
            x0, y0 = self.origin
            self.border = (x0, y0, x0 + self.length * self.resolution, y0 + self.width * self.resolution)

    @property
    def length(self) -> int:
        return self.heights.shape[0]

    @property
    def width(self) -> int:
        return self.heights.shape[1]

    def cell_index(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Indices of the cells containing world points; out-of-grid points clamp to the edge."""
        i = np.floor((np.asarray(x) - self.origin[0]) / self.resolution).astype(np.int64)
        j = np.floor((np.asarray(y) - self.origin[1]) / self.resolution).astype(np.int64)
        return np.clip(i, 0, self.length - 1), np.clip(j, 0, self.width - 1)

    def height_at(self, x, y) -> np.ndarray:
        i, j = self.cell_index(x, y)
        return self.heights[i, j]

    def support_at(self, x, y) -> np.ndarray:
        i, j = self.cell_index(x, y)
        return self.support[i, j]

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.origin[0] + (np.arange(self.length) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.width) + 0.5) * self.resolution
        return xs, ys

    def equals(self, other: "HeightField") -> bool:
        return (
            self.resolution == other.resolution
            and tuple(self.origin) == tuple(other.origin)
            and self.heights.shape == other.heights.shape
            and np.array_equal(self.heights, other.heights)
            and np.array_equal(self.support, other.support)
        )


def scan_grid(length: int, width: int, resolution: float = 0.1) -> np.ndarray:
    """Robot-frame (x, y) of an ``length x width`` grid centred on the base, shape (L, W, 2)."""
    xs = (np.arange(length) - (length - 1) / 2.0) * resolution
    ys = (np.arange(width) - (width - 1) / 2.0) * resolution
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([gx, gy], axis=-1)


def sample_map_scan(field: HeightField, base_pose, grid: np.ndarray, drift=None) -> np.ndarray:
    """Sample robot-frame scan points.

    ``base_pose``: (N, 4) or (4,) rows of (x, y, z, yaw). ``grid``: (L, W, 2)
    robot-frame sample offsets. ``drift``: (N, 2) or (2,) world-frame offset
    added to the lookup position (the reported x, y stay on the grid).
    Returns (N, L, W, 3) (or (L, W, 3) for a single pose) with
    z = terrain height - base z; void cells report the sentinel depth.
    """
    pose = np.asarray(base_pose, dtype=np.float64)
    single = pose.ndim == 1
    pose = np.atleast_2d(pose)
    n = pose.shape[0]
    if drift is None:
        drift = np.zeros((n, 2))
    drift = np.broadcast_to(np.asarray(drift, dtype=np.float64), (n, 2))
    c, s = np.cos(pose[:, 3]), np.sin(pose[:, 3])
    gx, gy = grid[..., 0], grid[..., 1]
    wx = pose[:, 0, None, None] + c[:, None, None] * gx - s[:, None, None] * gy + drift[:, 0, None, None]
    wy = pose[:, 1, None, None] + s[:, None, None] * gx + c[:, None, None] * gy + drift[:, 1, None, None]
    z = field.height_at(wx, wy) - pose[:, 2, None, None]
    out = np.empty((n,) + grid.shape[:2] + (3,))
    out[..., 0] = gx
    out[..., 1] = gy
    out[..., 2] = z
    return out[0] if single else out


def save_heightfield(field: HeightField, path) -> None:
    """Write the text grid format.

    Header lines ``resolution``, ``length``, ``width``, ``origin``, ``border``;
    then ``heights`` followed by ``length`` lines (row-major,
    ``width`` values each, 17 significant digits); then ``support`` followed by
    ``length`` lines of ``width`` 0/1 characters.
    """
    lines = [
        FILE_MAGIC,
        f"resolution {field.resolution!r}",
        f"length {field.length}",
        f"width {field.width}",
        f"origin {field.origin[0]!r} {field.origin[1]!r}",
        "border " + " ".join(repr(float(b)) for b in field.border),
        "heights",
    ]
    lines.extend(" ".join(f"{v:.17g}" for v in row) for row in field.heights)
    lines.append("support")
    lines.extend("".join("1" if b else "0" for b in row) for row in field.support)
    Path(path).write_text("\n".join(lines) + "\n")


def load_heightfield(path) -> HeightField:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != FILE_MAGIC:
        raise ConfigurationError(f"{path}: not a height-field file")
    header = {}
    k = 1
    while text[k].strip() != "heights":
        key, *vals = text[k].split()
        header[key] = vals
        k += 1
    length, width = int(header["length"][0]), int(header["width"][0])
    heights = np.array([[float(v) for v in text[k + 1 + r].split()] for r in range(length)])
    k = k + 1 + length
    if text[k].strip() != "support":
        raise ConfigurationError(f"{path}: missing support section")
    support = np.array([[ch == "1" for ch in text[k + 1 + r].strip()] for r in range(length)], dtype=bool)
    if heights.shape != (length, width) or support.shape != (length, width):
        raise ConfigurationError(f"{path}: grid size does not match header")
    return HeightField(
        resolution=float(header["resolution"][0]),
        heights=heights,
        support=support,
        origin=tuple(float(v) for v in header["origin"]),
        border=tuple(float(v) for v in header["border"]),
    )


def to_grayscale(field: HeightField, lo: float | None = None, hi: float | None = None) -> np.ndarray:
    """Map heights to uint8; void cells render black."""
    h = field.heights
    valid = h[field.support]
    lo = float(valid.min()) if lo is None and valid.size else (lo or 0.0)
    hi = float(valid.max()) if hi is None and valid.size else (hi or 1.0)
    span = hi - lo if hi > lo else 1.0
    img = np.clip((h - lo) / span, 0.0, 1.0) * 215 + 40
    img[~field.support] = 0
    return img.astype(np.uint8)


def write_pgm(path, image: np.ndarray) -> None:
    """Binary portable graymap (P5), 8-bit."""
    image = np.asarray(image, dtype=np.uint8)
    rows, cols = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ConfigurationError(f"{path}: not a binary PGM")
    cols, rows, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ConfigurationError(f"{path}: only 8-bit PGM supported")
    return np.frombuffer(data[m.end(): m.end() + rows * cols], dtype=np.uint8).reshape(rows, cols)
