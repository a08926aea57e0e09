"""Elevation grids, viewpoints, visibility maps and their file formats."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_NODATA = -9999.0

_RAW_MAGIC = b"VSGR"
_RAW_VERSION = 1
_RAW_HEADER = struct.Struct("<4sIIIff8x")


class GridFormatError(ValueError):
    """Raised when a grid file or array is malformed."""


class Visibility(enum.IntEnum):
    INVISIBLE = 0
    VISIBLE = 1
    NODATA = 2


@dataclass
class Grid:
    """Row-major terrain raster. Row 0 is the northern edge."""

    values: np.ndarray
    cell_spacing: float = 1.0
    nodata: float = DEFAULT_NODATA
    xllcorner: float = 0.0
    yllcorner: float = 0.0

    def __post_init__(self) -> None:
        arr = np.asarray(self.values)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise GridFormatError(f"grid must be a non-empty 2-D array, got shape {arr.shape}")
        self.values = np.ascontiguousarray(arr, dtype=np.float32)
        self.nodata = float(np.float32(self.nodata))
        if not self.cell_spacing > 0:
            raise GridFormatError("cell spacing must be positive")
        bad = ~np.isfinite(self.values) & ~self.nodata_mask()
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise GridFormatError(f"non-finite elevation at ({i}, {j})")

    @property
    def nrows(self) -> int:
        return self.values.shape[0]

    @property
    def ncols(self) -> int:
        return self.values.shape[1]

    @property
    def size(self) -> int:
        return self.values.size

    def nodata_mask(self) -> np.ndarray:
        if np.isnan(self.nodata):
            return np.isnan(self.values)
        return self.values == np.float32(self.nodata)

    def is_nodata(self, i: int, j: int) -> bool:
        v = self.values[i, j]
        return bool(v == self.nodata or (np.isnan(self.nodata) and np.isnan(v)))

    def with_nodata(self, mask: np.ndarray) -> Grid:
        """Copy of this grid with the masked cells replaced by the sentinel."""
        vals = self.values.copy()
        vals[np.asarray(mask, dtype=bool)] = self.nodata
        return Grid(vals, self.cell_spacing, self.nodata, self.xllcorner, self.yllcorner)


@dataclass(frozen=True)
class Viewpoint:
    row: int
    col: int
    height_offset: float = 0.0

    def validate(self, grid: Grid) -> None:
        if not (0 <= self.row < grid.nrows and 0 <= self.col < grid.ncols):
            raise ValueError(
                f"viewpoint ({self.row}, {self.col}) outside {grid.nrows}x{grid.ncols} grid"
            )
        if grid.is_nodata(self.row, self.col):
            raise ValueError(f"viewpoint ({self.row}, {self.col}) is on a nodata cell")
        if self.height_offset < 0 or not np.isfinite(self.height_offset):
            raise ValueError("height offset must be finite and non-negative")

    def elevation(self, grid: Grid) -> float:
        return float(grid.values[self.row, self.col]) + float(self.height_offset)

    def max_radius(self, grid: Grid) -> int:
        """Largest L-infinity distance from the viewpoint to any grid point."""
        return max(self.row, grid.nrows - 1 - self.row, self.col, grid.ncols - 1 - self.col)


@dataclass
class VisibilityGrid:
    """Per-cell visibility flags, shaped like the source grid."""

    flags: np.ndarray
    cell_spacing: float = 1.0
    xllcorner: float = 0.0
    yllcorner: float = 0.0

    def __post_init__(self) -> None:
        self.flags = np.ascontiguousarray(self.flags, dtype=np.uint8)

    @classmethod
    def like(cls, grid: Grid, fill: Visibility = Visibility.INVISIBLE) -> VisibilityGrid:
        flags = np.full(grid.values.shape, int(fill), dtype=np.uint8)
        flags[grid.nodata_mask()] = Visibility.NODATA
        return cls(flags, grid.cell_spacing, grid.xllcorner, grid.yllcorner)

    @property
    def shape(self) -> tuple[int, int]:
        return self.flags.shape

    def visible_mask(self) -> np.ndarray:
        return self.flags == Visibility.VISIBLE

    def count(self, flag: Visibility) -> int:
        return int(np.count_nonzero(self.flags == flag))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VisibilityGrid):
            return NotImplemented
        return self.flags.shape == other.flags.shape and bool(np.array_equal(self.flags, other.flags))


def check_inputs(grid: Grid, vp: Viewpoint) -> None:
    vp.validate(grid)


# ---------------------------------------------------------------------------
# file formats


def _parse_asc(path: Path) -> tuple[dict[str, float], np.ndarray]:
    tokens = path.read_text().split()
    header: dict[str, float] = {}
    pos = 0
    keys = {"ncols", "nrows", "xllcorner", "yllcorner", "xllcenter", "yllcenter",
            "cellsize", "nodata_value"}
    while pos + 1 < len(tokens) and tokens[pos].lower() in keys:
        try:
            header[tokens[pos].lower()] = float(tokens[pos + 1])
        except ValueError as exc:
            raise GridFormatError(f"bad header value for {tokens[pos]}") from exc
        pos += 2
    for key in ("ncols", "nrows", "cellsize"):
        if key not in header:
            raise GridFormatError(f"missing header field {key}")
    body = tokens[pos:]
    nrows, ncols = int(header["nrows"]), int(header["ncols"])
    if len(body) != nrows * ncols:
        raise GridFormatError(
            f"value count mismatch: header says {nrows * ncols}, file has {len(body)}"
        )
    try:
        vals = np.array(body, dtype=np.float64).reshape(nrows, ncols)
    except ValueError as exc:
        raise GridFormatError("unparseable elevation value") from exc
    return header, vals


def _write_asc(path: Path, arr: np.ndarray, spacing: float, nodata: float,
               xll: float, yll: float) -> None:
    nrows, ncols = arr.shape
    lines = [
        f"ncols {ncols}",
        f"nrows {nrows}",
        f"xllcorner {xll!r}",
        f"yllcorner {yll!r}",
        f"cellsize {float(spacing)!r}",
        f"NODATA_value {float(nodata)!r}",
    ]
    for row in arr:
        lines.append(" ".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _read_raw(path: Path) -> tuple[np.ndarray, float, float]:
    data = path.read_bytes()
    if len(data) < _RAW_HEADER.size:
        raise GridFormatError("raw file shorter than its header")
    magic, version, ncols, nrows, spacing, nodata = _RAW_HEADER.unpack_from(data)
    if magic != _RAW_MAGIC:
        raise GridFormatError("raw file has wrong magic bytes")
    if version != _RAW_VERSION:
        raise GridFormatError(f"unsupported raw version {version}")
    body = np.frombuffer(data, dtype="<f4", offset=_RAW_HEADER.size)
    if body.size != nrows * ncols:
        raise GridFormatError(
            f"value count mismatch: header says {nrows * ncols}, file has {body.size}"
        )
    return body.reshape(nrows, ncols), float(spacing), float(nodata)


def _write_raw(path: Path, arr: np.ndarray, spacing: float, nodata: float) -> None:
    nrows, ncols = arr.shape
    header = _RAW_HEADER.pack(_RAW_MAGIC, _RAW_VERSION, ncols, nrows, spacing, nodata)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _format_of(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        return fmt.lower()
    return "raw" if path.suffix.lower() in (".raw", ".bin") else "asc"


def load_grid(path: str | Path, fmt: str | None = None) -> Grid:
    """Read an elevation grid. The format follows the file suffix unless given."""
    path = Path(path)
    if _format_of(path, fmt) == "raw":
        arr, spacing, nodata = _read_raw(path)
        return Grid(arr.copy(), spacing, nodata)
    header, vals = _parse_asc(path)
    nodata = header.get("nodata_value", DEFAULT_NODATA)
    return Grid(vals, header["cellsize"], nodata,
                header.get("xllcorner", header.get("xllcenter", 0.0)),
                header.get("yllcorner", header.get("yllcenter", 0.0)))


def store_grid(grid: Grid, path: str | Path, fmt: str | None = None) -> None:
    path = Path(path)
    if _format_of(path, fmt) == "raw":
        _write_raw(path, grid.values, grid.cell_spacing, grid.nodata)
    else:
        _write_asc(path, grid.values, grid.cell_spacing, grid.nodata,
                   grid.xllcorner, grid.yllcorner)


def store_visibility(vis: VisibilityGrid, path: str | Path, fmt: str | None = None,
                     nodata: float = DEFAULT_NODATA) -> None:
    """Write 0/1 flags, with nodata cells written as the sentinel value."""
    path = Path(path)
    arr = vis.flags.astype(np.float32)
    arr[vis.flags == Visibility.NODATA] = nodata
    if _format_of(path, fmt) == "raw":
        _write_raw(path, arr, vis.cell_spacing, nodata)
    else:
        _write_asc(path, arr, vis.cell_spacing, nodata, vis.xllcorner, vis.yllcorner)


def load_visibility(path: str | Path, fmt: str | None = None) -> VisibilityGrid:
    grid = load_grid(path, fmt)
    flags = np.where(grid.values > 0.5, Visibility.VISIBLE, Visibility.INVISIBLE).astype(np.uint8)
    flags[grid.nodata_mask()] = Visibility.NODATA
    return VisibilityGrid(flags, grid.cell_spacing, grid.xllcorner, grid.yllcorner)


def export_pgm(vis: VisibilityGrid, path: str | Path) -> None:
    """Binary PGM: visible 255, invisible 0, nodata 128."""
    lut = np.array([0, 255, 128], dtype=np.uint8)
    img = lut[vis.flags]
    nrows, ncols = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{ncols} {nrows}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


# ---------------------------------------------------------------------------
# synthetic terrain


class TerrainKind(str, enum.Enum):
    FLAT = "flat"
    CONE_UP = "cone_up"
    CONE_DOWN = "cone_down"
    WALL = "wall"
    RANDOM_SMOOTH = "random_smooth"
    RANDOM_IID = "random_iid"


@dataclass(frozen=True)
class TerrainSpec:
    """Parameters for `generate`.

    ``slope`` drives the cones, ``height`` the wall and random amplitudes,
    ``smoothness`` the Gaussian filter width of RANDOM_SMOOTH. The wall
    occupies the inclusive row/column ranges in ``wall``.
    """

    kind: TerrainKind | str
    nrows: int
    ncols: int
    slope: float = 1.0
    height: float = 100.0
    smoothness: float = 4.0
    wall: tuple[int, int, int, int] = field(default=(0, -1, 0, -1))
    base: float = 0.0
    seed: int = 0
    cell_spacing: float = 1.0


def generate(spec: TerrainSpec) -> Grid:
    kind = TerrainKind(spec.kind)
    if spec.nrows < 1 or spec.ncols < 1:
        raise ValueError("terrain dimensions must be positive")
    shape = (spec.nrows, spec.ncols)
    ci, cj = (spec.nrows - 1) // 2, (spec.ncols - 1) // 2
    rr, cc = np.indices(shape)
    linf = np.maximum(np.abs(rr - ci), np.abs(cc - cj)).astype(np.float64)
    if kind is TerrainKind.FLAT:
        z = np.full(shape, spec.base)
    elif kind is TerrainKind.CONE_UP:
        z = spec.base + spec.slope * linf
    elif kind is TerrainKind.CONE_DOWN:
        z = spec.base - spec.slope * linf
    elif kind is TerrainKind.WALL:
        z = np.full(shape, spec.base)
        r0, r1, c0, c1 = spec.wall
        z[r0 : r1 + 1 if r1 >= 0 else None, c0 : c1 + 1 if c1 >= 0 else None] = spec.height
    elif kind is TerrainKind.RANDOM_IID:
        rng = np.random.default_rng(spec.seed)
        z = spec.base + rng.uniform(0.0, spec.height, size=shape)
    else:
        from scipy.ndimage import gaussian_filter

        rng = np.random.default_rng(spec.seed)
        noise = rng.standard_normal(shape)
        z = gaussian_filter(noise, sigma=spec.smoothness, mode="wrap")
        span = z.max() - z.min()
        z = spec.base + spec.height * (z - z.min()) / (span if span > 0 else 1.0)
    return Grid(z.astype(np.float32), spec.cell_spacing)
