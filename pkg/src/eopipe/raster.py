"""Plain-text raster grids (ESRI-ASCII-style header, row-major values)."""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass, field

HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "NODATA_value")
MEDIA_TYPE = "text/x-ascii-grid"


class ParseError(ValueError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class GeometryMismatch(ValueError):
    pass


@dataclass(eq=False)
class Raster:
    ncols: int
    nrows: int
    xllcorner: float
    yllcorner: float
    cellsize: float
    nodata: float
    values: array = field(repr=False)

    def __post_init__(self) -> None:
        if not isinstance(self.values, array) or self.values.typecode != "d":
            self.values = array("d", self.values)
        if self.ncols <= 0 or self.nrows <= 0:
            raise ValueError("ncols and nrows must be positive")
        if not self.cellsize > 0:
            raise ValueError("cellsize must be positive")
        if len(self.values) != self.ncols * self.nrows:
            raise ValueError(f"expected {self.ncols * self.nrows} values, got {len(self.values)}")

    def geometry(self) -> tuple:
        return (self.ncols, self.nrows, self.xllcorner, self.yllcorner, self.cellsize)

    def with_values(self, values: array, nodata: float | None = None) -> "Raster":
        return Raster(self.ncols, self.nrows, self.xllcorner, self.yllcorner, self.cellsize,
                      self.nodata if nodata is None else nodata, values)

    def rows(self) -> list[list[float]]:
        n = self.ncols
        return [list(self.values[r * n:(r + 1) * n]) for r in range(self.nrows)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Raster):
            return NotImplemented
        return (self.geometry() == other.geometry() and self.nodata == other.nodata
                and self.values.tobytes() == other.values.tobytes())


def format_number(v: float) -> str:
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {v!r} cannot be written; use the nodata value")
    if v == int(v) and abs(v) < 1e15 and not (v == 0 and math.copysign(1.0, v) < 0):
        return str(int(v))
    return repr(float(v))


def _number(text: str, line: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(line, f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise ParseError(line, f"non-finite value {text!r}")
    return v


def raster_read(data: bytes | str) -> Raster:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    header: dict[str, str] = {}
    for i, key in enumerate(HEADER_KEYS):
        lineno = i + 1
        if i >= len(lines):
            raise ParseError(lineno, f"missing header {key!r}")
        parts = lines[i].split()
        if len(parts) != 2 or parts[0] != key:
            raise ParseError(lineno, f"expected '{key} <value>', got {lines[i]!r}")
        header[key] = parts[1]
    try:
        ncols, nrows = int(header["ncols"]), int(header["nrows"])
    except ValueError:
        raise ParseError(1, "ncols/nrows must be integers") from None
    if ncols <= 0 or nrows <= 0:
        raise ParseError(1, "ncols/nrows must be positive")
    xll, yll = _number(header["xllcorner"], 3), _number(header["yllcorner"], 4)
    cellsize = _number(header["cellsize"], 5)
    if cellsize <= 0:
        raise ParseError(5, "cellsize must be positive")
    nodata = _number(header["NODATA_value"], 6)
    body = lines[6:]
    if len(body) != nrows:
        raise ParseError(7 + min(len(body), nrows), f"expected {nrows} data rows, got {len(body)}")
    values = array("d")
    for r, row in enumerate(body):
        lineno = 7 + r
        cells = row.split()
        if len(cells) != ncols:
            raise ParseError(lineno, f"expected {ncols} values, got {len(cells)}")
        values.extend(_number(c, lineno) for c in cells)
    return Raster(ncols, nrows, xll, yll, cellsize, nodata, values)


def raster_write(raster: Raster) -> bytes:
    head = [
        f"ncols {raster.ncols}",
        f"nrows {raster.nrows}",
        f"xllcorner {format_number(raster.xllcorner)}",
        f"yllcorner {format_number(raster.yllcorner)}",
        f"cellsize {format_number(raster.cellsize)}",
        f"NODATA_value {format_number(raster.nodata)}",
    ]
    rows = [" ".join(format_number(v) for v in row) for row in raster.rows()]
    return ("\n".join(head + rows) + "\n").encode("utf-8")


def looks_like_grid(text: str) -> bool:
    """True if ``text`` contains a raster header or grid-row content."""
    return any(k in text for k in ("ncols", "nrows", "NODATA_value", "xllcorner"))
