"""
Run-length encoded label masks.

A mask is stored as three flat arrays: the class of every run, its length,
and the offset of each row's first run. Runs never cross a row and two
neighbouring runs of a row never share a class, so two masks are equal
exactly when their arrays are equal.
"""
from typing import Iterable, Iterator, List, Sequence, Tuple

import numpy as np

from services.exceptions import EmptyGrid, InvalidClassCode, ShapeMismatch
from services.raster.schemas import MAX_CLASS_CODE, TissueClass

MAX_WIDTH = int(np.iinfo(np.int32).max)


class LabelMask:
    __slots__ = ("width", "height", "pixel_spacing", "values", "lengths", "row_offsets")

    def __init__(
        self,
        width: int,
        height: int,
        pixel_spacing: float,
        values: np.ndarray,
        lengths: np.ndarray,
        row_offsets: np.ndarray,
    ) -> None:
        if width < 1 or height < 1:
            raise EmptyGrid(f"mask must be at least 1x1, got {width}x{height}")
        if width > MAX_WIDTH:
            raise ShapeMismatch(f"mask rows are limited to {MAX_WIDTH} pixels, got {width}")
        if len(row_offsets) != height + 1 or len(values) != len(lengths):
            raise ShapeMismatch("run arrays do not describe the declared mask shape")
        self.width = int(width)
        self.height = int(height)
        self.pixel_spacing = float(pixel_spacing)
        self.values = np.asarray(values, dtype=np.uint8)
        # a run never crosses a row, so its length fits the row width
        self.lengths = np.asarray(lengths, dtype=np.int32)
        self.row_offsets = np.asarray(row_offsets, dtype=np.int64)

    @classmethod
    def from_bands(
        cls, bands: Iterable[np.ndarray], width: int, pixel_spacing: float
    ) -> "LabelMask":
        """
        Build a mask from consecutive row bands without ever holding the full raster.
        :param bands: 2-D arrays of class codes, each ``width`` columns wide.
        :param width: Mask width in pixels.
        :param pixel_spacing: Micrometers per pixel.
        :return: The canonical run-length encoded mask.
        :raises: InvalidClassCode, EmptyGrid, ShapeMismatch.
        """
        values: List[np.ndarray] = []
        lengths: List[np.ndarray] = []
        row_counts: List[np.ndarray] = []
        height = 0
        for band in bands:
            band = np.asarray(band)
            if band.ndim != 2 or band.shape[1] != width:
                raise ShapeMismatch(f"band of shape {band.shape} does not fit width {width}")
            if band.shape[0] == 0:
                continue
            _check_codes(band, row_offset=height, width=width)
            v, n, c = _encode_band(band.astype(np.uint8, copy=False))
            values.append(v)
            lengths.append(n)
            row_counts.append(c)
            height += band.shape[0]
        if height == 0 or width < 1:
            raise EmptyGrid("mask has no pixels")
        offsets = np.concatenate(([0], np.cumsum(np.concatenate(row_counts))))
        return cls(
            width,
            height,
            pixel_spacing,
            np.concatenate(values),
            np.concatenate(lengths),
            offsets,
        )

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    @property
    def run_count(self) -> int:
        return int(len(self.values))

    def row(self, y: int) -> List[Tuple[TissueClass, int]]:
        s, e = self.row_offsets[y], self.row_offsets[y + 1]
        return [
            (TissueClass(int(v)), int(n))
            for v, n in zip(self.values[s:e], self.lengths[s:e])
        ]

    @property
    def rows(self) -> List[List[Tuple[TissueClass, int]]]:
        return [self.row(y) for y in range(self.height)]

    def decode_rows(self, y0: int, y1: int) -> np.ndarray:
        s, e = self.row_offsets[y0], self.row_offsets[y1]
        flat = np.repeat(self.values[s:e], self.lengths[s:e])
        return flat.reshape(y1 - y0, self.width)

    def decode(self) -> np.ndarray:
        return self.decode_rows(0, self.height)

    def iter_bands(self, tile_rows: int) -> Iterator[Tuple[int, np.ndarray]]:
        """Yield ``(first_row, band)`` pairs covering the mask top to bottom."""
        tile_rows = max(1, int(tile_rows))
        for y0 in range(0, self.height, tile_rows):
            y1 = min(self.height, y0 + tile_rows)
            yield y0, self.decode_rows(y0, y1)

    def same_shape(self, other: "LabelMask") -> bool:
        return self.shape == other.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelMask):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.pixel_spacing == other.pixel_spacing
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.lengths, other.lengths)
            and np.array_equal(self.row_offsets, other.row_offsets)
        )

    def __repr__(self) -> str:
        return (
            f"LabelMask({self.width}x{self.height}, spacing={self.pixel_spacing}, "
            f"runs={self.run_count})"
        )


def encode_mask(raw: Sequence[Sequence[int]] | np.ndarray, spacing: float) -> LabelMask:
    """
    Encode a row-major grid of class codes.
    :param raw: 2-D grid (nested lists or array) of TissueClass codes.
    :param spacing: Micrometers per pixel.
    :return: Canonical run-length encoded mask.
    :raises: EmptyGrid if the grid has no pixels, InvalidClassCode on the first bad code.
    """
    grid = np.asarray(raw)
    if grid.ndim != 2 or grid.size == 0:
        raise EmptyGrid("grid must be a non-empty 2-D array")
    return LabelMask.from_bands([grid], grid.shape[1], spacing)


def canonicalize(
    values: np.ndarray, lengths: np.ndarray, row_offsets: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Merge neighbouring runs of a row that carry the same class."""
    if len(values) == 0:
        return values, lengths, row_offsets
    starts = np.ones(len(values), dtype=bool)
    starts[1:] = values[1:] != values[:-1]
    starts[row_offsets[:-1]] = True
    idx = np.flatnonzero(starts)
    new_values = values[idx]
    new_lengths = np.add.reduceat(lengths, idx)
    new_offsets = np.searchsorted(idx, row_offsets)
    return new_values, new_lengths, new_offsets


def _encode_band(band: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows, width = band.shape
    flat = band.ravel()
    change = np.empty(flat.size, dtype=bool)
    change[0] = True
    np.not_equal(flat[1:], flat[:-1], out=change[1:])
    change[::width] = True
    starts = np.flatnonzero(change)
    values = flat[starts]
    lengths = np.diff(np.append(starts, flat.size))
    row_counts = change.reshape(rows, width).sum(axis=1)
    return values, lengths.astype(np.int32), row_counts.astype(np.int64)


def _check_codes(band: np.ndarray, row_offset: int, width: int) -> None:
    bad = (band < 0) | (band > MAX_CLASS_CODE)
    if bad.any():
        flat_index = int(np.argmax(bad.ravel()))
        r, c = divmod(flat_index, band.shape[1])
        code = int(band.ravel()[flat_index])
        raise InvalidClassCode(row_offset + r, c, (row_offset + r) * width + c, code)
