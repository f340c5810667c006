"""
2026 Module responsible for reading and writing label masks as binary PGM (P5).

Pixel bytes are TissueClass codes. The pixel spacing travels in a comment
line ``# spacing_um=<decimal>`` right after the magic number.
"""
import logging
import re
from pathlib import Path
from typing import BinaryIO, Iterator, List, Tuple

import numpy as np

from services.config import get_settings
from services.exceptions import GleasonEngineError, MaskFormatError
from services.raster.mask import LabelMask

logger = logging.getLogger(__name__)

MAGIC = b"P5"
_SPACING = re.compile(rb"#\s*spacing_um=([0-9eE+\-.]+)")
_DEFAULT_SPACING = 1.0
_WHITESPACE = b" \t\n\v\f\r"
_MAX_TOKEN = 20


def _read_header(stream: BinaryIO) -> Tuple[int, int, float]:
    """
    Parse the header byte by byte, stopping after the single whitespace byte
    that follows maxval; the pixel data starts right after it.
    """
    tokens: List[bytes] = []
    token = b""
    spacing = None
    while len(tokens) < 4:
        byte = stream.read(1)
        if not byte:
            raise MaskFormatError("truncated PGM header")
        if byte == b"#" and not token:
            match = _SPACING.match(b"#" + stream.readline().strip())
            if match:
                try:
                    spacing = float(match.group(1))
                except ValueError as e:
                    raise MaskFormatError(f"malformed spacing comment: {e}") from e
        elif byte in _WHITESPACE:
            if token:
                tokens.append(token)
                token = b""
                if tokens[0] != MAGIC:
                    raise MaskFormatError(f"not a binary PGM file (magic {tokens[0]!r})")
        elif len(token) >= _MAX_TOKEN:
            raise MaskFormatError("malformed PGM header: token too long")
        else:
            token += byte
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as e:
        raise MaskFormatError(f"malformed PGM header: {e}") from e
    if width < 1 or height < 1:
        raise MaskFormatError(f"PGM must be at least 1x1, got {width}x{height}")
    if maxval != 255:
        raise MaskFormatError(f"PGM maxval must be 255, got {maxval}")
    if spacing is None:
        logger.warning(f"PGM header carries no spacing comment, assuming {_DEFAULT_SPACING} um")
        spacing = _DEFAULT_SPACING
    return width, height, spacing


def _iter_file_bands(
    stream: BinaryIO, width: int, height: int, tile_rows: int
) -> Iterator[np.ndarray]:
    for y0 in range(0, height, tile_rows):
        rows = min(tile_rows, height - y0)
        data = stream.read(rows * width)
        if len(data) != rows * width:
            raise MaskFormatError(f"truncated pixel data at row {y0}")
        yield np.frombuffer(data, dtype=np.uint8).reshape(rows, width)


def read_pgm(path: str | Path, tile_rows: int | None = None) -> LabelMask:
    """
    Read a label mask, decoding at most ``tile_rows`` rows at a time.
    :param path: PGM file.
    :param tile_rows: Band height; defaults to the configured tile size.
    :return: The encoded mask.
    :raises: MaskFormatError for unreadable files or out-of-range class codes.
    """
    tile_rows = int(tile_rows or get_settings().TILE_ROWS)
    try:
        stream = open(path, "rb")
    except OSError as e:
        raise MaskFormatError(f"{path}: cannot read mask: {e.strerror or e}") from e
    with stream:
        width, height, spacing = _read_header(stream)
        try:
            return LabelMask.from_bands(
                _iter_file_bands(stream, width, height, tile_rows), width, spacing
            )
        except MaskFormatError:
            raise
        except GleasonEngineError as e:
            raise MaskFormatError(f"{path}: {e.detail}") from e


def write_pgm(m: LabelMask, path: str | Path, tile_rows: int | None = None) -> None:
    """Write ``m`` so that ``read_pgm`` returns an equal mask."""
    tile_rows = int(tile_rows or get_settings().TILE_ROWS)
    with open(path, "wb") as stream:
        stream.write(MAGIC + b"\n")
        stream.write(f"# spacing_um={m.pixel_spacing!r}\n".encode("ascii"))
        stream.write(f"{m.width} {m.height}\n255\n".encode("ascii"))
        for _, band in m.iter_bands(tile_rows):
            stream.write(np.ascontiguousarray(band, dtype=np.uint8).tobytes())
