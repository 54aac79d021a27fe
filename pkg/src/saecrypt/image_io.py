"""Raster I/O and the tile representation fed to the autoencoder.

PGM (P5) and PPM (P6) are parsed here directly so that the bit-exact
test path has no third-party decoder in it. PNG goes through Pillow.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import CorruptFileError, DimensionError, UnsupportedFormatError

__all__ = [
    "Image",
    "TileSet",
    "load_image",
    "save_image",
    "to_grayscale",
    "tile",
    "untile",
]

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_PNM_EXTENSIONS = {".pgm", ".ppm", ".pnm"}


@dataclass(frozen=True, eq=False)
class Image:
    """An 8-bit raster held as a ``(height, width, channels)`` uint8 array."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise DimensionError(f"expected (h, w, 1|3) pixels, got shape {data.shape}")
        if data.dtype != np.uint8:
            if data.size and (data.min() < 0 or data.max() > 255):
                raise DimensionError("pixel values must lie in [0, 255]")
            data = data.astype(np.uint8)
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_bytes(cls, width: int, height: int, channels: int, samples) -> Image:
        buf = np.frombuffer(bytes(samples), dtype=np.uint8)
        if buf.size != width * height * channels:
            raise DimensionError(
                f"{buf.size} samples for a {width}x{height}x{channels} image"
            )
        return cls(buf.reshape(height, width, channels))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def samples(self) -> bytes:
        """Row-major samples with channels interleaved."""
        return self.data.tobytes()

    def channel(self, index: int) -> np.ndarray:
        return self.data[:, :, index]

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"Image(width={self.width}, height={self.height}, channels={self.channels})"


@dataclass(frozen=True, eq=False)
class TileSet:
    """Normalized square tiles plus the geometry needed to put them back.

    ``tiles`` has one row per tile, ordered channel by channel and, within
    a channel, row-major over the tile grid.
    """

    tiles: np.ndarray
    tile_dim: int
    grid_w: int
    grid_h: int
    original_w: int
    original_h: int
    channel_count: int

    def __post_init__(self):
        expected = (self.grid_w * self.grid_h * self.channel_count, self.tile_dim**2)
        if self.tiles.shape != expected:
            raise DimensionError(f"tile array shape {self.tiles.shape}, expected {expected}")
        if self.grid_w * self.tile_dim < self.original_w or self.grid_h * self.tile_dim < self.original_h:
            raise DimensionError("tile grid does not cover the original image")

    def __len__(self):
        return self.tiles.shape[0]

    @property
    def tile_length(self) -> int:
        return self.tile_dim**2


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------


def _pnm_header(raw: bytes):
    """Return ``(magic, width, height, maxval, payload_offset)``."""
    fields = []
    pos = 2
    n = len(raw)
    while len(fields) < 3:
        while pos < n and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < n and raw[pos : pos + 1] == b"#":
            while pos < n and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and raw[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise CorruptFileError("malformed PNM header")
        fields.append(int(raw[start:pos]))
    if pos >= n or not raw[pos : pos + 1].isspace():
        raise CorruptFileError("malformed PNM header")
    width, height, maxval = fields
    return raw[:2], width, height, maxval, pos + 1


def _decode_pnm(raw: bytes) -> Image:
    magic, width, height, maxval, offset = _pnm_header(raw)
    channels = 1 if magic == b"P5" else 3
    if maxval > 255:
        raise UnsupportedFormatError("16-bit PNM samples are not supported")
    if maxval != 255:
        raise UnsupportedFormatError(f"PNM maxval {maxval} (only 255 is supported)")
    if width < 1 or height < 1:
        raise CorruptFileError(f"PNM dimensions {width}x{height}")
    need = width * height * channels
    payload = raw[offset : offset + need]
    if len(payload) != need:
        raise CorruptFileError(f"PNM payload has {len(payload)} bytes, header promises {need}")
    return Image.from_bytes(width, height, channels, payload)


def _decode_png(path) -> Image:
    from PIL import Image as PILImage

    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I", "F"):
                raise UnsupportedFormatError(f"PNG mode {mode} is not 8-bit")
            if "A" in mode or (mode == "P" and "transparency" in im.info):
                raise UnsupportedFormatError(f"PNG mode {mode} carries alpha")
            if mode == "1":
                im = im.convert("L")
            elif mode == "P":
                im = im.convert("RGB")
            elif mode not in ("L", "RGB"):
                raise UnsupportedFormatError(f"PNG mode {mode}")
            return Image(np.array(im))
    except UnsupportedFormatError:
        raise
    except OSError as exc:
        raise CorruptFileError(f"cannot decode PNG {path}: {exc}") from exc


def load_image(path) -> Image:
    """Read a PNG, binary PGM (P5) or binary PPM (P6) file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw.startswith(_PNG_MAGIC):
        return _decode_png(path)
    if raw[:2] in (b"P5", b"P6"):
        return _decode_pnm(raw)
    raise UnsupportedFormatError(f"{path}: not a PNG, P5 PGM or P6 PPM file")


def save_image(img: Image, path) -> None:
    """Write ``img``; the extension picks PNM or PNG."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext in _PNM_EXTENSIONS:
        if ext == ".pgm" and img.channels != 1:
            raise UnsupportedFormatError("PGM holds a single channel")
        if ext == ".ppm" and img.channels != 3:
            raise UnsupportedFormatError("PPM holds three channels")
        magic = b"P5" if img.channels == 1 else b"P6"
        with open(path, "wb") as fh:
            fh.write(b"%s\n%d %d\n255\n" % (magic, img.width, img.height))
            fh.write(img.samples)
    elif ext == ".png":
        from PIL import Image as PILImage

        arr = img.data[:, :, 0] if img.channels == 1 else img.data
        PILImage.fromarray(arr, mode="L" if img.channels == 1 else "RGB").save(path, format="PNG")
    else:
        raise UnsupportedFormatError(f"cannot infer an image format from {path!r}")


# --------------------------------------------------------------------------
# pixel transforms
# --------------------------------------------------------------------------


def to_grayscale(img: Image) -> Image:
    """BT.601 luma, rounded half-up. Single-channel input is returned as is."""
    if img.channels == 1:
        return img
    rgb = img.data.astype(np.int64)
    # integer weights keep the half-up rounding exact
    y = (299 * rgb[:, :, 0] + 587 * rgb[:, :, 1] + 114 * rgb[:, :, 2] + 500) // 1000
    return Image(y.astype(np.uint8))


def tile(img: Image, tile_dim: int = 8) -> TileSet:
    if tile_dim < 1:
        raise ValueError("tile_dim must be at least 1")
    if img.width == 0 or img.height == 0:
        raise DimensionError("cannot tile an empty image")
    grid_w = -(-img.width // tile_dim)
    grid_h = -(-img.height // tile_dim)
    pad_w = grid_w * tile_dim - img.width
    pad_h = grid_h * tile_dim - img.height
    padded = np.pad(img.data, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")
    blocks = []
    for c in range(img.channels):
        plane = padded[:, :, c]
        b = plane.reshape(grid_h, tile_dim, grid_w, tile_dim).transpose(0, 2, 1, 3)
        blocks.append(b.reshape(grid_h * grid_w, tile_dim * tile_dim))
    tiles = np.concatenate(blocks).astype(np.float64) / 255.0
    return TileSet(tiles, tile_dim, grid_w, grid_h, img.width, img.height, img.channels)


def untile(ts: TileSet) -> Image:
    d = ts.tile_dim
    if ts.tiles.shape[0] != ts.grid_w * ts.grid_h * ts.channel_count:
        raise DimensionError("tile count does not match the grid")
    pixels = np.clip(np.floor(ts.tiles * 255.0 + 0.5), 0, 255).astype(np.uint8)
    per_channel = pixels.reshape(ts.channel_count, ts.grid_h, ts.grid_w, d, d)
    planes = per_channel.transpose(0, 1, 3, 2, 4).reshape(ts.channel_count, ts.grid_h * d, ts.grid_w * d)
    out = planes.transpose(1, 2, 0)[: ts.original_h, : ts.original_w, :]
    return Image(out)
