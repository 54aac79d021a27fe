"""Image <-> byte-quantized autoencoder codes, and the ``.saec`` container."""

from __future__ import annotations

import dataclasses
import struct
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import sae
from .errors import CorruptFileError, DimensionError, LengthMismatchError, VersionMismatchError
from .image_io import Image, TileSet, tile, untile

__all__ = [
    "CompressedImage",
    "ModelMismatchWarning",
    "compress",
    "decompress",
    "quantize",
    "dequantize",
    "write_compressed",
    "read_compressed",
    "to_bytes",
    "from_bytes",
]

CONTAINER_MAGIC = b"SAEC"
CONTAINER_VERSION = 1
ENCRYPTED_FLAG = 0x80

# magic, version|flags, 8 x u32 geometry, u64 model id, f64 first code
_HEADER = struct.Struct("<4sB8IQd")


class ModelMismatchWarning(UserWarning):
    """Decompressing with a model other than the one that compressed."""


@dataclass(frozen=True)
class CompressedImage:
    original_w: int
    original_h: int
    channel_count: int
    tile_dim: int
    grid_w: int
    grid_h: int
    code_dim: int
    code_level: int
    model_id: int
    first_code_raw: float
    codes: bytes
    encrypted: bool = False

    def __post_init__(self):
        if len(self.codes) != self.payload_length:
            raise LengthMismatchError(
                f"{len(self.codes)} code bytes, header promises {self.payload_length}"
            )

    @property
    def tile_count(self) -> int:
        return self.grid_w * self.grid_h * self.channel_count

    @property
    def payload_length(self) -> int:
        return self.tile_count * self.code_dim

    @property
    def compression_ratio(self) -> float:
        """Source bytes per code byte for the tiled area."""
        return self.tile_dim**2 / self.code_dim

    def code_array(self) -> np.ndarray:
        """Codes as a ``(tile_count, code_dim)`` uint8 array."""
        return np.frombuffer(self.codes, dtype=np.uint8).reshape(self.tile_count, self.code_dim)

    def replace(self, **changes) -> CompressedImage:
        return dataclasses.replace(self, **changes)


def quantize(codes) -> np.ndarray:
    """Map activations in [0, 1] to bytes, ``round(c * 255)`` half-up."""
    return np.clip(np.floor(np.asarray(codes) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def dequantize(q) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) / 255.0


def compress(img: Image, model: sae.SaeModel, tile_dim: int = 8,
             level: Optional[int] = None) -> CompressedImage:
    """Encode every tile of ``img`` at code ``level`` (default: bottleneck)."""
    if model.input_dim != tile_dim * tile_dim:
        raise DimensionError(
            f"model input width {model.input_dim} does not fit {tile_dim}x{tile_dim} tiles"
        )
    level = model._code_level(level)
    ts = tile(img, tile_dim)
    raw = sae.encode(model, ts.tiles, level)
    return CompressedImage(
        original_w=ts.original_w,
        original_h=ts.original_h,
        channel_count=ts.channel_count,
        tile_dim=tile_dim,
        grid_w=ts.grid_w,
        grid_h=ts.grid_h,
        code_dim=raw.shape[1],
        code_level=level,
        model_id=sae.model_id(model),
        first_code_raw=float(raw[0, 0]),
        codes=quantize(raw).tobytes(),
    )


def decompress(ci: CompressedImage, model: sae.SaeModel) -> Image:
    if ci.encrypted:
        raise ValueError("payload is encrypted; decrypt it before decompressing")
    if model.input_dim != ci.tile_dim**2:
        raise DimensionError(f"model input width {model.input_dim}, tiles hold {ci.tile_dim**2}")
    if not 1 <= ci.code_level <= model.bottleneck_index:
        raise DimensionError(f"model {model.layer_dims} has no code level {ci.code_level}")
    if model.code_dim(ci.code_level) != ci.code_dim:
        raise DimensionError(
            f"model width at level {ci.code_level} is {model.code_dim(ci.code_level)}, "
            f"codes are {ci.code_dim} wide"
        )
    if sae.model_id(model) != ci.model_id:
        warnings.warn(
            "model fingerprint differs from the one recorded at compression time",
            ModelMismatchWarning,
            stacklevel=2,
        )
    tiles = sae.decode(model, dequantize(ci.code_array()), ci.code_level)
    ts = TileSet(tiles, ci.tile_dim, ci.grid_w, ci.grid_h, ci.original_w, ci.original_h, ci.channel_count)
    return untile(ts)


# --------------------------------------------------------------------------
# container
# --------------------------------------------------------------------------


def to_bytes(ci: CompressedImage) -> bytes:
    version = CONTAINER_VERSION | (ENCRYPTED_FLAG if ci.encrypted else 0)
    head = _HEADER.pack(
        CONTAINER_MAGIC, version,
        ci.original_w, ci.original_h, ci.channel_count, ci.tile_dim,
        ci.grid_w, ci.grid_h, ci.code_dim, ci.code_level,
        ci.model_id, ci.first_code_raw,
    )
    return head + ci.codes


def from_bytes(raw: bytes) -> CompressedImage:
    if len(raw) < _HEADER.size:
        raise CorruptFileError("truncated SAEC header")
    (magic, version, ow, oh, cc, td, gw, gh, cd, lvl, mid, first) = _HEADER.unpack_from(raw)
    if magic != CONTAINER_MAGIC:
        raise CorruptFileError("bad magic; not a SAEC file")
    if version & ~ENCRYPTED_FLAG != CONTAINER_VERSION:
        raise VersionMismatchError(f"SAEC version {version & ~ENCRYPTED_FLAG}")
    if min(cc, td, gw, gh, cd, lvl) < 1 or gw * td < ow or gh * td < oh:
        raise CorruptFileError("inconsistent SAEC geometry")
    return CompressedImage(
        original_w=ow, original_h=oh, channel_count=cc, tile_dim=td,
        grid_w=gw, grid_h=gh, code_dim=cd, code_level=lvl,
        model_id=mid, first_code_raw=first,
        codes=bytes(raw[_HEADER.size:]),
        encrypted=bool(version & ENCRYPTED_FLAG),
    )


def write_compressed(ci: CompressedImage, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(ci))


def read_compressed(path) -> CompressedImage:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
