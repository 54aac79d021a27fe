"""Reconstruction quality (MSE, PSNR) and adjacent-pixel correlation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codec import CompressedImage
from .errors import DimensionError, UndefinedCorrelationError
from .image_io import Image, to_grayscale

__all__ = [
    "MAX_PIXEL",
    "ChannelQuality",
    "QualityReport",
    "CorrelationReport",
    "mse",
    "psnr",
    "correlation",
    "adjacent_pairs",
    "adjacent_correlation",
    "quality_report",
    "render_codes",
]

MAX_PIXEL = 255
DIRECTIONS = {"horizontal": (0, 1), "vertical": (1, 0), "diagonal": (1, 1)}
_RGB_NAMES = ("R", "G", "B")


def _check_same_geometry(a: Image, b: Image):
    if a.data.shape != b.data.shape:
        raise DimensionError(f"image shapes differ: {a.data.shape} vs {b.data.shape}")


def mse(original: Image, reconstructed: Image, channel: int = 0) -> float:
    _check_same_geometry(original, reconstructed)
    if not 0 <= channel < original.channels:
        raise IndexError(f"channel {channel} of a {original.channels}-channel image")
    diff = original.channel(channel).astype(np.float64) - reconstructed.channel(channel).astype(np.float64)
    return float(np.mean(diff * diff))


def psnr(mse_value: float) -> float:
    """Peak signal-to-noise ratio in dB for 8-bit data; ``inf`` when MSE is 0."""
    if mse_value < 0 or math.isnan(mse_value):
        raise ValueError(f"MSE must be non-negative, got {mse_value}")
    if mse_value == 0:
        return math.inf
    return 10.0 * math.log10(MAX_PIXEL**2 / mse_value)


def correlation(x, y=None) -> float:
    """Correlation coefficient ``(E[xy] - E[x]E[y]) / (sqrt(D[x]) sqrt(D[y]))``.

    Means and variances use the population convention. Pass either two
    equal-length sequences or a single sequence of ``(x, y)`` pairs.
    """
    if y is None:
        pairs = np.asarray(x, dtype=np.float64)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise DimensionError("expected a sequence of (x, y) pairs")
        x, y = pairs[:, 0], pairs[:, 1]
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"{x.size} x-values but {y.size} y-values")
    if x.size < 2:
        raise UndefinedCorrelationError("correlation needs at least two pairs")
    # centring first keeps the covariance free of cancellation error
    dx = x - x.mean()
    dy = y - y.mean()
    var_x = float(np.mean(dx * dx))
    var_y = float(np.mean(dy * dy))
    if var_x == 0 or var_y == 0:
        raise UndefinedCorrelationError("zero variance; correlation is undefined")
    return float(np.mean(dx * dy)) / (math.sqrt(var_x) * math.sqrt(var_y))


@dataclass(frozen=True)
class ChannelQuality:
    channel_name: str
    mse: float
    psnr: float


@dataclass(frozen=True)
class QualityReport:
    per_channel: tuple

    @property
    def mean_mse(self) -> float:
        return sum(c.mse for c in self.per_channel) / len(self.per_channel)

    @property
    def mean_psnr(self) -> float:
        """PSNR of the channel-averaged MSE."""
        return psnr(self.mean_mse)

    def to_text(self) -> str:
        lines = [f"{'channel':<8}{'MSE':>12}{'PSNR (dB)':>12}"]
        for c in self.per_channel:
            lines.append(f"{c.channel_name:<8}{c.mse:>12.4f}{_fmt_db(c.psnr):>12}")
        if len(self.per_channel) > 1:
            lines.append(f"{'mean':<8}{self.mean_mse:>12.4f}{_fmt_db(self.mean_psnr):>12}")
        return "\n".join(lines)

    def to_records(self) -> str:
        out = []
        for c in self.per_channel:
            out.append(f"mse.{c.channel_name}={c.mse!r}")
            out.append(f"psnr.{c.channel_name}={_record_db(c.psnr)}")
        out.append(f"mse.mean={self.mean_mse!r}")
        out.append(f"psnr.mean={_record_db(self.mean_psnr)}")
        return "\n".join(out)


def _fmt_db(v: float) -> str:
    return "infinite" if math.isinf(v) else f"{v:.4f}"


def _record_db(v: float) -> str:
    return "infinite" if math.isinf(v) else repr(v)


def quality_report(original: Image, reconstructed: Image) -> QualityReport:
    _check_same_geometry(original, reconstructed)
    names = ("Y",) if original.channels == 1 else _RGB_NAMES
    rows = []
    for c, name in enumerate(names):
        m = mse(original, reconstructed, c)
        rows.append(ChannelQuality(name, m, psnr(m)))
    return QualityReport(tuple(rows))


@dataclass(frozen=True)
class CorrelationReport:
    r_xy: float
    trials: int
    pairs_per_trial: int
    direction: str
    per_trial: tuple = field(default=(), compare=False)

    def to_records(self) -> str:
        return "\n".join([
            f"correlation.{self.direction}={self.r_xy!r}",
            f"correlation.trials={self.trials}",
            f"correlation.pairs_per_trial={self.pairs_per_trial}",
        ])


def adjacent_pairs(plane: np.ndarray, direction: str, count: int, rng: np.random.Generator):
    """Sample ``count`` random pixels of ``plane`` together with their neighbour."""
    try:
        dy, dx = DIRECTIONS[direction]
    except KeyError:
        raise ValueError(f"direction must be one of {sorted(DIRECTIONS)}") from None
    h, w = plane.shape
    if h - dy < 1 or w - dx < 1:
        raise DimensionError(f"a {w}x{h} image has no {direction} neighbours")
    rows = rng.integers(0, h - dy, size=count)
    cols = rng.integers(0, w - dx, size=count)
    return plane[rows, cols], plane[rows + dy, cols + dx]


def adjacent_correlation(img: Image, pairs: int = 4096, trials: int = 10,
                         direction: str = "horizontal", rng_seed: int = 0) -> CorrelationReport:
    """Mean over ``trials`` of the correlation between random adjacent pixels.

    Colour input is converted to grayscale first. Trial ``t`` draws its
    positions from a generator seeded with ``rng_seed + t``.
    """
    if pairs < 2 or trials < 1:
        raise ValueError("need at least 2 pairs and 1 trial")
    plane = to_grayscale(img).channel(0)
    if plane.min() == plane.max():
        raise UndefinedCorrelationError("constant image; correlation is undefined")
    values = []
    for t in range(trials):
        x, y = adjacent_pairs(plane, direction, pairs, np.random.default_rng(rng_seed + t))
        values.append(correlation(x, y))
    return CorrelationReport(float(np.mean(values)), trials, pairs, direction, tuple(values))


def render_codes(ci: CompressedImage) -> Image:
    """Lay out code (or cipher) bytes as a grayscale image.

    Each tile's code becomes a horizontal run of ``code_dim`` pixels at its
    grid position; channels stack vertically.
    """
    codes = ci.code_array().reshape(ci.channel_count, ci.grid_h, ci.grid_w * ci.code_dim)
    return Image(codes.reshape(ci.channel_count * ci.grid_h, ci.grid_w * ci.code_dim))
