"""Raster containers and TIFF/PNG I/O for the two marker channels.

Supported interchange formats: baseline TIFF (uncompressed or LZW,
little or big endian, 8/16-bit grayscale or 8-bit RGB) on the way in,
8-bit RGB PNG for rendered overlays on the way out. Only the first page
of a multi-page TIFF is used.
"""

import io
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import InputError

__all__ = [
    "GrayImage",
    "RgbImage",
    "TiffReadError",
    "UnsupportedTiffError",
    "ChannelSelectionError",
    "load_tiff",
    "save_tiff",
    "normalize_to_8bit",
    "save_png",
    "load_png",
    "encode_png",
]

# TIFF compression tag (259) values accepted as "baseline".
_COMPRESSION_NONE = 1
_COMPRESSION_LZW = 5

_CHANNEL_INDEX = {"red": 0, "green": 1, "blue": 2}

PathOrStream = Union[str, Path, BinaryIO]


class TiffReadError(InputError):
    """The file could not be opened or is not a TIFF at all."""


class UnsupportedTiffError(InputError):
    """The file is a TIFF, but uses a variant outside the supported subset."""


class ChannelSelectionError(InputError):
    """An RGB TIFF was given without saying which channel to extract."""


class GrayImage:
    """Single-channel intensity raster.

    ``pixels`` is a read-only ``(height, width)`` array of dtype uint8 or
    uint16 according to ``bit_depth``. Instances are immutable by
    convention and safe to share across threads.
    """

    __slots__ = ("width", "height", "bit_depth", "pixels")

    def __init__(self, width: int, height: int, bit_depth: int, pixels) -> None:
        if bit_depth not in (8, 16):
            raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
        if width <= 0 or height <= 0:
            raise ValueError(f"image dimensions must be positive, got {width}x{height}")
        arr = np.asarray(pixels)
        if arr.ndim == 1:
            if arr.size != width * height:
                raise ValueError(
                    f"pixel count {arr.size} != width*height {width * height}"
                )
            arr = arr.reshape(height, width)
        elif arr.ndim != 2 or arr.shape != (height, width):
            raise ValueError(f"expected pixel shape ({height}, {width}), got {arr.shape}")
        limit = (1 << bit_depth) - 1
        if arr.size and (int(arr.min()) < 0 or int(arr.max()) > limit):
            raise ValueError(f"intensity out of range for {bit_depth}-bit image")
        dtype = np.uint8 if bit_depth == 8 else np.uint16
        arr = np.ascontiguousarray(arr, dtype=dtype)
        arr.flags.writeable = False
        object.__setattr__(self, "width", int(width))
        object.__setattr__(self, "height", int(height))
        object.__setattr__(self, "bit_depth", int(bit_depth))
        object.__setattr__(self, "pixels", arr)

    def __setattr__(self, name, value):
        raise AttributeError("GrayImage is immutable")

    def __eq__(self, other) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.bit_depth == other.bit_depth
            and np.array_equal(self.pixels, other.pixels)
        )

    def __repr__(self) -> str:
        return f"GrayImage({self.width}x{self.height}, {self.bit_depth}-bit)"


class RgbImage:
    """8-bit RGB raster; ``pixels`` is a read-only ``(height, width, 3)`` uint8 array."""

    __slots__ = ("width", "height", "pixels")

    def __init__(self, width: int, height: int, pixels) -> None:
        if width <= 0 or height <= 0:
            raise ValueError(f"image dimensions must be positive, got {width}x{height}")
        arr = np.asarray(pixels)
        if arr.ndim == 2 and arr.shape == (width * height, 3):
            arr = arr.reshape(height, width, 3)
        if arr.shape != (height, width, 3):
            raise ValueError(f"expected pixel shape ({height}, {width}, 3), got {arr.shape}")
        if arr.size and (int(arr.min()) < 0 or int(arr.max()) > 255):
            raise ValueError("RGB intensity out of range (0-255)")
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        arr.flags.writeable = False
        object.__setattr__(self, "width", int(width))
        object.__setattr__(self, "height", int(height))
        object.__setattr__(self, "pixels", arr)

    def __setattr__(self, name, value):
        raise AttributeError("RgbImage is immutable")

    def __eq__(self, other) -> bool:
        if not isinstance(other, RgbImage):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.pixels, other.pixels)
        )

    def __repr__(self) -> str:
        return f"RgbImage({self.width}x{self.height})"


def _open_image(source: PathOrStream) -> Image.Image:
    try:
        return Image.open(source)
    except FileNotFoundError as exc:
        raise TiffReadError(f"cannot read image: {exc}") from exc
    except UnidentifiedImageError as exc:
        raise TiffReadError(f"not a readable image file: {source}") from exc
    except OSError as exc:
        raise TiffReadError(f"cannot read image {source}: {exc}") from exc


def load_tiff(source: PathOrStream, channel: str | None = None) -> GrayImage:
    """Decode the first page of a baseline TIFF into a GrayImage.

    Args:
        source: Path or binary stream holding the TIFF.
        channel: Required for RGB files; one of ``red``, ``green``, ``blue``.
            Ignored for grayscale files.

    Raises:
        TiffReadError: unreadable file or not a TIFF.
        UnsupportedTiffError: compression other than none/LZW, or a sample
            layout outside 8/16-bit gray and 8-bit RGB.
        ChannelSelectionError: RGB file with no channel given.
    """
    if channel is not None and channel not in _CHANNEL_INDEX:
        raise ChannelSelectionError(
            f"unknown channel {channel!r}; expected red, green or blue"
        )
    with _open_image(source) as im:
        if im.format != "TIFF":
            raise TiffReadError(f"not a TIFF file (decoded as {im.format})")
        compression = im.tag_v2.get(259, _COMPRESSION_NONE)
        if compression not in (_COMPRESSION_NONE, _COMPRESSION_LZW):
            raise UnsupportedTiffError(
                f"unsupported TIFF compression tag {compression}; only uncompressed "
                "and LZW are supported"
            )
        mode = im.mode
        if mode == "L":
            arr = np.asarray(im, dtype=np.uint8)
            return GrayImage(im.width, im.height, 8, arr)
        if mode in ("I;16", "I;16L", "I;16B", "I;16N"):
            arr = np.asarray(im)
            if arr.dtype != np.uint16:
                # some Pillow builds hand back int32 for non-native byte order
                arr = arr.astype(np.uint16)
            return GrayImage(im.width, im.height, 16, arr)
        if mode == "I":
            bits = im.tag_v2.get(258)
            bits = bits[0] if isinstance(bits, tuple) else bits
            if bits == 16:
                arr = np.asarray(im).astype(np.uint16)
                return GrayImage(im.width, im.height, 16, arr)
            raise UnsupportedTiffError(
                f"unsupported TIFF bit depth {bits}; only 8 and 16 are supported"
            )
        if mode == "RGB":
            if channel is None:
                raise ChannelSelectionError(
                    "RGB TIFF requires a channel selection (red, green or blue)"
                )
            arr = np.asarray(im, dtype=np.uint8)[:, :, _CHANNEL_INDEX[channel]]
            return GrayImage(im.width, im.height, 8, arr)
        raise UnsupportedTiffError(
            f"unsupported TIFF sample layout (mode {mode}); expected 8/16-bit "
            "grayscale or 8-bit RGB"
        )


def save_tiff(img: GrayImage | RgbImage, path: str | Path) -> None:
    """Write an uncompressed baseline TIFF (round-trips through load_tiff)."""
    # Pillow infers L / I;16 / RGB from the array dtype and shape
    Image.fromarray(np.asarray(img.pixels)).save(path, format="TIFF")


def normalize_to_8bit(img: GrayImage, mode: str = "full-range") -> GrayImage:
    """Map an image onto the 0-255 threshold domain.

    ``full-range`` divides 16-bit values by 257 with round-half-to-even
    (identity for 8-bit input); ``min-max`` linearly stretches the observed
    [min, max] to [0, 255], with a constant image mapping to all zeros.
    """
    if mode == "full-range":
        if img.bit_depth == 8:
            return img
        out = np.round(img.pixels / 257.0).astype(np.uint8)
        return GrayImage(img.width, img.height, 8, out)
    if mode == "min-max":
        arr = img.pixels.astype(np.float64)
        lo = float(arr.min())
        hi = float(arr.max())
        if hi == lo:
            out = np.zeros_like(arr, dtype=np.uint8)
        else:
            out = np.round((arr - lo) * (255.0 / (hi - lo))).astype(np.uint8)
        return GrayImage(img.width, img.height, 8, out)
    raise ValueError(f"unknown normalization mode {mode!r}")


def save_png(img: RgbImage, path: str | Path) -> None:
    """Write a lossless 8-bit RGB PNG."""
    Image.fromarray(np.asarray(img.pixels)).save(path, format="PNG")


def encode_png(img: RgbImage) -> bytes:
    """PNG-encode in memory; identical input yields identical bytes."""
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img.pixels)).save(buf, format="PNG")
    return buf.getvalue()


def load_png(source: PathOrStream) -> RgbImage:
    """Read a PNG back as an RgbImage (alpha, if any, is dropped)."""
    with _open_image(source) as im:
        rgb = im.convert("RGB")
        arr = np.asarray(rgb, dtype=np.uint8)
        return RgbImage(rgb.width, rgb.height, arr)
