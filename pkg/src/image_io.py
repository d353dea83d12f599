"""Netpbm (P5/P6) image IO and frame-directory video IO.

Images load as H x W x 3 DenseTensors scaled to [0, 1]; grayscale P5 input
is replicated to three channels.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from src.tensor_core import DenseTensor

FRAME_SUFFIXES = (".ppm", ".pgm", ".pnm")


class ImageFormatError(RuntimeError):
    """Raised for malformed or unsupported Netpbm data."""


def _read_header(payload: bytes, path: Path) -> tuple[str, int, int, int, int]:
    """Return (magic, width, height, maxval, data_offset)."""
    tokens: list[str] = []
    cursor = 0
    while len(tokens) < 4:
        while cursor < len(payload) and payload[cursor : cursor + 1].isspace():
            cursor += 1
        if cursor >= len(payload):
            raise ImageFormatError(f"truncated image header: {path}")
        if payload[cursor : cursor + 1] == b"#":
            while cursor < len(payload) and payload[cursor : cursor + 1] not in (b"\n", b"\r"):
                cursor += 1
            continue
        start = cursor
        while cursor < len(payload) and not payload[cursor : cursor + 1].isspace():
            cursor += 1
        tokens.append(payload[start:cursor].decode("ascii", errors="replace"))

    magic = tokens[0]
    if magic not in ("P5", "P6"):
        raise ImageFormatError(f"unsupported image magic {magic!r}: {path}")
    try:
        width, height, maxval = (int(token) for token in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError(f"non-numeric image header field: {path}") from exc
    if width < 1 or height < 1 or not 1 <= maxval <= 65535:
        raise ImageFormatError(f"invalid image header {tokens}: {path}")
    # Exactly one whitespace byte separates the header from the raster.
    return magic, width, height, maxval, cursor + 1


def _read_payload(source: Path) -> bytes:
    try:
        return source.read_bytes()
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise RuntimeError(f"Failed to read image: {source}") from exc


def read_maxval(path: str | Path) -> int:
    """Sample maxval from the header, for writing results back at the input depth."""
    source = Path(path)
    return _read_header(_read_payload(source), source)[3]


def load_image(path: str | Path) -> DenseTensor:
    source = Path(path)
    payload = _read_payload(source)
    magic, width, height, maxval, offset = _read_header(payload, source)
    channels = 3 if magic == "P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * channels * dtype.itemsize
    raster = payload[offset : offset + expected]
    if len(raster) != expected:
        raise ImageFormatError(
            f"image raster has {len(raster)} bytes, expected {expected}: {source}"
        )

    pixels = np.frombuffer(raster, dtype=dtype).reshape(height, width, channels)
    values = pixels.astype(np.float64) / float(maxval)
    if channels == 1:
        values = np.repeat(values, 3, axis=2)
    return DenseTensor.from_array(values)


def save_image(path: str | Path, t: DenseTensor, maxval: int = 255) -> None:
    """Write an H x W x 3 (P6) or H x W x 1 (P5) tensor, clipping to [0, 1]."""
    if t.ndim != 3 or t.dims[2] not in (1, 3):
        raise ValueError(f"save_image expects H x W x 3 or H x W x 1 dims, got {list(t.dims)}")
    if not 1 <= maxval <= 65535:
        raise ValueError(f"maxval must lie in 1..65535, got {maxval}")

    height, width, channels = t.dims
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    scaled = np.rint(np.clip(t.to_array(), 0.0, 1.0) * maxval).astype(dtype)
    magic = "P6" if channels == 3 else "P5"
    header = f"{magic}\n{width} {height}\n{maxval}\n".encode("ascii")

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(header + np.ascontiguousarray(scaled).tobytes())


def load_video(directory: str | Path) -> DenseTensor:
    """Stack per-frame images (lexicographic order) into H x W x F x 3."""
    source = Path(directory)
    if not source.is_dir():
        raise FileNotFoundError(f"video frame directory not found: {source}")
    frames = sorted(
        entry for entry in source.iterdir() if entry.suffix.lower() in FRAME_SUFFIXES
    )
    if not frames:
        raise ImageFormatError(f"no frames found in {source}")

    arrays = [load_image(frame).to_array() for frame in frames]
    shape = arrays[0].shape
    for frame, array in zip(frames, arrays):
        if array.shape != shape:
            raise ImageFormatError(f"frame {frame.name} has shape {array.shape}, expected {shape}")
    return DenseTensor.from_array(np.stack(arrays, axis=2))


def save_video(directory: str | Path, t: DenseTensor, prefix: str = "frame") -> list[Path]:
    if t.ndim != 4 or t.dims[3] not in (1, 3):
        raise ValueError(f"save_video expects H x W x F x C dims, got {list(t.dims)}")
    target = Path(directory)
    target.mkdir(parents=True, exist_ok=True)
    array = t.to_array()
    width = max(4, len(str(t.dims[2])))
    written = []
    for frame in range(t.dims[2]):
        path = target / f"{prefix}_{frame + 1:0{width}d}.{'ppm' if t.dims[3] == 3 else 'pgm'}"
        save_image(path, DenseTensor.from_array(array[:, :, frame, :]))
        written.append(path)
    return written
