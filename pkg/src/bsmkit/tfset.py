"""TFSET binary container for ATFs, HRTFs and filter sets.

Layout (little endian)::

    magic      8 bytes  b"TFSET\\0\\0\\1"   (last byte is the format version)
    kind       u8       0 = ATF, 1 = HRTF, 2 = FILTER
    sample_rate f64
    fft_size   u32
    channels   u32      microphones for ATF/FILTER, 2 for HRTF
    directions u32      directions for ATF/HRTF, 2 (ears) for FILTER
    has_weights u8
    [FILTER only] method u8, snr_db f64
    [ATF/HRTF only] directions * (elevation f64, azimuth f64)
    [has_weights] directions * f64
    data       bins * channels * directions * (re f32, im f32)

Samples are stored as float32, so values that are not already representable
in single precision are rounded once on first write; afterwards the
round trip is bit exact.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

from .core import DirectionGrid, FilterSet, FrequencyGrid, Method, TFKind, TransferFunctionSet

MAGIC = b"TFSET\x00\x00"
VERSION = 1
_HEADER = struct.Struct("<BdIIIB")
_FILTER_EXT = struct.Struct("<Bd")


class TfsetError(ValueError):
    """Malformed or incompatible TFSET payload."""


def to_bytes(obj: Union[TransferFunctionSet, FilterSet]) -> bytes:
    parts = [MAGIC + bytes([VERSION])]
    if isinstance(obj, FilterSet):
        bins, chans, dirs = obj.data.shape
        parts.append(_HEADER.pack(TFKind.FILTER, obj.grid.sample_rate, obj.grid.fft_size, chans, dirs, 0))
        parts.append(_FILTER_EXT.pack(int(obj.method), obj.snr_db))
    else:
        bins, chans, dirs = obj.data.shape
        w = obj.directions.weights
        parts.append(_HEADER.pack(int(obj.kind), obj.grid.sample_rate, obj.grid.fft_size, chans, dirs,
                                  int(w is not None)))
        pairs = np.stack([obj.directions.elevation, obj.directions.azimuth], axis=-1)
        parts.append(pairs.astype("<f8").tobytes())
        if w is not None:
            parts.append(w.astype("<f8").tobytes())
    data = np.empty(obj.data.shape + (2,), dtype="<f4")
    data[..., 0] = obj.data.real
    data[..., 1] = obj.data.imag
    parts.append(data.tobytes())
    return b"".join(parts)


def from_bytes(buf: bytes) -> Union[TransferFunctionSet, FilterSet]:
    if len(buf) < 8 or buf[:7] != MAGIC:
        raise TfsetError("not a TFSET payload (bad magic)")
    if buf[7] != VERSION:
        raise TfsetError(f"unsupported TFSET version {buf[7]} (expected {VERSION})")
    pos = 8
    try:
        kind, fs, nfft, chans, dirs, has_w = _HEADER.unpack_from(buf, pos)
    except struct.error as exc:
        raise TfsetError("truncated header") from exc
    pos += _HEADER.size
    try:
        kind = TFKind(kind)
    except ValueError as exc:
        raise TfsetError(f"unknown kind {kind}") from exc
    grid = FrequencyGrid(fs, nfft)
    method = snr = None
    if kind == TFKind.FILTER:
        method, snr = _FILTER_EXT.unpack_from(buf, pos)
        pos += _FILTER_EXT.size
    else:
        n = dirs * 2 * 8
        pairs = np.frombuffer(buf, dtype="<f8", count=dirs * 2, offset=pos).reshape(dirs, 2)
        pos += n
        weights = None
        if has_w:
            weights = np.frombuffer(buf, dtype="<f8", count=dirs, offset=pos)
            pos += dirs * 8
    count = grid.bins * chans * dirs * 2
    if len(buf) != pos + count * 4:
        raise TfsetError(f"payload size mismatch: expected {pos + count * 4} bytes, got {len(buf)}")
    raw = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).reshape(grid.bins, chans, dirs, 2)
    data = raw[..., 0].astype(np.complex128)
    data.imag = raw[..., 1]
    if kind == TFKind.FILTER:
        return FilterSet(grid, data, Method(method), snr)
    return TransferFunctionSet(grid, DirectionGrid(pairs[:, 0], pairs[:, 1], weights), data, kind)


def save(path, obj) -> None:
    Path(path).write_bytes(to_bytes(obj))


def load(path) -> Union[TransferFunctionSet, FilterSet]:
    return from_bytes(Path(path).read_bytes())
