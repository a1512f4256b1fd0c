"""RIFF/WAVE input and output (PCM 16/24-bit, IEEE float32)."""

from __future__ import annotations

import wave

import numpy as np
from scipy.io import wavfile

FORMATS = ("float32", "pcm16", "pcm24")
SAMPLE_RATES = (44100, 48000)
MAX_CHANNELS = 16


def read_wav(path):
    """Return ``(samples (N, C) float64 in [-1, 1], sample_rate)``."""
    fs, data = wavfile.read(path)
    if data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:  # 24-bit is delivered left-justified in int32
        x = data / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(float) - 128.0) / 128.0
    else:
        x = data.astype(float)
    if x.ndim == 1:
        x = x[:, None]
    return x, int(fs)


def write_wav(path, data, sample_rate: int, fmt: str = "float32", strict_rate: bool = True) -> None:
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if not 1 <= x.shape[1] <= MAX_CHANNELS:
        raise ValueError(f"channel count must be 1..{MAX_CHANNELS}")
    if strict_rate and int(sample_rate) not in SAMPLE_RATES:
        raise ValueError(f"sample rate must be one of {SAMPLE_RATES}")
    if fmt == "float32":
        wavfile.write(path, int(sample_rate), x.astype("<f4"))
    elif fmt == "pcm16":
        q = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        wavfile.write(path, int(sample_rate), q)
    elif fmt == "pcm24":
        q = np.clip(np.round(x * 8388608.0), -8388608, 8388607).astype("<i4")
        raw = q.reshape(-1, 1).view(np.uint8).reshape(-1, 4)[:, :3].tobytes()
        with wave.open(str(path), "wb") as w:
            w.setnchannels(x.shape[1])
            w.setsampwidth(3)
            w.setframerate(int(sample_rate))
            w.writeframes(raw)
    else:
        raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")
