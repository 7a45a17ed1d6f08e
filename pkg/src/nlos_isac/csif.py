"""CSIF binary dataset files.

Layout (all little-endian)::

    magic   4s   b"CSIF"
    version u16  (1)
    N       u32  subcarriers
    M       u32  symbols per frame
    frames  u32
    f_c     f64  carrier frequency [Hz]
    df      f64  subcarrier spacing [Hz]
    T       f64  symbol duration [s]
    mask    ceil(M/8) bytes, numpy packbits (MSB first), 1 = DL symbol
    frames  frames * N * M complex64 (float32 re, float32 im), row-major (n, m)
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .config import publish
from .core import SymbolMask, SystemConfig
from .scene import CsiFrame

MAGIC = b"CSIF"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIddd")


class DataFormatError(ValueError):
    """Dataset file is malformed or of an unsupported version."""


@dataclass(frozen=True)
class CsifHeader:
    subcarrier_count: int
    symbol_count: int
    frame_count: int
    carrier_frequency_hz: float
    subcarrier_spacing_hz: float
    symbol_duration_s: float
    version: int = VERSION

    @property
    def frame_bytes(self) -> int:
        return self.subcarrier_count * self.symbol_count * 8

    @property
    def mask_bytes(self) -> int:
        return (self.symbol_count + 7) // 8

    def matches(self, cfg: SystemConfig) -> bool:
        return (self.subcarrier_count == cfg.subcarrier_count
                and self.symbol_count == cfg.symbol_count_per_frame
                and np.isclose(self.carrier_frequency_hz, cfg.carrier_frequency_hz)
                and np.isclose(self.subcarrier_spacing_hz, cfg.subcarrier_spacing_hz)
                and np.isclose(self.symbol_duration_s, cfg.symbol_duration_s))


def write_dataset(path, frames: Iterable[CsiFrame], cfg: SystemConfig, frame_count: int,
                  mask: SymbolMask) -> None:
    """Stream ``frame_count`` frames into ``path`` atomically (temp file + rename)."""
    path = Path(path)
    header = _HEADER.pack(MAGIC, VERSION, cfg.subcarrier_count, cfg.symbol_count_per_frame,
                          frame_count, cfg.carrier_frequency_hz, cfg.subcarrier_spacing_hz,
                          cfg.symbol_duration_s)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    written = 0
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(np.packbits(mask.usable).tobytes())
            for frame in frames:
                fh.write(np.ascontiguousarray(frame.h, dtype="<c8").tobytes())
                written += 1
        if written != frame_count:
            raise ValueError(f"expected {frame_count} frames, got {written}")
        publish(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_header(fh) -> tuple[CsifHeader, SymbolMask]:
    raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise DataFormatError("truncated CSIF header")
    magic, version, n, m, count, fc, df, t = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise DataFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise DataFormatError(f"unsupported CSIF version {version}")
    header = CsifHeader(n, m, count, fc, df, t, version)
    packed = fh.read(header.mask_bytes)
    if len(packed) < header.mask_bytes:
        raise DataFormatError("truncated mask")
    bits = np.unpackbits(np.frombuffer(packed, dtype=np.uint8))[:m].astype(bool)
    return header, SymbolMask(bits)


def iter_frames(path, frame_duration_s: float = 10e-3) -> Iterator[CsiFrame]:
    with open(path, "rb") as fh:
        header, mask = read_header(fh)
        shape = (header.subcarrier_count, header.symbol_count)
        for k in range(header.frame_count):
            raw = fh.read(header.frame_bytes)
            if len(raw) < header.frame_bytes:
                raise DataFormatError(f"truncated frame {k}")
            h = np.frombuffer(raw, dtype="<c8").reshape(shape).astype(np.complex64)
            yield CsiFrame(h=h, mask=mask, frame_index=k, timestamp_s=k * frame_duration_s)


def read_dataset(path, frame_duration_s: float = 10e-3):
    with open(path, "rb") as fh:
        header, mask = read_header(fh)
    return header, mask, list(iter_frames(path, frame_duration_s))


def infer_tdd_pattern(mask: SymbolMask) -> tuple[int, int]:
    """(M_DL, M_UL) of a DL-first periodic mask."""
    u = mask.usable
    if u.all():
        return u.size, 0
    dl = int(np.argmin(u))
    ul = int(np.argmax(u[dl:])) if u[dl:].any() else u.size - dl
    return dl, ul
