import struct

import numpy as np
import pytest

from nlos_isac.core import SystemConfig, build_tdd_mask
from nlos_isac.csif import (DataFormatError, infer_tdd_pattern, iter_frames, read_dataset,
                            read_header, write_dataset)
from nlos_isac.scene import Scatterer, Scene, generate_dataset


@pytest.fixture
def dataset(tmp_path, small_cfg):
    scene = Scene(scatterers=(Scatterer(kind="moving", initial_range_m=30.0,
                                        radial_speed_mps=2.0),),
                  noise_power=0.1, duration_s=0.05, seed=2)
    frames = generate_dataset(scene, small_cfg, dtype=np.complex64)
    path = tmp_path / "d.csif"
    write_dataset(path, frames, small_cfg, len(frames), build_tdd_mask(small_cfg))
    return path, frames


def test_round_trip(dataset, small_cfg):
    path, frames = dataset
    header, mask, back = read_dataset(path)
    assert header.frame_count == 5
    assert (header.subcarrier_count, header.symbol_count) == (64, 140)
    assert header.carrier_frequency_hz == small_cfg.carrier_frequency_hz
    assert header.matches(small_cfg)
    assert mask == build_tdd_mask(small_cfg)
    for a, b in zip(frames, back):
        assert np.array_equal(a.h, b.h)
        assert b.frame_index == a.frame_index


def test_file_size(dataset):
    path, _ = dataset
    # header 42 bytes, mask ceil(140 / 8) bytes, 5 frames of 64 x 140 complex64
    assert path.stat().st_size == 42 + 18 + 5 * 64 * 140 * 8


def test_bad_magic(dataset):
    path, _ = dataset
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(DataFormatError, match="magic"):
        read_dataset(path)


def test_unsupported_version(dataset):
    path, _ = dataset
    raw = bytearray(path.read_bytes())
    raw[4:6] = struct.pack("<H", 9)
    path.write_bytes(bytes(raw))
    with pytest.raises(DataFormatError, match="version"):
        read_dataset(path)


def test_truncated_frame(dataset):
    path, _ = dataset
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(DataFormatError, match="truncated frame 4"):
        list(iter_frames(path))


def test_truncated_header(tmp_path):
    path = tmp_path / "x.csif"
    path.write_bytes(b"CSIF\x01")
    with pytest.raises(DataFormatError):
        with open(path, "rb") as fh:
            read_header(fh)


def test_frame_count_mismatch_leaves_no_file(tmp_path, small_cfg):
    frames = generate_dataset(Scene(duration_s=0.02), small_cfg)
    path = tmp_path / "d.csif"
    with pytest.raises(ValueError):
        write_dataset(path, frames, small_cfg, 3, build_tdd_mask(small_cfg))
    assert list(tmp_path.iterdir()) == []


def test_infer_tdd_pattern(cfg):
    assert infer_tdd_pattern(build_tdd_mask(cfg)) == (104, 36)
    all_dl = SystemConfig(symbol_count_per_frame=4, dl_symbols_per_pattern=4,
                          ul_symbols_per_pattern=0, tdd_pattern_duration_s=4 * 8.92e-6)
    assert infer_tdd_pattern(build_tdd_mask(all_dl)) == (4, 0)
