import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_material
from matkit.errors import InvalidNormal, MissingMap, ResolutionMismatch
from matkit.materials import (
    MaterialMaps,
    decode_normal,
    encode_normal,
    load_material,
    load_meta,
    normalize_normals,
    save_material,
    srgb_decode,
    srgb_encode,
    validate,
)


def test_srgb_midpoint_matches_closed_form():
    # ((0.50196 + 0.055) / 1.055) ** 2.4 evaluated independently
    s = 128.0 / 255.0
    expected = ((s + 0.055) / 1.055) ** 2.4
    assert abs(float(srgb_decode(np.array(s))) - expected) < 1e-9
    assert abs(expected - 0.2158) < 5e-4


def test_srgb_round_trip_is_identity():
    vals = np.linspace(0.0, 1.0, 257)
    back = srgb_decode(srgb_encode(vals))
    assert np.abs(back - vals).max() < 1e-9


def test_normal_decode_example():
    enc = np.array([128 / 255, 128 / 255, 1.0])
    n = decode_normal(enc)
    assert abs(np.linalg.norm(n) - 1.0) < 1e-7
    assert abs(n[0] - 0.0039) < 1e-3 and n[2] > 0.999


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=50, deadline=None)
def test_normal_codec_round_trip(seed):
    from matkit.engine import Rng
    stream = Rng(seed).stream("n")
    n = normalize_normals(np.stack(
        [stream.uniform((8,)) - 0.5, stream.uniform((8,)) - 0.5,
         stream.uniform((8,)) * 0.9 + 0.1], axis=-1))
    back = decode_normal(encode_normal(n))
    assert np.abs(np.linalg.norm(back, axis=-1) - 1.0).max() < 1e-4
    assert np.abs(back - n).max() < 1e-6


def test_save_load_round_trip_small_error(tmp_path, material16):
    save_material(material16, tmp_path / "m")
    loaded = load_material(tmp_path / "m")
    assert loaded.resolution == 16
    assert np.abs(loaded.albedo - material16.albedo).max() <= 0.005
    assert np.abs(loaded.roughness - material16.roughness).max() <= 0.005
    assert np.abs(loaded.metallic - material16.metallic).max() <= 0.005
    # normals compared as unit vectors; renormalization can stretch the
    # raw 8-bit quantization error slightly
    assert np.abs(loaded.normal - material16.normal).max() <= 0.012


def test_save_is_idempotent_through_load(tmp_path, material16):
    save_material(material16, tmp_path / "a")
    first = load_material(tmp_path / "a")
    save_material(first, tmp_path / "b")
    second = load_material(tmp_path / "b")
    for name in ("albedo", "roughness", "metallic"):
        assert np.array_equal(getattr(first, name), getattr(second, name)), name
    # normals renormalize on load, so re-quantization can drift one step
    assert np.abs(second.normal - first.normal).max() <= 0.005


def test_round_trip_many_random_materials(tmp_path):
    worst = 0.0
    for seed in range(1000):
        m = random_material(seed, res=8)
        d = tmp_path / f"m{seed % 8}"
        save_material(m, d)
        back = load_material(d)
        worst = max(worst,
                    float(np.abs(back.albedo - m.albedo).max()),
                    float(np.abs(back.roughness - m.roughness).max()),
                    float(np.abs(back.metallic - m.metallic).max()))
        assert np.abs(np.linalg.norm(back.normal, axis=-1) - 1).max() < 1e-4
    assert worst <= 0.005


def test_constant_albedo_hits_png_extremes(tmp_path):
    res = 8
    flat_n = np.zeros((res, res, 3), np.float32)
    flat_n[..., 2] = 1.0
    for value, expected in [(0.0, 0), (1.0, 255)]:
        m = MaterialMaps(albedo=np.full((res, res, 3), value, np.float32),
                         normal=flat_n,
                         roughness=np.full((res, res, 1), 0.5, np.float32),
                         metallic=np.zeros((res, res, 1), np.float32))
        save_material(m, tmp_path / f"v{expected}")
        from PIL import Image
        arr = np.asarray(Image.open(tmp_path / f"v{expected}" / "albedo.png"))
        assert (arr == expected).all()


def test_meta_round_trip(tmp_path, material16):
    meta = {"id": "x1", "category": "checker", "prompt": "a PBR material of checker"}
    save_material(material16, tmp_path / "m", meta=meta)
    assert load_meta(tmp_path / "m") == meta


def test_missing_map_raises(tmp_path, material16):
    save_material(material16, tmp_path / "m")
    (tmp_path / "m" / "roughness.png").unlink()
    with pytest.raises(MissingMap):
        load_material(tmp_path / "m")


def test_resolution_mismatch_raises(tmp_path, material16):
    save_material(material16, tmp_path / "m")
    from PIL import Image
    Image.new("L", (8, 8)).save(tmp_path / "m" / "metallic.png")
    with pytest.raises(ResolutionMismatch):
        load_material(tmp_path / "m")


def test_invalid_normal_raises(tmp_path, material16):
    save_material(material16, tmp_path / "m")
    from PIL import Image
    # encoded z == 0 decodes to z = -1
    Image.new("RGB", (16, 16), (128, 128, 0)).save(tmp_path / "m" / "normal.png")
    with pytest.raises(InvalidNormal):
        load_material(tmp_path / "m")


def test_validate_clean_material(material16):
    assert validate(material16) == []


def test_validate_flags_range_violation(material16):
    rough = np.array(material16.roughness)
    rough[3, 4, 0] = 1.5
    bad = MaterialMaps(material16.albedo, material16.normal, rough, material16.metallic)
    violations = validate(bad)
    assert any(v.map == "roughness" and v.rule == "range" and v.texel == (3, 4)
               for v in violations)


def test_validate_flags_inverted_normal(material16):
    normal = np.array(material16.normal)
    normal[2, 5] = (0.0, 0.0, -1.0)
    bad = MaterialMaps(material16.albedo, normal, material16.roughness, material16.metallic)
    violations = validate(bad)
    assert any(v.map == "normal" and v.rule == "invalid-normal" and v.texel == (2, 5)
               for v in violations)


def test_materials_are_immutable(material16):
    with pytest.raises(ValueError):
        material16.albedo[0, 0, 0] = 0.5
