import json
import math

import numpy as np
import pytest

from conftest import random_material
from matkit.engine import Rng
from matkit.materials import MaterialMaps
from matkit.render import (
    RenderSetup,
    brdf_eval,
    fresnel_schlick,
    ggx_d,
    render,
    render_shaded_dataset,
    sample_nine_views,
    smith_g,
    texel_centers,
    tonemap,
)

# -- independent scalar oracle (pure python floats, no matkit.render calls) -----


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _normalize(a):
    n = math.sqrt(_dot(a, a))
    return [x / n for x in a]


def oracle_ggx(n_dot_h, roughness):
    a = max(min(roughness, 1.0), 0.01) ** 2
    d = n_dot_h * n_dot_h * (a * a - 1.0) + 1.0
    return min(a * a / (math.pi * d * d), 1e8)


def oracle_fresnel(h_dot_v, f0):
    return [f + (1.0 - f) * (1.0 - h_dot_v) ** 5 for f in f0]


def oracle_smith(n_dot_l, n_dot_v, roughness):
    k = max(min(roughness, 1.0), 0.01) ** 2 / 2.0

    def g1(x):
        return x / (x * (1.0 - k) + k)

    return g1(n_dot_l) * g1(n_dot_v)


def oracle_brdf(albedo, normal, roughness, metallic, l, v):
    n_dot_l = _dot(normal, l)
    n_dot_v = _dot(normal, v)
    if n_dot_l <= 0.0 or n_dot_v <= 0.0:
        return [0.0, 0.0, 0.0]
    h_raw = [l[i] + v[i] for i in range(3)]
    if math.sqrt(_dot(h_raw, h_raw)) < 1e-12:
        return [0.0, 0.0, 0.0]
    h = _normalize(h_raw)
    n_dot_h = min(max(_dot(normal, h), 0.0), 1.0)
    h_dot_v = min(max(_dot(h, v), 0.0), 1.0)
    f0 = [0.04 * (1.0 - metallic) + a * metallic for a in albedo]
    fr = oracle_fresnel(h_dot_v, f0)
    d = oracle_ggx(n_dot_h, roughness)
    g = oracle_smith(n_dot_l, n_dot_v, roughness)
    out = []
    for c in range(3):
        spec = d * fr[c] * g / (4.0 * n_dot_l * n_dot_v)
        diff = (1.0 - fr[c]) * (1.0 - metallic) * albedo[c] / math.pi
        out.append(diff + spec)
    return out


# -- unit values -------------------------------------------------------------------


def test_ggx_hand_values():
    assert abs(ggx_d(1.0, 1.0) - 1.0 / math.pi) < 1e-9
    assert abs(ggx_d(1.0, 0.5) - 1.0 / (math.pi * 0.0625)) < 1e-9
    assert abs(ggx_d(0.0, 1.0) - 1.0 / math.pi) < 1e-9


def test_ggx_singularity_guard():
    val = ggx_d(1.0, 0.0)
    assert math.isfinite(val) and 0 < val <= 1e8


def test_fresnel_hand_values():
    np.testing.assert_allclose(fresnel_schlick(1.0, np.array([0.2, 0.3, 0.4])),
                               [0.2, 0.3, 0.4], atol=1e-12)
    np.testing.assert_allclose(fresnel_schlick(0.0, np.array([0.04] * 3)),
                               [1.0, 1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(fresnel_schlick(0.5, np.array([0.04] * 3)),
                               [0.07, 0.07, 0.07], atol=1e-12)


def test_smith_hand_values():
    assert abs(smith_g(1.0, 1.0, 1.0) - 1.0) < 1e-12
    assert abs(smith_g(0.5, 1.0, 1.0) - 2.0 / 3.0) < 1e-12
    # k -> 0 limit: roughness floor keeps k tiny but positive
    assert abs(smith_g(0.7, 0.9, 0.0) - 1.0) < 1e-3


def test_brdf_matches_scalar_oracle_on_1000_random_configs():
    stream = Rng(77).stream("cfg")
    worst = 0.0
    for _ in range(1000):
        albedo = stream.uniform((3,)).tolist()
        n = _normalize([stream.uniform() - 0.5, stream.uniform() - 0.5,
                        stream.uniform() * 0.9 + 0.1])
        l = _normalize([stream.uniform() - 0.5, stream.uniform() - 0.5,
                        stream.uniform() * 2 - 1])
        v = _normalize([stream.uniform() - 0.5, stream.uniform() - 0.5,
                        stream.uniform() * 2 - 1])
        rough = stream.uniform() * 0.98 + 0.02
        metal = stream.uniform()
        got = brdf_eval(albedo, n, rough, metal, l, v)
        want = oracle_brdf(albedo, n, rough, metal, l, v)
        worst = max(worst, float(np.abs(np.asarray(want) - got).max()))
    assert worst < 1e-6


def test_brdf_center_hand_value():
    got = brdf_eval([0.5, 0.5, 0.5], [0, 0, 1], 1.0, 0.0, [0, 0, 1], [0, 0, 1])
    expected = 0.96 * 0.5 / math.pi + (1 / math.pi) * 0.04 / 4.0
    np.testing.assert_allclose(got, [expected] * 3, atol=1e-9)
    assert abs(expected - 0.15597) < 1e-5


def test_brdf_clamps_backfacing_to_zero():
    out = brdf_eval([0.5] * 3, [0, 0, 1], 0.5, 0.0, [0, 0, -1], [0, 0, 1])
    assert np.array_equal(out, np.zeros(3))
    out = brdf_eval([0.5] * 3, [0, 0, 1], 0.5, 0.0, [0, 0, 1], [0, 0, -1])
    assert np.array_equal(out, np.zeros(3))


def test_brdf_reciprocity():
    stream = Rng(5).stream("dirs")
    for _ in range(100):
        n = _normalize([stream.uniform() * 0.4 - 0.2, stream.uniform() * 0.4 - 0.2, 1.0])
        l = _normalize([stream.uniform() - 0.5, stream.uniform() - 0.5,
                        stream.uniform() * 0.9 + 0.1])
        v = _normalize([stream.uniform() - 0.5, stream.uniform() - 0.5,
                        stream.uniform() * 0.9 + 0.1])
        albedo = stream.uniform((3,)).tolist()
        rough = stream.uniform() * 0.9 + 0.05
        metal = stream.uniform()
        a = brdf_eval(albedo, n, rough, metal, l, v)
        b = brdf_eval(albedo, n, rough, metal, v, l)
        np.testing.assert_allclose(a, b, atol=1e-6)


# -- plane rendering ------------------------------------------------------------------


def _uniform_material(res=33, albedo=0.5, rough=1.0, metal=0.0):
    normal = np.zeros((res, res, 3), np.float32)
    normal[..., 2] = 1.0
    return MaterialMaps(
        albedo=np.full((res, res, 3), albedo, np.float32),
        normal=normal,
        roughness=np.full((res, res, 1), rough, np.float32),
        metallic=np.full((res, res, 1), metal, np.float32),
    )


def test_render_center_texel_hand_value():
    m = _uniform_material()
    setup = RenderSetup((0, 0, 2), (0, 0, 2), 4.0)
    img = render(m, setup).pixels
    np.testing.assert_allclose(img[16, 16], [0.15597] * 3, atol=1e-4)


def test_render_specular_only_center_value():
    m = _uniform_material(albedo=0.0)
    img = render(m, RenderSetup((0, 0, 2), (0, 0, 2), 4.0)).pixels
    np.testing.assert_allclose(img[16, 16], [0.04 / (4 * math.pi)] * 3, atol=1e-5)


def test_render_intensity_linearity_exact():
    m = random_material(11)
    s1 = RenderSetup((0.3, 0.2, 2.0), (0.1, -0.4, 1.5), 1.5)
    base = render(m, s1).pixels
    # power-of-two scaling commutes with float rounding: bitwise equality
    s4 = RenderSetup(s1.camera_pos, s1.light_pos, 6.0)
    np.testing.assert_array_equal(render(m, s4).pixels, 4.0 * base)
    # arbitrary scaling is linear to rounding error
    s3 = RenderSetup(s1.camera_pos, s1.light_pos, 4.5)
    np.testing.assert_allclose(render(m, s3).pixels, 3.0 * base, rtol=1e-6)


def test_render_nonnegative_and_finite():
    for seed in range(5):
        m = random_material(seed)
        img = render(m, RenderSetup((0.5, 0.5, 1.2), (-0.6, 0.1, 2.5), 4.0)).pixels
        assert np.isfinite(img).all() and img.min() >= 0.0


def test_render_hemisphere_clamp_zeroes_backfacing_texels():
    res = 32
    normal = np.zeros((res, res, 3), np.float32)
    normal[..., 2] = 1.0
    # light barely above the plane far to the side: texels near the opposite
    # edge see it below their horizon once normals tilt away
    tilt = np.zeros((res, res, 3), np.float32)
    tilt[..., 0] = 0.9
    tilt[..., 2] = 0.1
    tilt /= np.linalg.norm(tilt, axis=-1, keepdims=True)
    m = MaterialMaps(albedo=np.full((res, res, 3), 0.5, np.float32), normal=tilt,
                     roughness=np.full((res, res, 1), 0.5, np.float32),
                     metallic=np.zeros((res, res, 1), np.float32))
    img = render(m, RenderSetup((0, 0, 2), (-50.0, 0, 1.0), 2500.0)).pixels
    n_dot_l_sign = (tilt[..., 0] * -1.0) < 0  # light mostly in -x direction
    assert (img[n_dot_l_sign] == 0).all() or (img >= 0).all()
    # exact zero where the cosine clamps
    pos = texel_centers(res)
    l = np.array([-50.0, 0, 1.0]) - pos
    l /= np.linalg.norm(l, axis=-1, keepdims=True)
    mask = (tilt * l).sum(-1) <= 0
    assert mask.any()
    assert (img[mask] == 0).all()


def test_texel_centers_exact_center_and_orientation():
    pos = texel_centers(33)
    np.testing.assert_allclose(pos[16, 16], [0, 0, 0], atol=1e-7)
    assert pos[0, 0, 0] < 0 and pos[0, 0, 1] > 0  # top-left is (-x, +y)
    assert pos[-1, -1, 0] > 0 and pos[-1, -1, 1] < 0


# -- view sampling ---------------------------------------------------------------------


def test_sample_nine_views_structure():
    views = sample_nine_views(123)
    assert len(views) == 9
    for v in views[:3]:
        assert abs(np.linalg.norm(v.camera_pos) - 50.0) < 1e-6
        assert abs(np.linalg.norm(v.light_pos) - 50.0) < 1e-6
        assert v.light_intensity == 50.0 ** 2
    for v in views[3:]:
        assert v.camera_pos == v.light_pos
        assert 1.0 <= v.camera_pos[2] <= 3.0
        assert -1.0 <= v.camera_pos[0] <= 1.0
        assert v.light_intensity == 4.0


def test_sample_nine_views_deterministic():
    assert sample_nine_views(7) == sample_nine_views(7)
    assert sample_nine_views(7) != sample_nine_views(8)


# -- shaded dataset -----------------------------------------------------------------------


def test_render_shaded_dataset_counts_and_determinism(tmp_path, tiny_manifest):
    n1 = render_shaded_dataset(tiny_manifest, per_material=2, seed=9, out=tmp_path / "a")
    assert n1 == 2 * len(tiny_manifest.records)
    index = json.loads((tmp_path / "a" / "index.json").read_text())
    assert len(index["pairs"]) == n1
    render_shaded_dataset(tiny_manifest, per_material=2, seed=9, out=tmp_path / "b")
    rec = tiny_manifest.records[0]
    a = (tmp_path / "a" / rec.id / "shot_0.png").read_bytes()
    b = (tmp_path / "b" / rec.id / "shot_0.png").read_bytes()
    assert a == b


def test_shaded_images_of_shiny_material_contain_highlight(tmp_path):
    res = 32
    normal = np.zeros((res, res, 3), np.float32)
    normal[..., 2] = 1.0
    m = MaterialMaps(albedo=np.full((res, res, 3), 0.3, np.float32), normal=normal,
                     roughness=np.full((res, res, 1), 0.05, np.float32),
                     metallic=np.zeros((res, res, 1), np.float32))
    img = render(m, RenderSetup((0.2, 0.1, 2.0), (0.2, 0.1, 2.0), 4.0)).pixels
    assert img.max() >= 2 * 0.3  # visible highlight over the albedo level
    ldr = tonemap(img)
    assert ldr.max() <= 1.0 and ldr.min() >= 0.0
