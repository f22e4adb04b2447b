"""Built-in invariant checks behind the `selftest` subcommand.

These are fast smoke-level versions of the property suites: BRDF oracle
values, padding/seam identities, group laws, schedule math, gradient
checks, and determinism.  The full depth lives in the pytest suite.
"""

from __future__ import annotations

import math

import numpy as np

from . import engine as E
from .augment import ALL_KINDS, PlanarIsometry, apply_isometry, compose, permute_grid, transform_setup
from .diffusion import make_schedule, q_sample
from .engine import Rng, Tensor, grad_check
from .materials import MaterialMaps, decode_normal, encode_normal, normalize_normals
from .render import RenderSetup, brdf_eval, fresnel_schlick, ggx_d, render, sample_nine_views, smith_g
from .tiling import circular_pad, seam_score


def _random_material(seed: int, res: int = 16) -> MaterialMaps:
    st = Rng(seed).stream("mat")
    normal = normalize_normals(np.stack(
        [st.uniform((res, res)) * 0.6 - 0.3,
         st.uniform((res, res)) * 0.6 - 0.3,
         np.ones((res, res))], axis=-1))
    return MaterialMaps(
        albedo=st.uniform((res, res, 3)).astype(np.float32),
        normal=normal.astype(np.float32),
        roughness=(st.uniform((res, res, 1)) * 0.9 + 0.05).astype(np.float32),
        metallic=st.uniform((res, res, 1)).astype(np.float32),
    )


def _checks():
    yield "ggx unit values", lambda: (
        abs(ggx_d(1.0, 1.0) - 1.0 / math.pi) < 1e-9
        and abs(ggx_d(1.0, 0.5) - 16.0 / math.pi) < 1e-9
        and ggx_d(1.0, 0.0) <= 1e8)
    yield "fresnel/smith values", lambda: (
        abs(float(fresnel_schlick(0.5, np.array([0.04]))[0]) - 0.07) < 1e-9
        and abs(smith_g(0.5, 1.0, 1.0) - 2.0 / 3.0) < 1e-9)

    def brdf_reciprocity():
        st = Rng(11).stream("dirs")
        for _ in range(50):
            d = st.uniform((2, 3)) * 2 - 1
            d[:, 2] = np.abs(d[:, 2]) + 0.1
            l, v = d / np.linalg.norm(d, axis=1, keepdims=True)
            a = brdf_eval([0.5, 0.4, 0.3], [0, 0, 1], 0.4, 0.3, l, v)
            b = brdf_eval([0.5, 0.4, 0.3], [0, 0, 1], 0.4, 0.3, v, l)
            if not np.allclose(a, b, atol=1e-6):
                return False
        return True
    yield "brdf reciprocity", brdf_reciprocity

    def render_props():
        m = _random_material(3)
        s = RenderSetup((0.2, -0.1, 2.0), (0.5, 0.3, 1.5), 4.0)
        img = render(m, s).pixels
        img2 = render(m, RenderSetup(s.camera_pos, s.light_pos, 8.0)).pixels
        return img.min() >= 0 and np.array_equal(img2, 2 * img)
    yield "render nonneg + intensity linearity", render_props

    def pad_identity():
        st = Rng(5).stream("x")
        x = st.uniform((6, 7, 2))
        p = circular_pad(x, 2)
        ok = np.array_equal(p[2:-2, 2:-2], x)
        i, j = 1, 3
        return ok and p[0, 0, 0] == x[(0 - 2) % 6, (0 - 2) % 7, 0] and \
            p[i, j, 1] == x[(i - 2) % 6, (j - 2) % 7, 1]
    yield "circular_pad wrap indexing", pad_identity

    def seam_values():
        ramp = np.tile(np.arange(64) / 63.0, (64, 1))
        return abs(seam_score(ramp).ratio - 63.0) < 1e-9 and \
            seam_score(np.ones((8, 8))).ratio == 1.0
    yield "seam ratio closed forms", seam_values

    def group_laws():
        m = _random_material(7)
        for a in ALL_KINDS:
            for b in ALL_KINDS:
                ta, tb = PlanarIsometry(a), PlanarIsometry(b)
                one = apply_isometry(apply_isometry(m, ta), tb)
                two = apply_isometry(m, compose(tb, ta))
                if not np.array_equal(one.normal, two.normal):
                    return False
        return True
    yield "D4 group laws", group_laws

    def equivariance():
        m = _random_material(9)
        s = RenderSetup((0.3, -0.2, 2.0), (0.4, 0.1, 1.5), 4.0)
        base = render(m, s).pixels
        for kind in ("flip_h", "flip_v", "rot90", "rot180", "rot270"):
            t = PlanarIsometry(kind)
            lhs = render(apply_isometry(m, t), transform_setup(s, t)).pixels
            if np.abs(lhs - permute_grid(base, t)).max() > 1e-5:
                return False
        return True
    yield "render equivariance", equivariance

    def schedule_math():
        s = make_schedule(1000, 1e-4, 0.02)
        ok = abs(s.beta[0] - 1e-4) < 1e-12 and abs(s.alpha_bar[0] - 0.9999) < 1e-12
        ok = ok and np.all(np.diff(s.alpha_bar) < 0)
        z = q_sample(np.array(1.0), 0, np.array(0.5), make_schedule(2, 0.75, 0.75))
        return ok and abs(float(z) - (0.5 + math.sqrt(0.75) * 0.5)) < 1e-9
    yield "noise schedule closed forms", schedule_math

    def grad_checks():
        rng = Rng(13)
        w = Tensor(rng.stream("w").normal((3, 3, 2, 2)))
        y = rng.stream("y").normal((1, 4, 4, 2))

        def f(t):
            return E.mse(E.conv2d_circular(t, w), y)
        err = grad_check(f, Tensor(rng.stream("x").normal((1, 4, 4, 2))), h=1e-3)
        return err < 1e-5
    yield "conv gradient vs finite differences", grad_checks

    def adam_hand_value():
        p = Tensor(np.array([1.0], dtype=np.float32))
        p.requires_grad = True
        params = {"p": p}
        state = E.AdamState(params, lr=0.1)
        p.grad = np.array([1.0], dtype=np.float32)
        E.adam_step(params, state)
        return abs(float(p.data[0]) - 0.9) < 1e-6
    yield "adam first-step hand value", adam_hand_value

    def determinism():
        a = Rng(42).stream("noise").normal((32,))
        b = Rng(42).stream("noise").normal((32,))
        views_a = sample_nine_views(5)
        views_b = sample_nine_views(5)
        return np.array_equal(a, b) and views_a == views_b
    yield "seeded determinism", determinism

    def normal_codec():
        st = Rng(21).stream("n")
        n = normalize_normals(np.stack(
            [st.uniform((32,)) - 0.5, st.uniform((32,)) - 0.5,
             st.uniform((32,)) * 0.8 + 0.2], axis=-1))
        back = decode_normal(encode_normal(n))
        return np.abs(np.linalg.norm(back, axis=-1) - 1).max() < 1e-4 and \
            np.abs(back - n).max() < 1e-6
    yield "normal encode/decode round-trip", normal_codec


def run_selftest():
    """Run all checks; returns (passed, failed, report lines)."""
    passed = failed = 0
    lines = []
    for name, fn in _checks():
        try:
            ok = bool(fn())
        except Exception as e:  # a crash is a failure, not an abort
            ok = False
            name = f"{name} ({type(e).__name__}: {e})"
        if ok:
            passed += 1
            lines.append(f"PASS {name}")
        else:
            failed += 1
            lines.append(f"FAIL {name}")
    return passed, failed, lines
