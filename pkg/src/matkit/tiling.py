"""Circular padding, seam diagnostics, and tiling composition.

Wrap-around padding is what makes every convolution in the generative
stack produce toroidally consistent (tileable) output; the seam score
quantifies how much the wrap boundary of an image deviates from its
interior statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PadTooLarge


def circular_pad(x: np.ndarray, p: int, axes: tuple[int, int] = (0, 1)) -> np.ndarray:
    """Pad two axes by p with wrap-around indexing.

    output[i, j] == x[(i - p) mod H, (j - p) mod W] on the padded axes;
    the central block equals x exactly.
    """
    if p < 0:
        raise PadTooLarge(f"negative padding {p}")
    if p == 0:
        return x.copy()
    ah, aw = axes
    if p > min(x.shape[ah], x.shape[aw]):
        raise PadTooLarge(
            f"padding {p} exceeds spatial extent {(x.shape[ah], x.shape[aw])}")
    widths = [(0, 0)] * x.ndim
    widths[ah] = (p, p)
    widths[aw] = (p, p)
    return np.pad(x, widths, mode="wrap")


@dataclass
class SeamReport:
    """Wrap-boundary roughness relative to interior roughness."""

    wrap_score: float
    interior_score: float
    ratio: float

    def to_dict(self) -> dict:
        return {"wrap": self.wrap_score, "interior": self.interior_score, "ratio": self.ratio}


def seam_score(img: np.ndarray) -> SeamReport:
    """Score how visible the tiling seam of an image would be.

    wrap_score averages |difference| across the two wrap boundaries
    (last column vs first column, last row vs first row); interior_score
    averages |difference| over all horizontally/vertically adjacent
    interior pairs.  ratio = wrap/interior, defined as 1 when both
    scores are below 1e-9 (e.g. constant images).
    """
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    H, W = a.shape[:2]
    if H < 2 or W < 2:
        raise ValueError("seam_score needs at least 2x2 images")

    wrap_h = np.abs(a[:, -1, :] - a[:, 0, :])
    wrap_v = np.abs(a[-1, :, :] - a[0, :, :])
    wrap = float(np.concatenate([wrap_h.ravel(), wrap_v.ravel()]).mean())

    int_h = np.abs(a[:, 1:, :] - a[:, :-1, :])
    int_v = np.abs(a[1:, :, :] - a[:-1, :, :])
    interior = float(np.concatenate([int_h.ravel(), int_v.ravel()]).mean())

    if wrap < 1e-9 and interior < 1e-9:
        ratio = 1.0
    else:
        ratio = wrap / interior if interior > 0 else float("inf")
    return SeamReport(wrap, interior, ratio)


def tile_compose(maps, nx: int, ny: int):
    """Repeat a material nx (horizontal) by ny (vertical) times by wrapping."""
    from .materials import MaterialMaps

    if nx < 1 or ny < 1:
        raise ValueError("tile counts must be >= 1")
    return MaterialMaps(
        albedo=np.tile(maps.albedo, (ny, nx, 1)),
        normal=np.tile(maps.normal, (ny, nx, 1)),
        roughness=np.tile(maps.roughness, (ny, nx, 1)),
        metallic=np.tile(maps.metallic, (ny, nx, 1)),
    )


def tile_image(img: np.ndarray, nx: int, ny: int) -> np.ndarray:
    """Repeat an H x W x C image nx by ny times."""
    if nx < 1 or ny < 1:
        raise ValueError("tile counts must be >= 1")
    return np.tile(img, (ny, nx, 1) if img.ndim == 3 else (ny, nx))
