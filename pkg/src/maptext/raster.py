"""Raster layers: dual colored/grayscale text rendering, compositing,
worn-out noise, and 2x2 tile mosaics.

Text is rendered with hard alpha (0 or 255) and no blending, so every opaque
pixel's RGB identifies exactly one label.  The color map encodes the label
index straight into the 24-bit RGB value, skipping the configured ink color.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from maptext.geodata import TileAddress
from maptext.glyphs import GlyphProvider, tofu_glyph
from maptext.placement import PlacedLabel

RGB = tuple[int, int, int]

DEFAULT_INK: RGB = (0, 0, 0)


@dataclass
class TileImage:
    width: int
    height: int
    pixels: np.ndarray  # uint8, shape (height, width, 4), RGBA
    address: TileAddress | None = None

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width, 4):
            raise ValueError(
                f"pixel buffer {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x4")
        if self.pixels.dtype != np.uint8:
            raise ValueError("pixel buffer must be uint8")

    @classmethod
    def blank(cls, width: int, height: int, rgba: tuple[int, int, int, int] = (0, 0, 0, 0),
              address: TileAddress | None = None) -> "TileImage":
        if width <= 0 or height <= 0:
            raise ValueError("image dimensions must be positive")
        px = np.empty((height, width, 4), dtype=np.uint8)
        px[:, :] = rgba
        return cls(width=width, height=height, pixels=px, address=address)

    def copy(self) -> "TileImage":
        return TileImage(self.width, self.height, self.pixels.copy(), self.address)

    def opaque_mask(self) -> np.ndarray:
        return self.pixels[:, :, 3] > 0


class ColorIndexMap:
    """Bijection between label indices (>= 1) and RGB triples.

    Index n maps onto the 24-bit value n, with the single value equal to the
    ink color skipped so no label can collide with the grayscale ink.  Index
    0 is reserved for the transparent no-label background.
    """

    def __init__(self, ink: RGB = DEFAULT_INK):
        self.ink = ink
        self._ink_value = (ink[0] << 16) | (ink[1] << 8) | ink[2]

    def color_for_index(self, index: int) -> RGB:
        if index < 1:
            raise ValueError("label color indices start at 1")
        # Since index >= 1, the value 0 (transparent sentinel) is never produced.
        v = index if (self._ink_value == 0 or index < self._ink_value) else index + 1
        if v > 0xFFFFFF:
            raise ValueError("label index exceeds 24-bit color space")
        return ((v >> 16) & 255, (v >> 8) & 255, v & 255)

    def index_for_color(self, rgb: RGB) -> int:
        v = (rgb[0] << 16) | (rgb[1] << 8) | rgb[2]
        if v == self._ink_value or v == 0:
            raise ValueError(f"{rgb} is not a label color")
        if self._ink_value == 0 or v < self._ink_value:
            return v
        return v - 1


def _resolve_provider(glyph_source, font_id: int) -> GlyphProvider:
    if isinstance(glyph_source, Sequence):
        return glyph_source[font_id]
    return glyph_source


def _stamp_glyph(canvas: np.ndarray, pose, glyph, rgba: tuple[int, int, int, int]):
    """Paint a glyph bitmap at the pose's anchor/rotation (nearest-neighbour,
    hard alpha)."""
    bm = glyph.bitmap
    if bm.size == 0:
        return
    gh, gw = bm.shape
    h, w, _ = canvas.shape
    ax, ay = pose.anchor
    # Local frame centred on the anchor: pen origin sits at (-advance/2, 0).
    lx0 = glyph.left - pose.advance_px / 2.0
    ly0 = glyph.top
    if pose.rotation_rad == 0.0:
        x0 = math.floor(ax + lx0 + 0.5)
        y0 = math.floor(ay + ly0 + 0.5)
        sx0, sy0 = max(0, -x0), max(0, -y0)
        sx1, sy1 = min(gw, w - x0), min(gh, h - y0)
        if sx0 >= sx1 or sy0 >= sy1:
            return
        patch = bm[sy0:sy1, sx0:sx1]
        region = canvas[y0 + sy0:y0 + sy1, x0 + sx0:x0 + sx1]
        region[patch] = rgba
        return
    c, s = math.cos(pose.rotation_rad), math.sin(pose.rotation_rad)
    # Bounding box of the rotated bitmap on the canvas.
    corners = []
    for cx, cy in ((lx0, ly0), (lx0 + gw, ly0), (lx0 + gw, ly0 + gh), (lx0, ly0 + gh)):
        corners.append((ax + c * cx - s * cy, ay + s * cx + c * cy))
    x0 = max(0, math.floor(min(p[0] for p in corners)))
    y0 = max(0, math.floor(min(p[1] for p in corners)))
    x1 = min(w, math.ceil(max(p[0] for p in corners)) + 1)
    y1 = min(h, math.ceil(max(p[1] for p in corners)) + 1)
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    dx = xx + 0.5 - ax
    dy = yy + 0.5 - ay
    # Inverse rotation back into the glyph's local frame.
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    col = np.floor(lx - lx0).astype(np.int64)
    row = np.floor(ly - ly0).astype(np.int64)
    valid = (col >= 0) & (col < gw) & (row >= 0) & (row < gh)
    valid[valid] &= bm[row[valid], col[valid]]
    canvas[y0:y1, x0:x1][valid] = rgba


def render_colored_layer(labels: Sequence[PlacedLabel], size: tuple[int, int],
                         glyph_source, color_map: ColorIndexMap | None = None,
                         missing_glyphs: dict[str, int] | None = None) -> TileImage:
    """Render every label in its own exact color (alpha 0/255, no blending)."""
    w, h = size
    if w <= 0 or h <= 0:
        raise ValueError("canvas size must be positive")
    indices = [lab.color_index for lab in labels]
    if any(i < 1 for i in indices):
        raise ValueError("all labels need color_index >= 1")
    if len(set(indices)) != len(indices):
        raise ValueError("label color indices must be unique")
    cmap = color_map or ColorIndexMap()
    img = TileImage.blank(w, h)
    for lab in labels:
        provider = _resolve_provider(glyph_source, lab.font.font_id)
        r, g, b = cmap.color_for_index(lab.color_index)
        rgba = (r, g, b, 255)
        for pose in lab.poses:
            glyph = provider.glyph(pose.char, lab.font.size_pt)
            if glyph is None:
                glyph = tofu_glyph(lab.font.size_pt, advance=pose.advance_px)
                if missing_glyphs is not None:
                    missing_glyphs[pose.char] = missing_glyphs.get(pose.char, 0) + 1
            _stamp_glyph(img.pixels, pose, glyph, rgba)
    return img


def render_gray_layer(colored: TileImage, ink: RGB = DEFAULT_INK,
                      soften: bool = False) -> TileImage:
    """Single-ink version of the colored layer; the opaque mask is preserved
    pixel-for-pixel.  ``soften`` optionally feathers the alpha channel for
    visual quality (off by default, which keeps mask equality exact)."""
    out = colored.copy()
    mask = out.pixels[:, :, 3] > 0
    out.pixels[mask, 0] = ink[0]
    out.pixels[mask, 1] = ink[1]
    out.pixels[mask, 2] = ink[2]
    out.pixels[~mask] = 0
    if soften:
        from scipy.ndimage import uniform_filter

        alpha = out.pixels[:, :, 3].astype(np.float64)
        out.pixels[:, :, 3] = np.floor(uniform_filter(alpha, size=3) + 0.5).astype(np.uint8)
    return out


def composite(background: TileImage, text_layer: TileImage) -> TileImage:
    """Source-over compositing of the text layer onto the background.

    Fully transparent text pixels leave the background untouched
    byte-for-byte; channel math rounds half up.
    """
    if (background.width, background.height) != (text_layer.width, text_layer.height):
        raise ValueError("layer dimensions differ")
    bg = background.pixels.astype(np.float64)
    fg = text_layer.pixels.astype(np.float64)
    fa = fg[:, :, 3:4] / 255.0
    ba = bg[:, :, 3:4] / 255.0
    out_a = fa + ba * (1.0 - fa)
    safe = np.where(out_a == 0.0, 1.0, out_a)
    out_rgb = (fg[:, :, :3] * fa + bg[:, :, :3] * ba * (1.0 - fa)) / safe
    out = np.empty_like(background.pixels)
    out[:, :, :3] = np.floor(out_rgb + 0.5).astype(np.uint8)
    out[:, :, 3] = np.floor(out_a[:, :, 0] * 255.0 + 0.5).astype(np.uint8)
    untouched = text_layer.pixels[:, :, 3] == 0
    out[untouched] = background.pixels[untouched]
    return TileImage(background.width, background.height, out, background.address)


def add_wornout_noise(image: TileImage, text_mask: np.ndarray, sigma: float,
                      seed: int) -> TileImage:
    """Add i.i.d. Gaussian noise (std ``sigma``, 8-bit units) to the RGB of
    masked pixels, clamped to [0, 255]; deterministic per seed."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if text_mask.shape != (image.height, image.width):
        raise ValueError("mask dimensions do not match image")
    out = image.copy()
    if sigma == 0 or not text_mask.any():
        return out
    rng = np.random.default_rng(seed)
    n = int(text_mask.sum())
    noise = rng.normal(0.0, sigma, size=(n, 3))
    rgb = out.pixels[text_mask][:, :3].astype(np.float64) + noise
    out.pixels[text_mask, :3] = np.clip(np.floor(rgb + 0.5), 0, 255).astype(np.uint8)
    return out


def concat_tiles(grid: Sequence[Sequence[TileImage]]) -> TileImage:
    """Mosaic a 2x2 grid of equal square tiles into one scene image.

    When all four tiles carry addresses they must form a 2x2 block:
    (z,x,y), (z,x+1,y) / (z,x,y+1), (z,x+1,y+1).
    """
    if len(grid) != 2 or any(len(row) != 2 for row in grid):
        raise ValueError("expected a 2x2 grid of tiles")
    (tl, tr), (bl, br) = grid
    tiles = [tl, tr, bl, br]
    side = tl.width
    for t in tiles:
        if t.width != side or t.height != side:
            raise ValueError("all tiles must be the same square size")
    addrs = [t.address for t in tiles]
    if all(a is not None for a in addrs):
        z, x, y = tl.address.zoom, tl.address.x, tl.address.y
        want = [(z, x, y), (z, x + 1, y), (z, x, y + 1), (z, x + 1, y + 1)]
        got = [(a.zoom, a.x, a.y) for a in addrs]
        if got != want:
            raise ValueError(f"tiles are not grid-adjacent: {got}")
    px = np.empty((2 * side, 2 * side, 4), dtype=np.uint8)
    px[:side, :side] = tl.pixels
    px[:side, side:] = tr.pixels
    px[side:, :side] = bl.pixels
    px[side:, side:] = br.pixels
    return TileImage(2 * side, 2 * side, px, address=tl.address)


def read_png(path: Path | str) -> TileImage:
    from PIL import Image

    with Image.open(path) as im:
        im = im.convert("RGBA")
        px = np.asarray(im, dtype=np.uint8).copy()
    return TileImage(width=px.shape[1], height=px.shape[0], pixels=px)


def write_png(image: TileImage, path: Path | str) -> None:
    from PIL import Image

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image.pixels, mode="RGBA").save(path, format="PNG")
