"""Rasterizers for the dSprites-like and Shapes3D-like corpora.

Shapes are drawn as polygons with Pillow's aliased fill, so a rendered image is
a binary mask times a color and is bit-identical across calls and platforms.
"""

import colorsys
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

# shape half-extent as a fraction of the image side, at scale 1
_SPRITE_EXTENT = 0.18
_OBJECT_EXTENT = 0.2


@dataclass(frozen=True)
class Sample:
    image: np.ndarray
    u: np.ndarray
    factor_index: np.ndarray


def _rotate(points, angle):
    cos, sin = math.cos(angle), math.sin(angle)
    return [(x * cos - y * sin, x * sin + y * cos) for x, y in points]


def _place(points, radius, cx, cy):
    # local y points up, image rows grow downwards
    return [(cx + x * radius, cy - y * radius) for x, y in points]


def _ellipse(rx, ry, vertices=64):
    return [
        (rx * math.cos(2 * math.pi * k / vertices), ry * math.sin(2 * math.pi * k / vertices))
        for k in range(vertices)
    ]


def _heart(vertices=96):
    points = []
    for k in range(vertices):
        t = 2 * math.pi * k / vertices
        x = 16 * math.sin(t) ** 3
        y = 13 * math.cos(t) - 5 * math.cos(2 * t) - 2 * math.cos(3 * t) - math.cos(4 * t)
        points.append((x / 17.0, (y + 2.5) / 17.0))
    return points


def _stadium(half_width, half_height, vertices=24):
    radius = half_width
    straight = half_height - radius
    points = []
    for k in range(vertices + 1):
        a = math.pi * k / vertices
        points.append((radius * math.cos(a), straight + radius * math.sin(a)))
    for k in range(vertices + 1):
        a = math.pi + math.pi * k / vertices
        points.append((radius * math.cos(a), -straight + radius * math.sin(a)))
    return points


_SPRITE_OUTLINES = {
    "square": [(-0.8, -0.8), (0.8, -0.8), (0.8, 0.8), (-0.8, 0.8)],
    "ellipse": _ellipse(1.0, 0.55),
    "heart": _heart(),
}

_OBJECT_OUTLINES = {
    "cube": [(-0.75, -0.75), (0.75, -0.75), (0.75, 0.75), (-0.75, 0.75)],
    "cylinder": [(-0.5, -0.9), (0.5, -0.9), (0.5, 0.9), (-0.5, 0.9)],
    "sphere": _ellipse(0.85, 0.85),
    "capsule": _stadium(0.45, 1.0),
}


def _native(space, factor_index):
    return {spec.name: spec.values[int(i)] for spec, i in zip(space.factors, factor_index)}


def _category(space, name, factor_index):
    spec = space.factor(name)
    return spec.labels[int(factor_index[space.index_of(name)])]


def render_dsprite(space, factor_index):
    """A single white (or gray) shape on a black background, one channel."""
    size = space.image_size
    native = _native(space, factor_index)
    color_spec = space.factor("color")
    if color_spec.size == 1:
        intensity = 1.0
    else:
        intensity = float(np.linspace(0.5, 1.0, color_spec.size)[int(factor_index[space.index_of("color")])])

    radius = _SPRITE_EXTENT * size * native["scale"]
    margin = _SPRITE_EXTENT * size * math.sqrt(2) + 1
    cx = margin + native["posX"] * (size - 2 * margin)
    cy = size - (margin + native["posY"] * (size - 2 * margin))

    outline = _rotate(_SPRITE_OUTLINES[_category(space, "shape", factor_index)], native["orientation"])
    canvas = Image.new("L", (size, size), 0)
    ImageDraw.Draw(canvas).polygon(_place(outline, radius, cx, cy), fill=255)
    mask = np.asarray(canvas, dtype=np.float32) / 255.0
    return (mask * intensity)[:, :, None]


def _hsv(hue, value):
    return tuple(int(round(255 * c)) for c in colorsys.hsv_to_rgb(hue, 1.0, value))


def render_scene(space, factor_index):
    """
    Flat-color proxy of a Shapes3D scene: wall background, floor band whose
    horizon tilts with the orientation, and a centered object in its own hue.
    """
    size = space.image_size
    native = _native(space, factor_index)
    angle = math.radians(native["orientation"])

    canvas = Image.new("RGB", (size, size), _hsv(native["wall_hue"], 1.0))
    draw = ImageDraw.Draw(canvas)

    horizon_y = 0.65 * size
    slope = math.tan(angle) * 0.5
    left = horizon_y + slope * size / 2
    right = horizon_y - slope * size / 2
    draw.polygon([(0, left), (size, right), (size, size), (0, size)], fill=_hsv(native["floor_hue"], 0.6))

    outline = _rotate(_OBJECT_OUTLINES[_category(space, "shape", factor_index)], angle)
    radius = _OBJECT_EXTENT * size * native["scale"]
    draw.polygon(_place(outline, radius, size / 2, 0.55 * size), fill=_hsv(native["object_hue"], 0.8))
    return np.asarray(canvas, dtype=np.float32) / 255.0


_RENDERERS = {"dsprites_like": render_dsprite, "shapes3d_like": render_scene}


def render_image(space, factor_index):
    return _RENDERERS[space.dataset_name](space, space.check_index(factor_index))


def render(space, factor_index):
    """
    Render one sample of a factor space.

    Args:
        space (FactorSpace): Space the index vector belongs to.
        factor_index (Sequence[int]): One grid index per factor.

    Returns:
        Sample: Image of shape ``space.image_shape`` with intensities in [0, 1],
        the normalized label vector ``u`` and the index vector itself.

    Raises:
        BoundsError: If any index falls outside its factor grid.
    """
    factor_index = space.check_index(factor_index)
    return Sample(
        image=render_image(space, factor_index),
        u=space.normalize(factor_index),
        factor_index=factor_index,
    )
