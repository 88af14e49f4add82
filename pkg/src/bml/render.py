"""Raster snapshots of two-dimensional grids.

One pixel per site.  Column ``x`` holds sites ``(x, .)`` and row 0 is the
top, i.e. the largest ``y``, so North-bound cars travel up the image.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .lattice import ParameterError, TorusGrid

WHITE = (255, 255, 255)
RED = (255, 0, 0)
BLUE = (0, 0, 255)
GREEN = (0, 255, 0)

_PALETTE = np.array([WHITE, RED, BLUE], dtype=np.uint8)


def _overlay_sites(overlay) -> Iterable[Sequence[int]]:
    if overlay is None:
        return
    items = overlay if isinstance(overlay, (list, tuple)) else [overlay]
    for item in items:
        sites = getattr(item, "sites", item)
        if len(sites) and isinstance(sites[0], (int, np.integer)):
            yield sites
        else:
            yield from sites


def to_rgb(grid: TorusGrid, overlay=None) -> np.ndarray:
    """``(height, width, 3)`` uint8 image of ``grid``.

    ``overlay`` is a blocking path, a list of sites, or a list of either;
    its sites are painted green (coordinates wrap).
    """
    if grid.d != 2:
        raise ParameterError("rendering is supported for two-dimensional grids only")
    img = _PALETTE[grid.cells.T[::-1]]
    n0, n1 = grid.dims
    for z in _overlay_sites(overlay):
        x, y = int(z[0]) % n0, int(z[1]) % n1
        img[n1 - 1 - y, x] = GREEN
    return np.ascontiguousarray(img)


def ppm_bytes(img: np.ndarray) -> bytes:
    h, w, _ = img.shape
    return b"P6\n%d %d\n255\n" % (w, h) + img.astype(np.uint8).tobytes()


def read_ppm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError(f"{path} is not a binary PPM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def render_snapshot(grid: TorusGrid, path: str | Path, overlay=None, *, png: Optional[bool] = None) -> Path:
    """Write ``grid`` as a PPM (P6) image, or as PNG when ``path`` ends in ``.png``.

    PNG output needs Pillow.
    """
    path = Path(path)
    img = to_rgb(grid, overlay)
    if png is None:
        png = path.suffix.lower() == ".png"
    if png:
        from PIL import Image

        Image.fromarray(img, "RGB").save(path, format="PNG")
    else:
        path.write_bytes(ppm_bytes(img))
    return path
