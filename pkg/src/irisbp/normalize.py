"""Rubber-sheet normalization: unwrap the iris annulus to a polar grid.

Each grid cell (i, j) maps to radial fraction r = i/(radial_res-1) and angle
theta = 2*pi*j/angular_res; the sample point blends the pupil and limbus
boundary points linearly, (1-r)*pupil(theta) + r*limbus(theta). theta = 0
points along +x and grows toward +y (y-down raster), so column indices are
reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError
from .pgm import as_gray, write_pgm
from .preprocess import Circle, IrisSegmentation


@dataclass
class NormalizedIris:
    texture: np.ndarray  # float64 (radial_res, angular_res), intensity units
    valid: np.ndarray    # bool, False where occluded or out of bounds
    radial_res: int
    angular_res: int

    def __post_init__(self):
        if self.texture.shape != (self.radial_res, self.angular_res):
            raise ValueError("texture shape mismatch")
        if self.valid.shape != self.texture.shape:
            raise ValueError("valid mask shape mismatch")


def boundary_point(seg: IrisSegmentation, which: str, theta) -> tuple:
    """Point on the pupil or limbus circle at angle theta (radians).

    Vectorizes over theta; returns (x, y) arrays of theta's shape.
    """
    circle: Circle = {"pupil": seg.pupil, "iris": seg.iris}[which]
    theta = np.asarray(theta, dtype=np.float64)
    x = circle.cx + circle.r * np.cos(theta)
    y = circle.cy + circle.r * np.sin(theta)
    if theta.ndim == 0:
        return float(x), float(y)
    return x, y


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Bilinear interpolation at float coordinates; also returns in-bounds mask.

    Points outside [0, w-1] x [0, h-1] get value 0 and in_bounds False.
    """
    arr = np.asarray(img, dtype=np.float64)
    h, w = arr.shape
    in_bounds = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)

    xc = np.clip(x, 0, w - 1)
    yc = np.clip(y, 0, h - 1)
    x0 = np.floor(xc).astype(np.int64)
    y0 = np.floor(yc).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0

    v = (
        arr[y0, x0] * (1 - fx) * (1 - fy)
        + arr[y0, x1] * fx * (1 - fy)
        + arr[y1, x0] * (1 - fx) * fy
        + arr[y1, x1] * fx * fy
    )
    return np.where(in_bounds, v, 0.0), in_bounds


def rubber_sheet(img, seg: IrisSegmentation, radial_res: int = 20,
                 angular_res: int = 240) -> NormalizedIris:
    """Unwrap the annulus into a (radial_res, angular_res) texture.

    Cells whose sample point leaves the image, or whose nearest pixel is
    flagged in the segmentation noise mask, carry texture 0 and valid False.
    """
    if radial_res < 2 or angular_res < 4:
        raise DimensionError(
            f"grid {radial_res}x{angular_res} too small (need >=2 rows, >=4 columns)"
        )
    arr = as_gray(img)
    h, w = arr.shape

    theta = 2 * np.pi * np.arange(angular_res) / angular_res
    px, py = boundary_point(seg, "pupil", theta)
    ix, iy = boundary_point(seg, "iris", theta)

    r = (np.arange(radial_res) / (radial_res - 1))[:, None]
    x = (1 - r) * px[None, :] + r * ix[None, :]
    y = (1 - r) * py[None, :] + r * iy[None, :]

    texture, in_bounds = bilinear_sample(arr, x, y)

    nx = np.clip(np.rint(x), 0, w - 1).astype(np.int64)
    ny = np.clip(np.rint(y), 0, h - 1).astype(np.int64)
    occluded = seg.noise_mask[ny, nx]

    valid = in_bounds & ~occluded
    texture = np.where(valid, texture, 0.0)
    return NormalizedIris(texture=texture, valid=valid,
                          radial_res=radial_res, angular_res=angular_res)


def write_normalized(norm: NormalizedIris, texture_path, mask_path=None) -> None:
    """Save the texture as PGM, optionally with a 0/255 validity sidecar."""
    write_pgm(texture_path, norm.texture)
    if mask_path is not None:
        write_pgm(mask_path, norm.valid.astype(np.uint8) * 255)
