"""Iris localization: edge detection, Hough voting, occlusion masking.

Coordinates are raster coordinates: x grows rightward (columns), y grows
downward (rows). All voting uses exact integer accumulation, so results are
independent of pixel enumeration order; ties are broken lexicographically
(smallest r, then cy, then cx) to keep results reproducible everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit, prange
from scipy import ndimage

from .exceptions import DimensionError, NoCircleFound, SegmentationFailed
from .pgm import as_gray


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError(f"circle radius must be positive, got {self.r}")


@dataclass(frozen=True)
class LineSeg:
    """Line in normal form: x*cos(theta) + y*sin(theta) = rho."""

    rho: float
    theta: float  # radians in [0, pi)
    votes: int


@dataclass
class IrisSegmentation:
    pupil: Circle
    iris: Circle
    noise_mask: np.ndarray  # bool (h, w), True = occluded/invalid
    width: int
    height: int

    def __post_init__(self):
        if self.pupil.r >= self.iris.r:
            raise ValueError("pupil radius must be smaller than iris radius")
        if self.noise_mask.shape != (self.height, self.width):
            raise ValueError("noise mask dimensions must match the image")


@dataclass
class SegmentationConfig:
    """Tunables for segment_iris; defaults target 320x280-class eye images."""

    canny_sigma: float = 2.0
    canny_low_frac: float = 0.1    # of max gradient magnitude
    canny_high_frac: float = 0.3
    pupil_r: tuple[int, int] = (20, 80)
    iris_r: tuple[int, int] = (80, 150)
    vote_floor_frac: float = 0.4   # of the 2*pi*r expected perimeter
    eyelash_threshold: int = 40
    eyelid_detection: bool = True
    eyelid_vote_frac: float = 0.25  # of the search window width

    def copy(self) -> "SegmentationConfig":
        return SegmentationConfig(**vars(self))


# ---------------------------------------------------------------------------
# Canny edge detection

_NMS_OFFSETS = {
    # direction bin -> (forward dy, dx), quantized gradient orientation
    0: (0, 1),    # near-horizontal gradient, vertical edge
    1: (1, 1),    # diagonal
    2: (1, 0),    # near-vertical gradient, horizontal edge
    3: (1, -1),   # anti-diagonal
}


def canny_edges(img, low=None, high=None, sigma: float = 2.0,
                low_frac: float = 0.1, high_frac: float = 0.3) -> np.ndarray:
    """Classic Canny: smooth, Sobel, non-maximum suppression, hysteresis.

    ``low``/``high`` are absolute gradient-magnitude thresholds; when omitted
    they default to ``low_frac``/``high_frac`` of the maximum magnitude.
    Returns a boolean edge map of the input shape; kept ridges are one pixel
    wide along the gradient direction and every edge pixel has magnitude
    >= low.
    """
    arr = as_gray(img).astype(np.float64)
    h, w = arr.shape
    if h < 3 or w < 3:
        raise DimensionError(f"image {w}x{h} too small for edge detection")
    if sigma <= 0:
        raise ValueError("sigma must be positive")

    smoothed = ndimage.gaussian_filter(arr, sigma, mode="nearest")
    gx = ndimage.sobel(smoothed, axis=1, mode="nearest")
    gy = ndimage.sobel(smoothed, axis=0, mode="nearest")
    mag = np.hypot(gx, gy)

    mag_max = mag.max()
    if low is None:
        low = low_frac * mag_max
    if high is None:
        high = high_frac * mag_max
    if not (0 <= low <= high):
        raise ValueError(f"need 0 <= low <= high, got low={low} high={high}")
    if mag_max == 0:
        return np.zeros((h, w), dtype=bool)

    # quantize gradient orientation into 4 bins of 45 degrees
    ang = np.mod(np.arctan2(gy, gx), np.pi)
    dbin = np.floor((ang + np.pi / 8) / (np.pi / 4)).astype(np.int64) % 4

    # non-maximum suppression; the strict test against the forward neighbor
    # breaks two-pixel plateaus deterministically so ridges stay 1 px wide
    keep = np.zeros((h, w), dtype=bool)
    pad = np.pad(mag, 1, mode="constant")
    for b, (dy, dx) in _NMS_OFFSETS.items():
        fwd = pad[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        bwd = pad[1 - dy : 1 - dy + h, 1 - dx : 1 - dx + w]
        sel = dbin == b
        keep |= sel & (mag > fwd) & (mag >= bwd)
    keep &= mag >= low

    strong = keep & (mag >= high)
    if not strong.any():
        return np.zeros((h, w), dtype=bool)

    # hysteresis: keep weak ridge pixels 8-connected to a strong one
    labels, _ = ndimage.label(keep, structure=np.ones((3, 3), dtype=int))
    good = np.unique(labels[strong])
    return np.isin(labels, good) & keep


# ---------------------------------------------------------------------------
# Hough transforms


@lru_cache(maxsize=512)
def circle_offsets(r: int) -> np.ndarray:
    """Integer lattice offsets approximating a circle of radius r.

    Rounded polar samples, deduplicated; ordering is fixed (angle-sorted,
    first occurrence) so voting is fully deterministic.
    """
    n = max(8, int(np.ceil(4 * 2 * np.pi * r)))
    phi = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    pts = np.stack(
        [np.rint(r * np.cos(phi)).astype(np.int64), np.rint(r * np.sin(phi)).astype(np.int64)],
        axis=1,
    )
    _, idx = np.unique(pts, axis=0, return_index=True)
    return pts[np.sort(idx)]


@njit(cache=True, nogil=True, parallel=True)
def _vote_circles(ys, xs, offs, starts, acc):
    # one accumulator slice per radius; slices are disjoint, so the prange
    # is race-free and totals stay exact
    n_r = acc.shape[0]
    h = acc.shape[1]
    w = acc.shape[2]
    for ri in prange(n_r):
        for p in range(ys.shape[0]):
            for q in range(starts[ri], starts[ri + 1]):
                cy = ys[p] - offs[q, 1]
                cx = xs[p] - offs[q, 0]
                if 0 <= cy < h and 0 <= cx < w:
                    acc[ri, cy, cx] += 1


def hough_circle(edges: np.ndarray, r_min: int, r_max: int,
                 vote_floor_frac: float = 0.4) -> Circle:
    """Max-vote circle over a (r, cy, cx) accumulator quantized at 1 px.

    Raises NoCircleFound when the edge map is empty or the best cell gets
    fewer than ``vote_floor_frac * 2*pi*r`` votes. Tie-break is smallest r,
    then cy, then cx.
    """
    if not (0 < r_min < r_max):
        raise ValueError(f"need 0 < r_min < r_max, got [{r_min}, {r_max}]")
    edges = np.asarray(edges, dtype=bool)
    h, w = edges.shape
    ys, xs = np.nonzero(edges)
    if ys.size == 0:
        raise NoCircleFound("empty edge map")

    radii = np.arange(int(r_min), int(r_max) + 1)
    offs_list = [circle_offsets(int(r)) for r in radii]
    starts = np.zeros(len(radii) + 1, dtype=np.int64)
    starts[1:] = np.cumsum([len(o) for o in offs_list])
    offs = np.concatenate(offs_list).astype(np.int64)

    acc = np.zeros((len(radii), h, w), dtype=np.int32)
    _vote_circles(ys.astype(np.int64), xs.astype(np.int64), offs, starts, acc)

    # C-order argmax realizes the lexicographic tie-break for free
    flat = int(np.argmax(acc))
    ri, cy, cx = np.unravel_index(flat, acc.shape)
    best = int(acc[ri, cy, cx])
    r = int(radii[ri])
    if best < vote_floor_frac * 2 * np.pi * r:
        raise NoCircleFound(
            f"best cell r={r} got {best} votes, below floor "
            f"{vote_floor_frac * 2 * np.pi * r:.1f}"
        )
    return Circle(float(cx), float(cy), float(r))


def hough_line(edges: np.ndarray, region: tuple[int, int, int, int],
               vote_threshold: int, n_theta: int = 180) -> LineSeg | None:
    """Max-vote line among edge pixels inside ``region`` (x0, y0, x1, y1).

    Coordinates of the result stay in full-image terms. Returns None when
    the best cell has fewer than ``vote_threshold`` votes; absence of an
    eyelid is a normal outcome, not an error.
    """
    x0, y0, x1, y1 = region
    edges = np.asarray(edges, dtype=bool)
    h, w = edges.shape
    if not (0 <= x0 <= x1 <= w and 0 <= y0 <= y1 <= h):
        raise ValueError(f"region {region} outside image {w}x{h}")

    window = edges[y0:y1, x0:x1]
    ys, xs = np.nonzero(window)
    if ys.size == 0:
        return None
    ys = ys + y0
    xs = xs + x0

    thetas = np.arange(n_theta) * (np.pi / n_theta)
    cos_t, sin_t = np.cos(thetas), np.sin(thetas)
    diag = int(np.ceil(np.hypot(w, h)))
    n_rho = 2 * diag + 1

    acc = np.zeros((n_rho, n_theta), dtype=np.int32)
    rho = np.rint(xs[:, None] * cos_t[None, :] + ys[:, None] * sin_t[None, :]).astype(np.int64)
    for t in range(n_theta):
        acc[:, t] = np.bincount(rho[:, t] + diag, minlength=n_rho)

    flat = int(np.argmax(acc))
    rho_i, theta_i = np.unravel_index(flat, acc.shape)
    votes = int(acc[rho_i, theta_i])
    if votes < vote_threshold:
        return None
    return LineSeg(float(rho_i - diag), float(thetas[theta_i]), votes)


# ---------------------------------------------------------------------------
# Masking and full segmentation


def eyelash_mask(img, dark_threshold: int) -> np.ndarray:
    """True exactly where intensity < dark_threshold (eyelashes are dark)."""
    if not (0 <= dark_threshold <= 255):
        raise ValueError(f"dark_threshold must be in [0, 255], got {dark_threshold}")
    return as_gray(img) < dark_threshold


def _eyelid_region_mask(line: LineSeg, shape: tuple[int, int], above: bool) -> np.ndarray:
    """Pixels above (or below) the line, for near-horizontal lines."""
    h, w = shape
    if abs(np.sin(line.theta)) < 1e-6:
        return np.zeros(shape, dtype=bool)  # vertical line cannot be an eyelid
    xs = np.arange(w)
    y_line = (line.rho - xs * np.cos(line.theta)) / np.sin(line.theta)
    ys = np.arange(h)[:, None]
    return ys < y_line[None, :] if above else ys > y_line[None, :]


def segment_iris(img, cfg: SegmentationConfig | None = None) -> IrisSegmentation:
    """Locate pupil and limbus circles and build the occlusion mask.

    Two Hough passes with separate radius ranges (pupil first, then limbus),
    eyelid lines searched in the upper and lower thirds of the iris bounding
    box, eyelashes removed by intensity thresholding. The noise mask is the
    union of eyelash pixels, pixels beyond detected eyelid lines, and
    everything outside the pupil-limbus annulus.
    """
    cfg = cfg or SegmentationConfig()
    arr = as_gray(img)
    h, w = arr.shape
    if min(h, w) <= 2 * cfg.pupil_r[0]:
        raise ValueError(
            f"image {w}x{h} too small for pupil radius range {cfg.pupil_r}"
        )

    edges = canny_edges(arr, sigma=cfg.canny_sigma,
                        low_frac=cfg.canny_low_frac, high_frac=cfg.canny_high_frac)

    try:
        pupil = hough_circle(edges, *cfg.pupil_r, vote_floor_frac=cfg.vote_floor_frac)
    except NoCircleFound as exc:
        raise SegmentationFailed("pupil", str(exc)) from exc
    try:
        iris = hough_circle(edges, *cfg.iris_r, vote_floor_frac=cfg.vote_floor_frac)
    except NoCircleFound as exc:
        raise SegmentationFailed("iris", str(exc)) from exc

    if pupil.r >= iris.r:
        raise SegmentationFailed("iris", f"limbus r={iris.r} not larger than pupil r={pupil.r}")
    if np.hypot(pupil.cx - iris.cx, pupil.cy - iris.cy) >= iris.r:
        raise SegmentationFailed("iris", "pupil center outside limbus circle")

    mask = eyelash_mask(arr, cfg.eyelash_threshold)

    if cfg.eyelid_detection:
        bx0 = max(0, int(iris.cx - iris.r))
        bx1 = min(w, int(np.ceil(iris.cx + iris.r)) + 1)
        by0 = max(0, int(iris.cy - iris.r))
        by1 = min(h, int(np.ceil(iris.cy + iris.r)) + 1)
        third = max(1, (by1 - by0) // 3)
        window_w = bx1 - bx0
        threshold = int(cfg.eyelid_vote_frac * window_w)
        upper = hough_line(edges, (bx0, by0, bx1, by0 + third), threshold)
        if upper is not None:
            mask |= _eyelid_region_mask(upper, (h, w), above=True)
        lower = hough_line(edges, (bx0, by1 - third, bx1, by1), threshold)
        if lower is not None:
            mask |= _eyelid_region_mask(lower, (h, w), above=False)

    yy, xx = np.mgrid[0:h, 0:w]
    outside = (np.hypot(xx - iris.cx, yy - iris.cy) > iris.r) | (
        np.hypot(xx - pupil.cx, yy - pupil.cy) < pupil.r
    )
    mask = mask | outside

    return IrisSegmentation(pupil=pupil, iris=iris, noise_mask=mask, width=w, height=h)


# ---------------------------------------------------------------------------
# Plain-text segmentation record (circles + run-length-encoded mask)


def segmentation_to_text(seg: IrisSegmentation) -> str:
    # RLE starting with the count of False cells
    flat = seg.noise_mask.ravel()
    change = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    lines = [
        f"pupil {seg.pupil.cx!r} {seg.pupil.cy!r} {seg.pupil.r!r}",
        f"iris {seg.iris.cx!r} {seg.iris.cy!r} {seg.iris.r!r}",
        f"mask {seg.width} {seg.height} " + " ".join(str(r) for r in runs),
    ]
    return "\n".join(lines) + "\n"


def segmentation_from_text(text: str) -> IrisSegmentation:
    from .exceptions import ParseError

    circles = {}
    mask = None
    width = height = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] in ("pupil", "iris"):
            if len(parts) != 4:
                raise ParseError(f"bad circle record {line!r}", lineno)
            circles[parts[0]] = Circle(*(float(p) for p in parts[1:]))
        elif parts[0] == "mask":
            width, height = int(parts[1]), int(parts[2])
            runs = [int(p) for p in parts[3:]]
            if sum(runs) != width * height:
                raise ParseError("mask run lengths do not cover the image", lineno)
            flat = np.zeros(width * height, dtype=bool)
            pos = 0
            val = False
            for run in runs:
                flat[pos : pos + run] = val
                pos += run
                val = not val
            mask = flat.reshape(height, width)
        else:
            raise ParseError(f"unknown record {parts[0]!r}", lineno)
    if "pupil" not in circles or "iris" not in circles or mask is None:
        raise ParseError("incomplete segmentation record")
    return IrisSegmentation(circles["pupil"], circles["iris"], mask, width, height)
