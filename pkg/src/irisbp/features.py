"""Haar feature extraction from normalized iris textures.

Two halvings of the approximation band turn the default 20x240 texture into
a 5x60 low-pass summary; those 300 coefficients are the feature vector and
all detail bands are discarded. The averaging convention keeps a constant
input constant, which is convenient for sanity checks; any fixed rescaling
would be absorbed by the classifier's input scaling anyway.
"""

from __future__ import annotations

import numpy as np

from .exceptions import AllMasked, OddDimension
from .normalize import NormalizedIris


def haar_level(matrix: np.ndarray):
    """One averaging-Haar step: returns (LL, LH, HL, HH), each half-size.

    For a 2x2 block [[a, b], [c, d]]:
    LL = (a+b+c+d)/4, LH = (a-b+c-d)/4, HL = (a+b-c-d)/4, HH = (a-b-c+d)/4.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise OddDimension(f"expected a 2-D array, got shape {m.shape}")
    h, w = m.shape
    if h % 2 or w % 2:
        raise OddDimension(f"dimensions must be even, got {h}x{w}")

    a = m[0::2, 0::2]
    b = m[0::2, 1::2]
    c = m[1::2, 0::2]
    d = m[1::2, 1::2]
    ll = (a + b + c + d) / 4
    lh = (a - b + c - d) / 4
    hl = (a + b - c - d) / 4
    hh = (a - b - c + d) / 4
    return ll, lh, hl, hh


def extract_features(norm: NormalizedIris) -> np.ndarray:
    """Flattened two-level approximation band of the texture.

    Invalid cells are infilled with the mean of the valid ones before the
    transform. Output length is (radial_res/4) * (angular_res/4) — 300 at
    the default resolution.
    """
    if norm.radial_res % 4 or norm.angular_res % 4:
        raise OddDimension(
            f"grid {norm.radial_res}x{norm.angular_res} not divisible by 4"
        )
    if not norm.valid.any():
        raise AllMasked("no valid cells in normalized texture")

    texture = norm.texture.copy()
    if not norm.valid.all():
        texture[~norm.valid] = texture[norm.valid].mean()

    ll1 = haar_level(texture)[0]
    ll2 = haar_level(ll1)[0]
    return ll2.ravel()


def feature_row(subject_id: int, values: np.ndarray) -> str:
    """One CSV row: subject id followed by the coefficients."""
    return ",".join([str(int(subject_id))] + [repr(float(v)) for v in values])
