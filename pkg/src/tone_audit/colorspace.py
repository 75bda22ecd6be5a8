"""sRGB <-> CIELAB conversion, hue angle / chroma, and the CIEDE2000 color difference.

All math runs in float64. The white point is D65 with the 2 degree observer, taken
as the row sums of the IEC 61966-2-1 RGB->XYZ matrix so that every neutral sRGB
input lands exactly on the L* axis.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

# IEC 61966-2-1 linear RGB -> XYZ (D65)
RGB_TO_XYZ = np.array(
    [
        [0.4124, 0.3576, 0.1805],
        [0.2126, 0.7152, 0.0722],
        [0.0193, 0.1192, 0.9505],
    ]
)
WHITE_D65 = RGB_TO_XYZ.sum(axis=1)

# XYZ/white ratios as weights over linear RGB; each row sums to one.
_RATIO_WEIGHTS = RGB_TO_XYZ / WHITE_D65[:, None]
_RATIOS_TO_RGB = np.linalg.inv(_RATIO_WEIGHTS)

_DELTA = 6.0 / 29.0
_EPSILON = _DELTA**3  # 216/24389
_KAPPA = 24389.0 / 27.0
_POW25_7 = 25.0**7


class SrgbColor(NamedTuple):
    r: int
    g: int
    b: int


class LabColor(NamedTuple):
    L: float
    a: float
    b: float


class ToneAngle(NamedTuple):
    h: float
    C: float


class GamutResult(NamedTuple):
    """Result of `lab_to_srgb`: the encoded color and whether any channel was clipped."""

    color: SrgbColor
    clipped: bool


def srgb_decode(values: np.ndarray) -> np.ndarray:
    """Piecewise sRGB transfer curve, encoded [0, 1] -> linear [0, 1]."""
    v = np.asarray(values, dtype=np.float64)
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def srgb_encode(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    safe = np.maximum(v, 0.0)
    return np.where(v <= 0.0031308, 12.92 * v, 1.055 * safe ** (1.0 / 2.4) - 0.055)


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _EPSILON, np.cbrt(t), t / (3.0 * _DELTA**2) + 4.0 / 29.0)


def _lab_f_inv(f: np.ndarray) -> np.ndarray:
    return np.where(f > _DELTA, f**3, 3.0 * _DELTA**2 * (f - 4.0 / 29.0))


def srgb_to_lab_array(rgb: np.ndarray) -> np.ndarray:
    """Convert 8-bit sRGB values of shape (..., 3) to CIELAB, shape (..., 3)."""
    rgb = np.asarray(rgb)
    if rgb.shape[-1] != 3:
        raise ValueError(f"expected trailing dimension 3, got shape {rgb.shape}")
    lin = srgb_decode(rgb.astype(np.float64) / 255.0)
    r, g, b = lin[..., 0], lin[..., 1], lin[..., 2]
    # Anchor on green so that r == g == b gives bit-identical ratios (a* = b* = 0).
    dr, db = r - g, b - g
    w = _RATIO_WEIGHTS
    xr = g + w[0, 0] * dr + w[0, 2] * db
    yr = g + w[1, 0] * dr + w[1, 2] * db
    zr = g + w[2, 0] * dr + w[2, 2] * db
    fx, fy, fz = _lab_f(xr), _lab_f(yr), _lab_f(zr)
    L = np.where(yr > _EPSILON, 116.0 * fy - 16.0, _KAPPA * yr)
    out = np.empty(rgb.shape, dtype=np.float64)
    out[..., 0] = L
    out[..., 1] = 500.0 * (fx - fy)
    out[..., 2] = 200.0 * (fy - fz)
    return out


def lab_to_srgb_array(lab: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Convert CIELAB (..., 3) to 8-bit sRGB.

    Returns:
        ``(rgb, clipped)`` where ``rgb`` is uint8 of shape (..., 3) and ``clipped``
        is a boolean array of shape (...) marking colors outside the sRGB gamut.
    """
    lab = np.asarray(lab, dtype=np.float64)
    L, a, b = lab[..., 0], lab[..., 1], lab[..., 2]
    fy = (L + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    yr = np.where(L > _KAPPA * _EPSILON, fy**3, L / _KAPPA)
    ratios = np.stack([_lab_f_inv(fx), yr, _lab_f_inv(fz)], axis=-1)
    lin = ratios @ _RATIOS_TO_RGB.T
    encoded = np.rint(srgb_encode(lin) * 255.0)
    clipped = np.any((encoded < 0) | (encoded > 255), axis=-1)
    return np.clip(encoded, 0, 255).astype(np.uint8), clipped


def _check_srgb(c: SrgbColor) -> None:
    for name, v in zip("rgb", c):
        if not 0 <= v <= 255:
            raise ValueError(f"channel {name}={v} outside [0, 255]")


def srgb_to_lab(c: SrgbColor | tuple[int, int, int]) -> LabColor:
    _check_srgb(c)
    L, a, b = srgb_to_lab_array(np.array(c, dtype=np.float64)).tolist()
    return LabColor(L, a, b)


def lab_to_srgb(c: LabColor | tuple[float, float, float]) -> GamutResult:
    """Encode a Lab color as 8-bit sRGB, clamping per channel when out of gamut."""
    rgb, clipped = lab_to_srgb_array(np.array(c, dtype=np.float64))
    r, g, b = (int(v) for v in rgb)
    return GamutResult(SrgbColor(r, g, b), bool(clipped))


def to_hex(c: SrgbColor | tuple[int, int, int]) -> str:
    return "#{:02x}{:02x}{:02x}".format(*c)


def hue_angle(c: LabColor | tuple[float, float, float]) -> ToneAngle:
    """Hue angle in degrees on [0, 360) and chroma of a Lab color.

    A neutral color (a* = b* = 0) has no defined hue; 0 is returned alongside a
    chroma of 0.
    """
    _, a, b = c
    C = math.hypot(a, b)
    if a == 0 and b == 0:
        return ToneAngle(0.0, 0.0)
    h = math.degrees(math.atan2(b, a)) % 360.0
    if h >= 360.0:
        h = 0.0
    return ToneAngle(h, C)


def _hue_deg(b: np.ndarray, a: np.ndarray) -> np.ndarray:
    h = np.degrees(np.arctan2(b, a)) % 360.0
    h = np.where(h >= 360.0, 0.0, h)
    return np.where((a == 0) & (b == 0), 0.0, h)


def ciede2000_array(lab1: np.ndarray, lab2: np.ndarray) -> np.ndarray:
    """CIEDE2000 color difference with kL = kC = kH = 1, broadcasting over (..., 3)."""
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    L1, a1, b1 = lab1[..., 0], lab1[..., 1], lab1[..., 2]
    L2, a2, b2 = lab2[..., 0], lab2[..., 1], lab2[..., 2]

    c_bar = (np.hypot(a1, b1) + np.hypot(a2, b2)) / 2.0
    c_bar7 = c_bar**7
    g = 0.5 * (1.0 - np.sqrt(c_bar7 / (c_bar7 + _POW25_7)))
    a1p = (1.0 + g) * a1
    a2p = (1.0 + g) * a2
    c1p = np.hypot(a1p, b1)
    c2p = np.hypot(a2p, b2)
    h1p = _hue_deg(b1, a1p)
    h2p = _hue_deg(b2, a2p)

    chroma_prod = c1p * c2p
    dh = h2p - h1p
    dhp = np.where(dh > 180.0, dh - 360.0, np.where(dh < -180.0, dh + 360.0, dh))
    dhp = np.where(chroma_prod == 0, 0.0, dhp)

    dLp = L2 - L1
    dCp = c2p - c1p
    dHp = 2.0 * np.sqrt(chroma_prod) * np.sin(np.radians(dhp) / 2.0)

    Lp_bar = (L1 + L2) / 2.0
    Cp_bar = (c1p + c2p) / 2.0
    h_sum = h1p + h2p
    hp_bar = np.where(
        np.abs(h1p - h2p) <= 180.0,
        h_sum / 2.0,
        np.where(h_sum < 360.0, (h_sum + 360.0) / 2.0, (h_sum - 360.0) / 2.0),
    )
    hp_bar = np.where(chroma_prod == 0, h_sum, hp_bar)

    t = (
        1.0
        - 0.17 * np.cos(np.radians(hp_bar - 30.0))
        + 0.24 * np.cos(np.radians(2.0 * hp_bar))
        + 0.32 * np.cos(np.radians(3.0 * hp_bar + 6.0))
        - 0.20 * np.cos(np.radians(4.0 * hp_bar - 63.0))
    )
    d_theta = 30.0 * np.exp(-(((hp_bar - 275.0) / 25.0) ** 2))
    cp_bar7 = Cp_bar**7
    r_c = 2.0 * np.sqrt(cp_bar7 / (cp_bar7 + _POW25_7))
    l50 = (Lp_bar - 50.0) ** 2
    s_l = 1.0 + 0.015 * l50 / np.sqrt(20.0 + l50)
    s_c = 1.0 + 0.045 * Cp_bar
    s_h = 1.0 + 0.015 * Cp_bar * t
    r_t = -np.sin(np.radians(2.0 * d_theta)) * r_c

    tl = dLp / s_l
    tc = dCp / s_c
    th = dHp / s_h
    # Clamp guards against a tiny negative from the rotation term.
    return np.sqrt(np.maximum(tl**2 + tc**2 + th**2 + r_t * tc * th, 0.0))


def ciede2000(x: LabColor | tuple[float, float, float], y: LabColor | tuple[float, float, float]) -> float:
    return float(ciede2000_array(np.array(x, dtype=np.float64), np.array(y, dtype=np.float64)))
