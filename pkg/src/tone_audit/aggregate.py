"""Corpus-level statistics over per-image tones.

Covers prompt centroids and CIEDE2000 diversity, light/dark and red/yellow
classification, threshold fractions, percent change, size-weighted group means,
Welch's t-test and the two-sigma convex hull in the (L*, h*) plane.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .colorspace import LabColor, ciede2000_array, hue_angle

L_THRESHOLD = 60.0
H_THRESHOLD = 55.0
DE_THRESHOLD = 5.0
NO_STIGMA = "No Stigma"

TONE_CLASSES = ("light-reddish", "light-yellowish", "dark-reddish", "dark-yellowish")


class EmptyInputError(ValueError):
    pass


def _nonempty(values, what: str):
    if len(values) == 0:
        raise EmptyInputError(f"{what} needs at least one value")


# -- centroids and diversity -------------------------------------------------


def _labs(tones) -> np.ndarray:
    return np.array([tuple(t.lab) for t in tones], dtype=np.float64).reshape(-1, 3)


def centroid(tones: Sequence) -> LabColor:
    """Component-wise mean of the tones' (L*, a*, b*)."""
    _nonempty(tones, "centroid")
    labs = _labs(tones)
    anchor = labs[0]
    mean = anchor + (labs - anchor).sum(axis=0) / len(labs)
    return LabColor(*mean.tolist())


def delta_e_diversity(tones: Sequence) -> tuple[float, list[float]]:
    """Mean CIEDE2000 distance of each image's tone to the prompt centroid.

    Returns:
        ``(mean_deltaE, per_image)`` with ``per_image`` in input order.
    """
    _nonempty(tones, "delta_e_diversity")
    center = np.array(centroid(tones))
    per_image = ciede2000_array(_labs(tones), center)
    return math.fsum(per_image) / len(per_image), per_image.tolist()


# -- classification and fractions --------------------------------------------


class ToneClass(NamedTuple):
    lightness: str
    hue: str

    @property
    def label(self) -> str:
        return f"{self.lightness}-{self.hue}"


def classify_tone(tone, l_threshold: float = L_THRESHOLD, h_threshold: float = H_THRESHOLD) -> ToneClass:
    """dark iff L* <= l_threshold, reddish iff h* <= h_threshold."""
    return ToneClass(
        "dark" if tone.L <= l_threshold else "light",
        "reddish" if tone.h <= h_threshold else "yellowish",
    )


def class_counts(tones, l_threshold: float = L_THRESHOLD, h_threshold: float = H_THRESHOLD) -> dict[str, int]:
    counts = Counter(classify_tone(t, l_threshold, h_threshold).label for t in tones)
    return {label: counts.get(label, 0) for label in TONE_CLASSES}


def frac_below(values: Sequence[float], threshold: float) -> float:
    """Fraction of values strictly below ``threshold``."""
    _nonempty(values, "frac_below")
    return sum(1 for v in values if v < threshold) / len(values)


def frac_below_baseline(group_means: Sequence[float], baseline: float) -> float:
    _nonempty(group_means, "frac_below_baseline")
    return frac_below(group_means, baseline)


def percent_change(old: float, new: float) -> float:
    if old == 0:
        raise ZeroDivisionError("percent change from a zero baseline is undefined")
    return 100.0 * (new - old) / old


def weighted_group_mean(groups: Iterable[tuple[int, float]]) -> float:
    """Sum of size * value over total size."""
    groups = list(groups)
    _nonempty(groups, "weighted_group_mean")
    if any(size < 1 for size, _ in groups):
        raise ValueError("group sizes must be >= 1")
    total = sum(size for size, _ in groups)
    return math.fsum(size * value for size, value in groups) / total


class MeanStd(NamedTuple):
    mean: float
    std: float
    single: bool


def mean_std(values: Sequence[float]) -> MeanStd:
    """Arithmetic mean and sample (n - 1) standard deviation.

    A single value gives std 0 with ``single`` set.
    """
    _nonempty(values, "mean_std")
    x = np.asarray(values, dtype=np.float64)
    mean = math.fsum(x) / len(x)
    if len(x) == 1:
        return MeanStd(mean, 0.0, True)
    var = math.fsum((x - mean) ** 2) / (len(x) - 1)
    return MeanStd(mean, math.sqrt(var), False)


# -- Welch's t-test ------------------------------------------------------------


def _beta_cf(a: float, b: float, x: float, max_iter: int = 500, eps: float = 1e-16) -> float:
    # Modified Lentz evaluation of the incomplete-beta continued fraction.
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class TestResult:
    t_statistic: float
    degrees_of_freedom: float
    p_value: float
    degenerate: bool = False

    __test__ = False  # not a pytest class

    @property
    def significant_05(self) -> bool:
        return self.p_value < 0.05

    @property
    def significant_001(self) -> bool:
        return self.p_value < 0.001

    @property
    def stars(self) -> str:
        return "**" if self.significant_001 else "*" if self.significant_05 else ""


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sided Welch's unequal-variance t-test.

    When both samples have zero variance the statistic is exact: t = 0 and
    p = 1 for equal means, t = +/-inf and p = 0 otherwise; ``degenerate`` is set.
    """
    if len(a) < 2 or len(b) < 2:
        raise ValueError(f"welch_t_test needs >= 2 values per sample, got {len(a)} and {len(b)}")
    ma, sa, _ = mean_std(a)
    mb, sb, _ = mean_std(b)
    na, nb = len(a), len(b)
    va, vb = sa * sa / na, sb * sb / nb
    se2 = va + vb
    diff = ma - mb
    if se2 == 0.0:
        t = 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return TestResult(t, float(na + nb - 2), 1.0 if diff == 0 else 0.0, degenerate=True)
    t = diff / math.sqrt(se2)
    df = se2 * se2 / (va * va / (na - 1) + vb * vb / (nb - 1))
    return TestResult(t, df, student_t_two_sided_p(t, df))


# -- convex hull ---------------------------------------------------------------


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Monotone-chain hull, counterclockwise, collinear points dropped.

    Starts from the point with the smallest x (then smallest y).
    """
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return pts
    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return hull if len(hull) >= 3 else hull[:2]


def hull_contains(vertices: Sequence[tuple[float, float]], point: tuple[float, float], eps: float = 1e-9) -> bool:
    """Point-in-convex-polygon test (boundary counts as inside)."""
    n = len(vertices)
    for i in range(n):
        a, b = vertices[i], vertices[(i + 1) % n]
        scale = max(1.0, math.hypot(b[0] - a[0], b[1] - a[1]))
        if _cross(a, b, point) < -eps * scale:
            return False
    return True


@dataclass(frozen=True)
class HullPolygon:
    vertices: list[tuple[float, float]]
    n_points: int
    n_retained: int
    degenerate: bool


def two_sigma_hull(tones: Sequence) -> HullPolygon:
    """Hull of the (L*, h*) points lying within two sample standard deviations of the mean on both axes."""
    _nonempty(tones, "two_sigma_hull")
    Ls = [t.L for t in tones]
    hs = [t.h for t in tones]
    mL, sL, _ = mean_std(Ls)
    mh, sh, _ = mean_std(hs)
    kept = [(L, h) for L, h in zip(Ls, hs) if abs(L - mL) <= 2 * sL and abs(h - mh) <= 2 * sh]
    vertices = convex_hull(kept)
    return HullPolygon(
        vertices=vertices,
        n_points=len(tones),
        n_retained=len(kept),
        degenerate=len(vertices) < 3,
    )


# -- histogram -----------------------------------------------------------------


def histogram(values: Sequence[float], bin_width: float) -> list[tuple[float, float, int]]:
    """Fixed-width bins ``[i*w, (i+1)*w)`` from 0 up to the bin holding the maximum."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if len(values) == 0:
        return []
    idx = np.floor(np.asarray(values, dtype=np.float64) / bin_width).astype(np.int64)
    if idx.min() < 0:
        raise ValueError("histogram expects non-negative values")
    counts = np.bincount(idx)
    return [(i * bin_width, (i + 1) * bin_width, int(c)) for i, c in enumerate(counts)]


# -- per-identity and per-category summaries ----------------------------------


@dataclass(frozen=True)
class PromptAggregate:
    identity_id: str
    n_images: int
    centroid: LabColor
    centroid_h: float
    mean_L: float
    std_L: float
    mean_h: float
    std_h: float
    mean_deltaE: float
    frac_deltaE_below: float
    class_counts: dict[str, int]
    per_image_deltaE: list[float] = field(repr=False)


def aggregate_prompt(
    identity_id: str,
    tones: Sequence,
    l_threshold: float = L_THRESHOLD,
    h_threshold: float = H_THRESHOLD,
    de_threshold: float = DE_THRESHOLD,
) -> PromptAggregate:
    _nonempty(tones, f"aggregate_prompt({identity_id})")
    center = centroid(tones)
    mean_de, per_image = delta_e_diversity(tones)
    L = mean_std([t.L for t in tones])
    h = mean_std([t.h for t in tones])
    return PromptAggregate(
        identity_id=identity_id,
        n_images=len(tones),
        centroid=center,
        centroid_h=hue_angle(center).h,
        mean_L=L.mean,
        std_L=L.std,
        mean_h=h.mean,
        std_h=h.std,
        mean_deltaE=mean_de,
        frac_deltaE_below=frac_below(per_image, de_threshold),
        class_counts=class_counts(tones, l_threshold, h_threshold),
        per_image_deltaE=per_image,
    )


@dataclass(frozen=True)
class GroupStats:
    category: str
    members: tuple[str, ...]
    mean_L: float
    mean_h: float
    mean_deltaE: float
    weighting: str = "identity"
    significance: dict[str, TestResult] | None = None

    @property
    def size(self) -> int:
        return len(self.members)


def group_stats(category: str, prompts: Sequence[PromptAggregate], weighting: str = "identity") -> GroupStats:
    """Category means over its identities.

    ``weighting="identity"`` averages identity means with equal weight;
    ``"image"`` weights each identity by its image count.
    """
    _nonempty(prompts, f"group_stats({category})")
    if weighting == "identity":
        sizes = [1] * len(prompts)
    elif weighting == "image":
        sizes = [p.n_images for p in prompts]
    else:
        raise ValueError(f"unknown weighting mode {weighting!r}")
    return GroupStats(
        category=category,
        members=tuple(p.identity_id for p in prompts),
        mean_L=weighted_group_mean(zip(sizes, (p.mean_L for p in prompts))),
        mean_h=weighted_group_mean(zip(sizes, (p.mean_h for p in prompts))),
        mean_deltaE=weighted_group_mean(zip(sizes, (p.mean_deltaE for p in prompts))),
        weighting=weighting,
    )


def weighted_mean_row(groups: Sequence[GroupStats], exclude: Iterable[str] = (NO_STIGMA,)) -> dict[str, float]:
    """Size-weighted means of the category rows, leaving out ``exclude`` categories."""
    skip = set(exclude)
    rows = [g for g in groups if g.category not in skip]
    _nonempty(rows, "weighted_mean_row")
    return {
        "mean_L": weighted_group_mean((g.size, g.mean_L) for g in rows),
        "mean_h": weighted_group_mean((g.size, g.mean_h) for g in rows),
        "mean_deltaE": weighted_group_mean((g.size, g.mean_deltaE) for g in rows),
    }
