"""Reduce the skin pixels of one image to a single tone.

Skin pixels are clustered in (L*, a*, b*) with weighted k-means; the clusters are
ranked by size and the size-weighted mean of the three largest centroids is the
image's tone. Hue is always derived from the averaged (a*, b*) vector, never
averaged as an angle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .colorspace import LabColor, SrgbColor, hue_angle, lab_to_srgb, srgb_to_lab_array
from .skinmask import SkinMask

DEFAULT_K = 5
DEFAULT_SEED = 0
DEFAULT_N_INIT = 10
TOP_CLUSTERS = 3


@dataclass(frozen=True, eq=False)
class PixelSamples:
    """Deduplicated skin pixels: one Lab row per distinct value with its pixel count."""

    lab: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.lab, dtype=np.float64).reshape(-1, 3)
        weight = np.asarray(self.weight, dtype=np.int64).reshape(-1)
        if len(lab) != len(weight):
            raise ValueError("lab and weight lengths differ")
        if np.any(weight < 1):
            raise ValueError("sample weights must be >= 1")
        object.__setattr__(self, "lab", lab)
        object.__setattr__(self, "weight", weight)

    def __len__(self) -> int:
        return len(self.weight)

    @property
    def n_pixels(self) -> int:
        return int(self.weight.sum())

    @classmethod
    def from_lab(cls, lab, weight=None) -> "PixelSamples":
        lab = np.asarray(lab, dtype=np.float64).reshape(-1, 3)
        if weight is None:
            weight = np.ones(len(lab), dtype=np.int64)
        return cls(lab, weight)

    def canonical(self) -> "PixelSamples":
        """Merge duplicate Lab rows and sort them, so results ignore input order."""
        if len(self) == 0:
            return self
        uniq, inverse = np.unique(self.lab, axis=0, return_inverse=True)
        counts = np.bincount(inverse.reshape(-1), weights=self.weight, minlength=len(uniq))
        return PixelSamples(uniq, np.rint(counts).astype(np.int64))


@dataclass(frozen=True)
class ClusterSummary:
    centroid: LabColor
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"cluster size must be >= 1, got {self.size}")
        object.__setattr__(self, "centroid", LabColor(*(float(v) for v in self.centroid)))


@dataclass(frozen=True)
class ToneMeasure:
    L: float
    h: float
    C: float
    lab: LabColor
    preview: SrgbColor
    n_pixels: int

    @classmethod
    def from_lab(cls, lab, n_pixels: int) -> "ToneMeasure":
        lab = LabColor(*(float(v) for v in lab))
        angle = hue_angle(lab)
        return cls(
            L=lab.L,
            h=angle.h,
            C=angle.C,
            lab=lab,
            preview=lab_to_srgb(lab).color,
            n_pixels=int(n_pixels),
        )


def collect_skin_pixels(img: np.ndarray, mask: SkinMask) -> PixelSamples:
    """Lab values of the mask-positive pixels, deduplicated by RGB value."""
    img = np.asarray(img)
    if img.shape[:2] != mask.bits.shape:
        raise ValueError(
            f"mask is {mask.width}x{mask.height}, image is {img.shape[1]}x{img.shape[0]}"
        )
    pixels = img[mask.bits]
    if len(pixels) == 0:
        return PixelSamples(np.empty((0, 3)), np.empty(0, dtype=np.int64))
    px = pixels.reshape(-1, 3).astype(np.uint32)
    keys, counts = np.unique((px[:, 0] << 16) | (px[:, 1] << 8) | px[:, 2], return_counts=True)
    colors = np.stack([keys >> 16, (keys >> 8) & 0xFF, keys & 0xFF], axis=-1)
    return PixelSamples(srgb_to_lab_array(colors), counts)


def _anchored_mean(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # Offsetting from the first point keeps the mean of identical points exact.
    anchor = points[0]
    w = np.asarray(weights, dtype=np.float64)
    return anchor + (w[:, None] * (points - anchor)).sum(axis=0) / w.sum()


def _weighted_pick(rng: np.random.Generator, weights: np.ndarray) -> int:
    cum = np.cumsum(weights)
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(idx, len(weights) - 1)


def _kmeans_pp(points: np.ndarray, weights: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++: each step draws a few D^2-weighted candidates and keeps the best."""
    n_trials = 2 + int(np.log(k))
    centers = [points[_weighted_pick(rng, weights)]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        score = weights * d2
        if score.sum() <= 0:
            break
        best = None
        for _ in range(n_trials):
            c = points[_weighted_pick(rng, score)]
            cand = np.minimum(d2, ((points - c) ** 2).sum(axis=1))
            potential = float((weights * cand).sum())
            if best is None or potential < best[0]:
                best = (potential, c, cand)
        centers.append(best[1])
        d2 = best[2]
    return np.array(centers)


def _assign(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # |x|^2 is constant per row, so argmin over |c|^2 - 2 x.c picks the nearest center
    score = (centers**2).sum(axis=1)[None, :] - 2.0 * (points @ centers.T)
    return np.argmin(score, axis=1)


def kmeans_objective(samples: PixelSamples, clusters: list[ClusterSummary]) -> float:
    """Weighted within-cluster sum of squares for the nearest-centroid assignment."""
    centers = np.array([c.centroid for c in clusters])
    d2 = ((samples.lab[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2).min(axis=1)
    return float((samples.weight * d2).sum())


def _lloyd(points, weights, centers, tol, max_iter):
    labels = _assign(points, centers)
    for _ in range(max_iter):
        n = len(centers)
        mass = np.bincount(labels, weights=weights, minlength=n)
        new = centers.copy()
        nonempty = mass > 0
        for d in range(3):
            sums = np.bincount(labels, weights=weights * points[:, d], minlength=n)
            new[nonempty, d] = sums[nonempty] / mass[nonempty]
        shift = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        if shift < tol:
            break
        labels = _assign(points, centers)
    # labels are the assignment the final centers were averaged from
    return labels


def _clusters_from_labels(points, weights, counts, labels, k):
    clusters = []
    for j in range(k):
        members = labels == j
        if not members.any():
            continue
        centroid = _anchored_mean(points[members], weights[members])
        clusters.append(ClusterSummary(LabColor(*centroid.tolist()), int(counts[members].sum())))
    return clusters


def kmeans_lab(
    samples: PixelSamples,
    k: int = DEFAULT_K,
    seed: int = DEFAULT_SEED,
    tol: float = 1e-6,
    max_iter: int = 100,
    n_init: int = DEFAULT_N_INIT,
) -> list[ClusterSummary]:
    """Weighted Lloyd k-means in Lab with seeded k-means++ initialisation.

    Samples are canonicalised first, so the result depends only on the multiset
    of (Lab, weight) pairs. With fewer distinct values than ``k`` every distinct
    value becomes its own cluster. Each of the ``n_init`` runs stops once no
    centroid moves by ``tol`` or more, or after ``max_iter`` rounds; the run with
    the lowest weighted within-cluster sum of squares is kept.
    """
    if len(samples) == 0:
        raise ValueError("kmeans_lab needs at least one sample")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    s = samples.canonical()
    points, weights = s.lab, s.weight.astype(np.float64)
    if len(points) <= k:
        return [ClusterSummary(LabColor(*p.tolist()), int(w)) for p, w in zip(points, s.weight)]

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        centers = _kmeans_pp(points, weights, k, rng)
        labels = _lloyd(points, weights, centers, tol, max_iter)
        clusters = _clusters_from_labels(points, weights, s.weight, labels, len(centers))
        objective = kmeans_objective(s, clusters)
        if best is None or objective < best[0]:
            best = (objective, clusters)
    return best[1]


def rank_clusters(clusters: list[ClusterSummary]) -> list[ClusterSummary]:
    """Largest first; equal sizes ordered by lower L* then lower hue."""
    return sorted(clusters, key=lambda c: (-c.size, c.centroid.L, hue_angle(c.centroid).h))


def tone_from_clusters(clusters: list[ClusterSummary], n_pixels: int, top: int = TOP_CLUSTERS) -> ToneMeasure:
    chosen = rank_clusters(clusters)[:top]
    if len(chosen) == 1:
        lab = np.array(chosen[0].centroid)
    else:
        lab = _anchored_mean(
            np.array([c.centroid for c in chosen]), np.array([c.size for c in chosen])
        )
    return ToneMeasure.from_lab(lab, n_pixels)


def tone_of_image(samples: PixelSamples, k: int = DEFAULT_K, seed: int = DEFAULT_SEED) -> ToneMeasure:
    """Single (L*, h*) tone from the size-weighted mean of the largest three clusters."""
    clusters = kmeans_lab(samples, k=k, seed=seed)
    return tone_from_clusters(clusters, samples.n_pixels, top=min(TOP_CLUSTERS, k))


def measure_image(img: np.ndarray, mask: SkinMask, k: int = DEFAULT_K, seed: int = DEFAULT_SEED) -> ToneMeasure:
    samples = collect_skin_pixels(img, mask)
    if len(samples) == 0:
        raise ValueError("mask selects no skin pixels")
    return tone_of_image(samples, k=k, seed=seed)
