"""Skin-tone measurement and bias statistics for corpora of images of people."""

from .aggregate import (
    HullPolygon,
    PromptAggregate,
    TestResult,
    ToneClass,
    centroid,
    classify_tone,
    delta_e_diversity,
    frac_below,
    frac_below_baseline,
    mean_std,
    percent_change,
    two_sigma_hull,
    weighted_group_mean,
    welch_t_test,
)
from .colorspace import LabColor, SrgbColor, ToneAngle, ciede2000, hue_angle, lab_to_srgb, srgb_to_lab
from .skinmask import SkinMask, coverage_verdict, heuristic_skin_detect, load_mask, resample_mask_nearest
from .tonemetrics import PixelSamples, ToneMeasure, collect_skin_pixels, kmeans_lab, tone_of_image

__version__ = "0.1.0"
