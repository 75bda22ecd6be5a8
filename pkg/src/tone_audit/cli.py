"""``tone-audit`` command line: measure, aggregate, compare, hull.

Exit codes: 0 success, 1 validation failure, 2 I/O failure. On failure a JSON
error summary is printed to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import reports
from .aggregate import DE_THRESHOLD, H_THRESHOLD, L_THRESHOLD
from .corpus import (
    DEFAULT_MIN_GROUP,
    ManifestEntry,
    ResultRecord,
    ResultsFormatError,
    load_manifest,
    load_results,
    load_taxonomy,
    persist_results,
)
from .skinmask import (
    DEFAULT_COVERAGE_MIN,
    coverage_verdict,
    heuristic_skin_detect,
    load_image,
    load_mask,
    resample_mask_nearest,
    sidecar_mask_path,
)
from .tonemetrics import DEFAULT_K, DEFAULT_SEED, measure_image

logger = logging.getLogger("tone_audit")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
THREADS_ENV = "TONE_AUDIT_THREADS"
RESULTS_NAME = "results.csv"


@dataclass(frozen=True)
class RunConfig:
    manifest: Path | None = None
    taxonomy: Path | None = None
    out: Path = Path(".")
    k: int = DEFAULT_K
    seed: int = DEFAULT_SEED
    coverage_min: float = DEFAULT_COVERAGE_MIN
    l_threshold: float = L_THRESHOLD
    h_threshold: float = H_THRESHOLD
    de_threshold: float = DE_THRESHOLD
    bin_width: float = 0.5
    min_group: int = DEFAULT_MIN_GROUP

    def __post_init__(self):
        for name in ("coverage_min", "l_threshold", "h_threshold", "de_threshold", "bin_width"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return min(4, os.cpu_count() or 1)


def measure_entry(entry: ManifestEntry, cfg: RunConfig) -> ResultRecord:
    img = load_image(entry.image_file)
    height, width = img.shape[:2]
    mask_file = entry.mask_file
    if mask_file is None:
        sidecar = sidecar_mask_path(entry.image_file)
        mask_file = sidecar if sidecar.is_file() else None
    if mask_file is not None:
        mask = load_mask(mask_file)
    else:
        mask = heuristic_skin_detect(img)
    # Coverage is judged at the mask's own resolution; tone uses the full-size image.
    verdict = coverage_verdict(mask, cfg.coverage_min)
    tone = None
    if verdict.retained:
        tone = measure_image(img, resample_mask_nearest(mask, (width, height)), k=cfg.k, seed=cfg.seed)
    return ResultRecord(
        model_tag=entry.model_tag,
        identity_id=entry.identity_id,
        image_path=entry.image_path,
        coverage=verdict.coverage,
        retained=verdict.retained,
        tone=tone,
        k=cfg.k,
        seed=cfg.seed,
    )


def cmd_measure(cfg: RunConfig) -> Path:
    taxonomy = load_taxonomy(cfg.taxonomy)
    entries = load_manifest(cfg.manifest, taxonomy, min_group=cfg.min_group)
    n = worker_count()
    if n > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            records = list(pool.map(lambda e: measure_entry(e, cfg), entries))
    else:
        records = [measure_entry(e, cfg) for e in entries]
    out = cfg.out / RESULTS_NAME
    persist_results(records, out)
    kept = sum(r.retained for r in records)
    logger.info("measured %d image(s), %d retained, %d excluded -> %s", len(records), kept, len(records) - kept, out)
    return out


def _load_checked(results: Path, taxonomy):
    records = load_results(results)
    known = {t.id for t in taxonomy}
    unknown = sorted({r.identity_id for r in records} - known)
    if unknown:
        raise ResultsFormatError(f"{results}: identity id(s) not in taxonomy: {', '.join(unknown)}")
    return records


def cmd_aggregate(results: Path, cfg: RunConfig) -> list[Path]:
    taxonomy = load_taxonomy(cfg.taxonomy)
    records = _load_checked(results, taxonomy)
    cats = reports.category_lookup(taxonomy)
    order = reports.category_order(taxonomy)
    aggs = reports.aggregate_tag(records, cfg.l_threshold, cfg.h_threshold, cfg.de_threshold)
    tables = [
        reports.identity_table(aggs, cats),
        reports.category_table(aggs, cats, order),
        reports.summary_table(aggs, cats, cfg.de_threshold),
        reports.histogram_table(aggs, cfg.bin_width),
    ]
    return [p for t in tables for p in t.write(cfg.out)]


def _pick_tag(aggs: dict, requested: str | None, source: Path) -> str:
    if requested is not None:
        if requested not in aggs:
            raise reports.CompareError(f"{source}: no retained images for model tag {requested!r}")
        return requested
    if len(aggs) != 1:
        raise reports.CompareError(
            f"{source}: holds model tags {', '.join(aggs) or '(none)'}; choose one with --tag-a/--tag-b"
        )
    return next(iter(aggs))


def cmd_compare(results_a: Path, results_b: Path, cfg: RunConfig, tag_a: str | None = None, tag_b: str | None = None) -> list[Path]:
    taxonomy = load_taxonomy(cfg.taxonomy)
    cats = reports.category_lookup(taxonomy)
    order = reports.category_order(taxonomy)
    aggs_a = reports.aggregate_tag(_load_checked(results_a, taxonomy), cfg.l_threshold, cfg.h_threshold, cfg.de_threshold)
    aggs_b = reports.aggregate_tag(_load_checked(results_b, taxonomy), cfg.l_threshold, cfg.h_threshold, cfg.de_threshold)
    ta = _pick_tag(aggs_a, tag_a, results_a)
    tb = _pick_tag(aggs_b, tag_b, results_b)
    tables = reports.comparison_tables(aggs_a[ta], aggs_b[tb], ta, tb, cats, order)
    return [p for t in tables for p in t.write(cfg.out)]


def cmd_hull(results: Path, cfg: RunConfig) -> list[Path]:
    records = load_results(results)
    tables = reports.hull_tables(records)
    for row in tables[1].rows:
        if row[-1]:
            logger.warning("%s: degenerate hull (%d point(s) retained)", row[0], row[2])
    return [p for t in tables for p in t.write(cfg.out)]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--taxonomy", type=Path, default=None, help="taxonomy CSV (default: bundled)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--k", type=int, default=DEFAULT_K, help="clusters per image")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="k-means++ seed")
    common.add_argument("--coverage-min", type=float, default=DEFAULT_COVERAGE_MIN)
    common.add_argument("--l-threshold", type=float, default=L_THRESHOLD)
    common.add_argument("--h-threshold", type=float, default=H_THRESHOLD)
    common.add_argument("--de-threshold", type=float, default=DE_THRESHOLD)
    common.add_argument("--bin-width", type=float, default=0.5)
    common.add_argument("--min-group", type=int, default=DEFAULT_MIN_GROUP)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tone-audit", description="Skin-tone bias audit of image corpora.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("measure", parents=[common], help="measure per-image skin tone")
    p.add_argument("--manifest", type=Path, required=True)
    p = sub.add_parser("aggregate", parents=[common], help="per-identity / per-category reports")
    p.add_argument("results", type=Path)
    p = sub.add_parser("compare", parents=[common], help="compare two corpora")
    p.add_argument("results_a", type=Path)
    p.add_argument("results_b", type=Path)
    p.add_argument("--tag-a", default=None)
    p.add_argument("--tag-b", default=None)
    p = sub.add_parser("hull", parents=[common], help="two-sigma convex hulls per model tag")
    p.add_argument("results", type=Path)
    return parser


def _fail(code: int, kind: str, exc: BaseException) -> int:
    payload = {"status": "error", "kind": kind, "type": type(exc).__name__, "message": str(exc)}
    for attr in ("unresolved_ids", "missing_files"):
        if getattr(exc, attr, None):
            payload[attr] = getattr(exc, attr)
    if isinstance(exc, OSError) and exc.filename:
        payload["path"] = str(exc.filename)
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def _dispatch(args, cfg: RunConfig) -> list[Path]:
    if args.command == "measure":
        return [cmd_measure(cfg)]
    if args.command == "aggregate":
        return cmd_aggregate(args.results, cfg)
    if args.command == "compare":
        return cmd_compare(args.results_a, args.results_b, cfg, args.tag_a, args.tag_b)
    return cmd_hull(args.results, cfg)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig(
            manifest=getattr(args, "manifest", None),
            taxonomy=args.taxonomy,
            out=args.out,
            k=args.k,
            seed=args.seed,
            coverage_min=args.coverage_min,
            l_threshold=args.l_threshold,
            h_threshold=args.h_threshold,
            de_threshold=args.de_threshold,
            bin_width=args.bin_width,
            min_group=args.min_group,
        )
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                written = _dispatch(args, cfg)
            finally:
                for w in caught:
                    logger.warning("%s", w.message)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc)
    except ValueError as exc:
        return _fail(EXIT_VALIDATION, "validation", exc)
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
