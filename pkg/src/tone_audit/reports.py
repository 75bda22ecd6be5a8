"""Turn per-image result records into the tabular reports written by the CLI.

Every table is a ``Table`` (header + rows of plain values) so it can be written
both as CSV and as an aligned text table. Only the results file is consulted;
per-image ΔE values are recomputed from the stored Lab triples.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from . import aggregate as agg
from .corpus import NO_STIGMA, IdentityRecord, ResultRecord, write_csv_atomic

WEIGHTED_MEAN = "Weighted Mean"
STIGMATIZED = "All Stigmatized"


@dataclass
class Table:
    name: str
    header: list[str]
    rows: list[list]

    def write(self, out_dir: str | Path) -> list[Path]:
        out_dir = Path(out_dir)
        csv_path = out_dir / f"{self.name}.csv"
        txt_path = out_dir / f"{self.name}.txt"
        write_csv_atomic(csv_path, self.header, ([_csv_cell(v) for v in row] for row in self.rows))
        txt_path.write_text(format_text_table(self.header, self.rows), encoding="utf-8")
        return [csv_path, txt_path]


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _text_cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.2f}" if math.isfinite(v) else str(v)
    return str(v)


def format_text_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [list(header)] + [[_text_cell(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    numeric = [
        all(isinstance(row[i], (int, float)) and not isinstance(row[i], bool) for row in rows if row[i] is not None)
        for i in range(len(header))
    ]
    lines = []
    for n, row in enumerate(cells):
        parts = [c.rjust(w) if numeric[i] and n else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths))]
        lines.append("  ".join(parts).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


# -- grouping helpers ------------------------------------------------------------


def retained_by_identity(records: Iterable[ResultRecord]) -> dict[str, dict[str, list[ResultRecord]]]:
    """model_tag -> identity_id -> retained records, sorted by image path."""
    out: dict[str, dict[str, list[ResultRecord]]] = defaultdict(lambda: defaultdict(list))
    for r in sorted(records, key=lambda r: r.key):
        if r.retained:
            out[r.model_tag][r.identity_id].append(r)
    return {tag: dict(sorted(ids.items())) for tag, ids in sorted(out.items())}


def category_lookup(taxonomy: Sequence[IdentityRecord]) -> dict[str, str]:
    return {rec.id: rec.category for rec in taxonomy}


def category_order(taxonomy: Sequence[IdentityRecord]) -> list[str]:
    seen: dict[str, None] = {}
    for rec in taxonomy:
        seen.setdefault(rec.category, None)
    cats = [c for c in seen if c != NO_STIGMA]
    return cats + ([NO_STIGMA] if NO_STIGMA in seen else [])


@dataclass
class TagAggregates:
    prompts: dict[str, agg.PromptAggregate]
    tones: dict[str, list]
    excluded: dict[str, int]


def aggregate_tag(
    records: Sequence[ResultRecord],
    l_threshold: float,
    h_threshold: float,
    de_threshold: float,
) -> dict[str, TagAggregates]:
    excluded: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))
    for r in records:
        if not r.retained:
            excluded[r.model_tag][r.identity_id] += 1
    out = {}
    for tag, by_id in retained_by_identity(records).items():
        tones = {ident: [r.tone for r in recs] for ident, recs in by_id.items()}
        prompts = {
            ident: agg.aggregate_prompt(ident, ts, l_threshold, h_threshold, de_threshold)
            for ident, ts in tones.items()
        }
        out[tag] = TagAggregates(prompts, tones, dict(excluded.get(tag, {})))
    return out


# -- aggregate reports -------------------------------------------------------------


def identity_table(aggs: dict[str, TagAggregates], categories: dict[str, str]) -> Table:
    header = [
        "model_tag", "identity_id", "category", "n_images", "n_excluded",
        "centroid_L", "centroid_a", "centroid_b", "centroid_h",
        "mean_L", "std_L", "mean_h", "std_h", "mean_de", "frac_de_below",
        *(c.replace("-", "_") for c in agg.TONE_CLASSES),
    ]  # fmt: skip
    rows = []
    for tag, ta in aggs.items():
        for ident, p in ta.prompts.items():
            rows.append(
                [
                    tag, ident, categories.get(ident, ""), p.n_images, ta.excluded.get(ident, 0),
                    *p.centroid, p.centroid_h,
                    p.mean_L, p.std_L, p.mean_h, p.std_h, p.mean_deltaE, p.frac_deltaE_below,
                    *(p.class_counts[c] for c in agg.TONE_CLASSES),
                ]
            )  # fmt: skip
    return Table("identities", header, rows)


def category_groups(ta: TagAggregates, categories: dict[str, str], order: Sequence[str], weighting: str = "identity"):
    members: dict[str, list[agg.PromptAggregate]] = defaultdict(list)
    for ident, p in ta.prompts.items():
        members[categories[ident]].append(p)
    return [agg.group_stats(cat, members[cat], weighting) for cat in order if members.get(cat)]


def category_table(aggs: dict[str, TagAggregates], categories: dict[str, str], order: Sequence[str]) -> Table:
    header = ["model_tag", "category", "size", "mean_L", "mean_h", "mean_de"]
    rows = []
    for tag, ta in aggs.items():
        groups = category_groups(ta, categories, order)
        for g in groups:
            rows.append([tag, g.category, g.size, g.mean_L, g.mean_h, g.mean_deltaE])
        if any(g.category != NO_STIGMA for g in groups):
            wm = agg.weighted_mean_row(groups)
            size = sum(g.size for g in groups if g.category != NO_STIGMA)
            rows.append([tag, WEIGHTED_MEAN, size, wm["mean_L"], wm["mean_h"], wm["mean_deltaE"]])
    return Table("categories", header, rows)


def published_weighted_mean(rows: Iterable[tuple[str, int, float, float, float]]) -> dict[str, float]:
    """Weighted-mean row for externally supplied (category, size, L*, h*, ΔE) rows."""
    groups = [
        agg.GroupStats(cat, tuple(f"{cat}#{i}" for i in range(size)), L, h, de)
        for cat, size, L, h, de in rows
    ]
    return agg.weighted_mean_row(groups)


def summary_table(aggs: dict[str, TagAggregates], categories: dict[str, str], de_threshold: float) -> Table:
    header = [
        "model_tag", "n_identities", "n_images", "mean_L", "std_L", "mean_h", "std_h",
        "mean_de", "frac_images_de_below", "no_stigma_mean_de", "frac_identities_below_no_stigma",
        *(c.replace("-", "_") for c in agg.TONE_CLASSES),
    ]  # fmt: skip
    rows = []
    for tag, ta in aggs.items():
        stig = [i for i in ta.prompts if categories.get(i) != NO_STIGMA]
        if not stig:
            continue
        tones = [t for i in stig for t in ta.tones[i]]
        per_image_de = [d for i in stig for d in ta.prompts[i].per_image_deltaE]
        L = agg.mean_std([t.L for t in tones])
        h = agg.mean_std([t.h for t in tones])
        ns = [p for i, p in ta.prompts.items() if categories.get(i) == NO_STIGMA]
        ns_de = ns[0].mean_deltaE if ns else None
        frac_ns = (
            agg.frac_below_baseline([ta.prompts[i].mean_deltaE for i in stig], ns_de) if ns_de is not None else None
        )
        counts = agg.class_counts(tones)
        rows.append(
            [
                tag, len(stig), len(tones), L.mean, L.std, h.mean, h.std,
                agg.weighted_group_mean((1, ta.prompts[i].mean_deltaE) for i in stig),
                agg.frac_below(per_image_de, de_threshold), ns_de, frac_ns,
                *(counts[c] for c in agg.TONE_CLASSES),
            ]
        )  # fmt: skip
    return Table("summary", header, rows)


def histogram_table(aggs: dict[str, TagAggregates], bin_width: float) -> Table:
    rows = []
    for tag, ta in aggs.items():
        values = [p.mean_deltaE for p in ta.prompts.values()]
        for lo, hi, count in agg.histogram(values, bin_width):
            rows.append([tag, lo, hi, count])
    return Table("de_histogram", ["model_tag", "bin_lo", "bin_hi", "count"], rows)


# -- comparison ------------------------------------------------------------------


class CompareError(ValueError):
    pass


def _pct(old: float, new: float) -> float | None:
    return None if old == 0 else agg.percent_change(old, new)


def _test_cells(a: Sequence[float], b: Sequence[float]) -> list:
    if len(a) < 2 or len(b) < 2:
        return [None, None, None, ""]
    res = agg.welch_t_test(a, b)
    return [res.t_statistic, res.degrees_of_freedom, res.p_value, res.stars]


def _comparison_row(label: str, n_a, n_b, tones_a, tones_b, de_a, de_b) -> list:
    row: list = [label, n_a, n_b]
    for attr in ("L", "h"):
        va = [getattr(t, attr) for t in tones_a]
        vb = [getattr(t, attr) for t in tones_b]
        ma, mb = math.fsum(va) / len(va), math.fsum(vb) / len(vb)
        row += [ma, mb, _pct(ma, mb), *_test_cells(va, vb)]
    ma, mb = math.fsum(de_a) / len(de_a), math.fsum(de_b) / len(de_b)
    row += [ma, mb, _pct(ma, mb), *_test_cells(de_a, de_b)]
    return row


COMPARE_VALUE_COLUMNS = [
    f"{col}_{suffix}"
    for col in ("L", "h", "de")
    for suffix in ("a", "b", "pct_change", "t", "df", "p", "stars")
]


def comparison_tables(
    a: TagAggregates,
    b: TagAggregates,
    tag_a: str,
    tag_b: str,
    categories: dict[str, str],
    order: Sequence[str],
) -> list[Table]:
    """Per-identity, per-category and overall comparisons of corpus B against corpus A.

    Welch tests pool per-image values; ΔE values are each image's distance to
    its own prompt centroid.
    """
    shared = sorted(set(a.prompts) & set(b.prompts))
    if not shared:
        raise CompareError(f"{tag_a} and {tag_b} share no identities")

    def de(ta: TagAggregates, ident: str) -> list[float]:
        return ta.prompts[ident].per_image_deltaE

    header_id = ["identity_id", "category", "n_a", "n_b", *COMPARE_VALUE_COLUMNS]
    id_rows = []
    for ident in shared:
        row = _comparison_row(ident, len(a.tones[ident]), len(b.tones[ident]), a.tones[ident], b.tones[ident], de(a, ident), de(b, ident))
        id_rows.append([row[0], categories.get(ident, ""), *row[1:]])

    header_cat = ["category", "size", "n_a", "n_b", *COMPARE_VALUE_COLUMNS]
    cat_rows = []
    by_cat: dict[str, list[str]] = defaultdict(list)
    for ident in shared:
        by_cat[categories[ident]].append(ident)
    groups = [(cat, by_cat[cat]) for cat in order if by_cat.get(cat)]
    stig = [i for i in shared if categories[i] != NO_STIGMA]
    if stig:
        groups.append((STIGMATIZED, stig))
    for label, idents in groups:
        ta = [t for i in idents for t in a.tones[i]]
        tb = [t for i in idents for t in b.tones[i]]
        da = [d for i in idents for d in de(a, i)]
        db = [d for i in idents for d in de(b, i)]
        row = _comparison_row(label, len(ta), len(tb), ta, tb, da, db)
        cat_rows.append([row[0], len(idents), *row[1:]])

    base_rows = []
    sides = (("A", tag_a, a), ("B", tag_b, b))
    for side, label, ta in sides:
        ns = [i for i in ta.prompts if categories.get(i) == NO_STIGMA]
        if not ns:
            continue
        baseline = ta.prompts[ns[0]].mean_deltaE
        for target_side, target_label, target in sides:
            means = [target.prompts[i].mean_deltaE for i in target.prompts if categories.get(i) != NO_STIGMA]
            if means:
                frac = agg.frac_below_baseline(means, baseline)
                base_rows.append([side, label, baseline, target_side, target_label, len(means), frac])
    header_base = [
        "baseline_corpus",
        "baseline_tag",
        "baseline_no_stigma_de",
        "target_corpus",
        "target_tag",
        "n_identities",
        "frac_below_baseline",
    ]
    return [
        Table("compare_identities", header_id, id_rows),
        Table("compare_categories", header_cat, cat_rows),
        Table("compare_baseline", header_base, base_rows),
    ]


# -- hulls -------------------------------------------------------------------------


def hull_tables(records: Sequence[ResultRecord]) -> list[Table]:
    by_tag: dict[str, list] = defaultdict(list)
    for r in sorted(records, key=lambda r: r.key):
        if r.retained:
            by_tag[r.model_tag].append(r.tone)
    vertex_rows, summary_rows = [], []
    for tag in sorted(by_tag):
        hull = agg.two_sigma_hull(by_tag[tag])
        for i, (L, h) in enumerate(hull.vertices):
            vertex_rows.append([tag, i, L, h])
        summary_rows.append([tag, hull.n_points, hull.n_retained, len(hull.vertices), hull.degenerate])
    return [
        Table("hull_vertices", ["model_tag", "vertex", "L", "h"], vertex_rows),
        Table("hull_summary", ["model_tag", "n_points", "n_retained", "n_vertices", "degenerate"], summary_rows),
    ]
