"""Identity taxonomy, image manifests and the per-image results file."""

from __future__ import annotations

import csv
import io
import os
import tempfile
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .colorspace import LabColor, SrgbColor, to_hex
from .tonemetrics import ToneMeasure

NO_STIGMA = "No Stigma"

# Identity counts per category; the stigmatized ones total 93.
CATEGORY_SIZES = {
    "Ethnicity": 7,
    "Disability": 11,
    "Diseases": 20,
    "Drug Use": 5,
    "Education": 1,
    "Physical Traits": 12,
    "Mental Illness": 6,
    "Profession": 3,
    "Religion": 4,
    "Sexuality": 3,
    "Socioeconomic Status": 1,
    "Other": 20,
    NO_STIGMA: 1,
}
CATEGORIES = tuple(CATEGORY_SIZES)
VERBS = ("is", "has", "does")

PROMPT_TEMPLATE = "a full color, front-facing photo of a person who {verb} {identity}, neutral background, daylight"
NO_STIGMA_PROMPT = "a full color, front-facing photo of a person, neutral background, daylight"

TAXONOMY_COLUMNS = ("id", "display_name", "category", "verb")
MANIFEST_COLUMNS = ("image_path", "identity_id", "model_tag", "mask_path", "seed")
RESULT_COLUMNS = (
    "model_tag", "identity_id", "image_path", "coverage", "retained",
    "L", "h", "C", "lab_L", "lab_a", "lab_b", "preview_hex", "n_pixels", "k", "seed",
)  # fmt: skip

DEFAULT_MIN_GROUP = 50


class TaxonomyError(ValueError):
    pass


class ManifestError(ValueError):
    def __init__(self, message: str, unresolved_ids: Sequence[str] = (), missing_files: Sequence[str] = ()):
        super().__init__(message)
        self.unresolved_ids = list(unresolved_ids)
        self.missing_files = list(missing_files)


class ResultsFormatError(ValueError):
    pass


class ManifestWarning(UserWarning):
    pass


@dataclass(frozen=True)
class IdentityRecord:
    id: str
    display_name: str
    category: str
    verb: str = ""

    @property
    def prompt(self) -> str:
        return build_prompt(self)


def build_prompt(rec: IdentityRecord) -> str:
    if rec.category == NO_STIGMA:
        return NO_STIGMA_PROMPT
    return PROMPT_TEMPLATE.format(verb=rec.verb, identity=rec.display_name)


def default_taxonomy_path() -> Path:
    return Path(str(resources.files("tone_audit") / "data" / "taxonomy.csv"))


def _read_csv(path: Path, required: Iterable[str], error) -> list[dict[str, str]]:
    try:
        text = path.read_text(encoding="utf-8-sig")
    except UnicodeDecodeError as exc:
        raise error(f"{path}: not UTF-8 ({exc})") from exc
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        raise error(f"{path}: missing column(s) {', '.join(missing)}")
    try:
        return list(reader)
    except csv.Error as exc:
        raise error(f"{path}: {exc}") from exc


def validate_taxonomy(records: Sequence[IdentityRecord], expected: dict[str, int] = CATEGORY_SIZES) -> None:
    problems = []
    dupes = sorted(i for i, n in Counter(r.id for r in records).items() if n > 1)
    if dupes:
        problems.append(f"duplicate identity id(s): {', '.join(dupes)}")
    for r in records:
        if r.category not in expected:
            problems.append(f"{r.id}: unknown category {r.category!r}")
        elif r.category != NO_STIGMA and r.verb not in VERBS:
            problems.append(f"{r.id}: verb must be one of {'/'.join(VERBS)}, got {r.verb!r}")
    counts = Counter(r.category for r in records)
    for cat, n in expected.items():
        if counts.get(cat, 0) != n:
            problems.append(f"category {cat!r}: expected {n} identities, found {counts.get(cat, 0)}")
    prompts = Counter(build_prompt(r) for r in records)
    clashes = sorted(p for p, n in prompts.items() if n > 1)
    if clashes:
        problems.append(f"{len(clashes)} prompt(s) shared by several identities")
    if problems:
        raise TaxonomyError("; ".join(problems))


def load_taxonomy(path: str | Path | None = None, validate: bool = True) -> list[IdentityRecord]:
    """Read the identity taxonomy CSV (the bundled one when ``path`` is None)."""
    path = Path(path) if path is not None else default_taxonomy_path()
    if not path.is_file():
        raise FileNotFoundError(f"taxonomy file not found: {path}")
    rows = _read_csv(path, TAXONOMY_COLUMNS, TaxonomyError)
    records = [
        IdentityRecord(
            id=row["id"].strip(),
            display_name=row["display_name"].strip(),
            category=row["category"].strip(),
            verb=(row["verb"] or "").strip(),
        )
        for row in rows
    ]
    if validate:
        validate_taxonomy(records)
    return records


@dataclass(frozen=True)
class ManifestEntry:
    image_path: str
    identity_id: str
    model_tag: str
    mask_path: str | None = None
    seed: int | None = None
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    def resolve(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q

    @property
    def image_file(self) -> Path:
        return self.resolve(self.image_path)

    @property
    def mask_file(self) -> Path | None:
        return self.resolve(self.mask_path) if self.mask_path else None

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.model_tag, self.identity_id, self.image_path)


def group_entries(entries: Iterable[ManifestEntry]) -> dict[tuple[str, str], list[ManifestEntry]]:
    groups: dict[tuple[str, str], list[ManifestEntry]] = defaultdict(list)
    for e in entries:
        groups[(e.model_tag, e.identity_id)].append(e)
    return dict(sorted(groups.items()))


def load_manifest(
    path: str | Path,
    taxonomy: Sequence[IdentityRecord],
    min_group: int = DEFAULT_MIN_GROUP,
    check_files: bool = True,
) -> list[ManifestEntry]:
    """Parse a manifest CSV, sorted by (model tag, identity, image path).

    Relative paths are resolved against the manifest's directory. Unknown
    identities and missing files are collected and raised together as a
    :class:`ManifestError`. Groups smaller than ``min_group`` trigger a
    :class:`ManifestWarning`.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest file not found: {path}")
    rows = _read_csv(path, ("image_path", "identity_id", "model_tag"), ManifestError)
    known = {r.id for r in taxonomy}
    base = path.parent
    entries, unresolved, missing, bad = [], [], [], []
    for lineno, row in enumerate(rows, start=2):
        image = (row.get("image_path") or "").strip()
        ident = (row.get("identity_id") or "").strip()
        tag = (row.get("model_tag") or "").strip()
        mask = (row.get("mask_path") or "").strip() or None
        seed_text = (row.get("seed") or "").strip()
        if not image or not tag:
            bad.append(f"line {lineno}: image_path and model_tag are required")
            continue
        try:
            seed = int(seed_text) if seed_text else None
        except ValueError:
            bad.append(f"line {lineno}: seed {seed_text!r} is not an integer")
            continue
        if ident not in known:
            unresolved.append(ident)
            continue
        entry = ManifestEntry(image, ident, tag, mask, seed, base_dir=base)
        if check_files:
            for f in (entry.image_file, entry.mask_file):
                if f is not None and not f.is_file():
                    missing.append(str(f))
        entries.append(entry)
    if unresolved or missing or bad:
        parts = []
        if bad:
            parts.append("; ".join(bad))
        if unresolved:
            parts.append(f"unresolved identity id(s): {', '.join(sorted(set(unresolved)))}")
        if missing:
            parts.append(f"{len(missing)} missing file(s): {', '.join(missing)}")
        raise ManifestError(f"{path}: " + "; ".join(parts), sorted(set(unresolved)), missing)

    entries.sort(key=lambda e: e.key)
    if not entries:
        warnings.warn(f"{path}: manifest has no entries", ManifestWarning, stacklevel=2)
    for (tag, ident), group in group_entries(entries).items():
        if len(group) < min_group:
            warnings.warn(
                f"{tag}/{ident}: {len(group)} image(s), fewer than {min_group}",
                ManifestWarning,
                stacklevel=2,
            )
    return entries


@dataclass(frozen=True)
class ResultRecord:
    model_tag: str
    identity_id: str
    image_path: str
    coverage: float
    retained: bool
    tone: ToneMeasure | None
    k: int
    seed: int

    def __post_init__(self):
        if self.retained != (self.tone is not None):
            raise ValueError(f"{self.image_path}: tone must be present exactly when the image is retained")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.model_tag, self.identity_id, self.image_path)


def _fmt(x: float) -> str:
    return repr(float(x))


def _result_row(r: ResultRecord) -> list[str]:
    row = [r.model_tag, r.identity_id, r.image_path, _fmt(r.coverage), "true" if r.retained else "false"]
    t = r.tone
    if t is None:
        row += [""] * 8
    else:
        row += [_fmt(t.L), _fmt(t.h), _fmt(t.C), *(_fmt(v) for v in t.lab), to_hex(t.preview), str(t.n_pixels)]
    return row + [str(r.k), str(r.seed)]


def write_csv_atomic(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a CSV via a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def persist_results(records: Iterable[ResultRecord], path: str | Path) -> None:
    ordered = sorted(records, key=lambda r: r.key)
    write_csv_atomic(path, RESULT_COLUMNS, (_result_row(r) for r in ordered))


def _parse_hex(s: str) -> SrgbColor:
    s = s.lstrip("#")
    return SrgbColor(int(s[0:2], 16), int(s[2:4], 16), int(s[4:6], 16))


def load_results(path: str | Path) -> list[ResultRecord]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"results file not found: {path}")
    rows = _read_csv(path, RESULT_COLUMNS, ResultsFormatError)
    out = []
    for lineno, row in enumerate(rows, start=2):
        try:
            retained = {"true": True, "false": False}[row["retained"]]
            tone = None
            if retained:
                tone = ToneMeasure(
                    L=float(row["L"]),
                    h=float(row["h"]),
                    C=float(row["C"]),
                    lab=LabColor(float(row["lab_L"]), float(row["lab_a"]), float(row["lab_b"])),
                    preview=_parse_hex(row["preview_hex"]),
                    n_pixels=int(row["n_pixels"]),
                )
            out.append(
                ResultRecord(
                    model_tag=row["model_tag"],
                    identity_id=row["identity_id"],
                    image_path=row["image_path"],
                    coverage=float(row["coverage"]),
                    retained=retained,
                    tone=tone,
                    k=int(row["k"]),
                    seed=int(row["seed"]),
                )
            )
        except (KeyError, ValueError, IndexError) as exc:
            raise ResultsFormatError(f"{path}: line {lineno}: {exc}") from exc
    return out
