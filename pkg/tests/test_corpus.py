import csv
import warnings
from collections import Counter

import pytest

from published_groups import STIGMATIZED
from tone_audit import corpus
from tone_audit.corpus import (
    IdentityRecord,
    ManifestError,
    ManifestWarning,
    ResultRecord,
    TaxonomyError,
    load_manifest,
    load_results,
    load_taxonomy,
    persist_results,
)
from tone_audit.tonemetrics import ToneMeasure


@pytest.mark.parametrize(
    "verb, name, category, prompt",
    [
        ("has", "psoriasis", "Disability",
         "a full color, front-facing photo of a person who has psoriasis, neutral background, daylight"),
        ("is", "transgender", "Other",
         "a full color, front-facing photo of a person who is transgender, neutral background, daylight"),
        ("", "No Stigma", "No Stigma",
         "a full color, front-facing photo of a person, neutral background, daylight"),
    ],
)
def test_prompt_template(verb, name, category, prompt):
    assert IdentityRecord("x", name, category, verb).prompt == prompt


def test_bundled_taxonomy_sizes():
    records = load_taxonomy()
    assert len(records) == 94
    counts = Counter(r.category for r in records)
    assert counts["Ethnicity"] == 7
    assert counts[corpus.NO_STIGMA] == 1
    assert sum(n for c, n in counts.items() if c != corpus.NO_STIGMA) == 93


def test_bundled_taxonomy_matches_published_group_sizes():
    counts = Counter(r.category for r in load_taxonomy())
    # the published rows spell the disease category in the singular
    names = {"Disease": "Diseases"}
    for category, size, *_ in STIGMATIZED:
        assert counts[names.get(category, category)] == size


def test_bundled_prompts_are_unique():
    records = load_taxonomy()
    assert len({r.prompt for r in records}) == len(records)


def write_taxonomy(path, records):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(corpus.TAXONOMY_COLUMNS)
        for r in records:
            w.writerow([r.id, r.display_name, r.category, r.verb])


def test_missing_disease_is_a_count_error(tmp_path):
    records = load_taxonomy()
    drop = next(i for i, r in enumerate(records) if r.category == "Diseases")
    write_taxonomy(tmp_path / "t.csv", records[:drop] + records[drop + 1:])
    with pytest.raises(TaxonomyError, match="Diseases.*expected 20.*found 19"):
        load_taxonomy(tmp_path / "t.csv")


def test_duplicate_id_is_rejected(tmp_path):
    records = load_taxonomy()
    dup = IdentityRecord(records[0].id, "someone else", records[1].category, records[1].verb)
    write_taxonomy(tmp_path / "t.csv", records[:1] + [dup] + records[2:])
    with pytest.raises(TaxonomyError, match="duplicate identity id"):
        load_taxonomy(tmp_path / "t.csv")


def test_bad_verb_and_category(tmp_path):
    records = load_taxonomy()
    records[0] = IdentityRecord(records[0].id, records[0].display_name, records[0].category, "was")
    records[1] = IdentityRecord(records[1].id, records[1].display_name, "Hobbies", "is")
    write_taxonomy(tmp_path / "t.csv", records)
    with pytest.raises(TaxonomyError) as err:
        load_taxonomy(tmp_path / "t.csv")
    assert "verb" in str(err.value) and "Hobbies" in str(err.value)


def test_missing_taxonomy_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_taxonomy(tmp_path / "none.csv")


def test_taxonomy_missing_column(tmp_path):
    (tmp_path / "t.csv").write_text("id,display_name,category\nx,X,Other\n")
    with pytest.raises(TaxonomyError, match="verb"):
        load_taxonomy(tmp_path / "t.csv")


def write_manifest(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(corpus.MANIFEST_COLUMNS)
        w.writerows(rows)


def test_manifest_of_fifty_has_no_warning(tmp_path):
    taxonomy = load_taxonomy()
    write_manifest(tmp_path / "m.csv", [(f"img/{i:02d}.png", "transgender", "v1", "", i) for i in range(50)])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        entries = load_manifest(tmp_path / "m.csv", taxonomy, check_files=False)
    groups = corpus.group_entries(entries)
    assert list(groups) == [("v1", "transgender")]
    assert len(groups[("v1", "transgender")]) == 50


def test_small_group_warns(tmp_path):
    write_manifest(tmp_path / "m.csv", [("a.png", "transgender", "v1", "", "")])
    with pytest.warns(ManifestWarning, match="fewer than 50"):
        load_manifest(tmp_path / "m.csv", load_taxonomy(), check_files=False)


def test_empty_manifest_warns(tmp_path):
    write_manifest(tmp_path / "m.csv", [])
    with pytest.warns(ManifestWarning, match="no entries"):
        assert load_manifest(tmp_path / "m.csv", load_taxonomy()) == []


def test_unknown_identity_is_reported(tmp_path):
    write_manifest(tmp_path / "m.csv", [("a.png", "foo", "v1", "", ""), ("b.png", "transgender", "v1", "", "")])
    with pytest.raises(ManifestError) as err:
        load_manifest(tmp_path / "m.csv", load_taxonomy(), check_files=False)
    assert err.value.unresolved_ids == ["foo"]
    assert "foo" in str(err.value)


def test_missing_files_are_collected(tmp_path):
    write_manifest(tmp_path / "m.csv", [("a.png", "transgender", "v1", "", ""), ("b.png", "transgender", "v1", "mb.png", "")])
    with pytest.raises(ManifestError) as err:
        load_manifest(tmp_path / "m.csv", load_taxonomy())
    assert len(err.value.missing_files) == 3


def test_bad_seed(tmp_path):
    write_manifest(tmp_path / "m.csv", [("a.png", "transgender", "v1", "", "x")])
    with pytest.raises(ManifestError, match="seed"):
        load_manifest(tmp_path / "m.csv", load_taxonomy(), check_files=False)


def test_manifest_paths_resolve_against_its_directory(data_dir):
    with pytest.warns(ManifestWarning):
        entries = load_manifest(data_dir / "corpus" / "manifest.csv", load_taxonomy())
    assert [e.image_path for e in entries] == ["images/a.png", "images/b.png", "images/c.png", "images/d.png"]
    assert all(e.image_file.is_file() for e in entries)
    assert entries[0].mask_file == data_dir / "corpus" / "masks" / "a.png"


def sample_records():
    t1 = ToneMeasure.from_lab((62.5, 14.0, 19.25), n_pixels=1000)
    t2 = ToneMeasure.from_lab((40.123456789, 10.1, 12.7), n_pixels=4)
    return [
        ResultRecord("v2", "transgender", "z.png", 0.5, True, t1, 5, 0),
        ResultRecord("v1", "no_stigma", "b.png", 0.01, False, None, 5, 0),
        ResultRecord("v1", "no_stigma", "a.png", 1 / 3, True, t2, 3, 9),
    ]


def test_results_round_trip(tmp_path):
    records = sample_records()
    persist_results(records, tmp_path / "r.csv")
    back = load_results(tmp_path / "r.csv")
    assert back == sorted(records, key=lambda r: r.key)


def test_results_are_order_independent(tmp_path):
    records = sample_records()
    persist_results(records, tmp_path / "a.csv")
    persist_results(records[::-1], tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == ",".join(corpus.RESULT_COLUMNS)


def test_rewrite_replaces_previous_file(tmp_path):
    path = tmp_path / "r.csv"
    persist_results(sample_records(), path)
    persist_results(sample_records()[:1], path)
    assert len(load_results(path)) == 1
    assert list(tmp_path.iterdir()) == [path]


def test_tone_required_iff_retained():
    with pytest.raises(ValueError):
        ResultRecord("v1", "x", "a.png", 0.5, True, None, 5, 0)


def test_malformed_results(tmp_path):
    (tmp_path / "r.csv").write_text("model_tag,identity_id\nv1,x\n")
    with pytest.raises(corpus.ResultsFormatError):
        load_results(tmp_path / "r.csv")
