import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arhate.corpus import (
    RULE_A_B,
    RULE_B_C,
    Corpus,
    label_stats,
    load_corpus,
    undersample_balance,
    validate_hierarchy,
    write_corpus,
)
from arhate.errors import DuplicateId, EmptyCorpus, InsufficientNegatives, MalformedRow, UnknownLabel

from conftest import corpus_ab, rec

HEADER = "id\ttext\tlabel_a\tlabel_b\tlabel_c\tvulgar\tviolent\n"


def write(tmp_path, body, header=True):
    path = tmp_path / "c.tsv"
    path.write_text((HEADER if header else "") + body, encoding="utf-8")
    return path


def test_load_maps_fields(tmp_path):
    corpus = load_corpus(write(tmp_path, "1\tsome text\tOFF\tHS\tHS6\tNOT_VLG\tNOT_VIO\n"))
    (r,) = corpus.records
    assert (r.id, r.text, r.label_a, r.label_b, r.label_c) == ("1", "some text", "OFF", "HS", "HS6")
    assert r.class_index("C") == 6


def test_load_without_header(tmp_path):
    corpus = load_corpus(write(tmp_path, "1\tx\tOFF\tHS\tHS6\tVLG\tVIO\n", header=False), has_header=False)
    assert len(corpus) == 1 and corpus.records[0].vulgar == "VLG"


def test_unknown_label(tmp_path):
    with pytest.raises(UnknownLabel):
        load_corpus(write(tmp_path, "1\tx\tOFF\tHS\tHS9\tNOT_VLG\tNOT_VIO\n"))


def test_malformed_row(tmp_path):
    with pytest.raises(MalformedRow):
        load_corpus(write(tmp_path, "1\tx\tOFF\tHS\n"))


def test_duplicate_id(tmp_path):
    row = "1\tx\tOFF\tHS\tHS1\tNOT_VLG\tNOT_VIO\n"
    with pytest.raises(DuplicateId):
        load_corpus(write(tmp_path, row + row))


def test_header_only_file_is_empty_corpus(tmp_path):
    assert len(load_corpus(write(tmp_path, ""))) == 0


def test_order_preserved_and_round_trip(tmp_path, toy):
    train, _ = toy
    path = tmp_path / "out.tsv"
    write_corpus(train, path)
    again = load_corpus(path)
    assert again.records == train.records


def test_label_stats_counts():
    corpus = corpus_ab(3, 7)
    report = label_stats(corpus, "A")
    assert report.counts == {"NOT_OFF": 7, "OFF": 3}
    assert report.fractions == {"NOT_OFF": 0.7, "OFF": 0.3}
    assert json.loads(report.to_json())["labels"]["OFF"] == {"count": 3, "fraction": 0.3}


def test_label_stats_degenerate_task_c():
    report = label_stats(corpus_ab(0, 5), "C")
    assert report.fractions["NOT_HS"] == 1.0
    assert all(report.fractions[f"HS{i}"] == 0 for i in range(1, 7))


def test_label_stats_empty():
    with pytest.raises(EmptyCorpus):
        label_stats(Corpus([]), "A")


def reported_distribution_fixture():
    # 8887 training tweets; 959 HS (10.8%), 3173 OFF (35.7%)
    counts = {"NOT_HS": 7928, "HS1": 259, "HS2": 28, "HS3": 143, "HS4": 0, "HS5": 72, "HS6": 457}
    records, k = [], 0
    n_off_extra = 3173 - 959
    for label, n in counts.items():
        for _ in range(n):
            if label == "NOT_HS":
                a = "OFF" if n_off_extra > 0 else "NOT_OFF"
                n_off_extra -= a == "OFF"
                records.append(rec(k, a, "NOT_HS", "NOT_HS"))
            else:
                records.append(rec(k, "OFF", "HS", label))
            k += 1
    return Corpus(records)


def test_label_stats_reproduce_training_distribution():
    corpus = reported_distribution_fixture()
    assert len(corpus) == 8887
    report = label_stats(corpus, "C")
    reported = [0.892, 0.029, 0.003, 0.016, 0.0, 0.008, 0.0513]
    for label, expected in zip(report.counts, reported):
        assert report.fractions[label] == pytest.approx(expected, abs=5e-4)
    assert label_stats(corpus, "B").fractions["HS"] == pytest.approx(0.108, abs=5e-4)
    assert label_stats(corpus, "A").fractions["OFF"] == pytest.approx(0.357, abs=5e-4)
    assert label_stats(corpus, "B").counts["HS"] == 959


@given(st.lists(st.sampled_from(["NOT_HS", "HS1", "HS2", "HS3", "HS4", "HS5", "HS6"]), min_size=1, max_size=60))
def test_label_stats_fractions_sum_to_one(labels):
    corpus = Corpus([rec(i, "OFF", "NOT_HS" if c == "NOT_HS" else "HS", c) for i, c in enumerate(labels)])
    report = label_stats(corpus, "C")
    assert sum(report.fractions.values()) == pytest.approx(1.0, abs=1e-9)
    assert sum(report.counts.values()) == len(labels)


def test_validate_hierarchy_rules():
    corpus = Corpus([
        rec("a", "NOT_OFF", "HS", "HS1"),
        rec("b", "OFF", "NOT_HS", "NOT_HS"),
        rec("c", "OFF", "HS", "NOT_HS"),
        rec("d", "NOT_OFF", "NOT_HS", "NOT_HS"),
    ])
    assert validate_hierarchy(corpus) == [("a", RULE_A_B), ("c", RULE_B_C)]
    assert validate_hierarchy(corpus) == validate_hierarchy(corpus)


def test_balance_already_balanced():
    primary = corpus_ab(5, 5)
    out = undersample_balance(primary, [], "A", "OFF", seed=0)
    assert sorted(r.id for r in out) == sorted(r.id for r in primary)


def test_balance_undersamples_and_is_deterministic():
    primary = corpus_ab(4, 100)
    a = undersample_balance(primary, [], "A", "OFF", seed=42)
    b = undersample_balance(primary, [], "A", "OFF", seed=42)
    c = undersample_balance(primary, [], "A", "OFF", seed=43)
    assert [r.id for r in a] == [r.id for r in b]
    assert label_stats(a, "A").counts == {"NOT_OFF": 4, "OFF": 4}
    assert {r.id for r in a if r.label_a == "OFF"} == {f"r{i}" for i in range(4)}
    assert [r.id for r in a] != [r.id for r in c]


def test_balance_hs_with_extras_reaches_4800():
    primary = Corpus([rec(i, "OFF", "HS", "HS1") for i in range(959)]
                     + [rec(959 + i, "NOT_OFF") for i in range(7928)], source_tag="osact")
    extra = Corpus([rec(i, "OFF", "HS", "HS2") for i in range(1441)]
                   + [rec(1441 + i, "NOT_OFF") for i in range(3000)], source_tag="ext")
    out = undersample_balance(primary, [extra], "B", "HS", seed=1)
    assert len(out) == 4800
    assert label_stats(out, "B").counts == {"NOT_HS": 2400, "HS": 2400}
    assert sum(1 for r in out if r.id.startswith("ext:")) >= 1441


def test_balance_insufficient_negatives():
    with pytest.raises(InsufficientNegatives):
        undersample_balance(corpus_ab(10, 3), [], "A", "OFF", seed=0)
