import csv

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codemix_hate.preprocess import (
    ProcessedMessage,
    Resources,
    StopwordList,
    TransliterationDictionary,
    clean_text,
    default_dictionary,
    default_stopwords,
    load_dictionary,
    load_stopwords,
    preprocess_pipeline,
    remove_stopwords,
    tokenize,
    transliterate,
)


@pytest.fixture(scope="module")
def resources():
    return Resources.default()


@pytest.mark.parametrize("raw, cleaned", [
    ("Hum sab ghumne jaa rahe hain? http://t.", "hum sab ghumne jaa rahe hain"),
    ("", ""),
    ("@username1 Mujhe mat sikha:/", "mujhe mat sikha"),
    ("terrorist Akbaar kill #SaveWorld", "terrorist akbaar kill saveworld"),
    ("so good :D :-) xD <3 \U0001F602 123 www.example.com/x", "so good"),
    ("Dekho\tyaar!!!   kya baat hai...", "dekho yaar kya baat hai"),
    ("नमस्ते दोस्त 2024", "नमस्ते दोस्त"),
])
def test_clean_text(raw, cleaned):
    assert clean_text(raw) == cleaned


@settings(max_examples=500, deadline=None)
@given(st.text(max_size=80))
def test_clean_text_idempotent(raw):
    once = clean_text(raw)
    assert clean_text(once) == once


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=80))
def test_clean_text_output_alphabet(raw):
    out = clean_text(raw)
    assert out == out.strip()
    assert "  " not in out
    assert not any(ch.isdigit() for ch in out)
    assert "@" not in out and "#" not in out and "http" not in out.split(":")[0][:0]


@pytest.mark.parametrize("text, tokens", [
    ("hum sab", ["hum", "sab"]),
    ("", []),
    ("a b  c", ["a", "b", "c"]),
])
def test_tokenize(text, tokens):
    assert tokenize(text) == tokens


def test_remove_stopwords():
    stop = StopwordList(frozenset({"we", "all", "are"}))
    assert remove_stopwords(["we", "all", "are", "going", "outside"], stop) == ["going", "outside"]
    assert remove_stopwords([], stop) == []


def test_shipped_stoplist_keeps_content_words():
    stop = default_stopwords()
    assert "kill" not in stop and "terrorist" not in stop
    assert remove_stopwords(["kill", "terrorist"], stop) == ["kill", "terrorist"]
    assert {"the", "we", "hum", "sab"} <= stop.words


def test_transliterate_examples():
    d = TransliterationDictionary({"mujhe": ("me",), "mat": ("not",), "sikha": ("teach",)})
    assert transliterate(["mujhe", "mat", "sikha"], d) == ["me", "not", "teach"]
    assert transliterate(["hello"], TransliterationDictionary()) == ["hello"]
    spellings = TransliterationDictionary({"pyaar": ("love",), "pyar": ("love",), "pyr": ("love",)})
    assert transliterate(["pyaar"], spellings) == ["love"]


def test_transliterate_multi_token_gloss():
    d = TransliterationDictionary({"chalo": ("let", "go")})
    assert transliterate(["ab", "chalo"], d) == ["ab", "let", "go"]


def test_shipped_dictionary_spelling_variants():
    d = default_dictionary()
    assert transliterate(["pyaar", "pyar", "pyr"], d) == ["love"] * 3


def test_resource_file_formats(tmp_path):
    (tmp_path / "stop.txt").write_text("# comment\nThe\nhai\n\n")
    (tmp_path / "dict.tsv").write_text("# c\nbhai\tbrother\nchalo\tlet go\n")
    assert load_stopwords(tmp_path / "stop.txt").words == {"the", "hai"}
    assert load_dictionary(tmp_path / "dict.tsv").entries == {"bhai": ("brother",), "chalo": ("let", "go")}
    (tmp_path / "bad.tsv").write_text("bhai\n")
    with pytest.raises(ValueError, match="line 1"):
        load_dictionary(tmp_path / "bad.tsv")


def test_resources_reject_gloss_that_is_stopword():
    with pytest.raises(ValueError, match="stopword"):
        Resources(StopwordList(frozenset({"me"})), TransliterationDictionary({"mujhe": ("me",)}))


def test_pipeline_matches_golden(resources, data_dir):
    with open(data_dir / "preprocess_golden.tsv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh, delimiter="\t", quoting=csv.QUOTE_NONE))
    assert len(rows) == 4
    for row in rows:
        assert preprocess_pipeline(row["raw"], resources).text == row["processed"]


def test_pipeline_worked_row(resources):
    msg = preprocess_pipeline("Hum sab ghumne jaa rahe hain? http://t.", resources, audit=True)
    # hum/sab are stopwords; the rest go through the dictionary
    expected = transliterate(["ghumne", "jaa", "rahe", "hain"], resources.dictionary)
    assert list(msg.tokens) == expected
    assert msg.stage_trace == (6, 4, 4)


def test_pipeline_empty(resources):
    assert preprocess_pipeline("", resources) == ProcessedMessage(())


def test_pipeline_is_composition(resources):
    raw = "Aapna ghar sambhalta nahi. Chale dusro ko basane..!!"
    composed = transliterate(remove_stopwords(tokenize(clean_text(raw)), resources.stopwords),
                             resources.dictionary)
    assert list(preprocess_pipeline(raw, resources).tokens) == composed


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(sorted(default_dictionary().entries) + sorted(default_stopwords().words)
                                + ["kill", "#SaveWorld", "@x", ":)", "12", "Bhai!!", "http://t.co/a"]),
                max_size=15),
       st.text(max_size=20))
def test_pipeline_closure_and_idempotence(resources, words, noise):
    raw = " ".join(words) + " " + noise
    msg = preprocess_pipeline(raw, resources)
    for tok in msg.tokens:
        assert tok and tok == tok.lower()
        assert tok not in resources.stopwords
        assert tok not in resources.dictionary
    assert preprocess_pipeline(msg.text, resources).tokens == msg.tokens


token_st = st.lists(st.sampled_from(["hum", "bhai", "the", "kill", "pyaar", "x", "chalo", "yaar"]),
                    max_size=10)


@settings(max_examples=200, deadline=None)
@given(token_st, token_st)
def test_stages_commute_with_concatenation(resources, a, b):
    stop, d = resources.stopwords, resources.dictionary
    assert remove_stopwords(a + b, stop) == remove_stopwords(a, stop) + remove_stopwords(b, stop)
    assert transliterate(a + b, d) == transliterate(a, d) + transliterate(b, d)
