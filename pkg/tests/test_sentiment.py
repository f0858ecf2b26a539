import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES
from stockcast import sentiment as sn
from stockcast.errors import EmptyLexicon, ValidationError

LEX = sn.load_lexicon()


def test_bundled_lexicon_size():
    assert 7000 < len(LEX) < 8000
    assert LEX.entries["good"] == 1.9


def test_tokenize_exclamations():
    assert sn.tokenize("GOOD stock!!") == (["GOOD", "stock"], 2, 0)


def test_tokenize_empty():
    assert sn.tokenize("").tokens == []


def test_tokenize_keeps_emoticons():
    assert sn.tokenize(":-) rally").tokens == [":-)", "rally"]
    assert sn.tokenize(":) rally").tokens == [":)", "rally"]


def test_empty_text_scores_neutral():
    s = sn.score("", LEX)
    assert s.compound == 0.0 and s.neu == 1.0 and s.pos == 0.0 and s.neg == 0.0


def test_normalize_formula_and_limit():
    for x in (-7.5, -1.0, 0.3, 2.0, 12.0):
        assert sn.normalize(x) == x / math.sqrt(x * x + 15)
    assert sn.normalize(1e12) == pytest.approx(1.0, abs=1e-12)
    assert sn.normalize(-1e12) == pytest.approx(-1.0, abs=1e-12)


def test_single_word_raw_sum():
    assert sn.score("good", LEX).compound == pytest.approx(sn.normalize(1.9), abs=1e-12)


def test_negation_flips_and_scales():
    assert sn.score("not good", LEX).compound == pytest.approx(sn.normalize(1.9 * -0.74), abs=1e-12)
    assert sn.score("isn't really bad at all", LEX).compound > 0
    # more than three tokens back is out of reach
    assert sn.score("not a b c good", LEX).compound == pytest.approx(sn.normalize(1.9), abs=1e-12)


def test_caps_emphasis_only_with_mixed_case():
    mixed = sn.score("GOOD stock", LEX).compound
    assert mixed == pytest.approx(sn.normalize(1.9 + 0.733), abs=1e-12)
    allcaps = sn.score("GOOD STOCK", LEX).compound
    assert allcaps == pytest.approx(sn.normalize(1.9), abs=1e-12)


def test_booster_distance_decay():
    v = 1.9
    assert sn.score("very good", LEX).compound == pytest.approx(sn.normalize(v + 0.293), abs=1e-12)
    assert sn.score("very the good", LEX).compound == pytest.approx(sn.normalize(v + 0.293 * 0.95), abs=1e-12)
    assert sn.score("very the a good", LEX).compound == pytest.approx(sn.normalize(v + 0.293 * 0.9), abs=1e-12)
    assert sn.score("slightly good", LEX).compound == pytest.approx(sn.normalize(v - 0.293), abs=1e-12)


def test_exclamation_emphasis_capped():
    base = 1.9
    for k in range(1, 8):
        got = sn.score("good" + "!" * k, LEX).compound
        assert got == pytest.approx(sn.normalize(base + 0.292 * min(k, 4)), abs=1e-12)
    neg = sn.score("bad!!", LEX).compound
    assert neg == pytest.approx(sn.normalize(LEX.entries["bad"] - 2 * 0.292), abs=1e-12)


def test_empty_lexicon():
    with pytest.raises(EmptyLexicon):
        sn.score("good", sn.Lexicon({}))


def test_lexicon_validation():
    with pytest.raises(ValidationError):
        sn.Lexicon({"two words": 1.0})
    with pytest.raises(ValidationError):
        sn.Lexicon({"x": float("nan")})
    with pytest.raises(ValidationError):
        sn.parse_lexicon("good 1.0\n")
    lex = sn.parse_lexicon("# comment\nGood\t2.0\textra\n\nbad\t-1.5\n")
    assert dict(lex.entries) == {"good": 2.0, "bad": -1.5}


def test_load_lexicon_from_path(tmp_path):
    p = tmp_path / "lex.tsv"
    p.write_text("moon\t3.0\n")
    assert sn.Analyzer(sn.load_lexicon(p)).compound("to the moon") == pytest.approx(sn.normalize(3.0))


def test_reference_fixture_within_band():
    ref = json.loads((FIXTURES / "sentiment_reference.json").read_text())
    assert len(ref) == 20
    a = sn.Analyzer()
    for item in ref:
        got = a.compound(item["text"])
        assert abs(got - item["compound"]) <= 0.05, item["text"]
        if item["compound"] != 0:
            assert math.copysign(1, got) == math.copysign(1, item["compound"]), item["text"]


words = st.sampled_from(sorted(LEX.entries)[:3000:7])
filler = st.sampled_from(["the", "stock", "today", "and", "chart", "market", "$TSLA", "q2"])
texts = st.lists(st.one_of(words, filler, words.map(str.upper)), max_size=12).map(" ".join)
punct = st.sampled_from(["", "!", "!!", "?", "??", "???!", "!!!!!"])


@settings(max_examples=200, deadline=None)
@given(texts, punct)
def test_score_invariants(text, tail):
    s = sn.score(text + tail, LEX)
    assert -1 < s.compound < 1
    assert abs(s.pos + s.neu + s.neg - 1) <= 1e-6
    assert min(s.pos, s.neu, s.neg) >= 0


@settings(max_examples=200, deadline=None)
@given(texts, punct)
def test_compound_is_odd_under_negated_lexicon(text, tail):
    t = text + tail
    assert sn.score(t, LEX.negated()).compound == -sn.score(t, LEX).compound


positive = st.sampled_from(sorted(w for w, v in LEX.entries.items() if v > 0 and w.isalpha())[::11])
plain_words = st.sampled_from(sorted(w for w in LEX.entries if w.isalpha()
                                     and w not in LEX.negators and w not in LEX.boosters)[::13])
plain_texts = st.lists(st.one_of(plain_words, filler), max_size=10).map(" ".join)


@settings(max_examples=200, deadline=None)
@given(plain_texts, positive, punct)
def test_appending_positive_word_never_lowers_compound(text, word, tail):
    # domain: lowercase text without negators or boosters that could act on the new token
    before = sn.score(text + tail, LEX).compound
    after = sn.score((text + " " + word).strip() + tail, LEX).compound
    assert after >= before


def test_zero_iff_zero_raw_sum():
    assert sn.score("the stock moved", LEX).compound == 0.0
    assert sn.score("good bad", sn.parse_lexicon("good\t1.0\nbad\t-1.0\n")).compound == 0.0
    assert sn.score("good", LEX).compound != 0.0
