import pytest
from hypothesis import given
from hypothesis import strategies as st

from polyfind.errors import InvalidIdentifier, InvalidLanguageTag
from polyfind.textutil import check_identifier, check_language, normalize_text, split_words


class TestNormalizeText:
    def test_fold_and_collapse(self):
        assert normalize_text("  Square   ROOT ") == "square root"

    def test_strips_arabic_vowel_marks(self):
        assert normalize_text("رَقْم") == "رقم"

    def test_strips_tatweel(self):
        assert normalize_text("جـذر") == "جذر"

    def test_empty(self):
        assert normalize_text("") == ""

    def test_whitespace_only(self):
        assert normalize_text(" \t\n ") == ""

    def test_keeps_latin_diacritics(self):
        assert normalize_text("Racine Carrée") == "racine carrée"

    def test_nfc_composes_combining_accent(self):
        assert normalize_text("carrée") == "carrée"

    @given(st.text())
    def test_idempotent(self, text):
        once = normalize_text(text)
        assert normalize_text(once) == once

    @given(st.text())
    def test_no_leading_trailing_or_double_space(self, text):
        out = normalize_text(text)
        assert out == out.strip()
        assert "  " not in out


class TestSplitWords:
    def test_camel_case(self):
        assert split_words("SquareRootService") == ["square", "root", "service"]

    def test_acronym_run(self):
        assert split_words("HTTPServer") == ["http", "server"]

    def test_snake_case(self):
        assert split_words("square_root") == ["square", "root"]

    def test_punctuation_boundaries(self):
        assert split_words("finds the square root.") == ["finds", "the", "square", "root"]

    def test_digits_stay_attached(self):
        assert split_words("base64 value") == ["base64", "value"]

    def test_arabic_text(self):
        assert split_words("الجذر التربيعي") == ["الجذر", "التربيعي"]

    def test_empty(self):
        assert split_words("") == []
        assert split_words("...!!") == []

    @given(st.text())
    def test_tokens_are_normalized_words(self, text):
        for token in split_words(text):
            assert token
            assert " " not in token
            assert normalize_text(token) == token


class TestCheckers:
    def test_identifier_ok(self):
        assert check_identifier("math") == "math"
        assert check_identifier("a-b_3") == "a-b_3"

    @pytest.mark.parametrize("bad", ["", "a b", "m@th", "jeu/x", None])
    def test_identifier_bad(self, bad):
        with pytest.raises(InvalidIdentifier):
            check_identifier(bad)

    def test_language_ok(self):
        assert check_language("ar") == "ar"
        assert check_language("fra") == "fra"

    @pytest.mark.parametrize("bad", ["", "a", "arabic", "EN", "e1", None])
    def test_language_bad(self, bad):
        with pytest.raises(InvalidLanguageTag):
            check_language(bad)
