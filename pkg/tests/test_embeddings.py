import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adenorm import (
    EmbeddingSet,
    fixture_embed,
    fixture_embedding_set,
    load_embeddings,
    write_embeddings,
)
from adenorm.errors import (
    BadMetaError,
    DimMismatchError,
    DuplicateIdError,
    MalformedLineError,
    NonFiniteError,
    ZeroVectorError,
)
from conftest import embedding_bytes


class TestLoad:
    def test_three_four_five_normalization(self):
        s = load_embeddings(embedding_bytes("e", 2, [("a", [3.0, 4.0])]))
        assert s.encoder_id == "e"
        assert s.dim == 2
        assert np.array_equal(s.vector("a"), [0.6, 0.8])

    def test_zero_vector(self):
        with pytest.raises(ZeroVectorError) as exc:
            load_embeddings(embedding_bytes("e", 2, [("a", [0.0, 0.0])]))
        assert exc.value.entry_id == "a"

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatchError):
            load_embeddings(embedding_bytes("e", 2, [("a", [1.0, 2.0, 3.0])]))

    def test_duplicate_id(self):
        data = embedding_bytes("e", 1, [("a", [1.0]), ("a", [2.0])])
        with pytest.raises(DuplicateIdError):
            load_embeddings(data)

    @pytest.mark.parametrize(
        "meta",
        [
            "{}",
            '{"encoder": "e"}',
            '{"dim": 2}',
            '{"encoder": "e", "dim": 0}',
            '{"encoder": "e", "dim": 2.5}',
            '{"encoder": "e", "dim": true}',
            '{"encoder": 3, "dim": 2}',
            "[1, 2]",
            "not json",
        ],
    )
    def test_bad_meta(self, meta):
        with pytest.raises(BadMetaError):
            load_embeddings((meta + "\n").encode())

    def test_empty_file(self):
        with pytest.raises(BadMetaError):
            load_embeddings(b"")

    def test_nan_token_rejected(self):
        data = b'{"encoder":"e","dim":1}\n{"id":"a","v":[NaN]}\n'
        with pytest.raises(MalformedLineError) as exc:
            load_embeddings(data)
        assert exc.value.lineno == 2

    def test_infinity_token_rejected(self):
        data = b'{"encoder":"e","dim":1}\n{"id":"a","v":[-Infinity]}\n'
        with pytest.raises(MalformedLineError):
            load_embeddings(data)

    def test_overflowing_literal_is_non_finite(self):
        data = b'{"encoder":"e","dim":1}\n{"id":"a","v":[1e999]}\n'
        with pytest.raises(NonFiniteError):
            load_embeddings(data)

    def test_entry_missing_fields(self):
        data = b'{"encoder":"e","dim":1}\n{"id":"a"}\n'
        with pytest.raises(MalformedLineError):
            load_embeddings(data)

    def test_meta_only_file_is_empty_set(self):
        s = load_embeddings(embedding_bytes("e", 3, []))
        assert len(s) == 0
        assert s.dim == 3

    def test_entry_order_preserved(self):
        s = load_embeddings(embedding_bytes("e", 1, [("b", [1.0]), ("a", [2.0])]))
        assert s.ids == ("b", "a")


class TestWrite:
    def test_two_entries_three_lines(self):
        s = load_embeddings(embedding_bytes("e", 2, [("a", [3.0, 4.0]), ("b", [1.0, 0.0])]))
        buf = io.BytesIO()
        write_embeddings(s, buf)
        lines = buf.getvalue().decode().splitlines()
        assert len(lines) == 3
        assert json.loads(lines[0]) == {"encoder": "e", "dim": 2}

    def test_empty_set_meta_line_only(self):
        s = load_embeddings(embedding_bytes("e", 2, []))
        buf = io.BytesIO()
        write_embeddings(s, buf)
        assert buf.getvalue() == b'{"encoder":"e","dim":2}\n'

    def test_round_trip_equal(self):
        s = load_embeddings(embedding_bytes("e", 2, [("a", [3.0, 4.0]), ("b", [-1.5, 2.25])]))
        buf = io.BytesIO()
        write_embeddings(s, buf)
        assert load_embeddings(buf.getvalue()) == s


finite_floats = st.floats(allow_nan=False, allow_infinity=False, width=64)


@st.composite
def raw_sets(draw):
    dim = draw(st.integers(min_value=1, max_value=6))
    n = draw(st.integers(min_value=0, max_value=6))
    ids = draw(st.lists(
        st.text(st.characters(exclude_categories=["Cs"]), min_size=1, max_size=8),
        min_size=n, max_size=n, unique=True,
    ))
    entries = []
    for entry_id in ids:
        vec = draw(
            st.lists(finite_floats, min_size=dim, max_size=dim).filter(
                lambda v: any(x != 0.0 for x in v)
            )
        )
        entries.append((entry_id, vec))
    return dim, entries


class TestProperties:
    @given(raw_sets())
    def test_unit_norm_invariant(self, raw):
        dim, entries = raw
        s = load_embeddings(embedding_bytes("e", dim, entries))
        for _, vec in s.items():
            assert abs(np.linalg.norm(vec) - 1.0) <= 1e-6

    @given(raw_sets())
    def test_write_load_round_trip_is_identity(self, raw):
        dim, entries = raw
        s = load_embeddings(embedding_bytes("e", dim, entries))
        buf = io.BytesIO()
        write_embeddings(s, buf)
        s2 = load_embeddings(buf.getvalue())
        assert s2 == s  # includes bitwise matrix equality
        buf2 = io.BytesIO()
        write_embeddings(s2, buf2)
        assert buf2.getvalue() == buf.getvalue()


def _oracle_fixture_embed(text, dim):
    """Independent straight-line reimplementation of the hashing recipe."""
    padded = "#" + text.lower() + "#"
    if len(padded) >= 3:
        grams = []
        for i in range(len(padded) - 2):
            grams.append(padded[i] + padded[i + 1] + padded[i + 2])
    else:
        grams = [padded]
    out = [0.0] * dim
    for gram in grams:
        h = 14695981039346656037
        for b in bytes(gram, "utf-8"):
            h = h ^ b
            h = (h * 1099511628211) % (2**64)
        if h >= 2**63:
            out[h % dim] -= 1.0
        else:
            out[h % dim] += 1.0
    if all(x == 0.0 for x in out):
        out[0] = 1.0
    norm = math.sqrt(sum(x * x for x in out))
    return [x / norm for x in out]


class TestFixtureEmbed:
    def test_deterministic_and_unit_norm(self):
        a = fixture_embed("nausea", 64)
        b = fixture_embed("nausea", 64)
        assert np.array_equal(a, b)
        assert abs(np.linalg.norm(a) - 1.0) <= 1e-6

    def test_matches_independent_oracle_nausea_headache(self):
        mine = [fixture_embed("nausea", 64), fixture_embed("headache", 64)]
        theirs = [_oracle_fixture_embed("nausea", 64), _oracle_fixture_embed("headache", 64)]
        cos_mine = float(np.dot(mine[0], mine[1]))
        cos_theirs = sum(x * y for x, y in zip(*theirs))
        assert cos_mine == pytest.approx(cos_theirs, abs=1e-9)
        for m, t in zip(mine, theirs):
            assert np.allclose(m, t, atol=1e-12)

    @pytest.mark.parametrize("text", ["", "a", "ab", "head ache", "NAUSEA", "näusea", "🤢🤮", "痛み"])
    @pytest.mark.parametrize("dim", [1, 2, 7, 64])
    def test_matches_oracle_across_inputs(self, text, dim):
        assert np.allclose(fixture_embed(text, dim), _oracle_fixture_embed(text, dim), atol=1e-12)

    def test_case_insensitive(self):
        assert np.array_equal(fixture_embed("Nausea", 32), fixture_embed("nausea", 32))

    def test_empty_text_uses_whole_pad_feature(self):
        v = fixture_embed("", 8)
        assert abs(np.linalg.norm(v) - 1.0) <= 1e-6
        assert np.count_nonzero(v) == 1  # single feature, single slot

    def test_zero_accumulation_falls_back_to_component_zero(self):
        # At dim=1 every feature lands on slot 0 with sign +/-1; a
        # two-trigram text whose signs cancel must yield [1.0].
        import itertools
        import string

        def sign_of(gram: str) -> int:
            h = 14695981039346656037
            for byte in gram.encode():
                h = (h ^ byte) * 1099511628211 % 2**64
            return -1 if h >= 2**63 else 1

        for a, b in itertools.product(string.ascii_lowercase, repeat=2):
            padded = f"#{a}{b}#"
            if sign_of(padded[0:3]) + sign_of(padded[1:4]) == 0:
                assert fixture_embed(a + b, 1).tolist() == [1.0]
                return
        pytest.fail("no cancelling two-trigram text found at dim=1")

    def test_dim_validation(self):
        with pytest.raises(ValueError):
            fixture_embed("x", 0)


class TestFixtureEmbeddingSet:
    def test_encoder_id_and_order(self):
        s = fixture_embedding_set([("b", "headache"), ("a", "nausea")], 16)
        assert s.encoder_id == "fixture-d16"
        assert s.ids == ("b", "a")
        assert np.array_equal(s.vector("a"), fixture_embed("nausea", 16))

    def test_duplicate_ids_rejected(self):
        with pytest.raises(DuplicateIdError):
            fixture_embedding_set([("a", "x"), ("a", "y")], 4)


class TestConstructorValidation:
    def test_non_finite_named(self):
        with pytest.raises(NonFiniteError) as exc:
            EmbeddingSet("e", 2, ["a", "b"], [[1.0, 0.0], [np.nan, 1.0]])
        assert exc.value.entry_id == "b"

    def test_huge_components_normalize_instead_of_overflowing(self):
        s = EmbeddingSet("e", 2, ["a"], [[1e308, 1e308]])
        assert abs(np.linalg.norm(s.vector("a")) - 1.0) <= 1e-6

    def test_tiny_components_normalize_instead_of_underflowing(self):
        s = EmbeddingSet("e", 2, ["a"], [[1e-322, 0.0]])
        assert np.array_equal(s.vector("a"), [1.0, 0.0])

    def test_matrix_is_read_only(self):
        s = EmbeddingSet("e", 1, ["a"], [[2.0]])
        with pytest.raises(ValueError):
            s.vector("a")[0] = 0.0
