import numpy as np
import pytest

from clinibench.errors import InvalidVector
from clinibench.guided import parse_output
from clinibench.mapping import (
    CodeMatcher,
    MapStrategy,
    Provenance,
    map_all,
    map_embedding,
    map_exact,
    map_lexical,
    normalize_desc,
    read_predictions,
    text_key,
    write_predictions,
)
from clinibench.retrieval import DenseIndex, tokenize

from conftest import plain_json_target


@pytest.fixture
def matcher(code_table):
    return CodeMatcher(code_table)


def record_for(descriptions, note_id="n1"):
    return parse_output(plain_json_target(list(descriptions)), note_id=note_id)


def fake_vectors(texts, matcher, dim=16):
    """Deterministic per-text vectors; identical texts share vectors."""
    def vec(text):
        rng = np.random.default_rng(abs(hash(normalize_desc(text))) % (2**32))
        v = rng.standard_normal(dim).astype(np.float32)
        return v / np.linalg.norm(v)

    desc_vectors = {text_key(t): vec(t) for t in texts}
    code_vectors = {cid: vec(text) for cid, text in matcher.candidate_texts()}
    return desc_vectors, DenseIndex(code_vectors)


class TestExact:
    def test_case_insensitive_short_desc(self, matcher):
        assert map_exact("ESSENTIAL HYPERTENSION", matcher) == "I10"

    def test_diagnosis_1_no_match(self, matcher):
        assert map_exact("diagnosis 1", matcher) is None

    def test_double_space_long_desc_normalized(self, matcher, code_table):
        # the I50.9 long description carries a double space in the fixture
        assert map_exact("Heart failure, unspecified", matcher) == "I50"

    def test_trailing_punctuation_stripped(self, matcher):
        assert map_exact("Pneumonia.", matcher) == "J18"

    def test_full_code_truncated(self, matcher):
        assert map_exact("Hypotension, unspecified", matcher) == "I95"


class TestLexical:
    def test_zero_overlap_discarded(self, matcher):
        assert map_lexical("zzz qqq www", matcher) is None

    def test_identical_short_desc_wins(self, matcher):
        code, score = map_lexical("Acute kidney failure", matcher)
        assert code == "N17"
        assert score > 0

    def test_matches_brute_force(self, matcher, code_table):
        import math as m

        descriptions = [
            "hypertension",
            "acute failure of the kidney",
            "pneumonia unspecified",
            "type 2 diabetes mellitus",
            "gastroenteritis and colitis",
            "failure",
            "essential primary hypertension",
            "heart",
            "unspecified organism",
            "noninfective colitis",
        ]
        # brute force: Okapi over every candidate description
        docs = {cid: tokenize(text) for cid, text in matcher.candidate_texts()}
        n = len(docs)
        avgdl = sum(len(t) for t in docs.values()) / n
        df = {}
        for tokens in docs.values():
            for term in set(tokens):
                df[term] = df.get(term, 0) + 1
        for desc in descriptions:
            expected_scores = {}
            query = tokenize(desc)
            qtf = {t: query.count(t) for t in set(query)}
            for cid, tokens in docs.items():
                score = 0.0
                for term in sorted(qtf):
                    tf = tokens.count(term)
                    if not tf:
                        continue
                    idf = m.log((n - df[term] + 0.5) / (df[term] + 0.5) + 1.0)
                    score += qtf[term] * idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * len(tokens) / avgdl))
                expected_scores[cid] = score
            best_id, best_score = min(expected_scores.items(), key=lambda kv: (-kv[1], kv[0]))
            got = map_lexical(desc, matcher)
            if best_score <= 0:
                assert got is None
            else:
                assert got[0] == matcher.cand_short[best_id]
                assert got[1] == pytest.approx(best_score, abs=1e-9)


class TestEmbedding:
    def test_exact_vector_hits_its_code(self, matcher):
        desc_vectors, index = fake_vectors(["whatever"], matcher)
        cid = matcher.cand_ids[3]
        code, cosine = map_embedding(index.vector(cid), index, matcher.cand_short)
        assert code == matcher.cand_short[cid]
        assert cosine == pytest.approx(1.0, abs=1e-5)

    def test_zero_vector_invalid(self, matcher):
        _, index = fake_vectors([], matcher)
        with pytest.raises(InvalidVector):
            map_embedding(np.zeros(16, dtype=np.float32), index, matcher.cand_short)

    def test_matches_exhaustive_argmax(self, matcher):
        rng = np.random.default_rng(30)
        _, index = fake_vectors([], matcher)
        for _ in range(30):
            query = rng.standard_normal(16).astype(np.float32)
            code, cosine = map_embedding(query, index, matcher.cand_short)
            sims = index.cosines(query)
            best = min(sims.items(), key=lambda kv: (-kv[1], kv[0]))
            assert code == matcher.cand_short[best[0]]
            assert cosine == best[1]


class TestMapAll:
    def test_dedup_counts(self, matcher):
        # 6 descriptions, two duplicated pairs -> 4 distinct codes
        descriptions = [
            "Essential hypertension",
            "Essential (primary) hypertension",  # same class via long desc
            "Pneumonia",
            "Hypotension",
            "Pneumonia, unspecified organism",
            "Type 2 diabetes",
        ]
        record = record_for(descriptions)
        pred = map_all(record, MapStrategy.EXACT_THEN_LEXICAL, matcher)
        assert [i.code for i in pred.items] == ["I10", "J18", "I95", "E11"]
        assert sum(pred.provenance_counts.values()) == 6

    def test_discarded_items_kept(self, matcher):
        descriptions = ["Pneumonia", "qqq zzz", "xxx yyy", "Hypotension", "www vvv"]
        record = record_for(descriptions)
        pred = map_all(record, MapStrategy.EXACT_THEN_LEXICAL, matcher)
        discarded = [i for i in pred.items if i.provenance is Provenance.DISCARDED]
        assert len(discarded) == 3
        assert all(i.code is None for i in discarded)
        assert pred.codes() == ["J18", "I95"]

    def test_duplicate_description_single_item(self, matcher):
        record = record_for(["Hypotension", "Hypotension"])
        pred = map_all(record, MapStrategy.EXACT_THEN_LEXICAL, matcher)
        assert pred.codes() == ["I95"]
        assert pred.provenance_counts["exact"] == 2

    def test_exact_priority_over_lexical(self, matcher):
        record = record_for(["Pneumonia"])
        pred = map_all(record, MapStrategy.EXACT_THEN_LEXICAL, matcher)
        assert pred.items[0].provenance is Provenance.EXACT

    def test_embedding_only_never_discards(self, matcher):
        descriptions = ["qqq zzz completely unrelated", "another random phrase"]
        record = record_for(descriptions)
        desc_vectors, index = fake_vectors(descriptions, matcher)
        pred = map_all(record, MapStrategy.EMBEDDING_ONLY, matcher, desc_vectors, index)
        assert pred.provenance_counts["discarded"] == 0
        assert all(i.code is not None for i in pred.items)

    def test_embedding_strategy_requires_vectors(self, matcher):
        record = record_for(["anything"])
        with pytest.raises(InvalidVector):
            map_all(record, MapStrategy.EXACT_THEN_EMBEDDING, matcher)

    def test_order_preserved_after_dedup(self, matcher):
        descriptions = ["Type 2 diabetes", "Pneumonia", "Type 2 diabetes", "Hypotension"]
        record = record_for(descriptions)
        pred = map_all(record, MapStrategy.EXACT_THEN_LEXICAL, matcher)
        assert pred.codes() == ["E11", "J18", "I95"]

    def test_randomized_invariants(self, matcher, code_table):
        rng = np.random.default_rng(77)
        exact_pool = [e.short_desc for e in code_table.entries] + [
            e.long_desc for e in code_table.entries
        ]
        word_pool = ["acute", "failure", "hypertension", "zzz", "qqq", "unrelated", "colitis"]
        for _ in range(500):
            n = int(rng.integers(1, 12))
            descriptions = []
            for _ in range(n):
                roll = rng.random()
                if roll < 0.4:
                    text = exact_pool[int(rng.integers(0, len(exact_pool)))]
                    if rng.random() < 0.5:
                        text = text.upper()
                else:
                    k = int(rng.integers(1, 4))
                    text = " ".join(word_pool[int(i)] for i in rng.integers(0, len(word_pool), size=k))
                descriptions.append(text)
            record = record_for(descriptions)
            pred = map_all(record, MapStrategy.EXACT_THEN_LEXICAL, matcher)
            # provenance partition over descriptions
            assert sum(pred.provenance_counts.values()) == len(descriptions)
            # exact-match priority
            for item in pred.items:
                exact = map_exact(item.source_text, matcher)
                if exact is not None:
                    assert item.provenance is Provenance.EXACT
                    assert item.code == exact
            # dedup stability: first-occurrence order
            seen = []
            for desc in descriptions:
                code = map_exact(desc, matcher)
                if code is None:
                    hit = map_lexical(desc, matcher)
                    code = hit[0] if hit else None
                if code is not None and code not in seen:
                    seen.append(code)
            assert pred.codes() == seen

    def test_jsonl_roundtrip(self, matcher, tmp_path):
        record = record_for(["Pneumonia", "zzz qqq"])
        pred = map_all(record, MapStrategy.EXACT_THEN_LEXICAL, matcher)
        path = tmp_path / "mapped.jsonl"
        write_predictions(path, [pred])
        again = read_predictions(path)
        assert again[0].note_id == pred.note_id
        assert again[0].items == pred.items
        assert again[0].provenance_counts == pred.provenance_counts
