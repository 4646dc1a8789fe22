from fractions import Fraction

import pytest

from clinibench.errors import IdMismatch
from clinibench.guided import parse_output
from clinibench.mapping import MappedItem, MappedPrediction, Provenance
from clinibench.metrics import (
    EvalConfig,
    generation_diagnostics,
    length_breakdown,
    score,
    tertile_breakdown,
)

# Hand-tallied 3-note, 4-class fixture. Tallies per class over the notes
# (gold -> prediction): n1 [A,B]->[A,C]; n2 [B]->[B,A]; n3 [C,D]->[D].
#   A: tp=1 fp=1 fn=0   B: tp=1 fp=0 fn=1   C: tp=0 fp=1 fn=1   D: tp=1 fp=0 fn=0
# macro P = (1/2 + 1 + 0 + 1)/4, macro R = (1 + 1/2 + 0 + 1)/4,
# macro F1 = (2/3 + 2/3 + 0 + 1)/4, micro = 3/(3+2+2 harmonics) = 3/5,
# MD acc = 2/3 (n3 main diagnosis C missing),
# class MAP: AP(A)=1, AP(B)=1/2, AP(C)=0, AP(D)=1 -> 5/8,
# example MAP: (1/2 + 1 + 1/2)/3 = 2/3.
HAND_FIXTURE = {
    "gold": {"n1": ["A00", "B00"], "n2": ["B00"], "n3": ["C00", "D00"]},
    "preds": {"n1": ["A00", "C00"], "n2": ["B00", "A00"], "n3": ["D00"]},
    "expected": {
        "macro_precision": Fraction(5, 8),
        "macro_recall": Fraction(5, 8),
        "macro_f1": Fraction(7, 12),
        "micro_f1": Fraction(3, 5),
        "md_acc": Fraction(2, 3),
        "map": Fraction(5, 8),
        "map_example": Fraction(2, 3),
    },
}


class TestScore:
    def test_perfect_predictor(self):
        gold = {"n1": ["A00", "B00"], "n2": ["C00"]}
        report = score(gold, gold, EvalConfig(n=20))
        assert report.macro_recall == 1.0
        assert report.macro_precision == 1.0
        assert report.macro_f1 == 1.0
        assert report.md_acc == 1.0
        assert report.map == 1.0
        assert report.map_example == 1.0
        assert report.micro_f1 == 1.0

    def test_empty_predictions_all_zero(self):
        gold = {"n1": ["A00"], "n2": ["B00"]}
        preds = {"n1": [], "n2": []}
        report = score(preds, gold, EvalConfig(n=20))
        for value in (
            report.macro_recall,
            report.macro_precision,
            report.macro_f1,
            report.md_acc,
            report.map,
            report.micro_f1,
        ):
            assert value == 0.0

    def test_hand_tally_fixture(self):
        report = score(HAND_FIXTURE["preds"], HAND_FIXTURE["gold"], EvalConfig(n=20))
        for name, expected in HAND_FIXTURE["expected"].items():
            assert getattr(report, name) == pytest.approx(float(expected), abs=1e-12), name

    def test_top_n_truncation(self):
        gold = {"n1": ["A00", "B00"]}
        preds = {"n1": ["C00", "A00", "B00"]}
        full = score(preds, gold, EvalConfig(n=20))
        cut = score(preds, gold, EvalConfig(n=2))
        assert full.macro_recall == 1.0
        assert cut.macro_recall == 0.5  # B00 fell off

    def test_recall_monotone_in_n(self):
        gold = {"n1": ["A00", "B00", "C00"], "n2": ["B00"]}
        preds = {"n1": ["B00", "A00", "C00"], "n2": ["A00", "B00"]}
        last = -1.0
        for n in (1, 2, 3):
            report = score(preds, gold, EvalConfig(n=n))
            assert report.macro_recall >= last
            last = report.macro_recall

    def test_permutation_invariance(self):
        gold = dict(HAND_FIXTURE["gold"])
        preds = dict(HAND_FIXTURE["preds"])
        report_a = score(preds, gold, EvalConfig(n=20))
        reversed_gold = dict(reversed(list(gold.items())))
        reversed_preds = dict(reversed(list(preds.items())))
        report_b = score(reversed_preds, reversed_gold, EvalConfig(n=20))
        assert report_a.to_dict() == report_b.to_dict()

    def test_single_class_macro_equals_micro(self):
        gold = {"n1": ["A00"], "n2": ["A00"], "n3": []}
        preds = {"n1": ["A00"], "n2": [], "n3": ["A00"]}
        report = score(preds, gold, EvalConfig(n=20))
        assert report.macro_f1 == pytest.approx(report.micro_f1, abs=1e-12)

    def test_registry_filters_gold_and_predictions(self):
        gold = {"n1": ["A00", "Z99"]}
        preds = {"n1": ["Z99", "A00"]}
        report = score(preds, gold, EvalConfig(n=20, registry=frozenset({"A00"})))
        assert report.macro_recall == 1.0
        assert report.macro_precision == 1.0

    def test_id_mismatch(self):
        with pytest.raises(IdMismatch):
            score({"n1": []}, {"n2": []}, EvalConfig())


class TestTertiles:
    CFG = EvalConfig(
        n=20,
        tertiles={"A00": "head", "B00": "head", "C00": "body", "D00": "tail"},
    )

    def test_breakdown_values(self):
        out = tertile_breakdown(HAND_FIXTURE["preds"], HAND_FIXTURE["gold"], self.CFG)
        assert out["head"]["recall"] == pytest.approx(0.75, abs=1e-12)
        assert out["head"]["precision"] == pytest.approx(0.75, abs=1e-12)
        assert out["body"] == {"recall": 0.0, "precision": 0.0}
        assert out["tail"] == {"recall": 1.0, "precision": 1.0}

    def test_missing_tertile_is_null(self):
        cfg = EvalConfig(n=20, tertiles={"A00": "head"})
        out = tertile_breakdown({"n1": ["A00"]}, {"n1": ["A00"]}, cfg)
        assert out["tail"] is None and out["body"] is None

    def test_perfect_predictor_all_ones(self):
        gold = HAND_FIXTURE["gold"]
        out = tertile_breakdown(gold, gold, self.CFG)
        for tertile in ("head", "body", "tail"):
            assert out[tertile] == {"recall": 1.0, "precision": 1.0}

    def test_zipf_fixture_matches_group_oracle(self):
        import numpy as np

        rng = np.random.default_rng(21)
        codes = [f"C{i:02d}" for i in range(9)]
        tertiles = {c: t for c, t in zip(codes, ["head"] * 3 + ["body"] * 3 + ["tail"] * 3)}
        gold, preds = {}, {}
        for i in range(40):
            gold[f"n{i}"] = sorted({codes[min(int(rng.zipf(1.5)) - 1, 8)] for _ in range(4)})
            preds[f"n{i}"] = sorted({codes[int(j)] for j in rng.integers(0, 9, size=5)})
        cfg = EvalConfig(n=20, tertiles=tertiles)
        out = tertile_breakdown(preds, gold, cfg)
        # group-filtered oracle
        for tertile in ("head", "body", "tail"):
            members = [c for c in codes if tertiles[c] == tertile]
            rs, ps = [], []
            for code in members:
                tp = sum(1 for n in gold if code in gold[n] and code in preds[n])
                fp = sum(1 for n in gold if code not in gold[n] and code in preds[n])
                fn = sum(1 for n in gold if code in gold[n] and code not in preds[n])
                if tp + fp + fn == 0:
                    continue
                ps.append(tp / (tp + fp) if tp + fp else 0.0)
                rs.append(tp / (tp + fn) if tp + fn else 0.0)
            rs = [r for code, r in zip(members, rs)]
            if any(code in {c for g in gold.values() for c in g} for code in members):
                assert out[tertile]["recall"] == pytest.approx(sum(rs) / len(rs), abs=1e-12)


class TestLengthBuckets:
    def test_single_bucket_equals_global(self):
        cfg = EvalConfig(n=20)
        counts = {n: 100 for n in HAND_FIXTURE["gold"]}
        out = length_breakdown(HAND_FIXTURE["preds"], HAND_FIXTURE["gold"], counts, cfg)
        report = score(HAND_FIXTURE["preds"], HAND_FIXTURE["gold"], cfg)
        assert out == {"all": pytest.approx(report.micro_f1, abs=1e-12)}

    def test_identical_buckets_equal_values(self):
        cfg = EvalConfig(n=20, length_buckets=(100,))
        gold = {"a1": ["A00"], "a2": ["A00"], "b1": ["A00"], "b2": ["A00"]}
        preds = {"a1": ["A00"], "a2": ["B00"], "b1": ["A00"], "b2": ["B00"]}
        counts = {"a1": 50, "a2": 60, "b1": 150, "b2": 160}
        out = length_breakdown(preds, gold, counts, cfg)
        assert out["<=100"] == pytest.approx(out[">100"], abs=1e-12)

    def test_pooled_confusion_oracle(self):
        import numpy as np

        rng = np.random.default_rng(31)
        codes = [f"C{i}" for i in range(6)]
        gold, preds, counts = {}, {}, {}
        for i in range(30):
            note = f"n{i}"
            gold[note] = sorted({codes[int(j)] for j in rng.integers(0, 6, size=3)})
            preds[note] = sorted({codes[int(j)] for j in rng.integers(0, 6, size=3)})
            counts[note] = int(rng.integers(10, 300))
        cfg = EvalConfig(n=20, length_buckets=(100, 200))
        out = length_breakdown(preds, gold, counts, cfg)
        for label, lo, hi in (("<=100", 0, 100), ("101-200", 101, 200), (">200", 201, 10**9)):
            tp = fp = fn = 0
            for note in gold:
                if not lo <= counts[note] <= hi:
                    continue
                pset, gset = set(preds[note]), set(gold[note])
                tp += len(pset & gset)
                fp += len(pset - gset)
                fn += len(gset - pset)
            if tp + fp + fn:
                assert out[label] == pytest.approx(2 * tp / (2 * tp + fp + fn), abs=1e-12)


def _mapped(note_id, items):
    counts = {p.value: 0 for p in Provenance}
    for _, prov, _ in items:
        counts[prov.value] += 1
    return MappedPrediction(
        note_id=note_id,
        items=[MappedItem(code, prov, text, 1.0) for code, prov, text in items],
        provenance_counts=counts,
    )


class TestDiagnostics:
    def test_guided_outputs_rate_one(self):
        from conftest import plain_json_target

        raw = plain_json_target([f"diagnosis {i:02d}" for i in range(20)])
        records = [parse_output(raw, note_id="n1")]
        mapped = [_mapped("n1", [("A00", Provenance.EXACT, "diagnosis 00")])]
        out = generation_diagnostics(records, mapped, {"n1": ["A00"]})
        assert out["valid_json_rate"] == 1.0

    def test_provenance_accuracy_ratios(self):
        records = [parse_output("not json", note_id="n1")]
        mapped = [
            _mapped(
                "n1",
                [
                    ("A00", Provenance.EXACT, "a"),
                    ("B00", Provenance.EXACT, "b"),
                    ("C00", Provenance.EMBEDDING, "c"),
                    ("D00", Provenance.EMBEDDING, "d"),
                ],
            )
        ]
        out = generation_diagnostics(records, mapped, {"n1": ["A00", "C00"]})
        assert out["provenance_accuracy"]["exact"] == 0.5
        assert out["provenance_accuracy"]["embedding"] == 0.5
        assert out["provenance_accuracy"]["lexical"] is None

    def test_counting_oracle_on_50_records(self):
        import numpy as np

        from conftest import plain_json_target

        rng = np.random.default_rng(12)
        records, mapped, gold = [], [], {}
        exp_valid = 0
        exp_codes = 0
        for i in range(50):
            note = f"n{i}"
            if rng.random() < 0.6:
                raw = plain_json_target([f"diagnosis {j:02d}" for j in range(20)])
                exp_valid += 1
            else:
                raw = "nope"
            records.append(parse_output(raw, note_id=note))
            n_items = int(rng.integers(0, 6))
            items = []
            for j in range(n_items):
                if rng.random() < 0.2:
                    items.append((None, Provenance.DISCARDED, f"junk {j}"))
                else:
                    items.append((f"C{j}", Provenance.LEXICAL, f"text {j}"))
            exp_codes += sum(1 for code, _, _ in items if code)
            mapped.append(_mapped(note, items))
            gold[note] = ["C0", "C1"]
        out = generation_diagnostics(records, mapped, gold)
        assert out["valid_json_rate"] == pytest.approx(exp_valid / 50, abs=1e-12)
        assert out["avg_pred_codes"] == pytest.approx(exp_codes / 50, abs=1e-12)

    def test_id_mismatch(self):
        records = [parse_output("x", note_id="n1")]
        mapped = [_mapped("n2", [])]
        with pytest.raises(IdMismatch):
            generation_diagnostics(records, mapped, {"n1": []})
