import heapq

import numpy as np
import pytest

from editaug import evalkit
from editaug.corpus import Entity, Lang, Token, Utterance


def eng(*words):
    return [Token(w, Lang.ENGLISH) for w in words]


def man(*chars):
    return [Token(c, Lang.MANDARIN) for c in chars]


def names(*words):
    return [Token(w, Lang.ENGLISH, Entity.PERSON_NAME) for w in words]


def search_edit_cost(ref, hyp):
    """Independent oracle: uniform-cost search over the edit graph, no DP
    recurrence or traceback shared with the implementation."""
    start = (0, 0)
    goal = (len(ref), len(hyp))
    best = {start: 0}
    heap = [(0, start)]
    while heap:
        cost, (i, j) = heapq.heappop(heap)
        if (i, j) == goal:
            return cost
        if cost > best.get((i, j), float("inf")):
            continue
        moves = []
        if i < len(ref) and j < len(hyp):
            moves.append((cost + (ref[i] != hyp[j]), (i + 1, j + 1)))
        if i < len(ref):
            moves.append((cost + 1, (i + 1, j)))
        if j < len(hyp):
            moves.append((cost + 1, (i, j + 1)))
        for new_cost, state in moves:
            if new_cost < best.get(state, float("inf")):
                best[state] = new_cost
                heapq.heappush(heap, (new_cost, state))
    raise AssertionError("unreachable")


def recursive_edit_cost(ref, hyp, bound=None):
    """Plain exhaustive recursion (with a cost bound for pruning only)."""
    if bound is None:
        bound = len(ref) + len(hyp)
    if bound < 0:
        return float("inf")
    if not ref:
        return len(hyp) if len(hyp) <= bound else float("inf")
    if not hyp:
        return len(ref) if len(ref) <= bound else float("inf")
    sub = (ref[0] != hyp[0]) + recursive_edit_cost(ref[1:], hyp[1:], bound - (ref[0] != hyp[0]))
    best = min(sub, bound + 1)
    best = min(best, 1 + recursive_edit_cost(ref[1:], hyp, min(bound, best) - 1))
    best = min(best, 1 + recursive_edit_cost(ref, hyp[1:], min(bound, best) - 1))
    return best


def test_tokenize_mixed_examples():
    out = evalkit.tokenize_mixed("你好world")
    assert [(t.surface, t.lang) for t in out] == [
        ("你", Lang.MANDARIN),
        ("好", Lang.MANDARIN),
        ("world", Lang.ENGLISH),
    ]
    assert [t.surface for t in evalkit.tokenize_mixed("HELLO there")] == ["hello", "there"]
    assert [t.surface for t in evalkit.tokenize_mixed("你 好,world!")] == ["你", "好", "world"]
    assert evalkit.tokenize_mixed("") == []
    assert [t.surface for t in evalkit.tokenize_mixed("a1b")] == ["a", "b"]


def test_alignment_identity():
    ref = eng("a", "b", "c")
    pair = evalkit.edit_distance_alignment(ref, ref)
    assert pair.cost == 0
    assert all(op.kind == "match" for op in pair.ops)


def test_alignment_forced_deletion():
    pair = evalkit.edit_distance_alignment(eng("a", "b", "c"), eng("a", "c"))
    assert pair.cost == 1
    assert [op.kind for op in pair.ops] == ["match", "del", "match"]


def test_alignment_tie_break_prefers_substitution():
    pair = evalkit.edit_distance_alignment(eng("a"), eng("b"))
    assert [op.kind for op in pair.ops] == ["sub"]
    pair = evalkit.edit_distance_alignment(eng("a", "b"), eng("c"))
    # cost 2; substitution preferred over deletion at the tie
    assert pair.cost == 2
    assert "sub" in [op.kind for op in pair.ops]


def test_alignment_matches_search_oracle():
    rng = np.random.default_rng(13)
    alphabet = ["a", "b", "c", "d"]
    for _ in range(300):
        ref = [alphabet[i] for i in rng.integers(0, 4, size=rng.integers(0, 11))]
        hyp = [alphabet[i] for i in rng.integers(0, 4, size=rng.integers(0, 11))]
        got = evalkit.edit_distance_alignment(eng(*ref) if ref else [], eng(*hyp) if hyp else [])
        assert got.cost == search_edit_cost(ref, hyp)


def test_alignment_matches_recursive_oracle_short():
    rng = np.random.default_rng(14)
    alphabet = ["a", "b", "c", "d"]
    for _ in range(60):
        ref = [alphabet[i] for i in rng.integers(0, 4, size=rng.integers(0, 6))]
        hyp = [alphabet[i] for i in rng.integers(0, 4, size=rng.integers(0, 6))]
        got = evalkit.edit_distance_alignment(eng(*ref) if ref else [], eng(*hyp) if hyp else [])
        assert got.cost == recursive_edit_cost(ref, hyp)


def test_alignment_cost_symmetry():
    rng = np.random.default_rng(15)
    alphabet = ["a", "b", "c"]
    for _ in range(100):
        x = [alphabet[i] for i in rng.integers(0, 3, size=rng.integers(0, 8))]
        y = [alphabet[i] for i in rng.integers(0, 3, size=rng.integers(0, 8))]
        xy = evalkit.edit_distance_alignment(eng(*x) if x else [], eng(*y) if y else []).cost
        yx = evalkit.edit_distance_alignment(eng(*y) if y else [], eng(*x) if x else []).cost
        assert xy == yx


def test_error_rates_identity_corpus():
    pairs = [
        evalkit.edit_distance_alignment(man("你", "好") + eng("ok"), man("你", "好") + eng("ok"), "u1")
    ]
    report = evalkit.compute_error_rates(pairs)
    assert report.cer_man == report.wer_eng == report.mer == 0.0


def test_error_rates_mixed_five_token_case():
    ref = man("你", "好", "世", "界") + eng("world")
    hyp = man("你", "好", "地", "界") + eng("world")
    report = evalkit.compute_error_rates([evalkit.edit_distance_alignment(ref, hyp, "u1")])
    assert report.cer_man == 25.0
    assert report.wer_eng == 0.0
    assert report.mer == 20.0


def test_error_rates_empty_class_flagged():
    ref = man("你", "好")
    report = evalkit.compute_error_rates([evalkit.edit_distance_alignment(ref, ref, "u1")])
    assert "empty_english_reference" in report.flags
    assert report.wer_eng == 0.0


def test_error_rates_insertion_attribution():
    ref = man("你")
    hyp = man("你") + eng("extra")
    report = evalkit.compute_error_rates([evalkit.edit_distance_alignment(ref, hyp, "u1")])
    # English insertion counts toward WER-side counts and MER, not CER
    assert report.counts["english"]["ins"] == 1
    assert report.counts["mandarin"]["ins"] == 0
    assert report.cer_man == 0.0
    assert report.mer == 100.0


def test_mer_equals_cer_when_mandarin_only():
    rng = np.random.default_rng(16)
    chars = [chr(0x4E00 + i) for i in range(6)]
    pairs = []
    for i in range(20):
        ref = man(*[chars[c] for c in rng.integers(0, 6, size=rng.integers(1, 8))])
        hyp = man(*[chars[c] for c in rng.integers(0, 6, size=rng.integers(1, 8))])
        pairs.append(evalkit.edit_distance_alignment(ref, hyp, f"u{i}"))
    report = evalkit.compute_error_rates(pairs)
    assert report.mer == report.cer_man


def test_mer_numerator_monotone_under_hyp_append():
    ref = man("你", "好") + eng("ok")
    hyp = man("你") + eng("ok")
    base = evalkit.compute_error_rates([evalkit.edit_distance_alignment(ref, hyp, "u")])
    extended = evalkit.compute_error_rates(
        [evalkit.edit_distance_alignment(ref, hyp + eng("zzz"), "u")]
    )
    assert extended.counts["overall"]["ins"] + extended.counts["overall"]["sub"] + extended.counts[
        "overall"
    ]["del"] >= base.counts["overall"]["ins"] + base.counts["overall"]["sub"] + base.counts[
        "overall"
    ]["del"]


def test_entity_metrics_perfect():
    refs = [eng("i", "met") + names("john", "smith")]
    hyps = [eng("i", "met", "john", "smith")]
    recall, precision, flags = evalkit.entity_metrics(refs, hyps, [names("john", "smith")])
    assert recall == 100.0 and precision == 100.0 and flags == []


def test_entity_metrics_zero_denominator_flag():
    refs = [eng("i", "met") + names("john", "smith")]
    hyps = [eng("i", "met", "nobody")]
    recall, precision, flags = evalkit.entity_metrics(refs, hyps, [names("john", "smith")])
    assert recall == 0.0 and precision == 0.0
    assert "empty_hypothesis_name_denominator" in flags


def test_entity_metrics_half_and_half():
    # 2 reference occurrences; hypothesis has 1 correct + 1 spurious list name
    refs = [names("john", "smith") + eng("and") + names("john", "smith")]
    hyps = [eng("john", "smith", "and", "mary", "jones")]
    name_list = [names("john", "smith"), names("mary", "jones")]
    recall, precision, flags = evalkit.entity_metrics(refs, hyps, name_list)
    assert recall == 50.0
    assert precision == 50.0


def test_entity_spans():
    tokens = eng("a") + names("x", "y") + eng("b") + names("z")
    assert evalkit.entity_spans(tokens) == [(1, 3), (4, 5)]


def test_hypotheses_loader(tmp_path):
    path = tmp_path / "hyp.tsv"
    path.write_text("u1\thello there\nu2\t你好\n", encoding="utf-8")
    hyps = evalkit.load_hypotheses(path)
    assert hyps == {"u1": "hello there", "u2": "你好"}
    bad = tmp_path / "bad.tsv"
    bad.write_text("u1 no tab\n", encoding="utf-8")
    with pytest.raises(ValueError, match="TAB"):
        evalkit.load_hypotheses(bad)
    dup = tmp_path / "dup.tsv"
    dup.write_text("u1\ta\nu1\tb\n", encoding="utf-8")
    with pytest.raises(ValueError, match="duplicate"):
        evalkit.load_hypotheses(dup)


def test_score_corpus_and_report(tmp_path):
    utt = Utterance(
        id="u1",
        audio="a.wav",
        feats=None,
        speaker="s",
        tokens=man("你", "好") + eng("World"),
    )
    report = evalkit.score_corpus([utt], {"u1": "你好 world"})
    assert report.mer == 0.0
    # missing hypothesis scores as all deletions
    report2 = evalkit.score_corpus([utt], {})
    assert report2.mer == 100.0
    path = tmp_path / "report.json"
    evalkit.write_report(path, report)
    import json

    data = json.loads(path.read_text(encoding="utf-8"))
    for key in ("cer_man", "wer_eng", "mer", "entity_recall", "entity_precision", "counts", "flags", "per_utterance"):
        assert key in data
