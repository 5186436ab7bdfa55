"""Scoring: mixed tokenization, edit-distance alignment, CER/WER/MER and
name recall/precision.

Tokenization rule: every CJK ideograph becomes a single-character Mandarin
token, maximal ASCII-letter runs become case-folded English word tokens,
everything else separates.  MER is the edit-error rate over the mixed
token sequence; CER/WER restrict both the error and reference counts to
the Mandarin/English class, attributing substitutions and deletions to the
reference token's class and insertions to the inserted token's class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Entity, Lang, Token, Utterance

# CJK Unified Ideographs plus Extension A
_CJK_RANGES = ((0x4E00, 0x9FFF), (0x3400, 0x4DBF))


def _is_cjk(ch: str) -> bool:
    code = ord(ch)
    return any(lo <= code <= hi for lo, hi in _CJK_RANGES)


def tokenize_mixed(text: str) -> list[Token]:
    """Mandarin characters to single-char tokens, ASCII-letter runs to
    case-folded English tokens, everything else dropped as separators."""
    tokens: list[Token] = []
    word: list[str] = []

    def flush():
        if word:
            tokens.append(Token("".join(word).casefold(), Lang.ENGLISH))
            word.clear()

    for ch in text:
        if _is_cjk(ch):
            flush()
            tokens.append(Token(ch, Lang.MANDARIN))
        elif ch.isascii() and ch.isalpha():
            word.append(ch)
        else:
            flush()
    flush()
    return tokens


@dataclass
class AlignedOp:
    kind: str  # "match" | "sub" | "del" | "ins"
    ref_index: int | None
    hyp_index: int | None


@dataclass
class ScoredPair:
    utterance_id: str
    ref: list[Token]
    hyp: list[Token]
    ops: list[AlignedOp]

    @property
    def cost(self) -> int:
        return sum(1 for op in self.ops if op.kind != "match")


def edit_distance_alignment(ref: list[Token], hyp: list[Token], utterance_id: str = "") -> ScoredPair:
    """Unit-cost Levenshtein alignment.

    Backtrace tie-break prefers substitution over deletion over insertion,
    matching on token surfaces (languages do not need to agree).
    """
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        ref_surface = ref[i - 1].surface
        row = dist[i]
        prev = dist[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (0 if ref_surface == hyp[j - 1].surface else 1)
            row[j] = min(diag, prev[j] + 1, row[j - 1] + 1)

    ops: list[AlignedOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1].surface == hyp[j - 1].surface and dist[i][j] == dist[i - 1][j - 1]:
            ops.append(AlignedOp("match", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + 1:
            ops.append(AlignedOp("sub", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            ops.append(AlignedOp("del", i - 1, None))
            i = i - 1
        else:
            ops.append(AlignedOp("ins", None, j - 1))
            j = j - 1
    ops.reverse()
    return ScoredPair(utterance_id=utterance_id, ref=ref, hyp=hyp, ops=ops)


@dataclass
class ClassCounts:
    sub: int = 0
    dele: int = 0
    ins: int = 0
    ref: int = 0

    @property
    def errors(self) -> int:
        return self.sub + self.dele + self.ins

    def as_dict(self) -> dict:
        return {"sub": self.sub, "del": self.dele, "ins": self.ins, "ref": self.ref}


@dataclass
class EvalReport:
    cer_man: float = 0.0
    wer_eng: float = 0.0
    mer: float = 0.0
    entity_recall: float = 0.0
    entity_precision: float = 0.0
    counts: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    per_utterance: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "cer_man": self.cer_man,
            "wer_eng": self.wer_eng,
            "mer": self.mer,
            "entity_recall": self.entity_recall,
            "entity_precision": self.entity_precision,
            "counts": self.counts,
            "flags": self.flags,
            "per_utterance": self.per_utterance,
        }


def _accumulate(pair: ScoredPair, mandarin: ClassCounts, english: ClassCounts, overall: ClassCounts):
    for token in pair.ref:
        overall.ref += 1
        (mandarin if token.lang is Lang.MANDARIN else english).ref += 1
    for op in pair.ops:
        if op.kind == "match":
            continue
        if op.kind == "sub":
            overall.sub += 1
            cls = mandarin if pair.ref[op.ref_index].lang is Lang.MANDARIN else english
            cls.sub += 1
        elif op.kind == "del":
            overall.dele += 1
            cls = mandarin if pair.ref[op.ref_index].lang is Lang.MANDARIN else english
            cls.dele += 1
        else:
            overall.ins += 1
            cls = mandarin if pair.hyp[op.hyp_index].lang is Lang.MANDARIN else english
            cls.ins += 1


def compute_error_rates(pairs: list[ScoredPair]) -> EvalReport:
    """CER (Mandarin), WER (English) and MER over scored pairs, in percent.

    A class with zero reference tokens gets rate 0.0 plus a flag instead of
    a division error, keeping reports machine-readable.
    """
    mandarin, english, overall = ClassCounts(), ClassCounts(), ClassCounts()
    per_utt = []
    for pair in pairs:
        _accumulate(pair, mandarin, english, overall)
        per_utt.append(
            {
                "id": pair.utterance_id,
                "ref_len": len(pair.ref),
                "errors": pair.cost,
                "sub": sum(1 for op in pair.ops if op.kind == "sub"),
                "del": sum(1 for op in pair.ops if op.kind == "del"),
                "ins": sum(1 for op in pair.ops if op.kind == "ins"),
            }
        )
    report = EvalReport(per_utterance=per_utt)
    report.counts = {
        "mandarin": mandarin.as_dict(),
        "english": english.as_dict(),
        "overall": overall.as_dict(),
    }
    if overall.ref == 0:
        report.flags.append("empty_reference")
    else:
        report.mer = 100.0 * overall.errors / overall.ref
    if mandarin.ref == 0:
        report.flags.append("empty_mandarin_reference")
    else:
        report.cer_man = 100.0 * mandarin.errors / mandarin.ref
    if english.ref == 0:
        report.flags.append("empty_english_reference")
    else:
        report.wer_eng = 100.0 * english.errors / english.ref
    return report


def entity_spans(tokens: list[Token]) -> list[tuple[int, int]]:
    """Maximal runs of PERSON_NAME tokens as [start, end) index spans."""
    spans = []
    start = None
    for i, token in enumerate(tokens):
        if token.entity is Entity.PERSON_NAME:
            if start is None:
                start = i
        elif start is not None:
            spans.append((start, i))
            start = None
    if start is not None:
        spans.append((start, len(tokens)))
    return spans


def _surface_key(tokens) -> tuple[str, ...]:
    return tuple(t.surface.casefold() for t in tokens)


def _count_occurrences(hyp_surfaces: tuple[str, ...], name: tuple[str, ...]) -> int:
    """Greedy non-overlapping left-to-right occurrence count."""
    count = 0
    i = 0
    n = len(name)
    while i + n <= len(hyp_surfaces):
        if hyp_surfaces[i : i + n] == name:
            count += 1
            i += n
        else:
            i += 1
    return count


def entity_metrics(
    refs: list[list[Token]],
    hyps: list[list[Token]],
    name_list: list[list[Token]],
) -> tuple[float, float, list[str]]:
    """Name recall/precision in percent, plus flags.

    A reference occurrence is a PERSON_NAME span whose surface appears in
    the name list; it counts as a hit when the full name appears
    contiguously in the paired hypothesis, matched greedily left-to-right
    per name.  Precision is matched hypothesis occurrences over all
    hypothesis occurrences of list names.  Zero denominators yield 0.0 plus
    a flag.
    """
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references but {len(hyps)} hypotheses")
    list_names = {_surface_key(name) for name in name_list}
    ref_total = 0
    hyp_total = 0
    hits = 0
    for ref, hyp in zip(refs, hyps):
        hyp_surfaces = _surface_key(hyp)
        ref_occ: dict[tuple[str, ...], int] = {}
        for start, end in entity_spans(ref):
            key = _surface_key(ref[start:end])
            if key in list_names:
                ref_occ[key] = ref_occ.get(key, 0) + 1
        hyp_occ = {name: _count_occurrences(hyp_surfaces, name) for name in list_names}
        ref_total += sum(ref_occ.values())
        hyp_total += sum(hyp_occ.values())
        hits += sum(min(count, hyp_occ[name]) for name, count in ref_occ.items())
    flags = []
    if ref_total == 0:
        flags.append("empty_reference_name_denominator")
        recall = 0.0
    else:
        recall = 100.0 * hits / ref_total
    if hyp_total == 0:
        flags.append("empty_hypothesis_name_denominator")
        precision = 0.0
    else:
        precision = 100.0 * hits / hyp_total
    return recall, precision, flags


def reference_tokens(utt: Utterance) -> list[Token]:
    """Scoring view of a manifest entry's tokens: surfaces case-folded,
    language and entity tags preserved."""
    return [Token(t.surface.casefold(), t.lang, t.entity) for t in utt.tokens]


def load_hypotheses(path) -> dict[str, str]:
    """Hypothesis file: `utt_id<TAB>text`, one per line."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"hypothesis file not found: {path}")
    hyps: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ValueError(f"hypothesis line {lineno}: expected utt_id<TAB>text")
            utt_id, text = line.split("\t", 1)
            if utt_id in hyps:
                raise ValueError(f"hypothesis line {lineno}: duplicate id {utt_id!r}")
            hyps[utt_id] = text
    return hyps


def score_corpus(
    utterances: list[Utterance],
    hypotheses: dict[str, str],
    name_list: list[list[Token]] | None = None,
) -> EvalReport:
    """Score a manifest against a hypothesis map; missing hypotheses score
    as empty (all deletions)."""
    pairs = []
    refs = []
    hyps = []
    for utt in utterances:
        ref = reference_tokens(utt)
        hyp = tokenize_mixed(hypotheses.get(utt.id, ""))
        pairs.append(edit_distance_alignment(ref, hyp, utterance_id=utt.id))
        refs.append(ref)
        hyps.append(hyp)
    report = compute_error_rates(pairs)
    if name_list:
        recall, precision, flags = entity_metrics(refs, hyps, name_list)
        report.entity_recall = recall
        report.entity_precision = precision
        report.flags.extend(flags)
    return report


def write_report(path, report: EvalReport) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.as_dict(), f, ensure_ascii=False, indent=2)
        f.write("\n")
