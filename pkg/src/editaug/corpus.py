"""Corpus data model: manifests, forced-alignment ingestion, toy corpus.

A manifest is line-delimited JSON, one utterance per line with fields
``id``, ``audio`` (path or null), ``feats`` (path or null), ``sample_rate``,
``speaker``, ``tokens`` (array of {surface, lang, entity}) and an optional
``origin`` tag on augmented entries.  Paths are stored as written and
resolved against the manifest's directory (or ``feature_dir`` for feats).

Alignments are plain text, one row per phone::

    utt_id token_index phone start_frame end_frame

with frames counted at the 12.5 ms hop, end exclusive.  Ingestion validates
that each utterance's spans tile [0, T) with no gaps or overlaps and that
every token is covered by a consecutive run of phones.

The toy corpus renders each "phone" k as a pure sine at 300 + 100*k Hz
lasting exactly 20 frames (4000 samples), so a mel-bin oracle can verify
edits by construction.  To make the feature framing line up with the
alignment (frame t covers samples [200t, 200t+800)), each utterance is
rendered with a 400-sample lead-in (first phone's sine, extended backwards)
and a 200-sample tail (last phone's sine, extended), giving exactly 20*P
frames for P phones.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import dsp

TOY_SAMPLES_PER_PHONE = 4000
TOY_FRAMES_PER_PHONE = 20
TOY_LEAD_SAMPLES = 400
TOY_TAIL_SAMPLES = 200
TOY_AMPLITUDE = 0.3


class Lang(Enum):
    MANDARIN = "MANDARIN"
    ENGLISH = "ENGLISH"


class Entity(Enum):
    NONE = "NONE"
    PERSON_NAME = "PERSON_NAME"


@dataclass(frozen=True)
class Token:
    surface: str
    lang: Lang
    entity: Entity = Entity.NONE

    def __post_init__(self):
        if not self.surface:
            raise ValueError("token surface must be non-empty")
        if self.lang is Lang.MANDARIN and len(self.surface) != 1:
            raise ValueError(f"Mandarin token must be a single character: {self.surface!r}")
        if self.lang is Lang.ENGLISH and any(c.isspace() for c in self.surface):
            raise ValueError(f"English token must contain no whitespace: {self.surface!r}")


@dataclass
class Utterance:
    id: str
    audio: str | None
    feats: str | None
    speaker: str
    tokens: list[Token]
    sample_rate: int = 16000
    origin: str | None = None

    def validate(self) -> None:
        if not self.id:
            raise ValueError("utterance id must be non-empty")
        if self.sample_rate != 16000:
            raise ValueError(f"utterance {self.id}: sample_rate must be 16000, got {self.sample_rate}")
        if not self.tokens:
            raise ValueError(f"utterance {self.id}: tokens must be non-empty")
        if self.audio is None and self.feats is None:
            raise ValueError(f"utterance {self.id}: needs an audio or feats reference")


@dataclass(frozen=True)
class AlignmentEntry:
    utterance_id: str
    token_index: int
    phone: str
    start_frame: int
    end_frame: int

    def __post_init__(self):
        if not (0 <= self.start_frame < self.end_frame):
            raise ValueError(
                f"{self.utterance_id}: bad span [{self.start_frame}, {self.end_frame}) "
                f"for token {self.token_index}"
            )


@dataclass
class CorpusManifest:
    entries: list[Utterance]
    feature_dir: str | None = None
    root: Path | None = field(default=None, compare=False)

    def by_id(self) -> dict[str, Utterance]:
        return {u.id: u for u in self.entries}

    def resolve_audio(self, utt: Utterance) -> Path:
        if utt.audio is None:
            raise ValueError(f"utterance {utt.id} has no audio reference")
        p = Path(utt.audio)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p

    def resolve_feats(self, utt: Utterance) -> Path:
        if utt.feats is None:
            raise ValueError(f"utterance {utt.id} has no feats reference")
        p = Path(utt.feats)
        if p.is_absolute():
            return p
        if self.feature_dir is not None:
            base = Path(self.feature_dir)
            if not base.is_absolute() and self.root is not None:
                base = self.root / base
            return base / p
        if self.root is not None:
            return self.root / p
        return p


def token_from_json(obj: dict, context: str) -> Token:
    try:
        surface = obj["surface"]
        lang = Lang(obj["lang"])
        entity = Entity(obj.get("entity", "NONE"))
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{context}: bad token {obj!r}: {exc}") from exc
    return Token(surface=surface, lang=lang, entity=entity)


def token_to_json(token: Token) -> dict:
    return {"surface": token.surface, "lang": token.lang.value, "entity": token.entity.value}


def parse_manifest_line(line: str, lineno: int = 0) -> Utterance:
    context = f"manifest line {lineno}"
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{context}: malformed JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ValueError(f"{context}: expected an object")
    required = {"id", "audio", "feats", "sample_rate", "speaker", "tokens"}
    missing = required - obj.keys()
    if missing:
        raise ValueError(f"{context}: missing fields {sorted(missing)}")
    unknown = obj.keys() - required - {"origin"}
    if unknown:
        raise ValueError(f"{context}: unknown fields {sorted(unknown)}")
    tokens = [token_from_json(t, context) for t in obj["tokens"]]
    utt = Utterance(
        id=obj["id"],
        audio=obj["audio"],
        feats=obj["feats"],
        speaker=obj["speaker"],
        tokens=tokens,
        sample_rate=obj["sample_rate"],
        origin=obj.get("origin"),
    )
    try:
        utt.validate()
    except ValueError as exc:
        raise ValueError(f"{context}: {exc}") from exc
    return utt


def utterance_to_json_line(utt: Utterance) -> str:
    record = {
        "id": utt.id,
        "audio": utt.audio,
        "feats": utt.feats,
        "sample_rate": utt.sample_rate,
        "speaker": utt.speaker,
        "tokens": [token_to_json(t) for t in utt.tokens],
    }
    if utt.origin is not None:
        record["origin"] = utt.origin
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def load_manifest(path) -> CorpusManifest:
    """Load and validate a JSONL manifest; entry order is preserved."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    entries: list[Utterance] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            utt = parse_manifest_line(line, lineno)
            if utt.id in seen:
                raise ValueError(f"manifest line {lineno}: duplicate id {utt.id!r}")
            seen.add(utt.id)
            entries.append(utt)
    return CorpusManifest(entries=entries, root=path.parent)


def save_manifest(manifest: CorpusManifest, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        for utt in manifest.entries:
            f.write(utterance_to_json_line(utt) + "\n")


def serialize_manifest(manifest: CorpusManifest) -> str:
    return "".join(utterance_to_json_line(u) + "\n" for u in manifest.entries)


def parse_alignment_row(line: str, lineno: int) -> AlignmentEntry:
    parts = line.split()
    if len(parts) != 5:
        raise ValueError(f"alignment line {lineno}: expected 5 fields, got {len(parts)}")
    utt_id, tok_idx, phone, start, end = parts
    try:
        entry = AlignmentEntry(
            utterance_id=utt_id,
            token_index=int(tok_idx),
            phone=phone,
            start_frame=int(start),
            end_frame=int(end),
        )
    except ValueError as exc:
        raise ValueError(f"alignment line {lineno}: {exc}") from exc
    return entry


def _validate_utterance_alignment(utt: Utterance, entries: list[AlignmentEntry]) -> None:
    entries.sort(key=lambda e: (e.start_frame, e.end_frame))
    prev_end = 0
    for e in entries:
        if e.start_frame < prev_end:
            raise ValueError(
                f"{utt.id}: overlapping spans at frame {e.start_frame} (previous ends {prev_end})"
            )
        if e.start_frame > prev_end:
            raise ValueError(f"{utt.id}: gap before frame {e.start_frame} (previous ends {prev_end})")
        prev_end = e.end_frame
    # phones of a token must be consecutive and every token covered exactly once
    seen_tokens: list[int] = []
    for idx in (e.token_index for e in entries):
        if not seen_tokens or seen_tokens[-1] != idx:
            seen_tokens.append(idx)
    if sorted(seen_tokens) != list(range(len(utt.tokens))) or seen_tokens != sorted(seen_tokens):
        raise ValueError(
            f"{utt.id}: token indices must cover 0..{len(utt.tokens) - 1} once, in order, "
            f"with consecutive phones (got {seen_tokens})"
        )


def ingest_alignment(path, manifest: CorpusManifest) -> dict[str, list[AlignmentEntry]]:
    """Parse an alignment file and validate it against the manifest.

    Frame spans per utterance must tile [0, T) with no gaps or overlaps;
    when a precomputed mel exists the last end_frame must equal its frame
    count.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"alignment file not found: {path}")
    by_id = manifest.by_id()
    alignments: dict[str, list[AlignmentEntry]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            entry = parse_alignment_row(line, lineno)
            if entry.utterance_id not in by_id:
                raise ValueError(f"alignment line {lineno}: unknown utterance id {entry.utterance_id!r}")
            alignments.setdefault(entry.utterance_id, []).append(entry)
    for utt_id, entries in alignments.items():
        utt = by_id[utt_id]
        _validate_utterance_alignment(utt, entries)
        if utt.feats is not None:
            feats_path = manifest.resolve_feats(utt)
            if feats_path.exists():
                frames, _, _ = dsp.read_mel_header(feats_path)
                last_end = entries[-1].end_frame
                if last_end > frames:
                    raise ValueError(
                        f"{utt_id}: alignment covers {last_end} frames but mel has {frames}"
                    )
    return alignments


def total_frames(entries: list[AlignmentEntry]) -> int:
    return entries[-1].end_frame if entries else 0


def span_from_seconds(start_s: float, end_s: float, hop_s: float = 0.0125) -> tuple[int, int]:
    """Convert an aligner's second-resolution span to hop frames:
    floor(start/hop), ceil(end/hop)."""
    return math.floor(start_s / hop_s), math.ceil(end_s / hop_s)


def token_frame_span(entries: list[AlignmentEntry], token_index: int) -> tuple[int, int]:
    """Union of a token's phone spans as (start_frame, end_frame)."""
    spans = [(e.start_frame, e.end_frame) for e in entries if e.token_index == token_index]
    if not spans:
        raise ValueError(f"token index {token_index} not present in alignment")
    return min(s for s, _ in spans), max(e for _, e in spans)


def token_spans(entries: list[AlignmentEntry], n_tokens: int) -> list[tuple[int, int]]:
    return [token_frame_span(entries, i) for i in range(n_tokens)]


def toy_phone_hz(k: int) -> float:
    return 300.0 + 100.0 * k


def toy_phone_name(k: int) -> str:
    return "P" + chr(ord("A") + k)


def toy_token_surface(k: int) -> str:
    # letters only so the scoring tokenizer round-trips toy transcripts
    return "p" + chr(ord("a") + k)


def toy_surface_to_id(surface: str) -> int:
    if len(surface) != 2 or surface[0] != "p":
        raise ValueError(f"not a toy token surface: {surface!r}")
    return ord(surface[1]) - ord("a")


def render_toy_waveform(phone_ids: list[int], sample_rate: int = 16000) -> np.ndarray:
    """Render a toy utterance: contiguous pure sines, one per phone, plus the
    lead-in/tail padding that keeps frame t's window centered on the phone
    that owns frames [20i, 20(i+1))."""
    n_core = TOY_SAMPLES_PER_PHONE * len(phone_ids)
    n_total = TOY_LEAD_SAMPLES + n_core + TOY_TAIL_SAMPLES
    samples = np.zeros(n_total)
    t = np.arange(n_total)
    for i, k in enumerate(phone_ids):
        span_start = TOY_LEAD_SAMPLES + i * TOY_SAMPLES_PER_PHONE
        lo = span_start if i > 0 else 0
        hi = span_start + TOY_SAMPLES_PER_PHONE if i < len(phone_ids) - 1 else n_total
        phase = 2.0 * np.pi * toy_phone_hz(k) * (t[lo:hi] - span_start) / sample_rate
        samples[lo:hi] = TOY_AMPLITUDE * np.sin(phase)
    return samples


def generate_toy_corpus(seed: int, n_utts: int, vocab_size: int, out_dir) -> CorpusManifest:
    """Generate the deterministic sine-tone corpus used as an edit oracle.

    Writes wav/*.wav, manifest.jsonl, alignment.txt and lexicon.txt under
    out_dir and returns the manifest.  Each utterance has 3-8 phones drawn
    by a seeded RNG; phone k plays at 300 + 100*k Hz for exactly 20 frames.
    """
    if not (1 <= vocab_size <= 20):
        raise ValueError(f"vocab_size must be in [1, 20], got {vocab_size}")
    if n_utts < 1:
        raise ValueError(f"n_utts must be >= 1, got {n_utts}")
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    try:
        wav_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc

    rng = np.random.default_rng(seed)
    entries = []
    alignment_rows = []
    for i in range(n_utts):
        n_phones = int(rng.integers(3, 9))
        phone_ids = [int(k) for k in rng.integers(0, vocab_size, size=n_phones)]
        utt_id = f"toy_{i:04d}"
        samples = render_toy_waveform(phone_ids)
        dsp.write_wav(wav_dir / f"{utt_id}.wav", dsp.Waveform(samples=samples))
        tokens = [Token(toy_token_surface(k), Lang.ENGLISH) for k in phone_ids]
        entries.append(
            Utterance(
                id=utt_id,
                audio=f"wav/{utt_id}.wav",
                feats=None,
                speaker="toy",
                tokens=tokens,
            )
        )
        for j, k in enumerate(phone_ids):
            alignment_rows.append(
                f"{utt_id} {j} {toy_phone_name(k)} "
                f"{j * TOY_FRAMES_PER_PHONE} {(j + 1) * TOY_FRAMES_PER_PHONE}"
            )

    manifest = CorpusManifest(entries=entries, root=out_dir)
    save_manifest(manifest, out_dir / "manifest.jsonl")
    with open(out_dir / "alignment.txt", "w", encoding="utf-8") as f:
        f.write("\n".join(alignment_rows) + "\n")
    with open(out_dir / "lexicon.txt", "w", encoding="utf-8") as f:
        for k in range(vocab_size):
            f.write(f"{toy_token_surface(k)} {toy_phone_name(k)}\n")
    return manifest


def load_utterance_mel(manifest: CorpusManifest, utt: Utterance, config=None) -> dsp.MelSpectrogram:
    """Load an utterance's raw mel: precomputed feats if present, otherwise
    extracted from its audio."""
    if config is None:
        config = dsp.FbankConfig()
    if utt.feats is not None:
        mel = dsp.read_mel(manifest.resolve_feats(utt))
        if mel.normalized:
            raise ValueError(f"utterance {utt.id}: stored feats must be raw")
        return mel
    return dsp.extract_fbank(dsp.read_wav(manifest.resolve_audio(utt)), config)
