"""Augmentation recipes: splice, tts, edit, edit-feats, edit-feats+tts.

All five recipes consume the same edit-spec list and emit utterances with
identical token sequences, differing only in how the audio/features are
produced:

* splice: synthesize each inserted phrase with the editor's full-mask
  mode, vocode it, and splice the segment into the original waveform at
  the alignment-derived sample boundaries;
* tts: synthesize the whole edited text and vocode it;
* edit: regenerate the edited mel regions in context and vocode the
  stitched mel;
* edit-feats: like edit but persist the denormalized mel directly and
  skip vocoding;
* edit-feats+tts: a seeded half/half split (ceil goes to edit-feats).

Edit specs are line-delimited JSON; each record names a source utterance
and either explicit ops::

    {"utt": "u1", "ops": [{"kind": "REPLACE", "position": 2, "length": 1,
                           "tokens": [{"surface": "world", "lang": "ENGLISH",
                                       "entity": "NONE"}]}]}

or a name assignment (the named-entity path; length 0 means insert)::

    {"utt": "u1", "name": ["john", "smith"], "position": 2, "length": 1}

Outputs land in `<out>/wav/<id>.wav`, `<out>/feats/<id>.melf`,
`<out>/manifest.jsonl` and `<out>/job.json`.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    AlignmentEntry,
    CorpusManifest,
    Entity,
    Lang,
    Token,
    Utterance,
    load_utterance_mel,
    save_manifest,
    token_from_json,
)
from . import dsp
from .editmodel import SpeechEditor
from .melsurgery import edit_region_from_alignment, splice_waveform
from .textgen import EditKind, EditOp, EditScript, Lexicon, apply_edit_script, phonemize


class RecipeKind(Enum):
    SPLICE = "splice"
    TTS = "tts"
    EDIT = "edit"
    EDIT_FEATS = "edit-feats"
    EDIT_FEATS_PLUS_TTS = "edit-feats+tts"


@dataclass
class AugSpec:
    utt_id: str
    script: EditScript


@dataclass
class AugJob:
    manifest: CorpusManifest
    alignments: dict[str, list[AlignmentEntry]]
    specs: list[AugSpec]
    recipe: RecipeKind
    out_dir: Path
    seed: int
    editor: SpeechEditor | None = None
    lexicon: Lexicon | None = None
    fbank: dsp.FbankConfig = field(default_factory=dsp.FbankConfig)
    gl_iterations: int = 60


@dataclass
class AugOutput:
    manifest: CorpusManifest
    out_dir: Path


def _op_from_json(obj: dict, context: str) -> EditOp:
    try:
        kind = EditKind(obj["kind"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{context}: bad op kind: {exc}") from exc
    tokens = tuple(token_from_json(t, context) for t in obj.get("tokens", []))
    return EditOp(
        kind=kind,
        position=int(obj.get("position", 0)),
        length=int(obj.get("length", 0)),
        new_tokens=tokens,
    )


def load_edit_specs(path, manifest: CorpusManifest) -> list[AugSpec]:
    """Parse the edit-spec JSONL and validate each script against its
    source utterance."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"edit specs not found: {path}")
    by_id = manifest.by_id()
    specs: list[AugSpec] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            context = f"edit spec line {lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{context}: malformed JSON: {exc}") from exc
            utt_id = obj.get("utt")
            if utt_id not in by_id:
                raise ValueError(f"{context}: unknown utterance {utt_id!r}")
            if "ops" in obj:
                ops = [_op_from_json(o, context) for o in obj["ops"]]
            elif "name" in obj:
                name_tokens = tuple(
                    Token(s, Lang.ENGLISH, Entity.PERSON_NAME) for s in obj["name"]
                )
                length = int(obj.get("length", 0))
                kind = EditKind.REPLACE if length > 0 else EditKind.INSERT
                ops = [
                    EditOp(
                        kind=kind,
                        position=int(obj["position"]),
                        length=length,
                        new_tokens=name_tokens,
                    )
                ]
            else:
                raise ValueError(f"{context}: record needs 'ops' or 'name'")
            script = EditScript(ops=ops)
            script.validate(len(by_id[utt_id].tokens))
            specs.append(AugSpec(utt_id=utt_id, script=script))
    return specs


def _phones_for_tokens(tokens, lexicon: Lexicon) -> list[str]:
    phones: list[str] = []
    for token in tokens:
        phones.extend(phonemize(token, lexicon).phones)
    return phones


def _vocode(job: AugJob, mel_norm: dsp.MelSpectrogram) -> dsp.Waveform:
    raw = dsp.denormalize_mel(mel_norm, job.editor.stats)
    return dsp.griffin_lim_vocode(raw, job.fbank, iterations=job.gl_iterations)


def run_recipe_for_utterance(job: AugJob, spec: AugSpec, kind: RecipeKind, index: int) -> Utterance:
    """Produce one augmented entry; writes its wav or melf under the job's
    output directory and returns the manifest record."""
    if kind is RecipeKind.EDIT_FEATS_PLUS_TTS:
        raise ValueError("the half/half recipe must be split before per-utterance dispatch")
    source = job.manifest.by_id()[spec.utt_id]
    edited_tokens, _ = apply_edit_script(source.tokens, spec.script)
    out_id = f"{spec.utt_id}_aug{index:04d}"
    entry = Utterance(
        id=out_id,
        audio=None,
        feats=None,
        speaker=source.speaker,
        tokens=edited_tokens,
        origin=kind.value,
    )

    if kind in (RecipeKind.EDIT, RecipeKind.EDIT_FEATS, RecipeKind.SPLICE):
        alignment = job.alignments.get(spec.utt_id)
        if not alignment:
            raise ValueError(f"recipe {kind.value} needs an alignment for {spec.utt_id}")
    if job.editor is None:
        raise ValueError(f"recipe {kind.value} needs a trained editor model")
    if job.lexicon is None:
        raise ValueError(f"recipe {kind.value} needs a lexicon")

    if kind is RecipeKind.SPLICE:
        original = dsp.read_wav(job.manifest.resolve_audio(source))
        regions = edit_region_from_alignment(alignment, spec.script)
        ops = spec.script.sorted_ops()
        spliced = original
        for region, op in sorted(
            zip(regions, ops), key=lambda pair: pair[0].start_frame, reverse=True
        ):
            if op.new_tokens:
                phones = _phones_for_tokens(op.new_tokens, job.lexicon)
                segment = _vocode(job, job.editor.synth_full(phones))
            else:
                segment = dsp.Waveform(samples=np.zeros(0), sample_rate=original.sample_rate)
            cut = (region.start_frame * job.fbank.hop, region.end_frame * job.fbank.hop)
            spliced = splice_waveform(spliced, cut, segment)
        entry.audio = f"wav/{out_id}.wav"
        dsp.write_wav(job.out_dir / entry.audio, spliced)
    elif kind is RecipeKind.TTS:
        phones = _phones_for_tokens(edited_tokens, job.lexicon)
        wave_out = _vocode(job, job.editor.synth_full(phones))
        entry.audio = f"wav/{out_id}.wav"
        dsp.write_wav(job.out_dir / entry.audio, wave_out)
    elif kind in (RecipeKind.EDIT, RecipeKind.EDIT_FEATS):
        mel = load_utterance_mel(job.manifest, source, job.fbank)
        edited, _ = job.editor.infer_edit(source.tokens, mel, alignment, spec.script, job.lexicon)
        if kind is RecipeKind.EDIT:
            wave_out = _vocode(job, edited)
            entry.audio = f"wav/{out_id}.wav"
            dsp.write_wav(job.out_dir / entry.audio, wave_out)
        else:
            raw = dsp.denormalize_mel(edited, job.editor.stats)
            entry.feats = f"feats/{out_id}.melf"
            dsp.write_mel(job.out_dir / entry.feats, raw)
    else:
        raise ValueError(f"unhandled recipe {kind}")
    entry.validate()
    return entry


def split_half_and_half(n: int, seed: int) -> list[RecipeKind]:
    """Deterministic per-spec assignment for edit-feats+tts: a seeded
    shuffle sends ceil(n/2) specs to edit-feats and the rest to tts."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_feats = (n + 1) // 2
    feats_set = set(int(i) for i in order[:n_feats])
    return [
        RecipeKind.EDIT_FEATS if i in feats_set else RecipeKind.TTS for i in range(n)
    ]


def build_augmentation_set(
    job: AugJob, provenance: dict | None = None, jobs: int = 1
) -> AugOutput:
    """Run the job's recipe over every edit spec, fail-fast on any error.

    Per-utterance work is independent; `jobs` caps the worker count.  The
    manifest is assembled in spec order regardless of completion order.
    Writes the augmented manifest plus a job.json provenance record and
    returns the in-memory output.
    """
    job.out_dir = Path(job.out_dir)
    (job.out_dir / "wav").mkdir(parents=True, exist_ok=True)
    (job.out_dir / "feats").mkdir(parents=True, exist_ok=True)

    if job.recipe is RecipeKind.EDIT_FEATS_PLUS_TTS:
        assignment = split_half_and_half(len(job.specs), job.seed)
    else:
        assignment = [job.recipe] * len(job.specs)

    def produce(index: int) -> Utterance:
        spec = job.specs[index]
        try:
            return run_recipe_for_utterance(job, spec, assignment[index], index)
        except Exception as exc:
            raise RuntimeError(
                f"augmentation failed on utterance {spec.utt_id!r} (spec {index}): {exc}"
            ) from exc

    if jobs > 1 and len(job.specs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(produce, range(len(job.specs))))
    else:
        entries = [produce(i) for i in range(len(job.specs))]

    manifest = CorpusManifest(entries=entries, root=job.out_dir)
    save_manifest(manifest, job.out_dir / "manifest.jsonl")

    record = {
        "recipe": job.recipe.value,
        "seed": job.seed,
        "n_specs": len(job.specs),
        "gl_iterations": job.gl_iterations,
        "version": __version__,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    if provenance:
        record.update(provenance)
    with open(job.out_dir / "job.json", "w", encoding="utf-8") as f:
        json.dump(record, f, ensure_ascii=False, indent=2)
        f.write("\n")
    return AugOutput(manifest=manifest, out_dir=job.out_dir)


def _absolute_entry(manifest: CorpusManifest, utt: Utterance) -> Utterance:
    audio = str(manifest.resolve_audio(utt)) if utt.audio is not None else None
    feats = str(manifest.resolve_feats(utt)) if utt.feats is not None else None
    return dataclasses.replace(utt, audio=audio, feats=feats)


def mix_sets(
    aug: CorpusManifest, real: CorpusManifest, ratio: float, seed: int
) -> CorpusManifest:
    """Mix augmented entries with round(ratio * N_aug) seeded-sampled real
    entries (without replacement), deterministically shuffled.

    Paths are made absolute so the mixed manifest is self-contained; real
    entries are tagged origin "real".
    """
    if ratio < 0:
        raise ValueError("ratio must be >= 0")
    n_real = int(round(ratio * len(aug.entries)))
    if n_real > len(real.entries):
        raise ValueError(
            f"real pool has {len(real.entries)} entries, {n_real} requested"
        )
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(real.entries), size=n_real, replace=False) if n_real else []
    entries = [_absolute_entry(aug, u) for u in aug.entries]
    for i in picked:
        entry = _absolute_entry(real, real.entries[int(i)])
        entry.origin = "real"
        entries.append(entry)
    order = rng.permutation(len(entries))
    return CorpusManifest(entries=[entries[int(i)] for i in order], root=None)
